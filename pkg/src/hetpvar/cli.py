"""Command-line entry point: ``estimate``, ``simulate``, ``plotdata`` and ``validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bootstrap import WORKERS_ENV
from .errors import PanelVarError
from .pipeline import build_config, run_pipeline
from .plotdata import FAMILIES, emit_plotdata

logger = logging.getLogger("hetpvar")


def _add_estimate(sub) -> None:
    p = sub.add_parser("estimate", help="run the full estimation and write the output tables")
    p.add_argument("--config", help="INI file with a [run] section; flags override it")
    p.add_argument("--input", help="panel CSV (country,year,<variables>)")
    p.add_argument("--output", help="output directory")
    p.add_argument("--model", choices=["M1", "M2", "M3", "custom"])
    p.add_argument("--variables", help="comma-separated variables for model=custom")
    p.add_argument("--ordering", help="'default', 'inverted' or a comma-separated variable order")
    p.add_argument(
        "--return-variant",
        choices=["longterm_posttax", "longterm_pretax", "shortrate", "implied", "provided"],
    )
    p.add_argument("--countries", help="comma-separated country ids to keep")
    p.add_argument("--lag", help="'auto' or a fixed lag order for every country")
    p.add_argument("--criterion", choices=["AIC", "BIC", "HQ"])
    p.add_argument("--max-lag", type=int)
    p.add_argument("--country-lags", help="per-country orders, e.g. C01:2,C02:1")
    p.add_argument("--common-lag", help="'auto' or a lag order for the cross-sectional average VAR")
    p.add_argument("--horizon", type=int)
    p.add_argument("--scale", choices=["unit_shock", "one_pp"])
    p.add_argument("--accumulate", action="store_true", default=None)
    p.add_argument("--drop-unstable", action="store_true", default=None)
    p.add_argument("--min-observations", type=int, help="drop countries with fewer complete years")
    p.add_argument("--min-coverage", type=float, help="countries needed per year in the average (default N/3)")
    p.add_argument("--divisor", choices=["ml", "dof"])
    p.add_argument("--k", type=int, help="bootstrap repetitions (0 skips the bootstrap)")
    p.add_argument("--seed", type=int)
    p.add_argument("--z", type=float, help="band multiplier (1.645 ~ 90%%, 1.96 ~ 95%%)")
    p.add_argument("--bootstrap", choices=["fixed", "recursive"])
    p.add_argument("--covariates", help="CSV with country and covariate columns")
    p.add_argument("--covariate-horizon", type=int)
    p.set_defaults(func=_estimate)


def _estimate(args) -> int:
    keys = [
        "input", "output", "model", "variables", "ordering", "return_variant", "countries", "lag",
        "criterion", "max_lag", "country_lags", "common_lag", "horizon", "scale", "accumulate",
        "drop_unstable", "min_observations", "min_coverage", "divisor", "k", "seed", "z", "bootstrap", "covariates",
        "covariate_horizon",
    ]
    cfg = build_config(args.config, **{k: getattr(args, k) for k in keys})
    result = run_pipeline(cfg)
    print(f"wrote {result.output} ({len(result.estimate.members)} countries)")
    for cid, reason in sorted(result.manifest["excluded_countries"].items()):
        print(f"excluded {cid}: {reason}")
    return 0


def _add_simulate(sub) -> None:
    p = sub.add_parser("simulate", help="write the synthetic sample panel")
    p.add_argument("--output", required=True, help="panel CSV to write")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--periods", type=int, default=33)
    p.add_argument("--covariates", help="also write per-country covariates to this CSV")
    p.set_defaults(func=_simulate)


def _simulate(args) -> int:
    from .dgp_oracle import synthetic_covariates, synthetic_sample
    from .panel_store import write_panel
    from .pipeline import _write_csv

    panel = synthetic_sample(args.seed, args.periods)
    write_panel(panel, args.output)
    print(f"wrote {args.output} ({len(panel)} countries)")
    if args.covariates:
        rows = synthetic_covariates(args.seed)
        _write_csv(Path(args.covariates), ["country", "ige", "social_expenditure"], rows)
        print(f"wrote {args.covariates}")
    return 0


def _add_plotdata(sub) -> None:
    p = sub.add_parser("plotdata", help="write a tidy table for one figure family from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--out", help="output CSV (default <run_dir>/plot_<family>.csv)")
    p.add_argument("--covariates", help="covariate CSV for the scatter family")
    p.set_defaults(func=_plotdata)


def _plotdata(args) -> int:
    path = emit_plotdata(args.run_dir, args.family, args.out, args.covariates)
    print(f"wrote {path}")
    return 0


def _add_validate(sub) -> None:
    p = sub.add_parser("validate", help="check a panel CSV and summarise it")
    p.add_argument("input")
    p.set_defaults(func=_validate)


def _validate(args) -> int:
    from .panel_store import load_panel

    panel = load_panel(args.input)
    years = [int(y) for c in panel.countries for y in (c.years[0], c.years[-1])]
    print(f"{args.input}: {len(panel)} countries, {len(panel.variable_names)} variables, {min(years)}-{max(years)}")
    for c in panel.countries:
        spans = []
        for name in panel.variable_names:
            start, stop = c.span(name)
            if stop - start < c.n_periods:
                first = f"{int(c.years[start])}-{int(c.years[stop - 1])}" if stop > start else "none"
                spans.append(f"{name} {first}")
        note = "; ".join(spans)
        print(f"  {c.country_id}: {int(c.years[0])}-{int(c.years[-1])}" + (f" (partial: {note})" if note else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetpvar",
        description="Heterogeneous panel structural VARs with common/idiosyncratic decomposition.",
        epilog=f"Set {WORKERS_ENV} to run bootstrap repetitions in parallel worker processes.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_estimate(sub)
    _add_simulate(sub)
    _add_plotdata(sub)
    _add_validate(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PanelVarError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
