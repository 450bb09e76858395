"""Tidy plot-ready tables derived from a finished run directory.

Families and their columns:

``distribution``   horizon, shock, response, median, mean, q25, q75 (composite responses)
``ci``             horizon, shock, response, median, sigma, lower, upper
``decomposition``  kind, horizon, shock, response, median, mean, q25, q75
``scatter``        covariate, shock, response, country, response_h0, value, slope, intercept, rho
                   (one row per country plus a ``FIT`` row carrying the fitted line)
``boxplot``        variable, year, n, min, q25, median, q75, max over countries (raw panel)

Response tables use the shock scale the run was configured with.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ContractError, PanelVarError, StageError
from .panel_decomp import covariate_correlation
from .panel_store import load_panel, select_sample
from .pipeline import _write_csv, read_covariates
from .transform import SPREAD, with_spread

FAMILIES = ("distribution", "ci", "decomposition", "scatter", "boxplot")


def _read(path: Path) -> list[dict]:
    if not path.exists():
        raise StageError("plotdata", FileNotFoundError(f"missing run artifact {path}"))
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _manifest(run_dir: Path) -> dict:
    path = run_dir / "run_manifest.json"
    if not path.exists():
        raise StageError("plotdata", FileNotFoundError(f"missing run artifact {path}"))
    with path.open(encoding="utf-8") as fh:
        return json.load(fh)


def _aggregate(rows, kinds, scale):
    """Pivot the AGG statistic rows into one record per (kind, shock, response, horizon)."""
    table = defaultdict(dict)
    for r in rows:
        if r["country"] != "AGG" or r["kind"] not in kinds or r["scale"] != scale:
            continue
        key = (kinds.index(r["kind"]), r["shock"], r["response"], int(r["horizon"]))
        table[key][r["statistic"]] = r["value"]
    return table


def _distribution(run_dir: Path, decomposition: bool):
    rows = _read(run_dir / "irf_distribution.csv")
    scale = _manifest(run_dir)["irf"]["scale"]
    kinds = ["composite", "common_part", "idiosyncratic_part"] if decomposition else ["composite"]
    table = _aggregate(rows, kinds, scale)
    stats = ["median", "mean", "q25", "q75"]
    out = []
    for (k, shock, resp, h), v in table.items():
        head = [kinds[k]] if decomposition else []
        out.append(head + [h, shock, resp] + [v[s] for s in stats])
    header = (["kind"] if decomposition else []) + ["horizon", "shock", "response"] + stats
    return header, out


def _ci(run_dir: Path):
    rows = _read(run_dir / "medians_ci.csv")
    cols = ["median", "sigma", "lower", "upper"]
    out = [[int(r["horizon"]), r["shock"], r["response"]] + [r[c] for c in cols] for r in rows]
    return ["horizon", "shock", "response"] + cols, out


def _scatter(run_dir: Path, covariates: Optional[str]):
    manifest = _manifest(run_dir)
    path = covariates or manifest["config"].get("covariates")
    if not path:
        raise StageError("plotdata", ContractError("scatter needs a covariate file (none recorded in the run)"))
    covs = read_covariates(path)
    h = int(manifest["config"].get("covariate_horizon", 0))
    rows = _read(run_dir / "irf_distribution.csv")
    ordered = manifest["model"]["ordered_variables"]
    shock = ordered[0]
    responses = defaultdict(dict)
    for r in rows:
        if (
            r["kind"] == "composite"
            and r["scale"] == manifest["irf"]["scale"]
            and r["country"] != "AGG"
            and r["shock"] == shock
            and int(r["horizon"]) == h
        ):
            responses[r["response"]][r["country"]] = float(r["value"])
    out = []
    for name, values in covs.items():
        for resp in ordered[1:]:
            ids = [c for c in sorted(responses[resp]) if c in values]
            for c in ids:
                out.append([name, shock, resp, c, responses[resp][c], values[c], None, None, None])
            try:
                fit = covariate_correlation([responses[resp][c] for c in ids], [values[c] for c in ids])
            except PanelVarError:
                continue
            out.append([name, shock, resp, "FIT", None, None, fit.slope, fit.intercept, fit.rho])
    header = ["covariate", "shock", "response", "country", "response_h0", "value", "slope", "intercept", "rho"]
    return header, out


def _boxplot(run_dir: Path):
    manifest = _manifest(run_dir)
    cfg = manifest["config"]
    panel = load_panel(cfg["input"])
    if cfg.get("countries"):
        panel = select_sample(panel, cfg["countries"])
    variables = list(manifest["model"]["variables"])
    if SPREAD in variables:
        panel = with_spread(panel, cfg["return_variant"])
    first = min(int(c.years[0]) for c in panel.countries)
    last = max(int(c.years[-1]) for c in panel.countries)
    out = []
    for name in variables:
        for year in range(first, last + 1):
            vals = []
            for c in panel.countries:
                i = year - int(c.years[0])
                if 0 <= i < c.n_periods and not np.isnan(c.column(name)[i]):
                    vals.append(c.column(name)[i])
            if not vals:
                continue
            q = np.percentile(vals, [0, 25, 50, 75, 100])
            out.append([name, year, len(vals), *q])
    return ["variable", "year", "n", "min", "q25", "median", "q75", "max"], out


def emit_plotdata(run_dir, family: str, out: Optional[str] = None, covariates: Optional[str] = None) -> Path:
    """Write the ``family`` table for ``run_dir``; default path ``<run_dir>/plot_<family>.csv``."""
    run_dir = Path(run_dir)
    if family not in FAMILIES:
        raise ContractError(f"unknown figure family {family!r}; expected one of {FAMILIES}")
    try:
        if family == "distribution":
            header, rows = _distribution(run_dir, decomposition=False)
        elif family == "decomposition":
            header, rows = _distribution(run_dir, decomposition=True)
        elif family == "ci":
            header, rows = _ci(run_dir)
        elif family == "scatter":
            header, rows = _scatter(run_dir, covariates)
        else:
            header, rows = _boxplot(run_dir)
    except StageError:
        raise
    except (PanelVarError, OSError, KeyError, ValueError) as exc:
        raise StageError("plotdata", exc) from exc
    target = Path(out) if out else run_dir / f"plot_{family}.csv"
    _write_csv(target, header, rows)
    return target
