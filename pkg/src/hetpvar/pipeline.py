"""Run configuration and the end-to-end estimation run that writes the tidy outputs.

A run reads one panel CSV, builds the chosen model, estimates and decomposes
every member VAR, bootstraps the median responses and writes

* ``irf_distribution.csv``: kind, scale, country, shock, response, horizon, value, statistic
  (both shock scales; the bootstrap uses the configured one)
* ``medians_ci.csv``: shock, response, horizon, median, sigma, lower, upper, k, seed
* ``loadings.csv``, ``stability.csv``, ``correlations.csv``
* ``run_manifest.json``: configuration echo, versions, lag orders, exclusions

Files are written to a scratch directory next to the output and moved into
place only when every stage succeeded.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import os
import platform
import shutil
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .bootstrap import DEFAULT_K, DEFAULT_Z, MODES, BootstrapResult, run_bootstrap
from .errors import ContractError, PanelVarError, StageError
from .irf_engine import DEFAULT_HORIZON, SCALES
from .panel_decomp import PanelEstimate, covariate_correlation, estimate_panel, summarize
from .panel_store import PanelDataset, load_panel, select_sample
from .transform import RETURN_VARIANTS, ModelSpec, model_panel, model_spec
from .var_core import CRITERIA, whiteness

logger = logging.getLogger(__name__)

OUTPUT_FILES = (
    "irf_distribution.csv",
    "medians_ci.csv",
    "loadings.csv",
    "stability.csv",
    "correlations.csv",
    "run_manifest.json",
)
CONFIG_SECTION = "run"
DECOMPOSITIONS = ("as-written",)


def _split(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return tuple(value)


@dataclass(frozen=True)
class RunConfig:
    """Settings for one run; every field can come from the config file or a flag.

    ``lag`` is ``"auto"`` (selection by ``criterion`` up to ``max_lag``) or a
    fixed order; ``country_lags`` fixes the order for individual countries.
    ``k = 0`` skips the bootstrap.
    """

    input: str
    output: str = "output"
    model: str = "M1"
    variables: tuple[str, ...] = ()
    ordering: tuple[str, ...] = ("default",)
    return_variant: str = "longterm_posttax"
    countries: tuple[str, ...] = ()
    lag: str = "auto"
    criterion: str = "AIC"
    max_lag: int = 4
    country_lags: tuple[tuple[str, int], ...] = ()
    common_lag: str = "auto"
    horizon: int = DEFAULT_HORIZON
    scale: str = "unit_shock"
    accumulate: bool = False
    drop_unstable: bool = False
    min_observations: int = 0
    min_coverage: Optional[float] = None
    divisor: str = "ml"
    k: int = DEFAULT_K
    seed: int = 0
    z: float = DEFAULT_Z
    bootstrap: str = "fixed"
    decomposition: str = "as-written"
    whiteness_lags: int = 10
    covariates: Optional[str] = None
    covariate_horizon: int = 0

    def __post_init__(self):
        set_ = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        set_("variables", _split(self.variables))
        set_("countries", _split(self.countries))
        set_("ordering", _split(self.ordering) or ("default",))
        set_("lag", str(self.lag).strip())
        set_("common_lag", str(self.common_lag).strip())
        lags = self.country_lags
        if isinstance(lags, str):
            pairs = []
            for item in _split(lags):
                cid, _, order = item.partition(":")
                if not order:
                    raise ContractError(f"country_lags entry {item!r} must look like ID:ORDER")
                pairs.append((cid.strip(), int(order)))
            lags = pairs
        elif isinstance(lags, dict):
            lags = lags.items()
        set_("country_lags", tuple(sorted((str(c), int(j)) for c, j in lags)))
        self.validate()

    def validate(self) -> None:
        if self.model not in ("M1", "M2", "M3", "custom"):
            raise ContractError(f"unknown model {self.model!r}")
        if self.model == "custom" and not self.variables:
            raise ContractError("model=custom needs a variables list")
        if self.model != "custom" and self.variables:
            raise ContractError(f"variables are only used with model=custom, not {self.model}")
        if self.return_variant not in RETURN_VARIANTS:
            raise ContractError(f"unknown return_variant {self.return_variant!r}; expected {RETURN_VARIANTS}")
        if self.horizon < 1:
            raise ContractError(f"horizon must be >= 1, got {self.horizon}")
        if self.k < 0 or self.k == 1:
            raise ContractError(f"k must be 0 (skip) or >= 2, got {self.k}")
        if self.criterion not in CRITERIA:
            raise ContractError(f"unknown criterion {self.criterion!r}")
        if self.min_observations < 0:
            raise ContractError(f"min_observations must be >= 0, got {self.min_observations}")
        if self.max_lag < 1:
            raise ContractError(f"max_lag must be >= 1, got {self.max_lag}")
        for name in ("lag", "common_lag"):
            value = getattr(self, name)
            if value != "auto" and not (str(value).isdigit() and int(value) >= 1):
                raise ContractError(f"{name} must be 'auto' or a positive integer, got {value!r}")
        if any(j < 1 for _, j in self.country_lags):
            raise ContractError("country_lags orders must be >= 1")
        if self.scale not in SCALES:
            raise ContractError(f"unknown scale {self.scale!r}; expected {SCALES}")
        if self.divisor not in ("ml", "dof"):
            raise ContractError(f"unknown divisor {self.divisor!r}")
        if self.bootstrap not in MODES:
            raise ContractError(f"unknown bootstrap mode {self.bootstrap!r}; expected {MODES}")
        if self.decomposition not in DECOMPOSITIONS:
            raise ContractError(f"unknown decomposition {self.decomposition!r}; expected {DECOMPOSITIONS}")
        if self.z <= 0:
            raise ContractError(f"z must be positive, got {self.z}")
        if not 0 <= self.covariate_horizon <= self.horizon:
            raise ContractError("covariate_horizon must lie in 0..horizon")
        self.model_spec()

    def model_spec(self) -> ModelSpec:
        ordering = self.ordering[0] if self.ordering in (("default",), ("inverted",)) else list(self.ordering)
        return model_spec(self.model, self.variables or None, ordering)

    def lag_setting(self):
        fixed = None if self.lag == "auto" else int(self.lag)
        if not self.country_lags:
            return fixed
        if fixed is not None:
            raise ContractError("country_lags cannot be combined with a fixed lag")
        return dict(self.country_lags)

    def echo(self) -> dict:
        """Configuration as written to the manifest (the output location is left out)."""
        out = asdict(self)
        out.pop("output")
        out["country_lags"] = dict(self.country_lags)
        for key in ("variables", "ordering", "countries"):
            out[key] = list(out[key])
        return out


_INT_FIELDS = {"min_observations", "max_lag", "horizon", "k", "seed", "whiteness_lags", "covariate_horizon"}
_FLOAT_FIELDS = {"z", "min_coverage"}
_BOOL_FIELDS = {"accumulate", "drop_unstable"}


def _coerce(name: str, text: str):
    text = text.strip()
    if name in _INT_FIELDS:
        return int(text)
    if name in _FLOAT_FIELDS:
        return None if text.lower() in ("", "none", "auto") else float(text)
    if name in _BOOL_FIELDS:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ContractError(f"{name}: expected a boolean, got {text!r}")
    if name == "covariates":
        return text or None
    return text


def read_config(path) -> dict:
    """Read the ``[run]`` section of an INI file into RunConfig keyword arguments."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section(CONFIG_SECTION):
        raise ContractError(f"{path}: missing [{CONFIG_SECTION}] section")
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for key, text in parser.items(CONFIG_SECTION):
        if key not in known:
            raise ContractError(f"{path}: unknown setting {key!r}")
        try:
            values[key] = _coerce(key, text)
        except ValueError:
            raise ContractError(f"{path}: cannot parse {key} = {text!r}") from None
    base = Path(path).parent
    for key in ("input", "covariates"):
        if values.get(key) and not Path(values[key]).is_absolute():
            values[key] = str(base / values[key])
    return values


def build_config(config_path=None, **overrides) -> RunConfig:
    """Config file values overlaid with every override that is not None."""
    values = read_config(config_path) if config_path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "input" not in values:
        raise ContractError("no input panel given")
    return RunConfig(**values)


# --------------------------------------------------------------------------
# Covariates

def read_covariates(path) -> dict[str, dict[str, float]]:
    """CSV with a ``country`` column and one column per covariate; returns name -> {country: value}."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or reader.fieldnames[0] != "country":
            raise ContractError(f"{path}: header must start with 'country'")
        names = reader.fieldnames[1:]
        out = {n: {} for n in names}
        for row in reader:
            for n in names:
                text = (row.get(n) or "").strip()
                if text:
                    out[n][row["country"]] = float(text)
    return out


# --------------------------------------------------------------------------
# Writers

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "" if x is None else str(x)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _cells(names, horizon):
    m = len(names)
    for j in range(m):
        for r in range(m):
            for h in range(horizon + 1):
                yield j, r, h


def _irf_rows(est: PanelEstimate):
    """Member and summary rows for every kind, in both the unit-shock and the 1pp scale."""
    names = est.members[0].irf.variable_names
    attr = {"composite": "irf", "common_part": "common_part", "idiosyncratic_part": "idiosyncratic_part"}
    for scale in SCALES:
        for kind in attr:
            tensors = []
            for m in est.members:
                t = getattr(m, attr[kind])
                d = np.diag(m.factorization.B)
                if scale != t.scale:
                    factor = 1.0 / d if scale == "one_pp" else d
                    t = t.with_responses(t.responses * factor[None, None, :], scale=scale)
                tensors.append(t)
            dist = summarize(tensors)
            for member in dist.members:
                a = member.responses
                for j, r, h in _cells(names, est.horizon):
                    yield kind, scale, member.country_id, names[j], names[r], h, a[h, r, j], "estimate"
            for stat in ("median", "mean", "q25", "q75", "count"):
                a = getattr(dist, stat)
                for j, r, h in _cells(names, est.horizon):
                    yield kind, scale, "AGG", names[j], names[r], h, a[h, r, j], stat


def _ci_rows(est: PanelEstimate, boot: Optional[BootstrapResult], cfg: RunConfig):
    names = est.members[0].irf.variable_names
    median = est.distribution("composite").median
    for j, r, h in _cells(names, est.horizon):
        if boot is None:
            yield names[j], names[r], h, median[h, r, j], None, None, None, 0, cfg.seed
        else:
            yield (
                names[j], names[r], h, median[h, r, j], boot.sigma[h, r, j],
                boot.lower[h, r, j], boot.upper[h, r, j], boot.k, boot.seed,
            )


def _loading_rows(est: PanelEstimate):
    names = est.members[0].irf.variable_names
    for m in est.members:
        lam = m.loadings.diagonal
        years = m.loadings.years
        for j, name in enumerate(names):
            yield m.country_id, name, lam[j], years.size, int(years[0]), int(years[-1])


def _stability_rows(est: PanelEstimate, lags: int):
    for m in est.members:
        n_eff = m.model.n_eff
        use = min(lags, (n_eff - 1) // 2)
        passed = ""
        if use >= 1:
            passed = int(np.sum(whiteness(m.model, use).passed))
        yield (
            m.country_id, m.model.lag_order, n_eff, int(m.model.years[0]), int(m.model.years[-1]),
            m.stability.max_modulus, m.stability.stable, use, passed, m.model.n_vars,
        )


def _correlation_rows(panel: PanelDataset, est: PanelEstimate, cfg: RunConfig):
    names = panel.variable_names
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            x, y = [], []
            for c in panel.countries:
                ok = ~np.isnan(c.column(names[a])) & ~np.isnan(c.column(names[b]))
                x.append(c.column(names[a])[ok])
                y.append(c.column(names[b])[ok])
            try:
                res = covariate_correlation(np.concatenate(x), np.concatenate(y))
            except PanelVarError as exc:
                logger.warning("correlation %s/%s skipped: %s", names[a], names[b], exc)
                continue
            yield "demeaned", names[a], names[b], res.n, res.rho, res.slope, res.intercept
    if not cfg.covariates:
        return
    covs = read_covariates(cfg.covariates)
    resp_names = est.members[0].irf.variable_names
    shock = resp_names[0]
    h = cfg.covariate_horizon
    for cov_name, values in covs.items():
        for r, resp in enumerate(resp_names[1:], start=1):
            pairs = [
                (m.irf.responses[h, r, 0], values[m.country_id]) for m in est.members if m.country_id in values
            ]
            if len(pairs) < 3:
                continue
            xs, ys = zip(*pairs)
            try:
                res = covariate_correlation(xs, ys)
            except PanelVarError as exc:
                logger.warning("covariate %s skipped: %s", cov_name, exc)
                continue
            yield "covariate", f"{resp}<-{shock}@h{h}", cov_name, res.n, res.rho, res.slope, res.intercept


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _manifest(cfg: RunConfig, est: PanelEstimate, model_excluded: dict, boot: Optional[BootstrapResult]) -> dict:
    excluded = dict(sorted({**model_excluded, **est.excluded}.items()))
    return {
        "config": cfg.echo(),
        "input_sha256": _sha256(cfg.input),
        "covariates_sha256": _sha256(cfg.covariates) if cfg.covariates else None,
        "versions": {
            "hetpvar": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "model": {
            "name": est.spec.name,
            "variables": list(est.spec.endogenous),
            "ordered_variables": list(est.spec.ordered_names),
        },
        "countries": est.country_ids,
        "lag_orders": est.lag_orders,
        "common_lag_order": est.common.model.lag_order,
        "common_years": [int(est.common.model.years[0]), int(est.common.model.years[-1])],
        "excluded_countries": excluded,
        "irf": {"horizon": est.horizon, "scale": est.scale, "accumulated": est.accumulated},
        "bootstrap": {
            "k": cfg.k,
            "seed": cfg.seed,
            "z": cfg.z,
            "mode": cfg.bootstrap,
            "kept": boot.n_kept if boot else 0,
            "dropped_repetitions": list(boot.dropped) if boot else [],
            "rng": "default_rng([seed, repetition]); common draw shared by all countries, then one "
            "idiosyncratic draw per country in id order",
        },
        "percentile_rule": "linear interpolation between order statistics",
    }


# --------------------------------------------------------------------------
# Run

@dataclass(frozen=True, eq=False)
class RunResult:
    output: Path
    estimate: PanelEstimate
    bootstrap: Optional[BootstrapResult]
    manifest: dict = field(default_factory=dict)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (PanelVarError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def estimate_run(cfg: RunConfig, workers: Optional[int] = None):
    """All computation of a run, without writing anything."""
    panel = _stage("load", load_panel, cfg.input)
    if cfg.countries:
        panel = _stage("load", select_sample, panel, cfg.countries)
    spec = cfg.model_spec()
    demeaned, model_excluded = _stage(
        "transform", model_panel, panel, spec, cfg.return_variant, cfg.min_observations
    )
    common_lag = None if cfg.common_lag == "auto" else int(cfg.common_lag)
    est = _stage(
        "estimate",
        estimate_panel,
        demeaned,
        spec,
        _stage("config", cfg.lag_setting),
        max_lag=cfg.max_lag,
        criterion=cfg.criterion,
        common_lags=common_lag,
        horizon=cfg.horizon,
        scale=cfg.scale,
        accumulate=cfg.accumulate,
        drop_unstable=cfg.drop_unstable,
        min_coverage=cfg.min_coverage,
        divisor=cfg.divisor,
    )
    boot = None
    if cfg.k > 0:
        boot = _stage(
            "bootstrap", run_bootstrap, est, cfg.k, cfg.seed, z=cfg.z, workers=workers, mode=cfg.bootstrap
        )
    return demeaned, model_excluded, est, boot


def run_pipeline(cfg: RunConfig, workers: Optional[int] = None) -> RunResult:
    """Run every stage and write the outputs; nothing is left behind on failure."""
    demeaned, model_excluded, est, boot = estimate_run(cfg, workers)
    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".hetpvar-", dir=out.parent))
    try:
        names = est.members[0].irf.variable_names
        _stage("write", _write_csv, scratch / "irf_distribution.csv",
               ["kind", "scale", "country", "shock", "response", "horizon", "value", "statistic"], _irf_rows(est))
        _stage("write", _write_csv, scratch / "medians_ci.csv",
               ["shock", "response", "horizon", "median", "sigma", "lower", "upper", "k", "seed"],
               _ci_rows(est, boot, cfg))
        _stage("write", _write_csv, scratch / "loadings.csv",
               ["country", "shock", "loading", "overlap", "first_year", "last_year"], _loading_rows(est))
        _stage("write", _write_csv, scratch / "stability.csv",
               ["country", "lag_order", "n_obs", "first_year", "last_year", "max_modulus", "stable",
                "whiteness_lags", "whiteness_passed", "n_equations"],
               _stability_rows(est, cfg.whiteness_lags))
        _stage("correlate", _write_csv, scratch / "correlations.csv",
               ["type", "x", "y", "n", "rho", "slope", "intercept"], _correlation_rows(demeaned, est, cfg))
        manifest = _stage("write", _manifest, cfg, est, model_excluded, boot)
        with (scratch / "run_manifest.json").open("w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        out.mkdir(parents=True, exist_ok=True)
        for name in OUTPUT_FILES:
            os.replace(scratch / name, out / name)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    logger.info("wrote %s for %d countries (%s)", out, len(est.members), ", ".join(names))
    return RunResult(out, est, boot, manifest)
