"""Synthetic panels from known structural VARs, plus brute-force reference computations.

Shocks are built as ``e = lambda * e_bar + e_tilde`` with unit-variance common
shocks ``e_bar`` and idiosyncratic shocks of variance ``1 - lambda**2``, so every
composite shock has unit variance and ``u = B e`` has covariance ``B B'``.
Each country runs its own VAR recursion from zero, with a burn-in discarded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError
from .irf_engine import IrfTensor, structural_responses
from .panel_store import CountrySeries, PanelDataset, VariableSpec, default_spec
from .var_core import companion_stability

MAX_MODULUS = 0.98

# Distinct RNG sub-streams: (seed, tag[, country]).
_COEF_STREAM = 0
_COMMON_STREAM = 1
_IDIO_STREAM = 2


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *key])


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Data-generating process for an ``N``-country panel.

    Coefficients are either given per country (``coefficients``, shape
    ``N x J x M x M``) or drawn as ``base_coefficients`` plus Gaussian noise of
    standard deviation ``dispersion``. ``loadings`` is ``N x M``, the diagonals
    of each country's loading matrix.
    """

    n_countries: int
    n_periods: int
    B_true: np.ndarray
    loadings: np.ndarray
    base_coefficients: Optional[np.ndarray] = None
    dispersion: float = 0.0
    coefficients: Optional[np.ndarray] = None
    burn_in: int = 200
    seed: int = 0
    shocks: str = "gaussian"
    df: float = 5.0
    means: Optional[np.ndarray] = None
    variable_names: tuple[str, ...] = ()
    start_year: int = 1
    country_ids: tuple[str, ...] = ()

    def __post_init__(self):
        b = np.array(self.B_true, dtype=float)
        m = b.shape[0]
        if b.shape != (m, m) or np.any(np.triu(b, 1) != 0) or np.any(np.diag(b) <= 0):
            raise ValidationError("B_true must be lower triangular with a positive diagonal")
        lam = np.array(self.loadings, dtype=float)
        if lam.ndim == 1:
            lam = np.tile(lam, (self.n_countries, 1))
        if lam.shape != (self.n_countries, m):
            raise ValidationError(f"loadings must be N x M = {(self.n_countries, m)}, got {lam.shape}")
        if np.any(np.abs(lam) > 1):
            raise ValidationError("loadings must lie in [-1, 1]")
        if self.n_countries < 1 or self.n_periods < 1 or self.burn_in < 0:
            raise ValidationError("n_countries, n_periods must be positive and burn_in non-negative")
        if self.shocks not in ("gaussian", "student_t"):
            raise ValidationError(f"unknown shock distribution {self.shocks!r}")
        if self.shocks == "student_t" and self.df <= 2:
            raise ValidationError("student_t shocks need df > 2 for unit variance")
        names = tuple(self.variable_names) or tuple(f"y{k}" for k in range(m))
        ids = tuple(self.country_ids) or tuple(f"C{i + 1:02d}" for i in range(self.n_countries))
        if len(names) != m or len(ids) != self.n_countries:
            raise ValidationError("variable_names / country_ids length mismatch")
        object.__setattr__(self, "B_true", b)
        object.__setattr__(self, "loadings", lam)
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "country_ids", ids)
        coefs = self._draw_coefficients(m)
        for i, c in enumerate(coefs):
            report = companion_stability(c)
            if report.max_modulus >= MAX_MODULUS:
                raise ValidationError(
                    f"country {ids[i]}: companion max modulus {report.max_modulus:.4f} >= {MAX_MODULUS}"
                )
        coefs.setflags(write=False)
        object.__setattr__(self, "coefficients", coefs)

    def _draw_coefficients(self, m: int) -> np.ndarray:
        if self.coefficients is not None:
            coefs = np.array(self.coefficients, dtype=float)
            if coefs.ndim == 3:
                coefs = np.tile(coefs, (self.n_countries, 1, 1, 1))
        elif self.base_coefficients is not None:
            base = np.array(self.base_coefficients, dtype=float)
            if base.ndim == 2:
                base = base[None]
            noise = _rng(self.seed, _COEF_STREAM).standard_normal((self.n_countries, *base.shape))
            coefs = base[None] + self.dispersion * noise
        else:
            raise ValidationError("need coefficients or base_coefficients")
        if coefs.ndim != 4 or coefs.shape[0] != self.n_countries or coefs.shape[2:] != (m, m):
            raise ValidationError(f"coefficients must be N x J x M x M, got {coefs.shape}")
        return coefs

    @property
    def n_vars(self) -> int:
        return self.B_true.shape[0]

    @property
    def lag_order(self) -> int:
        return self.coefficients.shape[1]


@dataclass(frozen=True, eq=False)
class Simulation:
    """Simulated data and the shocks that generated it; ``panel`` is None for one country."""

    panel: Optional[PanelDataset]
    series: tuple[CountrySeries, ...]
    common_shocks: np.ndarray
    composite_shocks: np.ndarray
    idiosyncratic_shocks: np.ndarray
    years: np.ndarray = field(default=None)


def _unit_draws(rng: np.random.Generator, shape, spec: DgpSpec) -> np.ndarray:
    if spec.shocks == "gaussian":
        return rng.standard_normal(shape)
    return rng.standard_t(spec.df, shape) / np.sqrt(spec.df / (spec.df - 2.0))


def simulate(spec: DgpSpec) -> Simulation:
    """Simulate the panel and return it together with the generating shocks (post burn-in)."""
    n, t, m = spec.n_countries, spec.n_periods, spec.n_vars
    total = spec.burn_in + t
    lags = spec.lag_order
    e_bar = _unit_draws(_rng(spec.seed, _COMMON_STREAM), (total, m), spec)
    composite = np.empty((n, total, m))
    idio = np.empty((n, total, m))
    countries = []
    years = np.arange(spec.start_year, spec.start_year + t)
    for i in range(n):
        lam = spec.loadings[i]
        e_tilde = _unit_draws(_rng(spec.seed, _IDIO_STREAM, i), (total, m), spec) * np.sqrt(1.0 - lam**2)
        e = lam * e_bar + e_tilde
        u = e @ spec.B_true.T
        coefs = spec.coefficients[i]
        y = np.zeros((total + lags, m))
        for s in range(total):
            row = lags + s
            acc = u[s].copy()
            for j in range(1, lags + 1):
                acc += coefs[j - 1] @ y[row - j]
            y[row] = acc
        values = y[lags + spec.burn_in :]
        if spec.means is not None:
            values = values + np.asarray(spec.means, dtype=float).reshape(n, m)[i]
        composite[i], idio[i] = e, e_tilde
        countries.append(CountrySeries(spec.country_ids[i], years, values, spec.variable_names))
    if n >= 2:
        schema = tuple(VariableSpec(v) for v in spec.variable_names)
        panel = PanelDataset(tuple(countries), spec.variable_names, "annual", schema)
    else:
        panel = None
    keep = slice(spec.burn_in, None)
    return Simulation(panel, tuple(countries), e_bar[keep], composite[:, keep], idio[:, keep], years)


def simulate_panel(spec: DgpSpec) -> PanelDataset:
    if spec.n_countries < 2:
        raise ValidationError("a panel needs at least 2 countries; use simulate() for a single country")
    return simulate(spec).panel


def true_irf(spec: DgpSpec, country: int, horizon: int) -> IrfTensor:
    resp = structural_responses(spec.coefficients[country], spec.B_true, horizon)
    return IrfTensor(spec.country_ids[country], resp, variable_names=spec.variable_names)


def true_median_irf(spec: DgpSpec, horizon: int) -> np.ndarray:
    stack = np.stack([true_irf(spec, i, horizon).responses for i in range(spec.n_countries)])
    return np.median(stack, axis=0)


# --------------------------------------------------------------------------
# Brute-force references, deliberately coded along different routes from the estimators.

def unit_shock_path(coefficients: np.ndarray, B: np.ndarray, shock: int, horizon: int) -> np.ndarray:
    """Simulate the VAR after ``e_0`` = unit vector ``shock`` and zero shocks afterwards."""
    coefs = np.asarray(coefficients, dtype=float)
    lags, m, _ = coefs.shape
    history = [np.zeros(m) for _ in range(lags)]
    out = []
    for t in range(horizon + 1):
        y = np.asarray(B, dtype=float)[:, shock].copy() if t == 0 else np.zeros(m)
        for j in range(lags):
            y = y + coefs[j] @ history[-1 - j]
        history.append(y)
        out.append(y)
    return np.array(out)


def normal_equations_ols(y: np.ndarray, lags: int) -> np.ndarray:
    """VAR coefficients ``(J, M, M)`` from ``(X'X)^{-1} X'Y`` built row by row."""
    y = np.asarray(y, dtype=float)
    t, m = y.shape
    rows = []
    for s in range(lags, t):
        rows.append(np.concatenate([y[s - j] for j in range(1, lags + 1)]))
    x = np.array(rows)
    yy = y[lags:]
    beta = np.linalg.solve(x.T @ x, x.T @ yy)
    return np.array([beta[j * m : (j + 1) * m].T for j in range(lags)])


def characteristic_root_moduli(coefficients: np.ndarray) -> np.ndarray:
    """Moduli of the roots of ``det(z^J I - R_1 z^{J-1} - ... - R_J)`` for ``M <= 2``."""
    coefs = np.asarray(coefficients, dtype=float)
    lags, m, _ = coefs.shape
    if m > 2:
        raise ValueError("characteristic polynomial oracle supports M <= 2")
    P = np.polynomial.polynomial
    entries = [[None] * m for _ in range(m)]
    for a in range(m):
        for b in range(m):
            # ascending powers of z: coefficient on z^(J - j) is -R_j[a, b]
            c = np.zeros(lags + 1)
            c[lags] = 1.0 if a == b else 0.0
            for j in range(1, lags + 1):
                c[lags - j] -= coefs[j - 1][a, b]
            entries[a][b] = c
    if m == 1:
        det = entries[0][0]
    else:
        det = P.polysub(P.polymul(entries[0][0], entries[1][1]), P.polymul(entries[0][1], entries[1][0]))
    return np.sort(np.abs(P.polyroots(det)))[::-1]


def sample_covariance(x: np.ndarray, y: Optional[np.ndarray] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = x if y is None else np.asarray(y, dtype=float)
    n = x.shape[0]
    xc = x - x.sum(axis=0) / n
    yc = y - y.sum(axis=0) / n
    return xc.T @ yc / n


# --------------------------------------------------------------------------
# Shipped sample dataset

SAMPLE_VARIABLES = ("spread", "top1_share", "savings_rate", "capital_share")
SAMPLE_COUNTRIES = tuple(f"C{i:02d}" for i in range(1, 11))


def sample_spec(seed: int = 2024, n_periods: int = 33) -> DgpSpec:
    base = np.array(
        [
            [0.55, 0.00, 0.00, 0.00],
            [-0.06, 0.75, 0.00, 0.00],
            [-0.12, 0.00, 0.65, 0.00],
            [-0.05, 0.00, 0.10, 0.70],
        ]
    )
    b = np.array(
        [
            [1.50, 0.00, 0.00, 0.00],
            [-0.08, 0.40, 0.00, 0.00],
            [-0.30, 0.05, 1.00, 0.00],
            [-0.10, 0.05, 0.15, 0.80],
        ]
    )
    rng = _rng(seed, 99)
    n = len(SAMPLE_COUNTRIES)
    loadings = rng.uniform(0.2, 0.8, size=(n, 4))
    means = np.column_stack(
        [
            rng.normal(1.0, 1.0, n),
            rng.normal(10.0, 2.0, n),
            rng.normal(22.0, 3.0, n),
            rng.normal(35.0, 3.0, n),
        ]
    )
    return DgpSpec(
        n_countries=n,
        n_periods=n_periods,
        B_true=b,
        loadings=loadings,
        base_coefficients=base,
        dispersion=0.04,
        seed=seed,
        means=means,
        variable_names=SAMPLE_VARIABLES,
        start_year=1980,
        country_ids=SAMPLE_COUNTRIES,
    )


# (country index, column, leading missing, trailing missing)
_SAMPLE_EDGES = [
    (2, "top1_share", 3, 0),
    (4, "top1_share", 0, 2),
    (8, "savings_rate", 2, 0),
    (9, "capital_output", 0, 1),
]
# country index -> number of initial years absent from the file
_SAMPLE_LATE_START = {6: 5}

RAW_COLUMNS = (
    "tax_rate",
    "long_yield",
    "short_rate",
    "deflator_growth",
    "gdp_growth",
    "capital_share",
    "capital_output",
    "top1_share",
    "savings_rate",
)


def synthetic_sample(seed: int = 2024, n_periods: int = 33) -> PanelDataset:
    """Ten-country unbalanced panel with raw input columns.

    The model variables come from :func:`sample_spec`; bond yields are then
    backed out so that the post-tax long-term spread reproduces the simulated
    one. Values are rounded to four decimals, as a data vendor would publish.
    """
    sim = simulate(sample_spec(seed, n_periods))
    rng = _rng(seed, 7)
    countries = []
    for i, c in enumerate(sim.panel.countries):
        t = c.n_periods
        p = c.column("spread")
        g = 2.0 + rng.normal(0.0, 1.5, t)
        d = 2.5 + rng.normal(0.0, 1.0, t)
        tau = np.clip(0.30 + rng.normal(0.0, 0.03, t), 0.05, 0.6)
        long_yield = (p + g + d) / (1.0 - tau)
        short_rate = long_yield - 1.5 + rng.normal(0.0, 0.5, t)
        ky = 3.0 + rng.normal(0.0, 0.2, t)
        cols = {
            "tax_rate": tau,
            "long_yield": long_yield,
            "short_rate": short_rate,
            "deflator_growth": d,
            "gdp_growth": g,
            "capital_share": c.column("capital_share"),
            "capital_output": ky,
            "top1_share": c.column("top1_share"),
            "savings_rate": c.column("savings_rate"),
        }
        values = np.round(np.column_stack([cols[k] for k in RAW_COLUMNS]), 4)
        for idx, col, lead, trail in _SAMPLE_EDGES:
            if idx != i:
                continue
            k = RAW_COLUMNS.index(col)
            values[:lead, k] = np.nan
            values[t - trail :, k] = np.nan
        skip = _SAMPLE_LATE_START.get(i, 0)
        values, years = values[skip:], c.years[skip:]
        countries.append(CountrySeries(c.country_id, years, values, RAW_COLUMNS))
    schema = tuple(default_spec(v) for v in RAW_COLUMNS)
    return PanelDataset(tuple(countries), RAW_COLUMNS, "annual", schema)


def synthetic_covariates(seed: int = 2024) -> list[tuple[str, float, float]]:
    """Per-country (id, intergenerational elasticity, social expenditure % of GDP)."""
    rng = _rng(seed, 8)
    ige = np.round(rng.uniform(0.15, 0.55, len(SAMPLE_COUNTRIES)), 3)
    social = np.round(rng.uniform(15.0, 32.0, len(SAMPLE_COUNTRIES)), 2)
    return [(cid, float(a), float(b)) for cid, a, b in zip(SAMPLE_COUNTRIES, ige, social)]
