"""Derived variables, steady-state relations, fixed-effect demeaning and cross-sectional averages.

Unit conventions are explicit: rates entering the return construction are in
percent, while the steady-state relations take unit fractions. Shares stored
in percent of income are converted with :func:`as_fraction`, never implicitly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    ContractError,
    CoverageError,
    DomainError,
    InsufficientDataError,
    SingularityError,
)
from .panel_store import CountrySeries, PanelDataset, VariableSpec, default_spec

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

TAX = "tax_rate"
LONG_YIELD = "long_yield"
SHORT_RATE = "short_rate"
DEFLATOR = "deflator_growth"
GROWTH = "gdp_growth"
CAPITAL_SHARE = "capital_share"
CAPITAL_OUTPUT = "capital_output"
TOP1 = "top1_share"
SAVINGS = "savings_rate"
SPREAD = "spread"

RETURN_VARIANTS = ("longterm_posttax", "longterm_pretax", "shortrate", "implied", "provided")


def _finite(*values):
    arrays = [np.asarray(v, dtype=float) for v in values]
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input")
    return arrays


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def real_return(tau: ArrayLike, i_nom: ArrayLike, d: ArrayLike) -> ArrayLike:
    """Post-tax real return in percent: ``(1 - tau) * i_nom - d``.

    ``tau`` is a fraction, ``i_nom`` (nominal yield) and ``d`` (deflator
    inflation) are in percent.
    """
    tau, i_nom, d = _finite(tau, i_nom, d)
    return _out((1.0 - tau) * i_nom - d)


def spread(r: ArrayLike, g: ArrayLike) -> ArrayLike:
    r, g = _finite(r, g)
    return _out(r - g)


def implied_return(alpha: ArrayLike, ky: ArrayLike) -> ArrayLike:
    """Return on capital implied by the national accounts, ``100 * alpha / ky`` percent."""
    alpha, ky = _finite(alpha, ky)
    if np.any(ky <= 0):
        raise DomainError("capital-to-income ratio must be positive")
    return _out(100.0 * alpha / ky)


def steady_state_ky(s: float, g: float, delta: float) -> float:
    """Balanced-growth capital-to-income ratio ``s / (g + delta)`` (all fractions)."""
    s, g, delta = (float(x) for x in _finite(s, g, delta))
    if g + delta <= 0:
        raise SingularityError(f"g + delta = {g + delta} <= 0: capital-to-income ratio diverges")
    return s / (g + delta)


def steady_state_alpha(r: float, s: float, g: float, delta: float) -> float:
    """Balanced-growth capital share ``r * s / (g + delta)`` (all fractions)."""
    r, s, g, delta = (float(x) for x in _finite(r, s, g, delta))
    if g + delta <= 0:
        raise SingularityError(f"g + delta = {g + delta} <= 0: capital share diverges")
    return r * s / (g + delta)


def as_fraction(values: ArrayLike, units: str) -> ArrayLike:
    if units in ("percent", "percent-of-income"):
        return values / 100.0
    if units == "fraction":
        return values
    raise DomainError(f"cannot express units {units!r} as a fraction")


# --------------------------------------------------------------------------
# Model specifications

@dataclass(frozen=True)
class ModelSpec:
    """Endogenous variables of one model and the Cholesky ordering applied to them.

    ``ordering[k]`` is the index into ``endogenous`` of the variable placed
    ``k``-th in the recursive ordering (first = most exogenous).
    """

    name: str
    endogenous: tuple[str, ...]
    ordering: tuple[int, ...] = ()

    def __post_init__(self):
        endogenous = tuple(self.endogenous)
        if not endogenous:
            raise ContractError("model needs at least one endogenous variable")
        if len(set(endogenous)) != len(endogenous):
            raise ContractError(f"duplicate endogenous variables {endogenous}")
        ordering = tuple(int(i) for i in self.ordering) or tuple(range(len(endogenous)))
        if sorted(ordering) != list(range(len(endogenous))):
            raise ContractError(f"ordering {ordering} is not a permutation of 0..{len(endogenous) - 1}")
        object.__setattr__(self, "endogenous", endogenous)
        object.__setattr__(self, "ordering", ordering)

    @property
    def ordered_names(self) -> tuple[str, ...]:
        return tuple(self.endogenous[i] for i in self.ordering)

    def with_ordering(self, ordering) -> "ModelSpec":
        """``ordering`` is ``"default"``, ``"inverted"`` or an explicit list of variable names."""
        if ordering == "default":
            perm = tuple(range(len(self.endogenous)))
        elif ordering == "inverted":
            perm = tuple(reversed(range(len(self.endogenous))))
        else:
            names = list(ordering)
            missing = [n for n in names if n not in self.endogenous]
            if missing or len(names) != len(self.endogenous):
                raise ContractError(f"ordering {names} must list each of {self.endogenous} once")
            perm = tuple(self.endogenous.index(n) for n in names)
        return ModelSpec(self.name, self.endogenous, perm)


MODELS = {
    "M1": ModelSpec("M1", (SPREAD, TOP1)),
    "M2": ModelSpec("M2", (SPREAD, CAPITAL_SHARE)),
    "M3": ModelSpec("M3", (SPREAD, SAVINGS, CAPITAL_SHARE)),
}


def model_spec(name: str, variables: Optional[Sequence[str]] = None, ordering="default") -> ModelSpec:
    if name == "custom":
        if not variables:
            raise ContractError("custom model needs a variable list")
        spec = ModelSpec("custom", tuple(variables))
    elif name in MODELS:
        spec = MODELS[name]
    else:
        raise ContractError(f"unknown model {name!r}; expected one of M1, M2, M3, custom")
    return spec.with_ordering(ordering)


# --------------------------------------------------------------------------
# Return construction on a panel

def _units(panel: PanelDataset, name: str) -> str:
    spec = panel.spec_for(name) or default_spec(name)
    return spec.units


def _spread_column(c: CountrySeries, panel: PanelDataset, variant: str) -> np.ndarray:
    def col(name):
        return np.asarray(c.column(name), dtype=float)

    if variant == "provided":
        return col(SPREAD).copy()
    g = col(GROWTH)
    if variant == "implied":
        alpha = as_fraction(col(CAPITAL_SHARE), _units(panel, CAPITAL_SHARE))
        parts = [alpha, col(CAPITAL_OUTPUT), g]
    else:
        yield_name = SHORT_RATE if variant == "shortrate" else LONG_YIELD
        tau = as_fraction(col(TAX), _units(panel, TAX))
        if variant == "longterm_pretax":
            tau = np.zeros_like(tau)
        parts = [tau, col(yield_name), col(DEFLATOR), g]
    ok = np.all([~np.isnan(p) for p in parts], axis=0)
    out = np.full(c.n_periods, np.nan)
    if ok.any():
        if variant == "implied":
            r = implied_return(parts[0][ok], parts[1][ok])
        else:
            r = real_return(parts[0][ok], parts[1][ok], parts[2][ok])
        out[ok] = spread(r, g[ok])
    return out


def required_columns(variant: str) -> tuple[str, ...]:
    if variant not in RETURN_VARIANTS:
        raise ContractError(f"unknown return variant {variant!r}; expected one of {RETURN_VARIANTS}")
    return {
        "longterm_posttax": (TAX, LONG_YIELD, DEFLATOR, GROWTH),
        "longterm_pretax": (LONG_YIELD, DEFLATOR, GROWTH),
        "shortrate": (TAX, SHORT_RATE, DEFLATOR, GROWTH),
        "implied": (CAPITAL_SHARE, CAPITAL_OUTPUT, GROWTH),
        "provided": (SPREAD,),
    }[variant]


def with_spread(panel: PanelDataset, variant: str = "longterm_posttax") -> PanelDataset:
    """Add (or overwrite) the ``spread`` column, the r - g gap built per ``variant``.

    ``longterm_pretax`` sets the tax rate to zero; ``implied`` takes r from the
    capital share over the capital-to-income ratio; ``provided`` keeps an
    existing ``spread`` column untouched.
    """
    missing = [n for n in required_columns(variant) if n not in panel.variable_names]
    if missing:
        raise ContractError(f"return variant {variant!r} needs columns {missing}")
    names = tuple(n for n in panel.variable_names if n != SPREAD) + (SPREAD,)
    countries = []
    for c in panel.countries:
        p = _spread_column(c, panel, variant)
        base = c.select(names[:-1]).values
        countries.append(CountrySeries(c.country_id, c.years, np.column_stack([base, p]), names))
    schema = tuple(s for s in panel.schema if s.name != SPREAD) + (VariableSpec(SPREAD, "percent"),)
    return PanelDataset(tuple(countries), names, panel.frequency, schema)


# --------------------------------------------------------------------------
# Demeaning

def _exact_deviations(x: np.ndarray) -> np.ndarray:
    # Exact rational mean, one rounding per output: shifting the input by any
    # constant that is itself added exactly leaves the output bit-identical.
    fr = [Fraction(float(v)) for v in x]
    mean = sum(fr, Fraction(0)) / len(fr)
    return np.array([float(v - mean) for v in fr])


def demean_country(series: CountrySeries) -> CountrySeries:
    """Subtract each variable's mean over its own observed span; missing edges stay missing."""
    out = np.full(series.values.shape, np.nan)
    for m, name in enumerate(series.variable_names):
        start, stop = series.span(name)
        if stop - start < 2:
            raise InsufficientDataError(
                f"{series.country_id}: variable {name} has {stop - start} observations, need >= 2"
            )
        out[start:stop, m] = _exact_deviations(series.values[start:stop, m])
    return series.with_values(out)


def _deviation_panel(panel: PanelDataset, countries) -> PanelDataset:
    # Deviations from a mean are not levels, so level bounds no longer apply.
    schema = tuple(VariableSpec(s.name, s.units) for s in panel.schema)
    return PanelDataset(tuple(countries), panel.variable_names, panel.frequency, schema)


def demean_panel(panel: PanelDataset) -> PanelDataset:
    return _deviation_panel(panel, (demean_country(c) for c in panel.countries))


# --------------------------------------------------------------------------
# Cross-sectional averages

@dataclass(frozen=True, eq=False)
class CrossSectionAverage:
    """Per-year cross-country average with the number of contributing countries."""

    series: CountrySeries
    counts: np.ndarray


def default_min_coverage(n_countries: int) -> float:
    return n_countries / 3.0


def cross_section_average(
    panel: PanelDataset,
    min_coverage: Optional[float] = None,
    *,
    trim_edges: bool = False,
) -> CrossSectionAverage:
    """Average each variable across the countries observing it in each year.

    A year counts as covered when every variable has at least ``min_coverage``
    contributing countries (default one third of the panel, never below one).
    Uncovered years raise :class:`CoverageError`; with ``trim_edges`` leading
    and trailing uncovered years are dropped instead and only interior ones raise.
    """
    if min_coverage is None:
        min_coverage = default_min_coverage(len(panel))
    min_coverage = max(float(min_coverage), 1.0)
    first = min(int(c.years[0]) for c in panel.countries if c.n_periods)
    last = max(int(c.years[-1]) for c in panel.countries if c.n_periods)
    years = np.arange(first, last + 1, dtype=np.int64)
    m = len(panel.variable_names)
    sums = np.zeros((years.size, m))
    counts = np.zeros((years.size, m), dtype=np.int64)
    for c in sorted(panel.countries, key=lambda s: s.country_id):
        rows = c.years - first
        obs = ~np.isnan(c.values)
        sums[rows] += np.where(obs, c.values, 0.0)
        counts[rows] += obs
    covered = counts.min(axis=1) >= min_coverage
    if trim_edges:
        idx = np.flatnonzero(covered)
        if idx.size == 0:
            raise CoverageError(f"no year reaches min_coverage={min_coverage:g}", years.tolist())
        keep = slice(int(idx[0]), int(idx[-1]) + 1)
        years, sums, counts, covered = years[keep], sums[keep], counts[keep], covered[keep]
    if not covered.all():
        bad = years[~covered].tolist()
        raise CoverageError(f"years below min_coverage={min_coverage:g}: {bad}", bad)
    avg = sums / counts
    series = CountrySeries("AGG", years, avg, panel.variable_names)
    return CrossSectionAverage(series, counts)


def model_panel(
    panel: PanelDataset,
    spec: ModelSpec,
    variant: str = "longterm_posttax",
    min_observations: int = 0,
) -> tuple[PanelDataset, dict[str, str]]:
    """Build the spread, keep the model's variables and demean each country.

    Countries lacking one of the model variables (fewer than two observations)
    or with fewer than ``min_observations`` years on which all model variables
    are observed are excluded; the returned dict maps each excluded id to the
    reason.
    """
    if SPREAD in spec.endogenous:
        panel = with_spread(panel, variant)
    missing = [v for v in spec.endogenous if v not in panel.variable_names]
    if missing:
        raise ContractError(f"panel lacks model variables {missing}")
    sub = panel.select_variables(spec.endogenous)
    kept, excluded = [], {}
    for c in sub.countries:
        short = [v for v in spec.endogenous if np.count_nonzero(~np.isnan(c.column(v))) < 2]
        if short:
            excluded[c.country_id] = f"missing variables {short}"
            logger.info("excluding %s from %s: missing %s", c.country_id, spec.name, short)
            continue
        start, stop = c.common_span()
        if stop - start < min_observations:
            excluded[c.country_id] = f"{stop - start} complete years, below min_observations={min_observations}"
            logger.info("excluding %s from %s: %d complete years", c.country_id, spec.name, stop - start)
            continue
        kept.append(demean_country(c))
    if len(kept) < 2:
        raise InsufficientDataError(f"model {spec.name}: fewer than 2 countries with all variables")
    return _deviation_panel(sub, kept), excluded
