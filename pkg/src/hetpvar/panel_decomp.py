"""Common-versus-idiosyncratic decomposition and cross-sectional IRF summaries.

The common component comes from a VAR fitted to the cross-sectional average
of the demeaned panel, identified with the same recursive ordering as the
member VARs. Each country's structural shocks are then projected, shock by
shock, on the common structural shocks; the slopes are the loadings.

The response split follows the as-written definitions

    common part         = lambda_j * A[..., j]
    idiosyncratic part  = (1 - lambda_j**2) * A[..., j]

which are *not* additive unless every loading is 0 or 1 (e.g. lambda = 0.6
gives 0.6 + 0.64 of the composite). What does add up exactly is the variance
share of each unit-variance shock, lambda**2 + (1 - lambda**2) = 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import (
    CollinearityError,
    ContractError,
    DegenerateError,
    FactorizationError,
    InsufficientDataError,
    SampleSizeError,
)
from .irf_engine import DEFAULT_HORIZON, IrfTensor, accumulate_irf, compute_irf, rescale_one_pp
from .panel_store import CountrySeries, PanelDataset
from .svar_ident import StructuralFactorization, structural_residuals
from .transform import CrossSectionAverage, ModelSpec, cross_section_average
from .var_core import (
    DEFAULT_BUFFER,
    StabilityReport,
    VarModel,
    best_lag,
    companion_stability,
    estimate_var,
    lag_criteria,
    with_criteria,
)

logger = logging.getLogger(__name__)

MIN_OVERLAP = 10


@dataclass(frozen=True, eq=False)
class CommonVar:
    model: VarModel
    factorization: StructuralFactorization
    average: CrossSectionAverage


@dataclass(frozen=True, eq=False)
class LoadingMatrix:
    """Diagonal loadings of one country's structural shocks on the common shocks.

    ``idiosyncratic`` is ``e - lambda * e_bar`` over the overlapping ``years``.
    """

    country_id: str
    Lambda: np.ndarray
    years: np.ndarray
    idiosyncratic: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.Lambda).copy()


@dataclass(frozen=True, eq=False)
class IrfDistribution:
    members: tuple[IrfTensor, ...]
    median: np.ndarray
    mean: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    count: np.ndarray

    @property
    def country_ids(self) -> list[str]:
        return [m.country_id for m in self.members]


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    slope: float
    intercept: float
    n: int


def common_var(
    panel: PanelDataset,
    spec: ModelSpec,
    lags: Optional[int] = None,
    *,
    max_lag: int = 4,
    criterion: str = "AIC",
    min_coverage: Optional[float] = None,
    buffer: int = DEFAULT_BUFFER,
    divisor: str = "ml",
) -> CommonVar:
    """Fit and identify the VAR of the cross-sectional average of a demeaned panel.

    The lag order is ``lags`` when given, otherwise it is selected by
    ``criterion`` independently of the member VARs. Edge years covered by fewer
    than ``min_coverage`` countries are trimmed before estimation.
    """
    if not spec.endogenous:
        raise ContractError("model has no endogenous variables")
    missing = [v for v in spec.endogenous if v not in panel.variable_names]
    if missing:
        raise ContractError(f"panel lacks model variables {missing}")
    sub = panel.select_variables(spec.endogenous)
    avg = cross_section_average(sub, min_coverage, trim_edges=True)
    criteria = {}
    if lags is None:
        criteria = lag_criteria(avg.series, max_lag, criterion, buffer=buffer)
        lags = best_lag(criteria)
    model = with_criteria(estimate_var(avg.series, lags, buffer=buffer, divisor=divisor), criteria)
    fact = structural_residuals(model, spec.ordering)
    return CommonVar(model, fact, avg)


def _align(a_years: np.ndarray, b_years: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    years, ia, ib = np.intersect1d(np.asarray(a_years), np.asarray(b_years), return_indices=True)
    return years, ia, ib


def loading_slopes(e: np.ndarray, e_bar: np.ndarray) -> np.ndarray:
    """Per-column least-squares slope of ``e`` on ``e_bar`` (intercept allowed)."""
    ec = e - e.mean(axis=0)
    bc = e_bar - e_bar.mean(axis=0)
    var = np.sum(bc * bc, axis=0)
    scale = np.maximum(1.0, np.sum(e_bar * e_bar, axis=0))
    if np.any(var <= 1e-24 * scale):
        raise DegenerateError("common structural shock has zero variance over the overlap")
    return np.sum(ec * bc, axis=0) / var


def estimate_loadings(
    member: StructuralFactorization,
    common: StructuralFactorization,
    min_overlap: int = MIN_OVERLAP,
) -> LoadingMatrix:
    if member.ordering != common.ordering:
        raise ContractError("member and common factorizations use different orderings")
    years, im, ic = _align(member.years, common.years)
    if years.size < min_overlap:
        raise SampleSizeError(
            f"{member.country_id}: {years.size} overlapping periods with the common shocks, need {min_overlap}"
        )
    e = member.structural_residuals[im]
    e_bar = common.structural_residuals[ic]
    lam = loading_slopes(e, e_bar)
    return LoadingMatrix(member.country_id, np.diag(lam), years, e - lam * e_bar)


def decompose_irf(irf: IrfTensor, loadings: LoadingMatrix) -> tuple[IrfTensor, IrfTensor]:
    lam = loadings.diagonal
    if lam.size != irf.n_vars or not np.all(np.isfinite(lam)):
        raise ContractError("loadings do not match the IRF dimension or are not finite")
    common = irf.with_responses(irf.responses * lam[None, None, :], kind="common_part")
    idio = irf.with_responses(irf.responses * (1.0 - lam**2)[None, None, :], kind="idiosyncratic_part")
    return common, idio


def summarize(irfs: Sequence[IrfTensor]) -> IrfDistribution:
    """Pointwise median, mean and quartiles across countries.

    Quartiles interpolate linearly between order statistics. Members are
    sorted by country id first so the reduction is order independent.
    """
    members = tuple(sorted(irfs, key=lambda t: t.country_id))
    if not members:
        raise ContractError("cannot summarize an empty IRF collection")
    first = members[0]
    for t in members[1:]:
        if t.responses.shape != first.responses.shape:
            raise ContractError(
                f"{t.country_id}: IRF shape {t.responses.shape} differs from {first.responses.shape}"
            )
        if (t.kind, t.scale, t.accumulated) != (first.kind, first.scale, first.accumulated):
            raise ContractError(f"{t.country_id}: mixed IRF kinds in one distribution")
    stack = np.stack([t.responses for t in members])
    q25, median, q75 = np.percentile(stack, [25, 50, 75], axis=0)
    count = np.full(first.responses.shape, len(members), dtype=np.int64)
    return IrfDistribution(members, median, stack.mean(axis=0), q25, q75, count)


def covariate_correlation(responses: Sequence[float], covariate: Sequence[float]) -> CorrelationResult:
    """Pearson correlation of per-country responses with a covariate, plus the OLS line
    ``covariate = intercept + slope * response`` used for the scatter plot."""
    x = np.asarray(responses, dtype=float)
    y = np.asarray(covariate, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("responses and covariate must be paired 1-D sequences")
    if x.size < 3:
        raise ContractError(f"need at least 3 paired observations, got {x.size}")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = xc @ xc, yc @ yc
    if sxx <= 0 or syy <= 0:
        raise DegenerateError("zero variance in responses or covariate")
    sxy = xc @ yc
    rho = float(np.clip(sxy / np.sqrt(sxx * syy), -1.0, 1.0))
    slope = float(sxy / sxx)
    return CorrelationResult(rho, slope, float(y.mean() - slope * x.mean()), int(x.size))


# --------------------------------------------------------------------------
# Panel-level driver

@dataclass(frozen=True, eq=False)
class MemberEstimate:
    country_id: str
    model: VarModel
    factorization: StructuralFactorization
    stability: StabilityReport
    irf: IrfTensor
    loadings: LoadingMatrix
    common_part: IrfTensor
    idiosyncratic_part: IrfTensor


@dataclass(frozen=True, eq=False)
class PanelEstimate:
    """Everything the baseline run produces for one model, members sorted by id.

    ``excluded`` maps a country id to the reason it was left out. ``scale`` and
    ``accumulated`` describe how every IRF in the estimate was post-processed.
    """

    spec: ModelSpec
    members: tuple[MemberEstimate, ...]
    common: CommonVar
    excluded: dict
    horizon: int
    scale: str = "unit_shock"
    accumulated: bool = False

    @property
    def country_ids(self) -> list[str]:
        return [m.country_id for m in self.members]

    @property
    def lag_orders(self) -> dict[str, int]:
        return {m.country_id: m.model.lag_order for m in self.members}

    def distribution(self, kind: str = "composite") -> IrfDistribution:
        attr = {"composite": "irf", "common_part": "common_part", "idiosyncratic_part": "idiosyncratic_part"}
        if kind not in attr:
            raise ContractError(f"unknown IRF kind {kind!r}")
        return summarize([getattr(m, attr[kind]) for m in self.members])


def finish_irf(irf: IrfTensor, B: np.ndarray, scale: str, accumulate: bool) -> IrfTensor:
    """Apply the configured shock scale and optional accumulation."""
    if scale == "one_pp":
        irf = rescale_one_pp(irf, B)
    elif scale != "unit_shock":
        raise ContractError(f"unknown IRF scale {scale!r}")
    return accumulate_irf(irf) if accumulate else irf


def _member_lag(c: CountrySeries, lags, max_lag: int, criterion: str, buffer: int) -> tuple[int, dict]:
    if isinstance(lags, Mapping):
        lags = lags.get(c.country_id)
    if lags is not None:
        return int(lags), {}
    start, stop = c.common_span()
    m = len(c.variable_names)
    # Shrink the search when the sample cannot support max_lag.
    top = max_lag
    while top > 1 and (stop - start) - top < m * top + buffer:
        top -= 1
    criteria = lag_criteria(c, top, criterion, buffer=buffer)
    return best_lag(criteria), criteria


def estimate_panel(
    panel: PanelDataset,
    spec: ModelSpec,
    lags: Union[None, int, Mapping[str, int]] = None,
    *,
    max_lag: int = 4,
    criterion: str = "AIC",
    common_lags: Optional[int] = None,
    horizon: int = DEFAULT_HORIZON,
    scale: str = "unit_shock",
    accumulate: bool = False,
    drop_unstable: bool = False,
    min_coverage: Optional[float] = None,
    buffer: int = DEFAULT_BUFFER,
    divisor: str = "ml",
    min_overlap: int = MIN_OVERLAP,
) -> PanelEstimate:
    """Estimate, identify and decompose every member VAR of a demeaned panel.

    ``lags`` is ``None`` for per-country selection by ``criterion`` up to
    ``max_lag``, an integer for one common order, or a mapping from country id
    to order (countries absent from the mapping are selected). Countries whose
    VAR cannot be estimated or identified, unstable ones when
    ``drop_unstable``, and ones whose shocks overlap the common shocks for fewer
    than ``min_overlap`` periods are excluded and logged.
    """
    missing = [v for v in spec.endogenous if v not in panel.variable_names]
    if missing:
        raise ContractError(f"panel lacks model variables {missing}")
    sub = panel.select_variables(spec.endogenous)
    excluded: dict[str, str] = {}
    fits = []
    for c in sorted(sub.countries, key=lambda s: s.country_id):
        try:
            lag, criteria = _member_lag(c, lags, max_lag, criterion, buffer)
            model = with_criteria(estimate_var(c, lag, buffer=buffer, divisor=divisor), criteria)
            fact = structural_residuals(model, spec.ordering)
        except (InsufficientDataError, CollinearityError, FactorizationError) as exc:
            excluded[c.country_id] = f"{type(exc).__name__}: {exc}"
            logger.info("excluding %s: %s", c.country_id, exc)
            continue
        stability = companion_stability(model)
        if not stability.stable:
            if drop_unstable:
                excluded[c.country_id] = f"unstable: max modulus {stability.max_modulus:.4f}"
                logger.info("excluding unstable %s (max modulus %.4f)", c.country_id, stability.max_modulus)
                continue
            logger.warning("%s: VAR unstable, max modulus %.4f", c.country_id, stability.max_modulus)
        fits.append((c, model, fact, stability))
    if len(fits) < 2:
        raise InsufficientDataError(f"model {spec.name}: fewer than 2 estimable countries")

    kept = sub.replace_countries(c for c, *_ in fits)
    common = common_var(
        kept, spec, common_lags, max_lag=max_lag, criterion=criterion,
        min_coverage=min_coverage, buffer=buffer, divisor=divisor,
    )
    members = []
    for c, model, fact, stability in fits:
        try:
            loadings = estimate_loadings(fact, common.factorization, min_overlap)
        except SampleSizeError as exc:
            excluded[c.country_id] = f"{type(exc).__name__}: {exc}"
            logger.info("excluding %s: %s", c.country_id, exc)
            continue
        irf = finish_irf(compute_irf(model, fact, horizon), fact.B, scale, accumulate)
        common_part, idio_part = decompose_irf(irf, loadings)
        members.append(MemberEstimate(c.country_id, model, fact, stability, irf, loadings, common_part, idio_part))
    if not members:
        raise InsufficientDataError(f"model {spec.name}: no country overlaps the common shocks")
    return PanelEstimate(spec, tuple(members), common, dict(sorted(excluded.items())), horizon, scale, accumulate)
