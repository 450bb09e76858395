"""Per-country reduced-form VAR estimation, lag selection and diagnostics.

Models carry no intercept: they are fitted to fixed-effect demeaned data, so a
constant would double count the country effect.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy import stats

from .errors import (
    CollinearityError,
    ContractError,
    DiagnosticError,
    InsufficientDataError,
    SampleSizeError,
)
from .panel_store import CountrySeries

logger = logging.getLogger(__name__)

CRITERIA = ("AIC", "BIC", "HQ")
DEFAULT_BUFFER = 5


@dataclass(frozen=True, eq=False)
class VarModel:
    """Least-squares VAR(J) fit without intercept.

    ``coefficients[j - 1]`` is the ``M x M`` matrix on lag ``j``. ``regressand``,
    ``fitted`` and ``residuals`` are aligned with ``years``; ``presample`` holds
    the ``J`` observations preceding the first regressand row and ``design``
    the lagged regressors, ordered lag 1 block first.
    """

    country_id: str
    variable_names: tuple[str, ...]
    coefficients: np.ndarray
    residuals: np.ndarray
    residual_cov: np.ndarray
    fitted: np.ndarray
    regressand: np.ndarray
    design: np.ndarray
    presample: np.ndarray
    years: np.ndarray
    divisor: str = "ml"
    criteria: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.coefficients.shape[1]

    @property
    def lag_order(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_eff(self) -> int:
        return self.residuals.shape[0]


@dataclass(frozen=True)
class StabilityReport:
    companion_eigenvalues: np.ndarray
    max_modulus: float
    stable: bool


@dataclass(frozen=True)
class WhitenessReport:
    statistics: np.ndarray
    dof: int
    critical_value: float
    pvalues: np.ndarray
    passed: np.ndarray
    lags: int
    level: float


def _as_array(series: Union[CountrySeries, np.ndarray]) -> tuple[str, tuple[str, ...], np.ndarray, np.ndarray]:
    if isinstance(series, CountrySeries):
        start, stop = series.common_span()
        values = np.asarray(series.values[start:stop], dtype=float)
        return series.country_id, series.variable_names, values, np.asarray(series.years[start:stop])
    values = np.asarray(series, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    names = tuple(f"y{m}" for m in range(values.shape[1]))
    return "", names, values, np.arange(values.shape[0])


def lagged_design(y: np.ndarray, lags: int, start: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Regressors ``[y_{t-1}, ..., y_{t-lags}]`` and regressand ``y_t`` for ``t >= start``.

    ``start`` defaults to ``lags``; a larger value holds out extra initial rows
    so that fits with different lag orders share one sample.
    """
    start = lags if start is None else start
    if start < lags:
        raise ContractError("start must be >= lags")
    t = y.shape[0]
    x = np.concatenate([y[start - j : t - j] for j in range(1, lags + 1)], axis=1)
    return x, y[start:]


def _column_names(names: Sequence[str], lags: int) -> list[str]:
    return [f"{n}.L{j}" for j in range(1, lags + 1) for n in names]


def _check_rank(x: np.ndarray, names: Sequence[str], lags: int) -> None:
    _, r, piv = scipy.linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(x.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < x.shape[1]:
        cols = _column_names(names, lags)
        offending = [cols[i] for i in sorted(piv[rank:])]
        raise CollinearityError(f"singular regressor cross-product; dependent columns: {offending}", offending)


def _ols(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    return beta


def estimate_var(
    series: Union[CountrySeries, np.ndarray],
    lags: int,
    *,
    buffer: int = DEFAULT_BUFFER,
    divisor: str = "ml",
) -> VarModel:
    """Fit ``y_t = sum_j R_j y_{t-j} + u_t`` equation by equation.

    A :class:`CountrySeries` is estimated on the rows where all its variables
    are observed. ``divisor="ml"`` scales the residual covariance by the
    effective sample size; ``"dof"`` subtracts the ``M * J`` regressors.
    """
    if lags < 1:
        raise ContractError(f"lag order must be >= 1, got {lags}")
    if divisor not in ("ml", "dof"):
        raise ContractError(f"unknown covariance divisor {divisor!r}")
    country, names, y, years = _as_array(series)
    t, m = y.shape
    if np.isnan(y).any():
        raise InsufficientDataError(f"{country}: missing values inside the estimation sample")
    if t - lags < m * lags + buffer:
        raise SampleSizeError(
            f"{country}: {t} observations too few for VAR({lags}) in {m} variables "
            f"(need T - J >= M*J + {buffer})"
        )
    x, yy = lagged_design(y, lags)
    _check_rank(x, names, lags)
    beta = _ols(x, yy)
    return _assemble(country, names, beta, x, yy, y[:lags], years[lags:], divisor)


def _assemble(country, names, beta, x, yy, presample, years, divisor, criteria=None) -> VarModel:
    m = yy.shape[1]
    lags = beta.shape[0] // m
    fitted = x @ beta
    resid = yy - fitted
    n = yy.shape[0]
    denom = n if divisor == "ml" else n - m * lags
    cov = resid.T @ resid / denom
    cov = (cov + cov.T) / 2.0
    coefs = beta.T.reshape(m, lags, m).transpose(1, 0, 2)
    arrays = [coefs, resid, cov, fitted, yy, x, presample, np.asarray(years)]
    for a in arrays:
        a.setflags(write=False)
    return VarModel(country, tuple(names), *arrays, divisor=divisor, criteria=dict(criteria or {}))


def refit_on_design(model: VarModel, regressand: np.ndarray, design: Optional[np.ndarray] = None) -> VarModel:
    """Re-estimate ``model``'s lag structure for a new regressand.

    With ``design`` omitted the original regressors are reused (fixed design).
    """
    if design is None:
        x = model.design
    else:
        x = np.asarray(design, dtype=float)
        _check_rank(x, model.variable_names, model.lag_order)
    yy = np.asarray(regressand, dtype=float)
    beta = _ols(x, yy)
    return _assemble(
        model.country_id, model.variable_names, beta, x, yy, model.presample, model.years, model.divisor
    )


def information_criterion(cov: np.ndarray, n_params: int, n_obs: int, criterion: str) -> float:
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        logdet = -math.inf
    if criterion == "AIC":
        penalty = 2.0 * n_params / n_obs
    elif criterion == "BIC":
        penalty = math.log(n_obs) * n_params / n_obs
    elif criterion == "HQ":
        penalty = 2.0 * math.log(math.log(n_obs)) * n_params / n_obs
    else:
        raise ContractError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    return logdet + penalty


def lag_criteria(
    series: Union[CountrySeries, np.ndarray],
    max_lag: int,
    criterion: str = "AIC",
    *,
    buffer: int = DEFAULT_BUFFER,
) -> dict[int, float]:
    """Criterion value for each lag ``1..max_lag`` on the common sample ``t > max_lag``."""
    if max_lag < 1:
        raise ContractError(f"max_lag must be >= 1, got {max_lag}")
    if criterion not in CRITERIA:
        raise ContractError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    country, names, y, _ = _as_array(series)
    t, m = y.shape
    if t - max_lag < m * max_lag + buffer:
        raise SampleSizeError(
            f"{country}: {t} observations too few for lag search up to {max_lag} in {m} variables"
        )
    values = {}
    for p in range(1, max_lag + 1):
        x, yy = lagged_design(y, p, start=max_lag)
        _check_rank(x, names, p)
        resid = yy - x @ _ols(x, yy)
        cov = resid.T @ resid / yy.shape[0]
        values[p] = information_criterion(cov, m * m * p, yy.shape[0], criterion)
    return values


def select_lag(
    series: Union[CountrySeries, np.ndarray],
    max_lag: int,
    criterion: str = "AIC",
    *,
    buffer: int = DEFAULT_BUFFER,
) -> int:
    """Criterion-minimising lag order; ties go to the smaller lag."""
    return best_lag(lag_criteria(series, max_lag, criterion, buffer=buffer))


def best_lag(values: dict[int, float]) -> int:
    lags = sorted(values)
    best = lags[0]
    for p in lags[1:]:
        if values[p] < values[best] - 1e-12 * max(1.0, abs(values[best])):
            best = p
    return best


def companion_matrix(coefficients: np.ndarray) -> np.ndarray:
    coefs = np.asarray(coefficients, dtype=float)
    lags, m, _ = coefs.shape
    comp = np.zeros((m * lags, m * lags))
    comp[:m] = np.concatenate(list(coefs), axis=1)
    if lags > 1:
        comp[m:, : m * (lags - 1)] = np.eye(m * (lags - 1))
    return comp


def companion_stability(model: Union[VarModel, np.ndarray], margin: float = 0.0) -> StabilityReport:
    coefs = model.coefficients if isinstance(model, VarModel) else model
    moduli = np.sort(np.abs(np.linalg.eigvals(companion_matrix(coefs))))[::-1]
    top = float(moduli[0]) if moduli.size else 0.0
    return StabilityReport(moduli, top, top < 1.0 - margin)


def ljung_box(x: np.ndarray, lags: int) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    denom = x @ x
    acf = np.array([x[k:] @ x[:-k] for k in range(1, lags + 1)]) / denom
    return float(n * (n + 2) * np.sum(acf**2 / (n - np.arange(1, lags + 1))))


def whiteness(model: VarModel, lags: int = 10, level: float = 0.05) -> WhitenessReport:
    """Ljung-Box portmanteau test on each residual column.

    Degrees of freedom are ``lags - J`` floored at one; an equation passes when
    its statistic is below the chi-square critical value at ``level``.
    """
    resid = model.residuals
    n = resid.shape[0]
    if lags < 1 or lags >= n / 2:
        raise ContractError(f"portmanteau lags must satisfy 1 <= lags < T_eff/2 = {n / 2:g}, got {lags}")
    var = resid.var(axis=0)
    scale = max(1.0, float(np.max(np.abs(model.regressand)))) ** 2
    if np.any(var <= 1e-24 * scale):
        raise DiagnosticError(f"{model.country_id}: zero-variance residuals")
    q = np.array([ljung_box(resid[:, k], lags) for k in range(resid.shape[1])])
    dof = max(lags - model.lag_order, 1)
    crit = float(stats.chi2.ppf(1.0 - level, dof))
    return WhitenessReport(q, dof, crit, stats.chi2.sf(q, dof), q < crit, lags, level)


def with_criteria(model: VarModel, criteria: dict) -> VarModel:
    return replace(model, criteria=dict(criteria))
