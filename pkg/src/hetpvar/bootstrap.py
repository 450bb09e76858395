"""Resampling standard errors for the cross-sectional median impulse responses.

Each repetition resamples the structural shocks while keeping their
cross-country dependence: the common shocks are drawn with one set of time
indices shared by every country, each country's idiosyncratic shocks with its
own indices, and the composite shocks are rebuilt as ``lambda * e_bar + e_tilde``.
Mapped through ``B`` and added to the fitted values, they give pseudo-series
on which every member VAR is re-estimated with its baseline lag order.

Random numbers for repetition ``r`` come from ``default_rng([seed, r])``:
the common draw first, then one idiosyncratic draw per country in id order.
Results therefore do not depend on how repetitions are spread over workers.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BootstrapError, ContractError, PanelVarError
from .irf_engine import IrfTensor, ordered_coefficients, structural_responses
from .panel_decomp import LoadingMatrix, MemberEstimate, PanelEstimate, finish_irf
from .svar_ident import StructuralFactorization, structural_residuals
from .var_core import VarModel, lagged_design, refit_on_design

logger = logging.getLogger(__name__)

DEFAULT_K = 1000
DEFAULT_Z = 1.645
MODES = ("fixed", "recursive")
MAX_DROP_SHARE = 0.10
WORKERS_ENV = "HETPVAR_WORKERS"


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Simulated medians and the bands built from them.

    ``D[h, m, j, r]`` is the cross-sectional median response of variable ``m``
    to shock ``j`` at horizon ``h`` in kept repetition ``r``. ``median`` is
    the point estimate the bands are centred on.
    """

    D: np.ndarray
    sigma: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    k: int
    seed: int
    z: float = DEFAULT_Z
    mode: str = "fixed"
    dropped: tuple[int, ...] = ()
    failures: dict = field(default_factory=dict)

    @property
    def n_kept(self) -> int:
        return self.D.shape[-1]


def recover_idiosyncratic(e: np.ndarray, e_bar: np.ndarray, loadings) -> np.ndarray:
    """``e - lambda * e_bar`` for aligned composite and common shocks."""
    e = np.asarray(e, dtype=float)
    e_bar = np.asarray(e_bar, dtype=float)
    lam = loadings.diagonal if isinstance(loadings, LoadingMatrix) else np.asarray(loadings, dtype=float)
    if e.shape != e_bar.shape or e.ndim != 2:
        raise ContractError(f"composite shocks {e.shape} and common shocks {e_bar.shape} are not aligned")
    if lam.shape != (e.shape[1],):
        raise ContractError(f"expected {e.shape[1]} loadings, got shape {lam.shape}")
    return e - lam * e_bar


def resample_shocks(
    common: np.ndarray,
    idiosyncratic: Sequence[np.ndarray],
    loadings: Sequence[np.ndarray],
    rng: Optional[np.random.Generator] = None,
    *,
    common_index: Optional[np.ndarray] = None,
    idiosyncratic_index: Optional[Sequence[np.ndarray]] = None,
    lengths: Optional[Sequence[int]] = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Draw a common shock history shared by all countries and independent idiosyncratic ones.

    Parameters
    ----------
    common : (T, M) array
        Common structural shocks to draw from.
    idiosyncratic : sequence of (T_i, M) arrays
        Each country's idiosyncratic shocks.
    loadings : sequence of (M,) arrays
        Loading diagonals, one per country.
    rng : Generator, optional
        Source of the index draws; ignored for indices passed explicitly.
    common_index, idiosyncratic_index : optional
        Explicit time indices. ``common_index`` must be at least as long as the
        longest country output.
    lengths : sequence of int, optional
        Output length per country; defaults to the idiosyncratic lengths.

    Returns
    -------
    common_draw : (L, M) array
        The resampled common history, ``L`` the longest output length.
    composite : list of arrays
        ``lambda_i * common_draw[:T_i] + resampled e_tilde_i`` per country.
    """
    common = np.asarray(common, dtype=float)
    idio = [np.asarray(x, dtype=float) for x in idiosyncratic]
    if common.shape[0] == 0 or any(x.shape[0] == 0 for x in idio):
        raise ContractError("cannot resample from an empty shock series")
    if len(loadings) != len(idio):
        raise ContractError("one loading vector per country is required")
    lengths = [x.shape[0] for x in idio] if lengths is None else [int(n) for n in lengths]
    longest = max(lengths)
    if common_index is None:
        common_index = rng.integers(0, common.shape[0], longest)
    common_draw = common[np.asarray(common_index)[:longest]]
    out = []
    for i, (x, lam, n) in enumerate(zip(idio, loadings, lengths)):
        if idiosyncratic_index is None:
            idx = rng.integers(0, x.shape[0], n)
        else:
            idx = np.asarray(idiosyncratic_index[i])
        out.append(np.asarray(lam, dtype=float) * common_draw[:n] + x[idx])
    return common_draw, out


def pseudo_series(model: VarModel, fact: StructuralFactorization, shocks: np.ndarray) -> np.ndarray:
    """Fitted values plus ``B e`` mapped back to the model's variable order."""
    e = np.asarray(shocks, dtype=float)
    if e.shape != model.fitted.shape:
        raise ContractError(f"resampled shocks {e.shape} do not match fitted values {model.fitted.shape}")
    u_ordered = e @ np.asarray(fact.B).T
    u = np.empty_like(u_ordered)
    u[:, list(fact.ordering)] = u_ordered
    return model.fitted + u


def recursive_series(model: VarModel, fact: StructuralFactorization, shocks: np.ndarray) -> np.ndarray:
    """Rebuild the series from the presample through the estimated recursion."""
    e = np.asarray(shocks, dtype=float)
    if e.shape != model.fitted.shape:
        raise ContractError(f"resampled shocks {e.shape} do not match fitted values {model.fitted.shape}")
    u = pseudo_series(model, fact, e) - model.fitted
    lags = model.lag_order
    y = np.concatenate([model.presample, np.zeros_like(u)])
    for t in range(u.shape[0]):
        acc = u[t].copy()
        for j in range(1, lags + 1):
            acc += model.coefficients[j - 1] @ y[lags + t - j]
        y[lags + t] = acc
    return y


# --------------------------------------------------------------------------
# Repetitions

@dataclass(frozen=True, eq=False)
class _Baseline:
    """Immutable inputs shared by every repetition."""

    members: tuple[MemberEstimate, ...]
    common_shocks: np.ndarray
    horizon: int
    scale: str
    accumulate: bool
    mode: str
    reidentify: bool


def _baseline(estimate: PanelEstimate, mode: str, reidentify: bool) -> _Baseline:
    return _Baseline(
        estimate.members,
        np.asarray(estimate.common.factorization.structural_residuals),
        estimate.horizon,
        estimate.scale,
        estimate.accumulated,
        mode,
        reidentify,
    )


def _member_refit(base: _Baseline, member: MemberEstimate, shocks: np.ndarray) -> IrfTensor:
    model, fact = member.model, member.factorization
    if base.mode == "fixed":
        refit = refit_on_design(model, pseudo_series(model, fact, shocks))
    else:
        y = recursive_series(model, fact, shocks)
        x, yy = lagged_design(y, model.lag_order)
        refit = refit_on_design(model, yy, x)
    if base.reidentify:
        B = structural_residuals(refit, fact.ordering).B
    else:
        B = fact.B
    coefs = ordered_coefficients(refit.coefficients, fact.ordering)
    irf = IrfTensor(member.country_id, structural_responses(coefs, B, base.horizon))
    return finish_irf(irf, B, base.scale, base.accumulate)


def _repetition(base: _Baseline, seed: int, rep: int) -> np.ndarray:
    rng = np.random.default_rng([int(seed), int(rep)])
    lengths = [m.model.n_eff for m in base.members]
    _, composite = resample_shocks(
        base.common_shocks,
        [m.loadings.idiosyncratic for m in base.members],
        [m.loadings.diagonal for m in base.members],
        rng,
        lengths=lengths,
    )
    stack = np.stack([_member_refit(base, m, e).responses for m, e in zip(base.members, composite)])
    return np.median(stack, axis=0)


def _run_chunk(base: _Baseline, seed: int, reps: Sequence[int]) -> list[tuple[int, Optional[np.ndarray], str]]:
    out = []
    for rep in reps:
        try:
            out.append((rep, _repetition(base, seed, rep), ""))
        except (PanelVarError, np.linalg.LinAlgError) as exc:
            out.append((rep, None, f"{type(exc).__name__}: {exc}"))
    return out


_WORKER_BASE: Optional[_Baseline] = None


def _init_worker(base: _Baseline) -> None:
    global _WORKER_BASE
    _WORKER_BASE = base


def _worker_chunk(seed: int, reps: Sequence[int]):
    return _run_chunk(_WORKER_BASE, seed, reps)


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "").strip()
    if not value:
        return 1
    try:
        n = int(value)
    except ValueError:
        raise ContractError(f"{WORKERS_ENV} must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ContractError(f"{WORKERS_ENV} must be a positive integer, got {value!r}")
    return n


def shifted_std(d: np.ndarray, axis: int = -1) -> np.ndarray:
    """Population standard deviation, shifted by the first draw.

    Rows whose draws are all equal give exactly zero.
    """
    d = np.asarray(d, dtype=float)
    shifted = d - np.take(d, [0], axis=axis)
    centred = shifted - shifted.mean(axis=axis, keepdims=True)
    return np.sqrt(np.mean(centred * centred, axis=axis))


def run_bootstrap(
    estimate: PanelEstimate,
    k: int = DEFAULT_K,
    seed: int = 0,
    *,
    z: float = DEFAULT_Z,
    workers: Optional[int] = None,
    mode: str = "fixed",
    reidentify: bool = True,
) -> BootstrapResult:
    """Resample, re-estimate and collect ``k`` simulated cross-sectional medians.

    ``mode="fixed"`` regresses fitted values plus resampled residuals on the
    baseline regressors; ``"recursive"`` rebuilds the series through the
    estimated recursion and re-forms the regressors. With ``reidentify=False``
    each country keeps its baseline impact matrix instead of refactoring the
    resampled residual covariance. Failed repetitions are dropped; more than
    10% dropped is an error.
    """
    if k < 2:
        raise ContractError(f"bootstrap needs k >= 2 repetitions, got {k}")
    if mode not in MODES:
        raise ContractError(f"unknown bootstrap mode {mode!r}; expected one of {MODES}")
    if z <= 0:
        raise ContractError(f"band multiplier z must be positive, got {z}")
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ContractError(f"workers must be >= 1, got {workers}")
    base = _baseline(estimate, mode, reidentify)
    reps = list(range(k))
    if workers == 1:
        results = _run_chunk(base, seed, reps)
    else:
        chunks = [reps[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(base,)) as pool:
            results = [r for part in pool.map(_worker_chunk, [seed] * len(chunks), chunks) for r in part]
    results.sort(key=lambda r: r[0])

    failures = {rep: msg for rep, value, msg in results if value is None}
    if len(failures) > MAX_DROP_SHARE * k:
        sample = "; ".join(f"rep {r}: {m}" for r, m in list(failures.items())[:5])
        raise BootstrapError(f"{len(failures)} of {k} repetitions failed (limit {MAX_DROP_SHARE:.0%}): {sample}")
    if failures:
        logger.warning("bootstrap dropped %d of %d repetitions", len(failures), k)
    kept = [value for _, value, _ in results if value is not None]
    D = np.stack(kept, axis=-1)
    sigma = shifted_std(D, axis=-1)
    median = estimate.distribution("composite").median
    return BootstrapResult(
        D, sigma, median, median - z * sigma, median + z * sigma, k, int(seed), float(z), mode,
        tuple(sorted(failures)), failures,
    )
