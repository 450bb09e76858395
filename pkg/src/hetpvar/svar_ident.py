"""Recursive (Cholesky) identification of structural shocks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import ContractError, FactorizationError
from .var_core import VarModel

PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StructuralFactorization:
    """Impact matrix and structural shocks in *ordered* coordinates.

    ``B`` is lower triangular with ``B @ B.T`` equal to the residual covariance
    after permuting variables by ``ordering``; ``structural_residuals`` is
    ``T_eff x M`` with rows aligned to ``years``.
    """

    ordering: tuple[int, ...]
    B: np.ndarray
    structural_residuals: np.ndarray
    variable_names: tuple[str, ...] = ()
    years: Optional[np.ndarray] = None
    country_id: str = ""


def cholesky_factor(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular ``B`` with ``B @ B.T == cov`` and a strictly positive diagonal.

    ``cov`` is symmetrised first. Raises :class:`FactorizationError` when it is
    not positive definite, reporting the most negative eigenvalue.
    """
    a = np.asarray(cov, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"covariance must be square, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > PSD_TOL * scale:
        raise FactorizationError("covariance matrix is not symmetric")
    a = (a + a.T) / 2.0
    eig = np.linalg.eigvalsh(a)
    if eig.size and eig[0] < -PSD_TOL * scale:
        raise FactorizationError(
            f"covariance not positive semidefinite; most negative eigenvalue {eig[0]:.3e}", float(eig[0])
        )
    try:
        b = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise FactorizationError(
            f"covariance singular; smallest eigenvalue {eig[0]:.3e}", float(eig[0])
        ) from None
    if np.any(np.diag(b) <= 0) or not np.all(np.isfinite(b)):
        raise FactorizationError(f"degenerate factor; smallest eigenvalue {eig[0]:.3e}", float(eig[0]))
    return b


def check_ordering(ordering: Sequence[int], m: int) -> tuple[int, ...]:
    perm = tuple(int(i) for i in ordering)
    if sorted(perm) != list(range(m)):
        raise ContractError(f"ordering {perm} is not a permutation of 0..{m - 1}")
    return perm


def permute_cov(cov: np.ndarray, ordering: Sequence[int]) -> np.ndarray:
    idx = list(ordering)
    return np.asarray(cov)[np.ix_(idx, idx)]


def structural_residuals(model: VarModel, ordering: Optional[Sequence[int]] = None) -> StructuralFactorization:
    """Factor the permuted residual covariance and solve ``B e_t = u_t`` for every period."""
    m = model.n_vars
    perm = check_ordering(range(m) if ordering is None else ordering, m)
    b = cholesky_factor(permute_cov(model.residual_cov, perm))
    u = model.residuals[:, list(perm)]
    e = scipy.linalg.solve_triangular(b, u.T, lower=True).T
    names = tuple(model.variable_names[i] for i in perm)
    b.setflags(write=False)
    e.setflags(write=False)
    return StructuralFactorization(perm, b, e, names, model.years, model.country_id)


def one_pp_scale(fact: StructuralFactorization) -> np.ndarray:
    """Per-shock divisors that turn unit-variance shocks into 1pp own-variable impacts."""
    return np.diag(fact.B).copy()
