"""Structural impulse responses from the vector moving-average representation."""

from __future__ import annotations

from dataclasses import dataclass, replace
import numpy as np

from .errors import ContractError
from .svar_ident import StructuralFactorization
from .var_core import VarModel

DEFAULT_HORIZON = 20
KINDS = ("composite", "common_part", "idiosyncratic_part")
SCALES = ("unit_shock", "one_pp")


@dataclass(frozen=True, eq=False)
class IrfTensor:
    """Responses over horizons ``0..H`` in ordered coordinates.

    ``responses[h, m, j]`` is the response of variable ``m`` at horizon ``h``
    to structural shock ``j``, so ``responses[0]`` is the impact matrix ``B``
    itself (lower triangular). ``variable_names`` labels both axes: shock
    ``j`` is the innovation attached to ordered variable ``j``.
    """

    country_id: str
    responses: np.ndarray
    kind: str = "composite"
    scale: str = "unit_shock"
    accumulated: bool = False
    variable_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown IRF kind {self.kind!r}")
        if self.scale not in SCALES:
            raise ContractError(f"unknown IRF scale {self.scale!r}")
        r = np.asarray(self.responses, dtype=float)
        if r.ndim != 3 or r.shape[1] != r.shape[2]:
            raise ContractError(f"responses must be (H+1, M, M), got {r.shape}")
        object.__setattr__(self, "responses", r)

    @property
    def horizon(self) -> int:
        return self.responses.shape[0] - 1

    @property
    def n_vars(self) -> int:
        return self.responses.shape[1]

    def with_responses(self, responses: np.ndarray, **changes) -> "IrfTensor":
        return replace(self, responses=responses, **changes)


def vma_coefficients(coefficients: np.ndarray, horizon: int) -> np.ndarray:
    """Reduced-form MA matrices ``Phi_0 = I``, ``Phi_h = sum_{j<=min(h,J)} R_j Phi_{h-j}``."""
    coefs = np.asarray(coefficients, dtype=float)
    lags, m, _ = coefs.shape
    phi = np.zeros((horizon + 1, m, m))
    phi[0] = np.eye(m)
    for h in range(1, horizon + 1):
        acc = np.zeros((m, m))
        for j in range(1, min(h, lags) + 1):
            acc += coefs[j - 1] @ phi[h - j]
        phi[h] = acc
    return phi


def ordered_coefficients(coefficients: np.ndarray, ordering) -> np.ndarray:
    idx = list(ordering)
    return np.asarray(coefficients)[:, idx][:, :, idx]


def structural_responses(coefficients: np.ndarray, B: np.ndarray, horizon: int) -> np.ndarray:
    """``Phi_h @ B`` for ``h = 0..horizon``; coefficients and ``B`` share one coordinate order."""
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    phi = vma_coefficients(coefficients, horizon)
    out = phi @ np.asarray(B, dtype=float)
    out[0] = B
    return out


def compute_irf(model: VarModel, fact: StructuralFactorization, horizon: int = DEFAULT_HORIZON) -> IrfTensor:
    coefs = ordered_coefficients(model.coefficients, fact.ordering)
    names = fact.variable_names or tuple(model.variable_names[i] for i in fact.ordering)
    return IrfTensor(model.country_id, structural_responses(coefs, fact.B, horizon), variable_names=names)


def rescale_one_pp(irf: IrfTensor, B: np.ndarray) -> IrfTensor:
    """Divide each shock's responses by its own impact ``B[j, j]`` (1pp innovation)."""
    if irf.scale == "one_pp":
        return irf
    d = np.diag(np.asarray(B, dtype=float))
    return irf.with_responses(irf.responses / d[None, None, :], scale="one_pp")


def accumulate_irf(irf: IrfTensor) -> IrfTensor:
    if irf.accumulated:
        raise ContractError("IRF is already accumulated")
    return irf.with_responses(np.cumsum(irf.responses, axis=0), accumulated=True)

