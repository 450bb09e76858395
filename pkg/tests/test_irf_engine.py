import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetpvar.dgp_oracle import unit_shock_path
from hetpvar.errors import ContractError
from hetpvar.irf_engine import (
    IrfTensor,
    accumulate_irf,
    compute_irf,
    rescale_one_pp,
    structural_responses,
    vma_coefficients,
)
from hetpvar.svar_ident import structural_residuals
from hetpvar.var_core import companion_stability, estimate_var


def random_stable(rng, m, lags, limit=0.95):
    while True:
        coefs = rng.uniform(-0.5, 0.5, (lags, m, m)) / lags
        if companion_stability(coefs).max_modulus < limit:
            return coefs


def random_lower(rng, m):
    B = np.tril(rng.uniform(-1, 1, (m, m)))
    B[np.diag_indices(m)] = rng.uniform(0.2, 1.5, m)
    return B


class TestStructuralResponses:
    def test_scalar_geometric(self):
        resp = structural_responses(np.array([[[0.5]]]), np.array([[1.0]]), 5)
        np.testing.assert_array_equal(resp[:, 0, 0], 0.5 ** np.arange(6))

    def test_decoupled_system(self):
        resp = structural_responses(np.array([np.diag([0.5, 0.3])]), np.eye(2), 20)
        assert np.all(resp[:, 1, 0] == 0) and np.all(resp[:, 0, 1] == 0)

    def test_impact_is_b(self):
        rng = np.random.default_rng(0)
        B = random_lower(rng, 3)
        resp = structural_responses(random_stable(rng, 3, 2), B, 10)
        np.testing.assert_array_equal(resp[0], B)
        assert np.all(np.triu(resp[0], 1) == 0)

    def test_horizon_precondition(self):
        with pytest.raises(ContractError):
            structural_responses(np.array([[[0.5]]]), np.array([[1.0]]), 0)

    @given(st.integers(0, 10_000))
    def test_matches_unit_shock_simulation(self, seed):
        rng = np.random.default_rng(seed)
        m, lags = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        coefs, B = random_stable(rng, m, lags), random_lower(rng, m)
        resp = structural_responses(coefs, B, 20)
        for j in range(m):
            np.testing.assert_allclose(resp[:, :, j], unit_shock_path(coefs, B, j, 20), atol=1e-10)

    def test_linearity_in_shock_size(self):
        rng = np.random.default_rng(5)
        coefs, B = random_stable(rng, 2, 2), random_lower(rng, 2)
        np.testing.assert_allclose(
            structural_responses(coefs, 3.0 * B, 10), 3.0 * structural_responses(coefs, B, 10), atol=1e-14
        )

    def test_vma_recursion_first_terms(self):
        R1, R2 = np.array([[0.5, 0.1], [0.0, 0.2]]), np.array([[0.1, 0.0], [0.05, 0.1]])
        phi = vma_coefficients(np.array([R1, R2]), 3)
        np.testing.assert_allclose(phi[1], R1)
        np.testing.assert_allclose(phi[2], R1 @ R1 + R2)
        np.testing.assert_allclose(phi[3], R1 @ phi[2] + R2 @ R1)


class TestComputeIrf:
    def test_decays_for_stable_fit(self):
        rng = np.random.default_rng(1)
        y = np.zeros((300, 2))
        for t in range(1, 300):
            y[t] = np.array([[0.6, 0.1], [0.2, 0.4]]) @ y[t - 1] + rng.standard_normal(2)
        model = estimate_var(y, 2)
        irf = compute_irf(model, structural_residuals(model), 20)
        a = np.abs(irf.responses)
        assert a[18:].max() < a[:3].max()
        np.testing.assert_array_equal(irf.responses[0], structural_residuals(model).B)

    def test_ordering_permutes_coefficients(self):
        rng = np.random.default_rng(2)
        y = np.zeros((300, 2))
        for t in range(1, 300):
            y[t] = np.array([[0.6, 0.1], [0.2, 0.4]]) @ y[t - 1] + rng.standard_normal(2)
        model = estimate_var(y, 1)
        fact = structural_residuals(model, [1, 0])
        irf = compute_irf(model, fact, 10)
        # unpermuted responses: Phi_h (original coords) times P' B
        P = np.eye(2)[[1, 0]]
        phi = vma_coefficients(model.coefficients, 10)
        expected = np.array([P @ p @ P.T @ fact.B for p in phi])
        np.testing.assert_allclose(irf.responses, expected, atol=1e-12)
        assert irf.variable_names == ("y1", "y0")


class TestPostProcessing:
    def tensor(self, values):
        return IrfTensor("A", np.asarray(values, dtype=float).reshape(-1, 1, 1))

    def test_accumulate_running_sum(self):
        out = accumulate_irf(self.tensor([1.0, 0.5, 0.25]))
        np.testing.assert_allclose(out.responses[:, 0, 0], [1.0, 1.5, 1.75])
        assert out.accumulated

    def test_accumulate_zero(self):
        assert not accumulate_irf(self.tensor(np.zeros(4))).responses.any()

    def test_accumulate_twice_rejected(self):
        with pytest.raises(ContractError):
            accumulate_irf(accumulate_irf(self.tensor([1.0, 0.5])))

    def test_accumulated_ar1_limit(self):
        resp = structural_responses(np.array([[[0.5]]]), np.array([[1.0]]), 40)
        out = accumulate_irf(IrfTensor("A", resp))
        assert abs(out.responses[-1, 0, 0] - 2.0) < 1e-3

    def test_one_pp_rescaling(self):
        B = np.array([[2.0, 0.0], [1.0, 0.5]])
        irf = IrfTensor("A", structural_responses(np.array([np.eye(2) * 0.5]), B, 3))
        out = rescale_one_pp(irf, B)
        np.testing.assert_allclose(np.diag(out.responses[0]), [1.0, 1.0])
        assert out.scale == "one_pp"
        assert rescale_one_pp(out, B) is out

    def test_bad_kind(self):
        with pytest.raises(ContractError):
            IrfTensor("A", np.zeros((2, 1, 1)), kind="other")
