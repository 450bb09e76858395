import numpy as np
import pytest

from hetpvar.dgp_oracle import (
    DgpSpec,
    RAW_COLUMNS,
    SAMPLE_COUNTRIES,
    sample_covariance,
    simulate,
    simulate_panel,
    synthetic_covariates,
    synthetic_sample,
    true_irf,
    true_median_irf,
)
from hetpvar.errors import ValidationError

AR = np.array([[[0.5]]])


def ar1_spec(**kw):
    args = dict(n_countries=1, n_periods=2000, B_true=[[1.0]], loadings=[0.0], coefficients=AR, seed=1)
    args.update(kw)
    return DgpSpec(**args)


class TestSimulate:
    def test_ar1_autocorrelation(self):
        r1 = []
        for seed in range(10):
            y = simulate(ar1_spec(seed=seed)).series[0].values[:, 0]
            r1.append(np.corrcoef(y[1:], y[:-1])[0, 1])
        assert abs(np.mean(r1) - 0.5) < 0.05
        assert max(abs(np.array(r1) - 0.5)) < 0.1

    def test_full_loadings_identical_composites(self):
        spec = DgpSpec(4, 50, np.eye(2), np.ones(2), coefficients=np.zeros((1, 2, 2)), seed=2)
        sim = simulate(spec)
        for i in range(1, 4):
            np.testing.assert_array_equal(sim.composite_shocks[i], sim.composite_shocks[0])
        np.testing.assert_array_equal(sim.composite_shocks[0], sim.common_shocks)

    def test_zero_loadings_independent(self):
        spec = DgpSpec(3, 3000, np.eye(1), np.zeros(1), coefficients=np.zeros((1, 1, 1)), seed=3)
        sim = simulate(spec)
        corr = np.corrcoef(sim.composite_shocks[:, :, 0])
        assert np.max(np.abs(corr[~np.eye(3, dtype=bool)])) < 0.06

    def test_composite_unit_variance(self):
        spec = DgpSpec(2, 20000, np.eye(2), [0.6, 0.3], coefficients=np.zeros((1, 2, 2)), seed=4)
        e = simulate(spec).composite_shocks
        np.testing.assert_allclose(e.reshape(-1, 2).var(axis=0), 1.0, atol=0.03)

    def test_residual_covariance_is_bbt(self):
        B = np.array([[1.0, 0.0], [0.5, 0.8]])
        spec = DgpSpec(1, 20000, B, [0.5, 0.5], coefficients=np.zeros((1, 2, 2)), seed=5, burn_in=0)
        y = simulate(spec).series[0].values
        np.testing.assert_allclose(sample_covariance(y), B @ B.T, atol=0.04)

    def test_seed_determinism(self):
        a = simulate(ar1_spec(n_periods=50)).series[0].values
        b = simulate(ar1_spec(n_periods=50)).series[0].values
        c = simulate(ar1_spec(n_periods=50, seed=2)).series[0].values
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, c)

    def test_student_t_unit_variance(self):
        spec = ar1_spec(coefficients=np.zeros((1, 1, 1)), shocks="student_t", df=6.0, n_periods=40000)
        y = simulate(spec).series[0].values[:, 0]
        assert y.var() == pytest.approx(1.0, abs=0.06)

    def test_means_added(self):
        spec = DgpSpec(2, 30, np.eye(1), [0.0], coefficients=AR, means=[[5.0], [-5.0]], seed=0)
        panel = simulate_panel(spec)
        assert panel.country("C01").values.mean() > 3 and panel.country("C02").values.mean() < -3

    def test_single_country_has_no_panel(self):
        assert simulate(ar1_spec(n_periods=10)).panel is None
        with pytest.raises(ValidationError):
            simulate_panel(ar1_spec(n_periods=10))


class TestValidation:
    def test_upper_triangular_b(self):
        with pytest.raises(ValidationError):
            DgpSpec(2, 10, [[1.0, 0.2], [0.0, 1.0]], [0.0, 0.0], coefficients=np.zeros((1, 2, 2)))

    def test_loadings_range(self):
        with pytest.raises(ValidationError):
            ar1_spec(loadings=[1.2])

    def test_unstable_coefficients(self):
        with pytest.raises(ValidationError, match="max modulus"):
            ar1_spec(coefficients=np.array([[[0.99]]]))

    def test_unknown_distribution(self):
        with pytest.raises(ValidationError):
            ar1_spec(shocks="cauchy")

    def test_dispersion_draw(self):
        spec = DgpSpec(5, 10, np.eye(2), [0.0, 0.0], base_coefficients=0.3 * np.eye(2), dispersion=0.05, seed=1)
        assert spec.coefficients.shape == (5, 1, 2, 2)
        assert not np.allclose(spec.coefficients[0], spec.coefficients[1])


class TestTrueIrf:
    def test_ar1_geometric(self):
        np.testing.assert_allclose(true_irf(ar1_spec(), 0, 2).responses[:, 0, 0], [1.0, 0.5, 0.25])

    def test_median_over_countries(self):
        coefs = np.array([[[[0.2]]], [[[0.5]]], [[[0.6]]]])
        spec = DgpSpec(3, 10, [[1.0]], [0.0], coefficients=coefs)
        np.testing.assert_allclose(true_median_irf(spec, 3)[:, 0, 0], 0.5 ** np.arange(4))


class TestSampleData:
    def test_shape_and_columns(self):
        panel = synthetic_sample()
        assert panel.variable_names == RAW_COLUMNS
        assert tuple(panel.country_ids) == SAMPLE_COUNTRIES

    def test_deterministic(self):
        a, b = synthetic_sample(), synthetic_sample()
        for x, y in zip(a.countries, b.countries):
            assert x.values.tobytes() == y.values.tobytes()

    def test_covariates(self):
        rows = synthetic_covariates()
        assert [r[0] for r in rows] == list(SAMPLE_COUNTRIES)
        assert all(0.15 <= r[1] <= 0.55 for r in rows)
