import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetpvar.dgp_oracle import DgpSpec, simulate
from hetpvar.errors import ContractError, DegenerateError, InsufficientDataError, SampleSizeError
from hetpvar.irf_engine import IrfTensor
from hetpvar.panel_decomp import (
    common_var,
    covariate_correlation,
    decompose_irf,
    estimate_loadings,
    estimate_panel,
    loading_slopes,
    summarize,
    LoadingMatrix,
)
from hetpvar.svar_ident import StructuralFactorization
from hetpvar.transform import ModelSpec, demean_panel

from conftest import make_panel

BASE = np.array([[0.5, 0.1], [0.2, 0.4]])
B_TRUE = np.array([[1.0, 0.0], [0.5, 0.8]])


def fact(e, years=None, cid="X"):
    e = np.asarray(e, dtype=float)
    years = np.arange(e.shape[0]) if years is None else np.asarray(years)
    return StructuralFactorization((0, 1)[: e.shape[1]], np.eye(e.shape[1]), e, (), years, cid)


def loadings(lam):
    lam = np.asarray(lam, dtype=float)
    return LoadingMatrix("X", np.diag(lam), np.arange(3), np.zeros((3, lam.size)))


class TestCommonVar:
    def test_identical_countries(self):
        y = np.zeros((60, 2))
        rng = np.random.default_rng(0)
        for t in range(1, 60):
            y[t] = BASE @ y[t - 1] + rng.standard_normal(2)
        panel = demean_panel(make_panel({"A": y, "B": y, "C": y}, ("a", "b")))
        spec = ModelSpec("t", ("a", "b"))
        common = common_var(panel, spec, 1)
        from hetpvar.var_core import estimate_var

        member = estimate_var(panel.country("A"), 1)
        np.testing.assert_allclose(common.model.coefficients, member.coefficients, atol=1e-12)

    def test_pure_common_factor_recovers_shocks(self):
        spec = DgpSpec(6, 300, B_TRUE, np.ones(2), coefficients=BASE[None], seed=3)
        sim = simulate(spec)
        panel = demean_panel(sim.panel)
        common = common_var(panel, ModelSpec("t", spec.variable_names), 1)
        e_bar = common.factorization.structural_residuals
        truth = sim.common_shocks[1:]
        for j in range(2):
            assert abs(np.corrcoef(e_bar[:, j], truth[:, j])[0, 1]) > 0.99

    def test_missing_variables(self):
        panel = make_panel({"A": np.ones((5, 1)), "B": np.ones((5, 1))}, ("a",))
        with pytest.raises(ContractError):
            common_var(panel, ModelSpec("t", ("a", "b")), 1)


class TestLoadings:
    def test_identical_shocks(self):
        e = np.random.default_rng(0).standard_normal((30, 2))
        lm = estimate_loadings(fact(e), fact(e))
        np.testing.assert_allclose(lm.diagonal, [1.0, 1.0])
        np.testing.assert_allclose(lm.idiosyncratic, 0.0, atol=1e-14)
        assert np.all(lm.Lambda[~np.eye(2, dtype=bool)] == 0)

    def test_sign_flip(self):
        e = np.random.default_rng(1).standard_normal((30, 2))
        np.testing.assert_allclose(estimate_loadings(fact(-e), fact(e)).diagonal, [-1.0, -1.0])

    def test_independent_shocks_small(self):
        rng = np.random.default_rng(2)
        lm = estimate_loadings(fact(rng.standard_normal((2000, 2))), fact(rng.standard_normal((2000, 2))))
        assert np.all(np.abs(lm.diagonal) < 0.1)

    def test_matches_covariance_ratio(self):
        rng = np.random.default_rng(3)
        eb = rng.standard_normal((50, 2))
        e = 0.7 * eb + rng.standard_normal((50, 2))
        lm = estimate_loadings(fact(e), fact(eb))
        for j in range(2):
            c = np.cov(e[:, j], eb[:, j])
            assert lm.diagonal[j] == pytest.approx(c[0, 1] / c[1, 1], abs=1e-10)

    def test_alignment_by_year(self):
        rng = np.random.default_rng(4)
        eb = rng.standard_normal((40, 1))
        member = fact(eb[5:30] * 0.5, years=np.arange(5, 30))
        lm = estimate_loadings(member, fact(eb))
        assert lm.diagonal[0] == pytest.approx(0.5)
        np.testing.assert_array_equal(lm.years, np.arange(5, 30))

    def test_orthogonality(self):
        rng = np.random.default_rng(5)
        eb = rng.standard_normal((80, 2))
        e = 0.4 * eb + rng.standard_normal((80, 2))
        lm = estimate_loadings(fact(e), fact(eb))
        et = lm.idiosyncratic
        cov = ((et - et.mean(0)) * (eb - eb.mean(0))).mean(0)
        assert np.all(np.abs(cov) < 1e-12)

    def test_short_overlap(self):
        e = np.ones((9, 1))
        with pytest.raises(SampleSizeError):
            estimate_loadings(fact(e), fact(e))

    def test_degenerate_common(self):
        with pytest.raises(DegenerateError):
            loading_slopes(np.random.default_rng(0).standard_normal((20, 1)), np.ones((20, 1)))


class TestDecompose:
    def irf(self, values=1.0, m=1):
        return IrfTensor("X", np.full((3, m, m), values))

    def test_identity_loadings(self):
        c, i = decompose_irf(self.irf(2.0, 2), loadings([1.0, 1.0]))
        np.testing.assert_array_equal(c.responses, 2.0)
        np.testing.assert_array_equal(i.responses, 0.0)

    def test_zero_loadings(self):
        c, i = decompose_irf(self.irf(2.0, 2), loadings([0.0, 0.0]))
        np.testing.assert_array_equal(c.responses, 0.0)
        np.testing.assert_array_equal(i.responses, 2.0)

    def test_as_written_values(self):
        c, i = decompose_irf(self.irf(1.0), loadings([0.6]))
        assert c.responses[0, 0, 0] == pytest.approx(0.6)
        assert i.responses[0, 0, 0] == pytest.approx(0.64)
        assert c.kind == "common_part" and i.kind == "idiosyncratic_part"

    def test_scales_shock_columns(self):
        resp = np.arange(12.0).reshape(3, 2, 2)
        c, i = decompose_irf(IrfTensor("X", resp), loadings([0.5, -0.2]))
        np.testing.assert_array_equal(c.responses, resp @ np.diag([0.5, -0.2]))
        np.testing.assert_array_equal(i.responses, resp @ np.diag([0.75, 0.96]))

    def test_non_finite_loadings(self):
        with pytest.raises(ContractError):
            decompose_irf(self.irf(), loadings([np.nan]))


class TestSummarize:
    def members(self, values):
        return [IrfTensor(f"C{i}", np.full((2, 1, 1), v)) for i, v in enumerate(values)]

    def test_one_two_three(self):
        d = summarize(self.members([3.0, 1.0, 2.0]))
        assert d.median[0, 0, 0] == 2.0 and d.mean[0, 0, 0] == 2.0
        assert (d.q25[0, 0, 0], d.q75[0, 0, 0]) == (1.5, 2.5)
        assert d.count[0, 0, 0] == 3

    def test_outlier_robust(self):
        assert summarize(self.members([1.0, 1.0, 1.0, 100.0])).median[0, 0, 0] == 1.0

    def test_single_member(self):
        resp = np.random.default_rng(0).standard_normal((4, 2, 2))
        d = summarize([IrfTensor("A", resp)])
        for a in (d.median, d.mean, d.q25, d.q75):
            np.testing.assert_array_equal(a, resp)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            summarize([IrfTensor("A", np.zeros((2, 1, 1))), IrfTensor("B", np.zeros((3, 1, 1)))])

    def test_order_independent(self):
        m = self.members([0.1, 0.7, 0.3, 0.9])
        assert summarize(m).mean.tobytes() == summarize(m[::-1]).mean.tobytes()

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=15))
    def test_brute_force_percentiles(self, values):
        d = summarize(self.members(values))
        xs = sorted(values)
        n = len(xs)

        def pct(p):
            pos = p * (n - 1)
            lo = int(np.floor(pos))
            hi = min(lo + 1, n - 1)
            return xs[lo] + (pos - lo) * (xs[hi] - xs[lo])

        assert d.q25[0, 0, 0] == pytest.approx(pct(0.25), abs=1e-9)
        assert d.median[0, 0, 0] == pytest.approx(pct(0.5), abs=1e-9)
        assert d.q75[0, 0, 0] == pytest.approx(pct(0.75), abs=1e-9)
        assert d.q25[0, 0, 0] <= d.median[0, 0, 0] <= d.q75[0, 0, 0]


class TestCovariateCorrelation:
    def test_identical(self):
        assert covariate_correlation([1, 2, 3, 5], [1, 2, 3, 5]).rho == pytest.approx(1.0)

    def test_negated(self):
        assert covariate_correlation([1, 2, 3, 5], [-1, -2, -3, -5]).rho == pytest.approx(-1.0)

    def test_against_brute_force(self):
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal(19), rng.standard_normal(19)
        res = covariate_correlation(x, y)
        assert res.rho == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)
        slope, intercept = np.polyfit(x, y, 1)
        assert (res.slope, res.intercept) == pytest.approx((slope, intercept), abs=1e-10)

    def test_preconditions(self):
        with pytest.raises(ContractError):
            covariate_correlation([1, 2], [1, 2])
        with pytest.raises(DegenerateError):
            covariate_correlation([1, 1, 1], [1, 2, 3])


class TestEstimatePanel:
    def sim_panel(self, n=6, t=120, seed=0):
        spec = DgpSpec(n, t, B_TRUE, np.full(2, 0.7), base_coefficients=BASE, dispersion=0.03, seed=seed)
        return spec, demean_panel(simulate(spec).panel)

    def test_members_and_lags(self):
        spec, panel = self.sim_panel()
        est = estimate_panel(panel, ModelSpec("t", spec.variable_names), lags={"C01": 2}, max_lag=3)
        assert est.country_ids == [f"C{i:02d}" for i in range(1, 7)]
        assert est.lag_orders["C01"] == 2
        for m in est.members:
            np.testing.assert_array_equal(m.irf.responses[0], m.factorization.B)

    def test_drop_unstable(self):
        spec, panel = self.sim_panel()
        rng = np.random.default_rng(9)
        walk = np.cumsum(rng.standard_normal((120, 2)), axis=0) * 5
        countries = list(panel.countries) + [panel.countries[0].with_values(walk).__class__(
            "ZZ", panel.countries[0].years, walk, panel.variable_names)]
        bad = panel.replace_countries(countries)
        ms = ModelSpec("t", spec.variable_names)
        flagged = estimate_panel(bad, ms, lags=4)
        dropped = estimate_panel(bad, ms, lags=4, drop_unstable=True)
        if flagged.members[-1].stability.stable:
            pytest.skip("random walk fit happened to be stable")
        assert "ZZ" in flagged.country_ids
        assert "ZZ" not in dropped.country_ids and "unstable" in dropped.excluded["ZZ"]

    def test_short_country_excluded(self):
        spec, panel = self.sim_panel()
        short = panel.countries[0].__class__("SHORT", np.arange(2000, 2008), np.ones((8, 2)), panel.variable_names)
        est = estimate_panel(panel.replace_countries(list(panel.countries) + [short]), ModelSpec("t", spec.variable_names))
        assert "SHORT" in est.excluded

    def test_too_few_countries(self):
        spec, panel = self.sim_panel(n=2)
        sub = panel.replace_countries([panel.countries[0], panel.countries[0].__class__(
            "S", np.arange(3), np.ones((3, 2)), panel.variable_names)])
        with pytest.raises(InsufficientDataError):
            estimate_panel(sub, ModelSpec("t", spec.variable_names))

    def test_one_pp_and_accumulate(self):
        spec, panel = self.sim_panel()
        ms = ModelSpec("t", spec.variable_names)
        base = estimate_panel(panel, ms, lags=1)
        pp = estimate_panel(panel, ms, lags=1, scale="one_pp", accumulate=True)
        for a, b in zip(base.members, pp.members):
            d = np.diag(a.factorization.B)
            np.testing.assert_allclose(b.irf.responses, np.cumsum(a.irf.responses / d, axis=0), atol=1e-12)
            np.testing.assert_allclose(np.diag(b.irf.responses[0]), 1.0)
