from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from hetpvar.dgp_oracle import DgpSpec, simulate
from hetpvar.panel_decomp import estimate_panel
from hetpvar.panel_store import CountrySeries, PanelDataset, VariableSpec
from hetpvar.transform import ModelSpec, demean_panel

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def data_dir():
    return DATA_DIR


def make_panel(values_by_country, names, start_year=2000, schema=None):
    """Panel from ``{id: (T x M array, first year)}`` or ``{id: array}``."""
    countries = []
    for cid, item in values_by_country.items():
        if isinstance(item, tuple):
            values, first = item
        else:
            values, first = item, start_year
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        years = np.arange(first, first + values.shape[0])
        countries.append(CountrySeries(cid, years, values, names))
    schema = schema if schema is not None else tuple(VariableSpec(n) for n in names)
    return PanelDataset(tuple(countries), tuple(names), "annual", schema)


def ar1_series(rho, n, seed=0, sd=1.0):
    rng = np.random.default_rng(seed)
    y = np.zeros(n + 100)
    eps = rng.standard_normal(n + 100) * sd
    for t in range(1, n + 100):
        y[t] = rho * y[t - 1] + eps[t]
    return y[100:]


# Monte Carlo design shared by the recovery and coverage checks: a bivariate
# VAR(1) with mildly dispersed coefficients and a spread of loading patterns.
MC_BASE = np.array([[0.5, 0.1], [0.2, 0.4]])
MC_B = np.array([[1.0, 0.0], [0.5, 0.8]])
MC_LOADINGS = np.array([[0.9, 0.9]] * 7 + [[0.0, 0.3], [0.3, 0.6], [0.6, 0.0]])


def mc_spec(seed, n_periods=400, dispersion=0.05):
    return DgpSpec(
        n_countries=len(MC_LOADINGS),
        n_periods=n_periods,
        B_true=MC_B,
        loadings=MC_LOADINGS,
        base_coefficients=MC_BASE,
        dispersion=dispersion,
        seed=seed,
    )


def mc_estimate(spec, horizon=20):
    """Simulate ``spec`` and fit the panel with the true lag order."""
    panel = demean_panel(simulate(spec).panel)
    return estimate_panel(panel, ModelSpec("mc", spec.variable_names), lags=1, common_lags=1, horizon=horizon)


def zero_noise(estimate):
    """Copy of ``estimate`` whose common and idiosyncratic shocks are all zero."""
    common = estimate.common
    fact = replace(common.factorization, structural_residuals=np.zeros_like(common.factorization.structural_residuals))
    members = tuple(
        replace(m, loadings=replace(m.loadings, idiosyncratic=np.zeros_like(m.loadings.idiosyncratic)))
        for m in estimate.members
    )
    return replace(estimate, members=members, common=replace(common, factorization=fact))


# Outcome lines for the acceptance suite, printed after the run.
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
