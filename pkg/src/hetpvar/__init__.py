"""Heterogeneous panel structural VARs: per-country estimation, common/idiosyncratic
decomposition of impulse responses and resampling bands for their cross-country median."""

from .bootstrap import BootstrapResult, run_bootstrap
from .dgp_oracle import DgpSpec, simulate, simulate_panel, true_irf, true_median_irf
from .irf_engine import IrfTensor, accumulate_irf, compute_irf, rescale_one_pp
from .panel_decomp import (
    IrfDistribution,
    LoadingMatrix,
    PanelEstimate,
    common_var,
    covariate_correlation,
    decompose_irf,
    estimate_loadings,
    estimate_panel,
    summarize,
)
from .panel_store import CountrySeries, PanelDataset, VariableSpec, load_panel, select_sample, write_panel
from .svar_ident import StructuralFactorization, cholesky_factor, structural_residuals
from .transform import MODELS, ModelSpec, demean_panel, model_panel, model_spec, with_spread
from .var_core import VarModel, companion_stability, estimate_var, select_lag, whiteness

__version__ = "0.1.0"
