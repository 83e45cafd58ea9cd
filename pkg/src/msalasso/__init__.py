"""Multi-step adaptive Lasso: iteratively reweighted l1 fits with per-step tuning."""
from ._kernels import BACKEND
from .core import (
    Coefficients,
    ConfigError,
    ConvergenceError,
    DataError,
    Dataset,
    GroundTruth,
    InvariantError,
    LambdaGrid,
    MSALassoError,
    Support,
    WeightVector,
    destandardize_coefficients,
    standardize,
    support_of,
)
from .metrics import (
    SimTable,
    analytic_prediction_error,
    count_fp_fn,
    emit_table,
    run_simulation,
    squared_error,
)
from .msa import SPACINGS, StepTrace, TuneMethod, run_msa_lasso, run_two_stage_grid, select_lambda
from .simgen import RngStream, SimConfig, calibrate_c, gen_ar1_design, gen_instance
from .solver import (
    PathResult,
    SolverConfig,
    compute_lambda_max,
    fraction_grid,
    kkt_residual,
    solve,
    solve_on_grid,
    solve_path,
)
from .weights import WeightRule, adaptive_weights, mle_init_weights, scad_lla_weights, uniform_weights

__version__ = "0.1.0"
