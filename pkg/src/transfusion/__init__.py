"""Fused-penalty transfer learning for high-dimensional sparse regression."""

from .types import (
    BlockParams,
    FitResult,
    PenaltyWeights,
    TaskSample,
    TransferProblem,
    diversity_epsilon,
    estimation_error,
    w_average,
)
from .solver import (
    SolveInfo,
    SolverConfig,
    StackedOperator,
    apply_adjoint,
    apply_stacked,
    kkt_residual,
    lipschitz_upper,
    soft_threshold,
    solve_weighted_lasso,
)
from .estimators import (
    RegimeChoice,
    Step1Result,
    Step2Result,
    TuningGrid,
    cross_validate,
    fit_auto,
    fit_one_step,
    fit_strategy,
    fit_two_step,
    fold_labels,
    lambda0_grid_for,
    lasso_baseline,
    log_grid,
    pooled_baseline,
    step1_cotrain,
    step2_debias,
    theorem_weights,
)
from .debias import (
    PseudoSample,
    ThetaRow,
    bias_variance_report,
    debias_estimator,
    lasso_local,
    solve_theta_row,
    theta_matrix,
)
from .distributed import (
    HEADER_BYTES,
    WIRE_MAGIC,
    WIRE_VERSION,
    CommunicationReport,
    DWeights,
    SourceMessage,
    aggregate_step1,
    communication_report,
    decode_message,
    dtransfusion_fit,
    encode_message,
    source_precompute,
    theorem4_weights,
)
from .scenarios import (
    CovarianceModel,
    GroundTruth,
    ScenarioConfig,
    arrowhead_sigma,
    c_sigma,
    desk_config,
    export_csv,
    fused_bias,
    gen_covariance,
    gen_model_shift,
    gen_scenario,
    load_task_csv,
    pooled_bias,
    read_config,
    write_config,
)
from .bench import (
    BenchPlan,
    SummaryRow,
    TrialRecord,
    read_plan,
    read_records_csv,
    run_bench,
    summarize,
    write_plan,
    write_records_csv,
    write_summary_csv,
)

__all__ = [
    "BlockParams",
    "FitResult",
    "PenaltyWeights",
    "TaskSample",
    "TransferProblem",
    "diversity_epsilon",
    "estimation_error",
    "w_average",
    "SolveInfo",
    "SolverConfig",
    "StackedOperator",
    "apply_adjoint",
    "apply_stacked",
    "kkt_residual",
    "lipschitz_upper",
    "soft_threshold",
    "solve_weighted_lasso",
    "RegimeChoice",
    "Step1Result",
    "Step2Result",
    "TuningGrid",
    "cross_validate",
    "fit_auto",
    "fit_one_step",
    "fit_strategy",
    "fit_two_step",
    "fold_labels",
    "lambda0_grid_for",
    "lasso_baseline",
    "log_grid",
    "pooled_baseline",
    "step1_cotrain",
    "step2_debias",
    "theorem_weights",
    "PseudoSample",
    "ThetaRow",
    "bias_variance_report",
    "debias_estimator",
    "lasso_local",
    "solve_theta_row",
    "theta_matrix",
    "CommunicationReport",
    "DWeights",
    "HEADER_BYTES",
    "SourceMessage",
    "WIRE_MAGIC",
    "WIRE_VERSION",
    "aggregate_step1",
    "communication_report",
    "decode_message",
    "dtransfusion_fit",
    "encode_message",
    "source_precompute",
    "theorem4_weights",
    "CovarianceModel",
    "GroundTruth",
    "ScenarioConfig",
    "arrowhead_sigma",
    "c_sigma",
    "desk_config",
    "export_csv",
    "fused_bias",
    "gen_covariance",
    "gen_model_shift",
    "gen_scenario",
    "load_task_csv",
    "pooled_bias",
    "read_config",
    "write_config",
    "BenchPlan",
    "SummaryRow",
    "TrialRecord",
    "read_plan",
    "read_records_csv",
    "run_bench",
    "summarize",
    "write_plan",
    "write_records_csv",
    "write_summary_csv",
]

__version__ = "0.1.0"
