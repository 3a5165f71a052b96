"""Gray-box state-space identification via structured low-rank Hankel
factorization, with similarity-transform and prediction-error baselines and
a Monte-Carlo benchmark harness."""

from .baselines import (
    IoData,
    SimilarityIterate,
    altmin_similarity,
    build_vectorized_similarity,
    pem_surrogate,
    similarity_cost,
    simulate_discrete,
)
from .bench import (
    SuccessCurve,
    TrialConfig,
    TrialResult,
    derive_seed,
    emit_csv,
    run_sweep,
    run_trial,
    success_rate,
)
from .dc import (
    DcIterate,
    DcSettings,
    DcSolution,
    LinearizationPoint,
    build_certificate_w,
    build_lifted_t,
    dc_objective,
    extract_theta_from_rank1,
    iterate_from_truth,
    ky_fan,
    linearized_subproblem,
    solve_dcp,
    top_singular_factors,
)
from .errors import (
    DivergenceError,
    InnerSolverError,
    RankDeficiencyError,
    UndefinedMetricError,
)
from .inner import (
    SplitSettings,
    SubproblemSpec,
    VariableLayout,
    assemble_reduced_system,
    split_solve,
    svt,
)
from .model import (
    AffineParameterization,
    Dims,
    HankelMatrix,
    StateSpaceRealization,
    assemble,
    build_hankel,
    compartmental_instance,
    controllability_stack,
    discretize_zoh,
    ho_kalman_realize,
    impulse_response_fit,
    markov_sequence,
    observability_stack,
    random_structured_instance,
)

__version__ = "0.1.0"
