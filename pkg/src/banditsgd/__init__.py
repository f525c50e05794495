"""Cost-efficient distributed SGD simulator with bandit worker selection."""

from .analysis import (
    GapReport,
    RunTrace,
    completion_time_bound,
    compute_gaps,
    delta_min_exhaustive,
    empirical_regret,
    mean_regret_curve,
    regret_bound,
    regret_bound_curve,
    subgamma_tail,
    subgaussian_tail,
)
from .harness import (
    ExperimentConfig,
    IdentificationReport,
    benchmark_config,
    build_pool,
    build_problem,
    error_at_employments,
    identify_fastest,
    run_comparison,
    run_single,
    stream_rng,
    write_trace_csv,
)
from .latency import (
    WorkerPool,
    expected_max,
    kth_order_response,
    member_responses,
    response_vector,
    sample_response,
    superarm_response,
    variance_of_max,
)
from .policies import (
    PLAIN,
    SCALED,
    BanditState,
    RadiusVariant,
    RoundSchedule,
    adaptive_ksync_step,
    compute_schedule,
    confidence_radius,
    lcb,
    lcb_values,
    record_outcome,
    select_superarm_cmab,
    select_superarm_optimal,
    superarm_is_suboptimal,
)
from .sgd import (
    BoundParams,
    SgdProblem,
    apply_update,
    convergence_bound,
    estimate_bound_params,
    generate_problem,
    loss,
    model_error,
    partial_gradient,
    sample_batch,
    sample_batches,
)

__version__ = "0.1.0"
