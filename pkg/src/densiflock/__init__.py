"""densiflock: simulation and analysis of density-gated velocity-consensus models."""

from .analytic import (
    DetachTimes,
    ReducedSolution,
    detach_times,
    eval_v_b,
    eval_v_b_minus_v_a,
    reduced_solution,
)
from .config import RunConfig, parse_config, serialize_config
from .domains import Domain, euclidean_distances, min_image_distance
from .dynamics import (
    EnsembleState,
    ModelParams,
    MPolicy,
    NeighborTable,
    acceleration_cs,
    acceleration_di,
    alignment_weight,
    density_ratio,
    m_value,
    neighbor_sets_all,
    neighbor_sets_cs_delta,
    neighbor_sets_cs_q,
    neighbor_sets_di,
    neighbor_sets_di_ghost,
    neighbor_sets_di_grid,
    total_momentum,
    velocity_diameter,
)
from .errors import ConfigError, IntegrationFault
from .graph import (
    ClusterLabeling,
    FlockingCertificate,
    InteractionDigraph,
    PackedReport,
    build_digraph,
    decay_rate_fit,
    fiedler_value,
    flocking_certificate,
    is_r_densely_packed,
    log_linear_fit,
    m_star_analytic,
    m_star_realized,
    strongly_connected_components,
)
from .integrate import (
    DelayBuffer,
    TrajectoryRecord,
    TrajectorySample,
    neighbor_table_for_step,
    rk4_step,
    run_simulation,
    simulate,
)
from .scenarios import (
    ChainResult,
    GroupResult,
    RegimeResult,
    ScenarioSpec,
    classify_chain,
    classify_group,
    classify_three_body,
    init_chain,
    init_group_vs_individual,
    init_random_clusters,
    init_three_body,
    initial_state,
    momentum_estimate,
    predict_three_body,
)

__version__ = "0.1.0"
