"""Design toolkit and deterministic simulator for event-timed distributed
observers of jointly observable multi-channel linear systems on time-varying
directed graphs."""

from .design import (
    DesignCertificate,
    RateSpec,
    build_certificate,
    certified_q,
    compute_alpha,
    compute_rho,
    compute_sigma,
    design_gain,
    proof_constants,
    resilience_qstar,
    select_q,
    select_q_symmetric,
)
from .errors import (
    CertificateError,
    ConstancyError,
    DimensionError,
    HybridObsError,
    InvalidChannelError,
    InvalidGraphError,
    MeasurementError,
    ScenarioError,
    TimingError,
)
from .graphs import (
    DiGraph,
    GraphSchedule,
    flocking_matrix,
    graph_at,
    is_arc_redundant_sc,
    is_strongly_connected,
    is_vertex_redundant_sc,
    metropolis_style_matrix,
    neighbors,
    validate_constancy,
)
from .linalg import (
    BlockMat,
    kernel_basis,
    kron_identity,
    mat_exp,
    mixed_norm,
    spectral_norm,
)
from .oracle import OracleStep, compare_trace_to_oracle, oracle_recursion
from .plant import (
    ChannelDecomposition,
    LtiPlant,
    NoiseForcing,
    check_joint_observability,
    decompose_all,
    decompose_channel,
    observability_matrix,
)
from .sim import (
    AgentState,
    EventRecord,
    SimTrace,
    event_reset,
    iterate_once,
    measure_decay,
    propagate_local_observer,
    propagate_truth,
    run_simulation,
    source_set,
)
from .timing import TimingConfig, iteration_schedule

__version__ = "0.1.0"
