"""Semi-decentralized federated edge learning: simulator, bound calculator, latency model."""

from ._errors import (
    ConfigError,
    InadmissibleLearningRateError,
    InvalidArgumentError,
    InvalidStateError,
    InvalidTopologyError,
    SDFEELError,
)
from .bounds import (
    BoundBreakdown,
    BoundParams,
    check_learning_rate,
    compute_lambda,
    compute_v123,
    max_admissible_eta,
    monotonicity_scan,
    theorem_bound,
)
from .config import RunConfig, SweepSpec, parse_config
from .data import (
    ClusterAssignment,
    LabeledDataset,
    PartitionPlan,
    assign_clusters,
    dirichlet_partition,
    generate_synthetic,
)
from .estimators import FederatedSoftmaxClassifier
from .harness import run_experiment, run_sweep
from .latency import LatencyConstants, baseline_total, sdfeel_total
from .learner import AssumptionConstants, estimate_constants
from .protocol import (
    AggregationSchedule,
    FederatedProblem,
    TraceRecord,
    TrainingSettings,
    evolution_oracle,
    run_fedavg,
    run_feel,
    run_hierfavg,
    run_scheme,
    run_sdfeel,
)
from .spectral import sym_eigen
from .topology import (
    ServerGraph,
    build_mixing_matrix,
    build_selection_matrices,
    complete,
    ring,
    ring_with_chords,
    spectral_gap,
)

__all__ = [
    "AggregationSchedule",
    "assign_clusters",
    "AssumptionConstants",
    "baseline_total",
    "BoundBreakdown",
    "BoundParams",
    "build_mixing_matrix",
    "build_selection_matrices",
    "check_learning_rate",
    "ClusterAssignment",
    "complete",
    "compute_lambda",
    "compute_v123",
    "ConfigError",
    "dirichlet_partition",
    "estimate_constants",
    "evolution_oracle",
    "FederatedProblem",
    "FederatedSoftmaxClassifier",
    "generate_synthetic",
    "InadmissibleLearningRateError",
    "InvalidArgumentError",
    "InvalidStateError",
    "InvalidTopologyError",
    "LabeledDataset",
    "LatencyConstants",
    "max_admissible_eta",
    "monotonicity_scan",
    "parse_config",
    "PartitionPlan",
    "ring",
    "ring_with_chords",
    "run_experiment",
    "run_fedavg",
    "run_feel",
    "run_hierfavg",
    "run_scheme",
    "run_sdfeel",
    "run_sweep",
    "RunConfig",
    "sdfeel_total",
    "SDFEELError",
    "ServerGraph",
    "spectral_gap",
    "SweepSpec",
    "sym_eigen",
    "theorem_bound",
    "TraceRecord",
    "TrainingSettings",
]

__version__ = "0.1.0"
