"""Graph neural controlled differential equations for dynamic-graph learning.

The package is organized as a pipeline: `dyngraph` manufactures synthetic
dynamic graphs with ground-truth node dynamics, `paths` interpolates the
snapshots into a continuous control path, `vfield` defines the model variants
whose vector fields are driven by that path, `solver` integrates them,
`train` differentiates through the discretized solve and optimizes, `tasks`
wraps the three evaluation protocols, and `cli` exposes the experiment
surface.
"""

from .autodiff import Var
from .dyngraph import (
    ChurnParams,
    DatasetConfig,
    DynamicGraphObservations,
    DynamicsParams,
    TimedAdjacency,
    Topology,
    evolve_topology,
    gen_topology,
    generate_dataset,
    load_dataset,
    sample_observations,
    save_dataset,
    simulate_gene,
    simulate_heat,
)
from .errors import (
    CapabilityError,
    ConfigError,
    DivergenceError,
    NumericalError,
    ParameterError,
    RangeError,
    StepBudgetError,
)
from .paths import GraphPath, PathDerivative, build_path, extend_path, mask_missing
from .vfield import (
    VectorFieldParams,
    decode,
    evaluate_field,
    init_embedding,
    init_params,
    load_params,
    normalize_adjacency,
    save_params,
)
from .solver import EmbeddingTrajectory, SolverConfig, integrate, order_check
from .train import (
    TrainConfig,
    TrainReport,
    check_gradients,
    grad,
    train,
    write_curves_csv,
    write_report_json,
)
from .tasks import (
    SplitSpec,
    TaskResult,
    run_link_prediction_task,
    run_node_attribute_task,
    run_node_classification_task,
    split,
)
from .config import ExperimentConfig, load_config, parse_config

__version__ = "0.1.0"
