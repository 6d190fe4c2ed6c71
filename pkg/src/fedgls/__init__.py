"""Federated graph learning simulator with graphless clients.

Implements the FedGLS training scheme (per-client GCN + feature encoder,
per-graphless-client graph learner, FedAvg global updates) together with six
comparison methods, a synthetic planted-partition data source, Louvain-based
dataset partitioning, and a deterministic experiment harness.
"""

from .errors import (
    ConfigError,
    DataError,
    EvaluationError,
    FedglsError,
    ParameterError,
    ShapeError,
)
from .federation import (
    Client,
    ClientState,
    FederationConfig,
    FederationResult,
    GlobalState,
    RoundMetrics,
    aggregate_prototypes,
    client_round,
    compute_prototypes,
    evaluate,
    fedavg_aggregate,
    run_baseline,
    run_federation,
)
from .graph_core import (
    Graph,
    Partition,
    SbmConfig,
    knn_graph,
    louvain_partition,
    modularity,
    normalize_adjacency,
    sbm_generate,
    split_masks,
)
from .models import (
    EncoderParams,
    GcnParams,
    LearnerConfig,
    LearnerParams,
    MlpParams,
    adjacency_process,
    classifier_head,
    feature_encoder_forward,
    gcn_forward,
    graph_generator_forward,
)
from .losses import LossOutput, contrastive_loss, cross_entropy_loss, kd_loss
from .numerics import (
    GradCheckReport,
    apply_activation,
    check_gradient,
    cosine_sim_matrix,
    finite_diff_grad,
    matmul,
    row_softmax,
)

__version__ = "0.1.0"
