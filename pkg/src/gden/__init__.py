"""Graph diffusion-embedding networks.

Node features are diffused to equilibrium through a closed-form linear
system on the graph, then passed through stacked projection layers; the
same diffusion powers a semi-supervised classifier and a link-prediction
auto-encoder.  Everything runs on numpy/scipy with exact hand-derived
gradients; no deep-learning framework is involved.
"""

from .graphs import (
    OPERATOR_KINDS,
    Graph,
    add_self_loops,
    build_graph,
    check_features,
    operator_apply,
)
from .diffusion import (
    VARIANTS,
    DiffusionKind,
    DiffusionOperator,
    SolverConfig,
    SolverError,
    diffuse,
    diffuse_transpose,
    make_diffusion,
    solve_linear,
    validate_alpha,
)
from .network import (
    CHECKPOINT_MAGIC,
    ModelParams,
    embed,
    forward_gae,
    forward_semi,
    init_params,
    load_checkpoint,
    loss_and_grad_gae,
    loss_and_grad_semi,
    masked_cross_entropy,
    save_checkpoint,
)
from .training import (
    METRICS_HEADER,
    AdamState,
    EdgeSplit,
    EpochRecord,
    TrainConfig,
    TrainHistory,
    adam_step,
    auc,
    evaluate_accuracy,
    init_adam,
    one_hot,
    read_metrics,
    split_edges,
    train_gae,
    train_semi,
    write_metrics,
)
from .data import (
    DatasetBundle,
    DatasetError,
    load_dataset,
    row_normalize_features,
    write_dataset,
    write_dense_features,
)
from .cli import run_cli

__version__ = "0.1.0"

__all__ = [
    "OPERATOR_KINDS",
    "Graph",
    "add_self_loops",
    "build_graph",
    "check_features",
    "operator_apply",
    "VARIANTS",
    "DiffusionKind",
    "DiffusionOperator",
    "SolverConfig",
    "SolverError",
    "diffuse",
    "diffuse_transpose",
    "make_diffusion",
    "solve_linear",
    "validate_alpha",
    "CHECKPOINT_MAGIC",
    "ModelParams",
    "embed",
    "forward_gae",
    "forward_semi",
    "init_params",
    "load_checkpoint",
    "loss_and_grad_gae",
    "loss_and_grad_semi",
    "masked_cross_entropy",
    "save_checkpoint",
    "METRICS_HEADER",
    "AdamState",
    "EdgeSplit",
    "EpochRecord",
    "TrainConfig",
    "TrainHistory",
    "adam_step",
    "auc",
    "evaluate_accuracy",
    "init_adam",
    "one_hot",
    "read_metrics",
    "split_edges",
    "train_gae",
    "train_semi",
    "write_metrics",
    "DatasetBundle",
    "DatasetError",
    "load_dataset",
    "row_normalize_features",
    "write_dataset",
    "write_dense_features",
    "run_cli",
    "__version__",
]
