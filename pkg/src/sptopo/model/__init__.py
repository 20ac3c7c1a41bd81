"""Network, losses and checkpoints."""
from .checkpoint import load_params, save_params
from .losses import (
    consistency_loss,
    nb_logpmf,
    neighbor_pairs,
    sample_negatives,
    scdom_loss,
    total_loss,
    zinb_logpmf,
    zinb_nll,
)
from .network import (
    MODALITIES,
    ForwardState,
    ModelConfig,
    ModelInputs,
    attention_fusion,
    co_view_forward,
    epe_forward,
    forward,
    gcn_layer,
    init_params,
    normalized_adjacency,
    zinb_heads,
)

__all__ = [
    "MODALITIES",
    "ForwardState",
    "ModelConfig",
    "ModelInputs",
    "attention_fusion",
    "co_view_forward",
    "consistency_loss",
    "epe_forward",
    "forward",
    "gcn_layer",
    "init_params",
    "load_params",
    "nb_logpmf",
    "neighbor_pairs",
    "normalized_adjacency",
    "sample_negatives",
    "save_params",
    "scdom_loss",
    "total_loss",
    "zinb_heads",
    "zinb_logpmf",
    "zinb_nll",
]
