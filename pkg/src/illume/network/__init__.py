from illume.network.net import (
    TrainedNetwork,
    backward,
    forward,
    forward_batch,
    init_network,
    load_network,
    loss,
    nll_from_logits,
    save_network,
    sgd_step,
    softmax,
    train,
)
from illume.network.spec import (
    LayerSpec,
    LrnParams,
    NetworkSpec,
    TrainConfig,
    paper_architecture,
    spec_from_dict,
    spec_to_dict,
    toy_architecture,
)

__all__ = [
    "TrainedNetwork",
    "backward",
    "forward",
    "forward_batch",
    "init_network",
    "load_network",
    "loss",
    "nll_from_logits",
    "save_network",
    "sgd_step",
    "softmax",
    "train",
    "LayerSpec",
    "LrnParams",
    "NetworkSpec",
    "TrainConfig",
    "paper_architecture",
    "spec_from_dict",
    "spec_to_dict",
    "toy_architecture",
]
