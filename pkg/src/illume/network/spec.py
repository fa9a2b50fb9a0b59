"""Layer-graph descriptions for the convolutional classifier.

A network is an ordered list of layer specs ending in a fully-connected
softmax layer whose width equals the number of illuminant clusters. Shape
consistency is validated up front: every layer's computed output shape
must feed the next.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

from illume.errors import ShapeMismatchError
from illume.kernels import conv_output_side

LAYER_KINDS = ("conv", "maxpool", "lrn", "fc")
ACTIVATIONS = ("relu", "none", "softmax")


@dataclass(frozen=True)
class LrnParams:
    """Cross-channel local response normalization constants."""

    size: int = 5
    alpha: float = 1e-4
    beta: float = 0.75
    k: float = 2.0


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    outputs: int = 0
    activation: str = "none"
    dropout_p: float = 0.0
    lr_multiplier: float = 1.0
    lrn: Optional[LrnParams] = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeMismatchError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ShapeMismatchError(f"unknown activation {self.activation!r}")
        if self.kind in ("conv", "maxpool") and (self.kernel < 1 or self.stride < 1):
            raise ShapeMismatchError(f"{self.kind} needs kernel >= 1 and stride >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ShapeMismatchError(f"dropout probability {self.dropout_p} outside [0, 1)")
        if self.dropout_p > 0.0 and self.kind != "fc":
            raise ShapeMismatchError("dropout is only supported on fc layers")
        if self.kind == "lrn" and self.lrn is None:
            object.__setattr__(self, "lrn", LrnParams())


@dataclass(frozen=True)
class NetworkSpec:
    input_side: int
    input_channels: int
    layers: tuple[LayerSpec, ...]
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shape_chain()  # raises on inconsistency

    def shape_chain(self) -> list[tuple[int, ...]]:
        """Output shape after each layer, starting from the input shape.

        Conv/pool shapes are (channels, side); fc shapes are (features,).
        """
        if not self.layers:
            raise ShapeMismatchError("network needs at least one layer")
        last = self.layers[-1]
        if last.kind != "fc" or last.activation != "softmax" or last.outputs != self.num_classes:
            raise ShapeMismatchError(
                "final layer must be fc with softmax activation and outputs == num_classes"
            )
        chain: list[tuple[int, ...]] = []
        shape: tuple[int, ...] = (self.input_channels, self.input_side)
        for idx, layer in enumerate(self.layers):
            if layer.kind == "conv":
                if len(shape) != 2:
                    raise ShapeMismatchError(f"layer {idx}: conv after flattening")
                c, side = shape
                out_side = conv_output_side(side, layer.kernel, layer.stride, layer.pad)
                if out_side < 1 or layer.kernel > side + 2 * layer.pad:
                    raise ShapeMismatchError(
                        f"layer {idx}: conv kernel {layer.kernel} too large for side {side}"
                    )
                if layer.outputs < 1:
                    raise ShapeMismatchError(f"layer {idx}: conv needs outputs >= 1")
                shape = (layer.outputs, out_side)
            elif layer.kind == "maxpool":
                if len(shape) != 2:
                    raise ShapeMismatchError(f"layer {idx}: maxpool after flattening")
                c, side = shape
                if layer.kernel > side:
                    raise ShapeMismatchError(f"layer {idx}: pool window larger than side {side}")
                out_side = conv_output_side(side, layer.kernel, layer.stride, 0)
                shape = (c, out_side)
            elif layer.kind == "lrn":
                if len(shape) != 2:
                    raise ShapeMismatchError(f"layer {idx}: lrn after flattening")
            elif layer.kind == "fc":
                if layer.outputs < 1:
                    raise ShapeMismatchError(f"layer {idx}: fc needs outputs >= 1")
                shape = (layer.outputs,)
            if layer.activation == "softmax" and idx != len(self.layers) - 1:
                raise ShapeMismatchError("softmax is only allowed on the final layer")
            if layer.activation == "softmax" and layer.dropout_p > 0.0:
                raise ShapeMismatchError("dropout on the softmax layer is not supported")
            chain.append(shape)
        return chain

    def feature_count(self, shape: tuple[int, ...]) -> int:
        if len(shape) == 1:
            return shape[0]
        return shape[0] * shape[1] * shape[1]


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters.

    lr for a layer at iteration t is
    base_lr * layer.lr_multiplier * lr_decay_factor ** (t // lr_decay_every);
    lr_decay_every == 0 means max_iters // 3 (never decaying if that is 0).
    Biases are exempt from weight decay. dropout_p, when set, overrides the
    per-layer dropout probabilities at training time.
    """

    batch_size: int = 100
    momentum: float = 0.9
    weight_decay: float = 0.0005
    base_lr: float = 1e-3
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 0
    max_iters: int = 1000
    dropout_p: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")

    def decay_interval(self) -> int:
        if self.lr_decay_every > 0:
            return self.lr_decay_every
        return self.max_iters // 3

    def learning_rate(self, layer: LayerSpec, iteration: int) -> float:
        lr = self.base_lr * layer.lr_multiplier
        every = self.decay_interval()
        if every > 0:
            lr *= self.lr_decay_factor ** (iteration // every)
        return lr


def paper_architecture(k: int) -> NetworkSpec:
    """Full-size configuration: five conv/pool feature stages, three fc layers.

    Input resolution 227. The first conv layer and the last two fc layers
    carry a 10x learning-rate multiplier.
    """
    if k < 2:
        raise ValueError("need at least 2 classes")
    layers = (
        LayerSpec("conv", kernel=11, stride=4, pad=0, outputs=96, activation="relu", lr_multiplier=10.0),
        LayerSpec("maxpool", kernel=3, stride=2),
        LayerSpec("lrn"),
        LayerSpec("conv", kernel=5, stride=1, pad=2, outputs=256, activation="relu"),
        LayerSpec("maxpool", kernel=3, stride=2),
        LayerSpec("lrn"),
        LayerSpec("conv", kernel=3, stride=1, pad=1, outputs=384, activation="relu"),
        LayerSpec("conv", kernel=3, stride=1, pad=1, outputs=384, activation="relu"),
        LayerSpec("conv", kernel=3, stride=1, pad=1, outputs=256, activation="relu"),
        LayerSpec("fc", outputs=4096, activation="relu", dropout_p=0.5),
        LayerSpec("fc", outputs=4096, activation="relu", dropout_p=0.5, lr_multiplier=10.0),
        LayerSpec("fc", outputs=k, activation="softmax", lr_multiplier=10.0),
    )
    return NetworkSpec(input_side=227, input_channels=3, layers=layers, num_classes=k)


def toy_architecture(k: int) -> NetworkSpec:
    """Reduced profile for CPU-scale runs: 64px input, two conv stages, two fc."""
    if k < 2:
        raise ValueError("need at least 2 classes")
    layers = (
        LayerSpec("conv", kernel=5, stride=2, pad=0, outputs=16, activation="relu", lr_multiplier=10.0),
        LayerSpec("maxpool", kernel=3, stride=2),
        LayerSpec("conv", kernel=3, stride=1, pad=1, outputs=32, activation="relu"),
        LayerSpec("maxpool", kernel=3, stride=2),
        LayerSpec("fc", outputs=128, activation="relu", dropout_p=0.5, lr_multiplier=10.0),
        LayerSpec("fc", outputs=k, activation="softmax", lr_multiplier=10.0),
    )
    return NetworkSpec(input_side=64, input_channels=3, layers=layers, num_classes=k)


def spec_to_dict(spec: NetworkSpec) -> dict:
    return asdict(spec)


def spec_from_dict(data: dict) -> NetworkSpec:
    layers = []
    for layer in data["layers"]:
        lrn = layer.get("lrn")
        layers.append(
            LayerSpec(
                kind=layer["kind"],
                kernel=layer.get("kernel", 0),
                stride=layer.get("stride", 1),
                pad=layer.get("pad", 0),
                outputs=layer.get("outputs", 0),
                activation=layer.get("activation", "none"),
                dropout_p=layer.get("dropout_p", 0.0),
                lr_multiplier=layer.get("lr_multiplier", 1.0),
                lrn=LrnParams(**lrn) if lrn else None,
            )
        )
    return NetworkSpec(
        input_side=data["input_side"],
        input_channels=data["input_channels"],
        layers=tuple(layers),
        num_classes=data["num_classes"],
    )
