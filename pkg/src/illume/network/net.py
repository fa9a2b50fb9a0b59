"""Forward/backward passes, SGD training, and model serialization.

Tensors are plain float64 ndarrays in NCHW layout. The backward pass is
fully analytic (conv, max-pool argmax routing, cross-channel response
normalization, ReLU, fc, softmax) and is verified against central finite
differences in the test suite.

Determinism contract: for a fixed seed, training consumes a single RNG
stream in a fixed order (shuffles, then dropout masks per iteration), so
repeated runs produce bit-identical weights.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass

import numpy as np

from illume import kernels
from illume.errors import DivergenceError, ShapeMismatchError
from illume.network.spec import (
    LayerSpec,
    NetworkSpec,
    TrainConfig,
    spec_from_dict,
    spec_to_dict,
)

logger = logging.getLogger(__name__)

MAGIC = b"CCNN"
FORMAT_VERSION = 1


@dataclass
class TrainedNetwork:
    """Weights plus the spec they instantiate.

    input_scale divides raw pixel values (normally the white level) and
    input_mean is the per-channel mean of the scaled training patches,
    subtracted identically at train and test time.
    """

    spec: NetworkSpec
    weights: list[dict[str, np.ndarray]]
    input_mean: np.ndarray
    input_scale: float = 1.0

    @property
    def class_count(self) -> int:
        return self.spec.num_classes


def init_network(spec: NetworkSpec, seed: int = 0, input_scale: float = 1.0) -> TrainedNetwork:
    """He-style fan-in scaled Gaussian filters, zero biases."""
    rng = np.random.default_rng(seed)
    weights: list[dict[str, np.ndarray]] = []
    shape: tuple[int, ...] = (spec.input_channels, spec.input_side)
    for layer in spec.layers:
        if layer.kind == "conv":
            c = shape[0]
            fan_in = c * layer.kernel * layer.kernel
            w = rng.standard_normal((layer.outputs, c, layer.kernel, layer.kernel))
            w *= np.sqrt(2.0 / fan_in)
            weights.append({"w": w, "b": np.zeros(layer.outputs)})
            out_side = kernels.conv_output_side(shape[1], layer.kernel, layer.stride, layer.pad)
            shape = (layer.outputs, out_side)
        elif layer.kind == "maxpool":
            weights.append({})
            out_side = kernels.conv_output_side(shape[1], layer.kernel, layer.stride, 0)
            shape = (shape[0], out_side)
        elif layer.kind == "lrn":
            weights.append({})
        elif layer.kind == "fc":
            fan_in = spec.feature_count(shape)
            w = rng.standard_normal((layer.outputs, fan_in)) * np.sqrt(2.0 / fan_in)
            weights.append({"w": w, "b": np.zeros(layer.outputs)})
            shape = (layer.outputs,)
    return TrainedNetwork(spec=spec, weights=weights, input_mean=np.zeros(3), input_scale=input_scale)


# ---------------------------------------------------------------------------
# local response normalization (cross-channel)

def _channel_window_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a clipped window of +-radius neighbors along the channel axis."""
    c = a.shape[1]
    cs = np.concatenate([np.zeros_like(a[:, :1]), np.cumsum(a, axis=1)], axis=1)
    hi = np.minimum(np.arange(c) + radius, c - 1) + 1
    lo = np.maximum(np.arange(c) - radius, 0)
    return cs[:, hi] - cs[:, lo]


def lrn_forward(x: np.ndarray, p) -> tuple[np.ndarray, np.ndarray]:
    """y_c = x_c / (k + alpha * sum of squares over neighboring channels)^beta."""
    denom = p.k + p.alpha * _channel_window_sum(x * x, p.size // 2)
    return x * denom ** (-p.beta), denom


def lrn_backward(x: np.ndarray, denom: np.ndarray, dout: np.ndarray, p) -> np.ndarray:
    scale = denom ** (-p.beta)
    cross = _channel_window_sum(dout * x * scale / denom, p.size // 2)
    return dout * scale - 2.0 * p.alpha * p.beta * x * cross


# ---------------------------------------------------------------------------
# forward / backward

def _patch_pixels(patch) -> np.ndarray:
    return patch.pixels if hasattr(patch, "pixels") else np.asarray(patch, dtype=np.float64)


def _preprocess(net: TrainedNetwork, batch: np.ndarray) -> np.ndarray:
    spec = net.spec
    if batch.ndim != 4 or batch.shape[1] != spec.input_side or batch.shape[2] != spec.input_side \
            or batch.shape[3] != spec.input_channels:
        raise ShapeMismatchError(
            f"expected patches of shape (n, {spec.input_side}, {spec.input_side}, "
            f"{spec.input_channels}), got {batch.shape}"
        )
    x = np.ascontiguousarray(batch.transpose(0, 3, 1, 2), dtype=np.float64)
    x /= net.input_scale
    x -= net.input_mean[None, :, None, None]
    return x


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (max subtraction)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_internal(net, x, train=False, rng=None, dropout_override=None):
    """Run all layers; returns (probs, logits, caches)."""
    caches = []
    for layer, wt in zip(net.spec.layers, net.weights):
        cache = {"layer": layer}
        if layer.kind == "conv":
            pre = kernels.conv2d_forward(x, wt["w"], wt["b"], layer.stride, layer.pad)
            cache["x"] = x
            cache["pre"] = pre
            x = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
        elif layer.kind == "maxpool":
            cache["x_shape"] = x.shape
            x, argmax = kernels.maxpool_forward(x, layer.kernel, layer.stride)
            cache["argmax"] = argmax
        elif layer.kind == "lrn":
            out, denom = lrn_forward(x, layer.lrn)
            cache["x"] = x
            cache["denom"] = denom
            x = out
        elif layer.kind == "fc":
            cache["in_shape"] = x.shape
            x2d = x.reshape(x.shape[0], -1)
            pre = x2d @ wt["w"].T + wt["b"]
            cache["x2d"] = x2d
            cache["pre"] = pre
            x = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
            p = layer.dropout_p if dropout_override is None else (
                dropout_override if layer.dropout_p > 0.0 else 0.0)
            if train and p > 0.0:
                mask = (rng.random(x.shape) >= p) / (1.0 - p)
                cache["mask"] = mask
                x = x * mask
        caches.append(cache)
    logits = x
    return softmax(logits), logits, caches


def _backward_internal(net, caches, dlogits):
    """Propagate a gradient w.r.t. the final logits back to every weight."""
    grads: list[dict[str, np.ndarray]] = [{} for _ in net.spec.layers]
    dout = dlogits
    for idx in range(len(net.spec.layers) - 1, -1, -1):
        layer = net.spec.layers[idx]
        cache = caches[idx]
        wt = net.weights[idx]
        if layer.kind == "fc":
            if "mask" in cache:
                dout = dout * cache["mask"]
            if layer.activation == "relu":
                dout = dout * (cache["pre"] > 0.0)
            grads[idx] = {"w": dout.T @ cache["x2d"], "b": dout.sum(axis=0)}
            dout = (dout @ wt["w"]).reshape(cache["in_shape"])
        elif layer.kind == "conv":
            if layer.activation == "relu":
                dout = dout * (cache["pre"] > 0.0)
            dx, dw, db = kernels.conv2d_backward(
                cache["x"], wt["w"], layer.stride, layer.pad, dout)
            grads[idx] = {"w": dw, "b": db}
            dout = dx
        elif layer.kind == "maxpool":
            dout = kernels.maxpool_backward(cache["x_shape"], cache["argmax"], dout)
        elif layer.kind == "lrn":
            dout = lrn_backward(cache["x"], cache["denom"], dout, layer.lrn)
    return grads


def forward_batch(net: TrainedNetwork, patches: np.ndarray) -> np.ndarray:
    """Inference over a stack of patches (n, side, side, 3) -> (n, K) probabilities."""
    x = _preprocess(net, np.asarray(patches, dtype=np.float64))
    probs, _, _ = _forward_internal(net, x)
    return probs


def forward(net: TrainedNetwork, patch) -> np.ndarray:
    """Class probabilities for one patch; dropout inactive, softmax stable.

    Entries are strictly positive and sum to 1 within 1e-9.
    """
    pixels = _patch_pixels(patch)
    return forward_batch(net, pixels[None])[0]


def loss(y_hat: np.ndarray, c: int) -> float:
    """Negative log-likelihood of class c under the probability vector y_hat.

    Training computes this in the log domain from logits; this helper is
    total as well (a zero probability yields +inf, never an exception).
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if not 0 <= c < y_hat.shape[-1]:
        raise ShapeMismatchError(f"class index {c} out of range for K={y_hat.shape[-1]}")
    with np.errstate(divide="ignore"):
        return float(-np.log(y_hat[..., c]))


def nll_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean NLL over a batch, computed stably from logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def backward(net: TrainedNetwork, patch, c: int, train: bool = False, rng=None):
    """Analytic gradients of the single-sample loss w.r.t. every weight.

    Returns one dict per layer ({} for layers without weights). With
    train=True a fresh dropout mask is sampled from rng for each call.
    """
    pixels = _patch_pixels(patch)
    x = _preprocess(net, pixels[None])
    if train and rng is None:
        rng = np.random.default_rng(0)
    probs, _, caches = _forward_internal(net, x, train=train, rng=rng)
    dlogits = probs.copy()
    dlogits[0, c] -= 1.0
    return _backward_internal(net, caches, dlogits)


def sgd_step(net: TrainedNetwork, grads, cfg: TrainConfig, iteration: int, velocity=None):
    """One momentum-SGD update, in place.

    v <- momentum * v - lr_layer * (grad + weight_decay * w); w <- w + v.
    Biases are exempt from weight decay. Returns (net, velocity) so the
    velocity state can be threaded through successive calls.
    """
    if velocity is None:
        velocity = [
            {k: np.zeros_like(v) for k, v in wt.items()} for wt in net.weights
        ]
    for layer, wt, g, vel in zip(net.spec.layers, net.weights, grads, velocity):
        if not wt:
            continue
        lr = cfg.learning_rate(layer, iteration)
        vel["w"] *= cfg.momentum
        vel["w"] -= lr * (g["w"] + cfg.weight_decay * wt["w"])
        wt["w"] += vel["w"]
        vel["b"] *= cfg.momentum
        vel["b"] -= lr * g["b"]
        wt["b"] += vel["b"]
    return net, velocity


def train(
    patches: np.ndarray,
    labels: np.ndarray,
    spec: NetworkSpec,
    cfg: TrainConfig,
    white_level: float = 1.0,
) -> TrainedNetwork:
    """Mini-batch SGD over a fixed bank of labeled patches.

    patches: (n, side, side, 3) raw pixel values in [0, white_level].
    Deterministic for a fixed cfg.seed: one RNG stream drives the epoch
    shuffles and the per-iteration dropout masks. Aborts with
    DivergenceError if the loss goes non-finite.
    """
    patches = np.asarray(patches, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(patches) != len(labels):
        raise ShapeMismatchError("patches and labels disagree in length")
    if len(patches) == 0:
        raise ShapeMismatchError("cannot train on an empty patch set")
    if labels.min() < 0 or labels.max() >= spec.num_classes:
        raise ShapeMismatchError("labels must lie in [0, num_classes)")
    present = np.unique(labels)
    if len(present) < spec.num_classes:
        missing = sorted(set(range(spec.num_classes)) - set(present.tolist()))
        logger.warning("no training samples for classes %s", missing)

    net = init_network(spec, seed=cfg.seed, input_scale=white_level)
    net.input_mean = (patches.reshape(-1, 3).mean(axis=0) / white_level)
    if cfg.max_iters == 0:
        return net

    rng = np.random.default_rng(cfg.seed)
    n = len(patches)
    order = rng.permutation(n)
    cursor = 0
    velocity = None
    for it in range(cfg.max_iters):
        idx = np.empty(cfg.batch_size, dtype=np.int64)
        for i in range(cfg.batch_size):
            if cursor == n:
                order = rng.permutation(n)
                cursor = 0
            idx[i] = order[cursor]
            cursor += 1
        batch = _preprocess(net, patches[idx])
        batch_labels = labels[idx]
        probs, logits, caches = _forward_internal(
            net, batch, train=True, rng=rng, dropout_override=cfg.dropout_p)
        batch_loss = nll_from_logits(logits, batch_labels)
        if not np.isfinite(batch_loss):
            raise DivergenceError(f"loss diverged at iteration {it}")
        dlogits = probs.copy()
        dlogits[np.arange(len(batch_labels)), batch_labels] -= 1.0
        dlogits /= len(batch_labels)
        grads = _backward_internal(net, caches, dlogits)
        net, velocity = sgd_step(net, grads, cfg, it, velocity)
        if it % 50 == 0 or it == cfg.max_iters - 1:
            logger.info("iter %d/%d loss %.4f", it, cfg.max_iters, batch_loss)
        else:
            logger.debug("iter %d loss %.6f", it, batch_loss)
    return net


# ---------------------------------------------------------------------------
# serialization

def save_network(net: TrainedNetwork, path) -> None:
    """Single binary file: magic, version, K, JSON meta blob, raw f64 weights."""
    meta = {
        "spec": spec_to_dict(net.spec),
        "input_mean": net.input_mean.tolist(),
        "input_scale": net.input_scale,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, net.spec.num_classes))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for wt in net.weights:
            for key in ("w", "b"):
                if key in wt:
                    fh.write(np.ascontiguousarray(wt[key], dtype="<f8").tobytes())


def load_network(path) -> TrainedNetwork:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ShapeMismatchError(f"{path} is not a serialized network")
        version, k = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ShapeMismatchError(f"unsupported format version {version}")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(blob_len).decode("utf-8"))
        spec = spec_from_dict(meta["spec"])
        if spec.num_classes != k:
            raise ShapeMismatchError("header class count disagrees with spec blob")
        net = init_network(spec)
        net.input_mean = np.asarray(meta["input_mean"], dtype=np.float64)
        net.input_scale = float(meta["input_scale"])
        for wt in net.weights:
            for key in ("w", "b"):
                if key in wt:
                    raw = fh.read(wt[key].size * 8)
                    if len(raw) != wt[key].size * 8:
                        raise ShapeMismatchError("truncated weight data")
                    wt[key] = np.frombuffer(raw, dtype="<f8").reshape(wt[key].shape).copy()
        if fh.read(1):
            raise ShapeMismatchError("trailing bytes after weight data")
    return net
