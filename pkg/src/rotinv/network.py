"""Two-branch point-wise MLP classifier with hand-written backpropagation.

Layout of a forward pass over a batch of B clouds with N points and k
neighbors each:

    local rows  (B, N, k, 8) --local_mlp--> max over k --> F_L (B, N, C)
    edge rows   (B, N, k, 6) --global_mlp-> max over k --> F_G (B, N, C)
    fuse(F_G, F_L) --> F (B, N, C) --max over N--> (B, C) --classifier--> logits

Parameters, running statistics and inference are float64; training batches
may run in float32 (see `train`).  Parameters live in plain numpy arrays so that
`sgd_step` and the checkpoint code can address them by name.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .canonical import ProjectedCloud, canonical_frame, edge_features, project
from .config import RunConfig
from .errors import BadLabel, CheckpointError, ShapeMismatch
from .geometry import PointCloud, apply_rotation, center_and_normalize, random_rotation
from .local import FEATURE_WIDTH, local_representation

LEAKY_SLOPE = 0.01
EDGE_WIDTH = 6


@dataclass
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def fresh(cls, width: int) -> BatchNorm:
        return cls(np.ones(width), np.zeros(width), np.zeros(width), np.ones(width))


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray
    activation: str = "leaky_relu"
    bn: BatchNorm | None = None

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


def init_dense(rng: np.random.Generator, n_in: int, n_out: int, activation="leaky_relu",
               bn=True) -> DenseLayer:
    bound = 1.0 / np.sqrt(n_in)
    return DenseLayer(
        weight=rng.uniform(-bound, bound, size=(n_out, n_in)),
        bias=rng.uniform(-bound, bound, size=n_out),
        activation=activation,
        bn=BatchNorm.fresh(n_out) if bn else None,
    )


def init_stack(rng, n_in, widths, bn=True, last_activation="leaky_relu", last_bn=None):
    layers = []
    for i, width in enumerate(widths):
        last = i == len(widths) - 1
        act = last_activation if last else "leaky_relu"
        use_bn = (bn if last_bn is None else last_bn) if last else bn
        layers.append(init_dense(rng, n_in, width, act, use_bn))
        n_in = width
    return layers


# ---------------------------------------------------------------------------
# dense layer


class _DenseCache(NamedTuple):
    x: np.ndarray
    xhat: np.ndarray | None
    scale: np.ndarray | None  # inv std used to normalize
    y: np.ndarray
    training: bool


def _colsum(a: np.ndarray) -> np.ndarray:
    # a ones-vector product runs through BLAS and is several times faster than sum(axis=0)
    return np.ones(a.shape[0], dtype=a.dtype) @ a


def _dense_fwd(layer: DenseLayer, x: np.ndarray, training: bool):
    if x.shape[-1] != layer.in_dim:
        raise ShapeMismatch(f"layer expects width {layer.in_dim}, got {x.shape[-1]}")
    dt = x.dtype
    z = x @ layer.weight.T.astype(dt, copy=False)
    z += layer.bias.astype(dt, copy=False)
    xhat = scale = stats = None
    bn = layer.bn
    if bn is not None:
        xhat = z
        if training:
            mean = _colsum(z) / z.shape[0]
            xhat -= mean
            var = np.einsum("ij,ij->j", xhat, xhat) / z.shape[0]
            stats = (mean, var)
        else:
            mean, var = bn.running_mean, bn.running_var
            xhat -= mean.astype(dt, copy=False)
        scale = (1.0 / np.sqrt(var + bn.eps)).astype(dt, copy=False)
        xhat *= scale
        z = xhat * bn.gamma.astype(dt, copy=False)
        z += bn.beta.astype(dt, copy=False)
    if layer.activation == "leaky_relu":
        y = np.maximum(z, LEAKY_SLOPE * z)
    elif layer.activation == "identity":
        y = z
    else:
        raise ValueError(f"unknown activation {layer.activation!r}")
    return y, _DenseCache(x, xhat, scale, y, training), stats


def _dense_bwd(layer: DenseLayer, dy: np.ndarray, cache: _DenseCache, grads: dict, prefix: str):
    dt = dy.dtype
    if layer.activation == "leaky_relu":
        # slope factor 1 where y > 0, LEAKY_SLOPE elsewhere (sign trick avoids a slow masked select)
        da = np.sign(cache.y)
        np.maximum(da, LEAKY_SLOPE, out=da)
        da *= dy
    else:
        da = dy
    bn = layer.bn
    if bn is not None:
        grads[prefix + "bn.gamma"] = np.einsum("ij,ij->j", da, cache.xhat)
        grads[prefix + "bn.beta"] = _colsum(da)
        gamma_scale = (bn.gamma * cache.scale).astype(dt, copy=False)
        if cache.training:
            # dz = scale*gamma * (da - mean(da) - xhat * mean(da * xhat))
            rows = dy.shape[0]
            mean_da = grads[prefix + "bn.beta"] / rows
            mean_da_xhat = grads[prefix + "bn.gamma"] / rows
            dz = cache.xhat * mean_da_xhat
            np.subtract(da, dz, out=dz)
            dz -= mean_da
            dz *= gamma_scale
        else:
            dz = da * gamma_scale
    else:
        dz = da
    grads[prefix + "weight"] = dz.T @ cache.x
    grads[prefix + "bias"] = _colsum(dz)
    return dz @ layer.weight.astype(dt, copy=False)


def _commit_stats(layer: DenseLayer, stats):
    if layer.bn is None or stats is None:
        return
    bn = layer.bn
    mean, var = stats
    bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * mean
    bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * var


def dense_forward(layer: DenseLayer, x, training: bool = False) -> np.ndarray:
    """act(bn(x W^T + b)) on a (batch, in) matrix.

    In training mode batch statistics normalize the output and are folded
    into the running averages; in inference mode the running averages are used.
    """
    x = np.asarray(x, dtype=np.float64)
    y, _, stats = _dense_fwd(layer, x, training)
    if training:
        _commit_stats(layer, stats)
    return y


def _stack_fwd(layers, x, training):
    caches, stats = [], []
    for layer in layers:
        x, c, s = _dense_fwd(layer, x, training)
        caches.append(c)
        stats.append(s)
    return x, caches, stats


def _stack_bwd(layers, dy, caches, grads, name):
    for i in reversed(range(len(layers))):
        dy = _dense_bwd(layers[i], dy, caches[i], grads, f"{name}.{i}.")
    return dy


def _max_pool_bwd(dy: np.ndarray, argmax: np.ndarray, shape, axis: int) -> np.ndarray:
    out = np.zeros(shape)
    np.put_along_axis(out, np.expand_dims(argmax, axis), np.expand_dims(dy, axis), axis=axis)
    return out


def branch_forward(mlp, rows, training: bool = False) -> np.ndarray:
    """Shared MLP over every neighbor row of an (N, k, D) tensor, then max over k."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 3:
        raise ShapeMismatch(f"expected an (N, k, D) tensor, got shape {rows.shape}")
    n, k, d = rows.shape
    y = _stack_fwd(mlp, rows.reshape(n * k, d), training)[0]
    return y.reshape(n, k, -1).max(axis=1)


def _softmax2(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class FusionWeights:
    w_global: np.ndarray
    w_local: np.ndarray


def attention_fuse(F_G, F_L, head, training: bool = False):
    """Per-point softmax weighting of two (N, C) feature maps.

    `head` maps the concatenated 2C features to two logits per point.
    Returns the fused (N, C) map and the weights.
    """
    F_G = np.asarray(F_G, dtype=np.float64)
    F_L = np.asarray(F_L, dtype=np.float64)
    if F_G.shape != F_L.shape:
        raise ShapeMismatch(f"branch maps differ in shape: {F_G.shape} vs {F_L.shape}")
    logits = _stack_fwd(head, np.concatenate([F_G, F_L], axis=-1), training)[0]
    if logits.shape[-1] != 2:
        raise ShapeMismatch("fusion head must output exactly two logits")
    w = _softmax2(logits)
    fused = w[:, :1] * F_G + w[:, 1:] * F_L
    return fused, FusionWeights(w[:, 0], w[:, 1])


def global_max_pool(F) -> np.ndarray:
    return np.asarray(F).max(axis=0)


def cross_entropy_loss(logits, label: int) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise BadLabel(f"label {label} outside [0, {logits.shape[-1]})")
    top = logits.max()
    lse = top + np.log(np.exp(logits - top).sum())
    return float(lse - logits[label])


def _batch_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise BadLabel("label outside the class range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(labels))
    loss = float(np.mean(log_z - shifted[rows, labels]))
    probs = np.exp(shifted - log_z[:, None])
    dlogits = probs
    dlogits[rows, labels] -= 1.0
    return loss, dlogits / len(labels)


# ---------------------------------------------------------------------------
# model


@dataclass
class Model:
    config: RunConfig
    local_mlp: list = field(default_factory=list)
    global_mlp: list = field(default_factory=list)
    fusion: list = field(default_factory=list)
    classifier: list = field(default_factory=list)

    STACKS = ("local_mlp", "global_mlp", "fusion", "classifier")

    def layers(self):
        for stack in self.STACKS:
            for i, layer in enumerate(getattr(self, stack)):
                yield f"{stack}.{i}.", layer

    def parameters(self) -> dict:
        """Trainable arrays by name, in a fixed order."""
        params = {}
        for prefix, layer in self.layers():
            params[prefix + "weight"] = layer.weight
            params[prefix + "bias"] = layer.bias
            if layer.bn is not None:
                params[prefix + "bn.gamma"] = layer.bn.gamma
                params[prefix + "bn.beta"] = layer.bn.beta
        return params

    def buffers(self) -> dict:
        out = {}
        for prefix, layer in self.layers():
            if layer.bn is not None:
                out[prefix + "bn.running_mean"] = layer.bn.running_mean
                out[prefix + "bn.running_var"] = layer.bn.running_var
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())


def build_model(config: RunConfig, seed: int | None = None) -> Model:
    """Fresh model; weights and biases uniform in +-1/sqrt(fan_in) from the seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    bn = config.bn
    model = Model(config)
    if config.uses_local:
        model.local_mlp = init_stack(rng, FEATURE_WIDTH, config.local_dims, bn)
    if config.uses_global:
        model.global_mlp = init_stack(rng, EDGE_WIDTH, config.global_dims, bn)
    c = config.feature_width
    if config.fusion == "attention":
        model.fusion = init_stack(rng, 2 * c, (c, 2), bn, last_activation="identity", last_bn=False)
    elif config.fusion == "cat":
        model.fusion = init_stack(rng, 2 * c, (c,), bn)
    model.classifier = init_stack(rng, c, config.classifier_dims + (config.n_classes,), bn,
                                  last_activation="identity", last_bn=False)
    return model


class Batch(NamedTuple):
    local: np.ndarray | None  # (B, N, k, 8)
    edge: np.ndarray | None  # (B, N, k, 6)
    labels: np.ndarray


def _branch_fwd(layers, rows, training):
    b, n, k, d = rows.shape
    y, caches, stats = _stack_fwd(layers, rows.reshape(-1, d), training)
    y = y.reshape(b, n, k, -1)
    arg = y.argmax(axis=2)
    pooled = np.take_along_axis(y, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return pooled, (caches, arg, y.shape), stats


def _branch_bwd(layers, dpooled, cache, grads, name):
    caches, arg, shape = cache
    dy = _max_pool_bwd(dpooled, arg, shape, axis=2)
    _stack_bwd(layers, dy.reshape(-1, shape[-1]), caches, grads, name)


def forward(model: Model, batch: Batch, training: bool = False):
    """Logits (B, n_classes) plus everything backward needs."""
    cfg = model.config
    cache = {}
    stats = {}
    F_L = F_G = None
    if cfg.uses_local:
        F_L, cache["local"], stats["local_mlp"] = _branch_fwd(model.local_mlp, batch.local, training)
    if cfg.uses_global:
        F_G, cache["global"], stats["global_mlp"] = _branch_fwd(model.global_mlp, batch.edge, training)

    if cfg.fusion == "attention":
        b, n, c = F_G.shape
        cat = np.concatenate([F_G, F_L], axis=-1).reshape(b * n, 2 * c)
        att_logits, head_cache, stats["fusion"] = _stack_fwd(model.fusion, cat, training)
        w = _softmax2(att_logits).reshape(b, n, 2)
        F = w[..., :1] * F_G + w[..., 1:] * F_L
        cache["fusion_layers"] = head_cache
        cache["fusion"] = (w, F_G, F_L)
    elif cfg.fusion == "cat":
        b, n, c = F_G.shape
        cat = np.concatenate([F_G, F_L], axis=-1).reshape(b * n, 2 * c)
        F, head_cache, stats["fusion"] = _stack_fwd(model.fusion, cat, training)
        F = F.reshape(b, n, -1)
        cache["fusion_layers"] = head_cache
    elif cfg.fusion == "avg":
        F = 0.5 * (F_G + F_L)
    elif cfg.fusion == "global":
        F = F_G
    else:
        F = F_L

    arg = F.argmax(axis=1)
    pooled = np.take_along_axis(F, arg[:, None, :], axis=1)[:, 0, :]
    cache["pool"] = (arg, F.shape)
    logits, cache["classifier"], stats["classifier"] = _stack_fwd(model.classifier, pooled, training)
    cache["stats"] = stats
    return logits, cache


def _backward_from_logits(model: Model, dlogits: np.ndarray, cache) -> dict:
    cfg = model.config
    grads = {}
    dpooled = _stack_bwd(model.classifier, dlogits, cache["classifier"], grads, "classifier")
    arg, shape = cache["pool"]
    dF = _max_pool_bwd(dpooled, arg, shape, axis=1)

    dF_G = dF_L = None
    if cfg.fusion == "attention":
        w, F_G, F_L = cache["fusion"]
        b, n, c = F_G.shape
        dw_g = np.einsum("bnc,bnc->bn", dF, F_G)
        dw_l = np.einsum("bnc,bnc->bn", dF, F_L)
        mean = w[..., 0] * dw_g + w[..., 1] * dw_l
        dlog = np.stack([w[..., 0] * (dw_g - mean), w[..., 1] * (dw_l - mean)], axis=-1)
        dcat = _stack_bwd(model.fusion, dlog.reshape(b * n, 2), cache["fusion_layers"], grads, "fusion")
        dcat = dcat.reshape(b, n, 2 * c)
        dF_G = w[..., :1] * dF + dcat[..., :c]
        dF_L = w[..., 1:] * dF + dcat[..., c:]
    elif cfg.fusion == "cat":
        b, n, c = dF.shape
        dcat = _stack_bwd(model.fusion, dF.reshape(b * n, c), cache["fusion_layers"], grads, "fusion")
        dcat = dcat.reshape(b, n, -1)
        half = dcat.shape[-1] // 2
        dF_G, dF_L = dcat[..., :half], dcat[..., half:]
    elif cfg.fusion == "avg":
        dF_G = dF_L = 0.5 * dF
    elif cfg.fusion == "global":
        dF_G = dF
    else:
        dF_L = dF

    if cfg.uses_local:
        _branch_bwd(model.local_mlp, dF_L, cache["local"], grads, "local_mlp")
    if cfg.uses_global:
        _branch_bwd(model.global_mlp, dF_G, cache["global"], grads, "global_mlp")
    return grads


def loss_and_grads(model: Model, batch: Batch, training: bool = True):
    logits, cache = forward(model, batch, training)
    loss, dlogits = _batch_cross_entropy(logits, np.asarray(batch.labels))
    return loss, _backward_from_logits(model, dlogits, cache), cache


def backward(model: Model, batch: Batch, training: bool = True) -> dict:
    """Gradients of the mean cross-entropy for every trainable parameter.

    Running statistics are not touched; training mode only means the batch
    statistics are used (and differentiated through) in the normalizations.
    """
    return loss_and_grads(model, batch, training)[1]


def batch_loss(model: Model, batch: Batch, training: bool = True) -> float:
    logits, _ = forward(model, batch, training)
    return _batch_cross_entropy(logits, np.asarray(batch.labels))[0]


def commit_running_stats(model: Model, cache):
    for stack, per_layer in cache["stats"].items():
        for layer, stats in zip(getattr(model, stack), per_layer):
            _commit_stats(layer, stats)


def sgd_step(model: Model, grads: dict, lr: float) -> Model:
    """theta <- theta - lr * g, in place; returns the model."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    for name, param in model.parameters().items():
        g = grads.get(name)
        if g is not None:
            param -= lr * g
    return model


# ---------------------------------------------------------------------------
# gradient check


def _kink_units(model: Model, cache, tol: float) -> set:
    """Parameter-name prefixes of leaky units with a pre-activation within tol of 0."""
    flagged = set()

    def scan(layers, caches, name):
        for i, (layer, c) in enumerate(zip(layers, caches)):
            if layer.activation != "leaky_relu":
                continue
            pre = np.where(c.y > 0, c.y, c.y / LEAKY_SLOPE)
            near = np.abs(pre).min(axis=0) < tol
            for unit in np.flatnonzero(near):
                flagged.add((f"{name}.{i}.", int(unit)))

    if "local" in cache:
        scan(model.local_mlp, cache["local"][0], "local_mlp")
    if "global" in cache:
        scan(model.global_mlp, cache["global"][0], "global_mlp")
    if "fusion_layers" in cache:
        scan(model.fusion, cache["fusion_layers"], "fusion")
    scan(model.classifier, cache["classifier"], "classifier")
    return flagged


def _routing(cache) -> list:
    """Leaky-relu sign masks and max-pool argmaxes: the piecewise-linear pattern."""
    pattern = []

    def masks(caches):
        pattern.extend(c.y > 0 for c in caches)

    if "local" in cache:
        masks(cache["local"][0])
        pattern.append(cache["local"][1])
    if "global" in cache:
        masks(cache["global"][0])
        pattern.append(cache["global"][1])
    if "fusion_layers" in cache:
        masks(cache["fusion_layers"])
    pattern.append(cache["pool"][0])
    masks(cache["classifier"])
    return pattern


def _same_routing(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass
class GradCheck:
    max_rel_error: float
    checked: int
    excluded: int


def gradient_check(model: Model, batch: Batch, eps: float = 1e-5, n_samples: int = 200,
                   seed: int = 0, training: bool = True, kink_tol: float = 1e-6,
                   floor: float = 1e-5) -> GradCheck:
    """Compare backward() against central differences on sampled parameters.

    Parameters are drawn uniformly over all parameter entries.  A sample is
    skipped when it feeds a leaky unit whose pre-activation is within
    `kink_tol` of zero, or when the +-eps perturbation changes any leaky sign
    or max-pool argmax (the loss is only smooth inside one routing pattern).
    The relative error is |a - n| / max(|a|, |n|, floor); `floor` sits well
    above the 1e-11..1e-10 roundoff of a central difference at eps = 1e-5.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    labels = np.asarray(batch.labels)
    _, grads, cache = loss_and_grads(model, batch, training)
    kinks = _kink_units(model, cache, kink_tol)
    base = _routing(cache)
    params = model.parameters()
    names = list(params)
    offsets = np.concatenate([[0], np.cumsum([params[n].size for n in names])])
    order = np.random.default_rng(seed).permutation(int(offsets[-1]))

    def probe():
        logits, c = forward(model, batch, training)
        return _batch_cross_entropy(logits, labels)[0], _routing(c)

    worst = 0.0
    checked = excluded = 0
    for flat in order:
        if checked >= n_samples:
            break
        t = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[t]
        param = params[name]
        idx = np.unravel_index(int(flat - offsets[t]), param.shape)
        prefix = name.rsplit(".", 1)[0]
        if prefix.endswith(".bn"):
            prefix = prefix[:-3]
        if (prefix + ".", int(idx[0])) in kinks:
            excluded += 1
            continue
        original = param[idx]
        param[idx] = original + eps
        up, up_route = probe()
        param[idx] = original - eps
        down, down_route = probe()
        param[idx] = original
        if not (_same_routing(base, up_route) and _same_routing(base, down_route)):
            excluded += 1
            continue
        numeric = (up - down) / (2 * eps)
        analytic = grads[name][idx]
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor))
        checked += 1
    return GradCheck(worst, checked, excluded)


def finite_diff_check(model: Model, batch: Batch, eps: float = 1e-5, n_samples: int = 200,
                      seed: int = 0, **kwargs) -> float:
    """Max relative error of backward() against central differences (see gradient_check)."""
    result = gradient_check(model, batch, eps, n_samples, seed, **kwargs)
    if result.checked < n_samples:
        raise RuntimeError(f"only {result.checked} of {n_samples} sampled parameters were smooth")
    return result.max_rel_error


# ---------------------------------------------------------------------------
# features and training


def prepare_cloud(cloud: PointCloud) -> PointCloud:
    return center_and_normalize(cloud)


def extract_features(cloud: PointCloud, config: RunConfig):
    """(local, edge) input tensors for one cloud; either may be None if unused."""
    local = edge = None
    if config.uses_local:
        local = local_representation(cloud, config.k)
    if config.uses_global:
        if config.global_input == "projected":
            frame = canonical_frame(cloud, config.m, config.sampler, config.seed)
            coords = project(cloud, frame)
        else:
            coords = ProjectedCloud(cloud.points - cloud.points.mean(axis=0))
        edge = edge_features(coords, config.k)
    return local, edge


def make_batch(config: RunConfig, clouds, labels) -> Batch:
    feats = [extract_features(c, config) for c in clouds]
    local = np.stack([f[0] for f in feats]) if config.uses_local else None
    edge = np.stack([f[1] for f in feats]) if config.uses_global else None
    return Batch(local, edge, np.asarray(labels, dtype=np.intp))


def predict_logits(model: Model, clouds, chunk: int = 32) -> np.ndarray:
    """Inference-mode logits for a list of clouds."""
    out = []
    for start in range(0, len(clouds), chunk):
        part = clouds[start : start + chunk]
        batch = make_batch(model.config, part, np.zeros(len(part), dtype=np.intp))
        out.append(forward(model, batch, training=False)[0])
    return np.concatenate(out) if out else np.zeros((0, model.config.n_classes))


def classify_forward(model: Model, cloud: PointCloud) -> np.ndarray:
    """Raw class logits for a single cloud (inference mode)."""
    return predict_logits(model, [cloud])[0]


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_accuracy: float
    test_accuracy: float | None = None


def train(model: Model, clouds, labels, augment: str = "none", eval_set=None,
          config: RunConfig | None = None, lr: float | None = None):
    """Mini-batch SGD on mean cross-entropy.

    `augment` is "none", "z" or "so3": with rotation, every sample is re-rotated
    each epoch before feature extraction.  Shuffle order and rotations are drawn
    from a stream seeded by the config seed, so runs are bit-reproducible.
    With `train_dtype="float32"` the batch arithmetic runs in single precision;
    parameters, running statistics and evaluation stay float64.
    `lr` overrides the config step size; 0 is allowed and freezes the parameters
    (running statistics still update).
    Returns (model, list of EpochStats).
    """
    cfg = config or model.config
    lr = cfg.lr if lr is None else lr
    dtype = np.dtype(cfg.train_dtype)
    labels = np.asarray(labels, dtype=np.intp)
    if len(clouds) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7919]))
    cached = None
    if augment == "none":
        cached = [extract_features(c, model.config) for c in clouds]

    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(clouds))
        if cached is None:
            feats = [None] * len(clouds)
            for i in order:
                R = random_rotation(rng, augment)
                feats[i] = extract_features(apply_rotation(clouds[i], R), model.config)
        else:
            feats = cached
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), cfg.batch):
            idx = order[start : start + cfg.batch]
            batch = Batch(
                np.stack([feats[i][0] for i in idx]).astype(dtype) if model.config.uses_local else None,
                np.stack([feats[i][1] for i in idx]).astype(dtype) if model.config.uses_global else None,
                labels[idx],
            )
            logits, cache = forward(model, batch, training=True)
            loss, dlogits = _batch_cross_entropy(logits, batch.labels)
            grads = _backward_from_logits(model, dlogits, cache)
            commit_running_stats(model, cache)
            sgd_step(model, grads, lr)
            total_loss += loss * len(idx)
            correct += int(np.sum(logits.argmax(axis=1) == batch.labels))
        stats = EpochStats(epoch, total_loss / len(order), correct / len(order))
        if eval_set is not None:
            eval_clouds, eval_labels = eval_set
            pred = predict_logits(model, eval_clouds).argmax(axis=1)
            stats.test_accuracy = float(np.mean(pred == np.asarray(eval_labels)))
        history.append(stats)
    return model, history


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"RINVCKPT"
_VERSION = 1


def save_checkpoint(model: Model, path: str | Path):
    """Write config + tensors as a JSON header followed by raw little-endian float64."""
    tensors = {**model.parameters(), **model.buffers()}
    entries = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name]
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    layers = [{"prefix": p, "activation": l.activation, "bn": l.bn is not None,
               "momentum": l.bn.momentum if l.bn else None, "eps": l.bn.eps if l.bn else None}
              for p, l in model.layers()]
    header = json.dumps({"version": _VERSION, "config": model.config.to_dict(),
                         "layers": layers, "tensors": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(header)))
        fh.write(header)
        for name in sorted(tensors):
            fh.write(np.ascontiguousarray(tensors[name], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Model:
    raw = Path(path).read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", raw, len(_MAGIC))
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = len(_MAGIC) + 8
    header = json.loads(raw[start : start + hlen])
    body = memoryview(raw)[start + hlen :]

    model = build_model(RunConfig.from_dict(header["config"]))
    layer_meta = {entry["prefix"]: entry for entry in header["layers"]}
    for prefix, layer in model.layers():
        meta = layer_meta.get(prefix)
        if meta is None or meta["bn"] != (layer.bn is not None):
            raise CheckpointError(f"{path}: layer layout mismatch at {prefix}")
        layer.activation = meta["activation"]
        if layer.bn is not None:
            layer.bn.momentum = meta["momentum"]
            layer.bn.eps = meta["eps"]

    targets = {**model.parameters(), **model.buffers()}
    if sorted(targets) != sorted(e["name"] for e in header["tensors"]):
        raise CheckpointError(f"{path}: tensor set does not match the config")
    for entry in header["tensors"]:
        arr = targets[entry["name"]]
        if list(arr.shape) != entry["shape"]:
            raise CheckpointError(f"{path}: shape mismatch for {entry['name']}")
        n = arr.size
        data = np.frombuffer(body, dtype="<f8", count=n, offset=entry["offset"])
        arr[...] = data.reshape(arr.shape)
    return model
