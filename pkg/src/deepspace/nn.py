"""A small 1-D CNN written directly in numpy.

Layer functions work on batches shaped ``[batch, channels, time]`` and come in
forward/backward pairs: the forward returns ``(out, cache)`` and the backward
maps the output gradient to gradients for the inputs and parameters.  A 2-D
``[channels, time]`` input is treated as a batch of one.

The network stack is conv -> PReLU -> max-pool -> LRN -> softmax classifier,
with the order of the middle three configurable.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import LabelOutOfRange, ShapeMismatch

PARAM_NAMES = ("conv_kernels", "conv_bias", "prelu_slopes", "softmax_w")
LAYERS = ("prelu", "pool", "norm")


def _batched(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None]
    if x.ndim != 3:
        raise ShapeMismatch(f"expected [C, T] or [B, C, T], got shape {x.shape}")
    return x


# --------------------------------------------------------------------------
# input encoding

def one_hot(labels, num_classes: int) -> np.ndarray:
    """One-hot channels over time: ``[num_classes, W]`` (or ``[B, num_classes, W]``)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {num_classes})")
    out = np.zeros(labels.shape[:-1] + (num_classes, labels.shape[-1]))
    np.put_along_axis(out, labels[..., None, :], 1.0, axis=-2)
    return out


# --------------------------------------------------------------------------
# layers

def conv1d(x, kernels, bias, stride: int = 1, padding: int = 0):
    """Valid cross-correlation along time: out[f,t] = bias[f] + sum_{c,d} k[f,c,d] x[c,t+d]."""
    x = _batched(x)
    n_filters, in_ch, width = kernels.shape
    B, C, T = x.shape
    if C != in_ch:
        raise ShapeMismatch(f"input has {C} channels, kernels expect {in_ch}")
    if bias.shape != (n_filters,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({n_filters},)")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    if x.shape[2] < width:
        raise ShapeMismatch(f"sequence length {x.shape[2]} shorter than kernel width {width}")
    win = sliding_window_view(x, width, axis=2)[:, :, ::stride, :]  # [B, C, T1, k]
    t_out = win.shape[2]
    cols = win.transpose(0, 2, 1, 3).reshape(B, t_out, C * width)
    kflat = kernels.reshape(n_filters, C * width)
    out = (cols @ kflat.T).transpose(0, 2, 1) + bias[None, :, None]
    return out, (x.shape, cols, kernels, stride, padding)


def conv1d_backward(dout, cache):
    padded_shape, cols, kernels, stride, padding = cache
    n_filters, C, width = kernels.shape
    B, t_out = cols.shape[0], cols.shape[1]
    d_t = dout.transpose(0, 2, 1)  # [B, T1, F]
    dk = np.tensordot(d_t, cols, axes=([0, 1], [0, 1])).reshape(kernels.shape)
    db = dout.sum(axis=(0, 2))
    dcols = (d_t @ kernels.reshape(n_filters, C * width)).reshape(B, t_out, C, width)
    dx = np.zeros(padded_shape)
    span = stride * (t_out - 1) + 1
    for d in range(width):
        dx[:, :, d:d + span:stride] += dcols[:, :, :, d].transpose(0, 2, 1)
    if padding:
        dx = dx[:, :, padding:-padding]
    return dx, dk, db


def prelu(x, slopes):
    x = _batched(x)
    if slopes.shape != (x.shape[1],):
        raise ShapeMismatch(f"{slopes.shape[0]} slopes for {x.shape[1]} channels")
    pos = x > 0
    out = np.where(pos, x, slopes[None, :, None] * x)
    return out, (x, pos, slopes)


def prelu_backward(dout, cache):
    x, pos, slopes = cache
    dx = np.where(pos, dout, slopes[None, :, None] * dout)
    da = np.where(pos, 0.0, dout * x).sum(axis=(0, 2))
    return dx, da


def maxpool1d(x, width: int = 2, stride: int = 2):
    x = _batched(x)
    if x.shape[2] < width:
        raise ShapeMismatch(f"sequence length {x.shape[2]} shorter than pool width {width}")
    win = sliding_window_view(x, width, axis=2)[:, :, ::stride, :]
    arg = win.argmax(axis=-1)  # first maximal index on ties
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg, width, stride)


def maxpool1d_backward(dout, cache):
    shape, arg, width, stride = cache
    dx = np.zeros(shape)
    t_out = arg.shape[2]
    span = stride * (t_out - 1) + 1
    for j in range(width):
        dx[:, :, j:j + span:stride] += np.where(arg == j, dout, 0.0)
    return dx


def _neighbour_matrix(C: int, n: int) -> np.ndarray:
    m = np.zeros((C, C))
    lo_off = (n - 1) // 2
    for c in range(C):
        lo, hi = max(0, c - lo_off), min(C, c - lo_off + n)
        m[c, lo:hi] = 1.0
    return m


def lrn(x, k: float = 1.0, n: int = 5, alpha: float = 1e-4, beta: float = 0.75):
    """Cross-channel local response normalisation."""
    x = _batched(x)
    m = _neighbour_matrix(x.shape[1], n)
    denom = k + alpha * np.einsum("cd,bdt->bct", m, x * x)
    scale = denom ** -beta
    return x * scale, (x, m, denom, scale, alpha, beta)


def lrn_backward(dout, cache):
    x, m, denom, scale, alpha, beta = cache
    inner = dout * x * scale / denom
    return dout * scale - 2.0 * alpha * beta * x * np.einsum("cd,bct->bdt", m, inner)


def _check_labels(labels, k):
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    return labels


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(features, w, labels):
    """Mean cross-entropy of a bias-free softmax classifier.

    Returns ``(loss, probs, dw, dfeatures)``; gradients are for the mean loss.
    """
    single = np.ndim(features) == 1
    h = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if w.shape[1] != h.shape[1]:
        raise ShapeMismatch(f"w expects {w.shape[1]} features, got {h.shape[1]}")
    y = _check_labels(labels, w.shape[0])
    if y.shape[0] != h.shape[0]:
        raise ShapeMismatch("one label per feature row required")
    logits = h @ w.T
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    probs = np.exp(z - lse[:, None])
    rows = np.arange(len(y))
    loss = float(np.mean(lse - z[rows, y]))
    dlogits = probs.copy()
    dlogits[rows, y] -= 1.0
    dlogits /= len(y)
    dw = dlogits.T @ h
    dh = dlogits @ w
    if single:
        return loss, probs[0], dw, dh[0]
    return loss, probs, dw, dh


# --------------------------------------------------------------------------
# model

@dataclass(frozen=True)
class ArchConfig:
    filters: int = 25
    kernel_width: int = 5
    pool_width: int = 2
    pool_stride: int = 2
    lrn_k: float = 1.0
    lrn_n: int = 5
    lrn_alpha: float = 1e-4
    lrn_beta: float = 0.75
    use_norm: bool = True
    layer_order: tuple = LAYERS
    conv_bias_init: float = 0.9
    prelu_init: float = 0.25

    def __post_init__(self):
        if sorted(self.layer_order) != sorted(LAYERS):
            raise ValueError(f"layer_order must be a permutation of {LAYERS}")
        object.__setattr__(self, "layer_order", tuple(self.layer_order))

    def feature_length(self, W: int) -> int:
        t = W - self.kernel_width + 1
        if t < 1:
            raise ShapeMismatch(f"window {W} shorter than kernel width {self.kernel_width}")
        if t < self.pool_width:
            raise ShapeMismatch(f"conv output length {t} shorter than pool width {self.pool_width}")
        return self.filters * ((t - self.pool_width) // self.pool_stride + 1)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    iterations: int = 10**9
    seed: int = 0
    W: int = 50
    epochs: int = 1
    arch: ArchConfig = field(default_factory=ArchConfig)

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        for name in ("batch_size", "iterations", "W", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class CnnModel:
    conv_kernels: np.ndarray
    conv_bias: np.ndarray
    prelu_slopes: np.ndarray
    softmax_w: np.ndarray
    arch: ArchConfig
    W: int

    @property
    def in_channels(self) -> int:
        return self.conv_kernels.shape[1]

    @property
    def n_classes(self) -> int:
        return self.softmax_w.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "CnnModel":
        return replace(self, **{k: v.copy() for k, v in self.params().items()})

    def same_params(self, other: "CnnModel") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.params().values(), other.params().values()))


def init_model(in_channels: int, classes: int, cfg: TrainConfig = TrainConfig(), seed=None) -> CnnModel:
    """Glorot-uniform weights, constant conv bias, constant PReLU slopes."""
    if in_channels < 1 or classes < 1:
        raise ValueError("in_channels and classes must be positive")
    arch = cfg.arch
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    width, filters = arch.kernel_width, arch.filters
    s_conv = np.sqrt(6.0 / (in_channels * width + filters * width))
    kernels = rng.uniform(-s_conv, s_conv, size=(filters, in_channels, width))
    n_feat = arch.feature_length(cfg.W)
    s_w = np.sqrt(6.0 / (n_feat + classes))
    w = rng.uniform(-s_w, s_w, size=(classes, n_feat))
    return CnnModel(
        conv_kernels=kernels,
        conv_bias=np.full(filters, arch.conv_bias_init),
        prelu_slopes=np.full(filters, arch.prelu_init),
        softmax_w=w,
        arch=arch,
        W=cfg.W,
    )


def _features(model: CnnModel, x: np.ndarray):
    arch = model.arch
    h, conv_cache = conv1d(x, model.conv_kernels, model.conv_bias)
    caches = []
    for layer in arch.layer_order:
        if layer == "prelu":
            h, c = prelu(h, model.prelu_slopes)
        elif layer == "pool":
            h, c = maxpool1d(h, arch.pool_width, arch.pool_stride)
        elif not arch.use_norm:
            c = None
        else:
            h, c = lrn(h, arch.lrn_k, arch.lrn_n, arch.lrn_alpha, arch.lrn_beta)
        caches.append((layer, c))
    return h, (conv_cache, caches, h.shape)


def forward(model: CnnModel, x):
    """Class probabilities for input ``[C, W]`` or ``[B, C, W]``, plus a cache."""
    single = np.ndim(x) == 2
    x = _batched(x)
    if x.shape[1] != model.in_channels or x.shape[2] != model.W:
        raise ShapeMismatch(f"input shape {x.shape[1:]} != ({model.in_channels}, {model.W})")
    h, cache = _features(model, x)
    flat = h.reshape(h.shape[0], -1)
    probs = softmax(flat @ model.softmax_w.T)
    return (probs[0] if single else probs), (cache, flat)


def loss_and_grads(model: CnnModel, x, labels):
    """Mean loss, per-parameter gradients and probabilities for a batch."""
    x = _batched(x)
    if x.shape[1] != model.in_channels or x.shape[2] != model.W:
        raise ShapeMismatch(f"input shape {x.shape[1:]} != ({model.in_channels}, {model.W})")
    h, (conv_cache, caches, hshape) = _features(model, x)
    flat = h.reshape(h.shape[0], -1)
    loss, probs, dw, dflat = softmax_cross_entropy(flat, model.softmax_w, labels)
    dh = dflat.reshape(hshape)
    da = np.zeros_like(model.prelu_slopes)
    for layer, c in reversed(caches):
        if c is None:
            continue
        if layer == "prelu":
            dh, da = prelu_backward(dh, c)
        elif layer == "pool":
            dh = maxpool1d_backward(dh, c)
        else:
            dh = lrn_backward(dh, c)
    _, dk, db = conv1d_backward(dh, conv_cache)
    grads = {"conv_kernels": dk, "conv_bias": db, "prelu_slopes": da, "softmax_w": dw}
    return loss, grads, probs


def loss_only(model: CnnModel, x, labels) -> float:
    y = _check_labels(labels, model.n_classes)
    h, _ = _features(model, _batched(x))
    logits = h.reshape(h.shape[0], -1) @ model.softmax_w.T
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(y)), y]))


def sgd_update(model: CnnModel, windows: np.ndarray, targets: np.ndarray, lr: float):
    """One SGD step on integer windows ``[B, W]``; returns (loss, n_correct)."""
    x = one_hot(windows, model.in_channels)
    loss, grads, probs = loss_and_grads(model, x, targets)
    correct = int(np.sum(probs.argmax(axis=1) == targets))
    if lr != 0:
        for name, g in grads.items():
            getattr(model, name)[...] -= lr * g
    return loss, correct


def train_step(model: CnnModel, batch: Sequence, cfg: TrainConfig):
    """Update ``model`` in place on a batch of samples; returns (model, mean loss)."""
    if not batch:
        raise ValueError("empty batch")
    windows = np.array([s.window for s in batch], dtype=np.int64)
    targets = np.array([s.target for s in batch], dtype=np.int64)
    loss, _ = sgd_update(model, windows, targets, cfg.learning_rate)
    return model, loss


def predict_proba(model: CnnModel, windows: np.ndarray, chunk: int = 512) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.int64)
    if len(windows) == 0:
        return np.zeros((0, model.n_classes))
    out = [forward(model, one_hot(windows[i:i + chunk], model.in_channels))[0]
           for i in range(0, len(windows), chunk)]
    return np.concatenate(out)


# --------------------------------------------------------------------------
# gradient checking

def rel_error(analytic, numeric) -> np.ndarray:
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def numeric_grad(f, x: np.ndarray, eps: float = 1e-5, indices=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in (range(flat.size) if indices is None else indices):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


def grad_check(model: CnnModel, sample, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x = one_hot(np.asarray(sample.window)[None], model.in_channels)
    y = np.array([sample.target])
    probe = model.copy()
    _, grads, _ = loss_and_grads(probe, x, y)
    worst = 0.0
    for name in PARAM_NAMES:
        num = numeric_grad(lambda: loss_only(probe, x, y), getattr(probe, name), epsilon)
        worst = max(worst, float(rel_error(grads[name], num).max()))
    return worst


def _away_from_zero(x: np.ndarray, gap: float = 1e-3) -> np.ndarray:
    return np.where(np.abs(x) < gap, np.sign(x + 1e-300) * gap + x, x)


def layer_grad_checks(seed: int, eps: float = 1e-5) -> dict[str, float]:
    """Finite-difference check of every layer and the full stack for one seed."""
    rng = np.random.default_rng(seed)
    out = {}

    def check(fwd, bwd, arrays):
        y, cache = fwd()
        g = rng.normal(size=y.shape)
        analytic = bwd(g, cache)
        worst = 0.0
        for arr, a in zip(arrays, analytic):
            num = numeric_grad(lambda: float(np.sum(fwd()[0] * g)), arr, eps)
            worst = max(worst, float(rel_error(a, num).max()))
        return worst

    x = rng.normal(size=(2, 3, 8))
    k = rng.normal(size=(4, 3, 3))
    b = rng.normal(size=4)
    out["conv1d"] = check(lambda: conv1d(x, k, b), conv1d_backward, [x, k, b])
    out["conv1d_strided"] = check(lambda: conv1d(x, k, b, stride=2, padding=1), conv1d_backward, [x, k, b])

    xp = _away_from_zero(rng.normal(size=(2, 4, 6)))
    a = rng.uniform(0.05, 0.5, size=4)
    out["prelu"] = check(lambda: prelu(xp, a), prelu_backward, [xp, a])

    xm = (rng.permutation(2 * 3 * 9).reshape(2, 3, 9) + rng.uniform(0, 0.5, size=(2, 3, 9))) * 0.1
    out["maxpool1d"] = check(lambda: maxpool1d(xm, 2, 2), lambda g, c: (maxpool1d_backward(g, c),), [xm])
    out["maxpool1d_overlap"] = check(lambda: maxpool1d(xm, 3, 1), lambda g, c: (maxpool1d_backward(g, c),), [xm])

    xl = rng.normal(size=(1, 6, 4))
    out["lrn"] = check(lambda: lrn(xl, 2.0, 5, 0.1, 0.75), lambda g, c: (lrn_backward(g, c),), [xl])

    feats = rng.normal(size=(3, 7))
    w = rng.normal(size=(4, 7))
    labels = rng.integers(0, 4, size=3)

    def sce():
        loss, probs, dw, dh = softmax_cross_entropy(feats, w, labels)
        return loss, (dw, dh)

    loss_f = lambda: sce()[0]
    _, (dw, dh) = sce()
    out["softmax_cross_entropy"] = max(
        float(rel_error(dw, numeric_grad(loss_f, w, eps)).max()),
        float(rel_error(dh, numeric_grad(loss_f, feats, eps)).max()),
    )

    from .encode import Sample

    cfg = TrainConfig(W=12, arch=ArchConfig(filters=25, kernel_width=3))
    model = init_model(5, 4, cfg, seed=seed)
    window = tuple(int(v) for v in rng.integers(0, 5, size=12))
    out["full_stack"] = grad_check(model, Sample(window, int(rng.integers(0, 4))), eps)
    return out
