"""Minimal deterministic neural engine.

Conv / ReLU / global-average-pool / linear layers with manual reverse-mode
gradients, stable cross-entropy, SGD and Adam, a step learning-rate schedule,
class activation maps, and a small binary checkpoint format.

All math runs in float64 numpy on a single thread of control, so a fixed seed
reproduces the whole parameter trajectory bit for bit. Checkpoints store
little-endian float32 payloads (see save_arrays).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ShapeMismatch
from .saliency import UnitMap, minmax_normalize_array


# ---------------------------------------------------------------------------
# convolution core


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """Unfold (B, C, H, W) into columns of shape (C*kh*kw, B*Ho*Wo)."""
    b, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, b * ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _conv_forward(x, weight, bias, stride, pad):
    cout, _, kh, kw = weight.shape
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    y = weight.reshape(cout, -1) @ cols
    if bias is not None:
        y += bias[:, None]
    y = y.reshape(cout, x.shape[0], ho, wo).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(y), cols


def _conv_backward_input(dy, weight, x_shape, stride, pad):
    # input gradient as the transposed convolution of dy: zero-stuff by the
    # stride (plus the remainder the forward floor-division dropped), then a
    # stride-1 conv with the flipped, channel-transposed kernel
    b, cin, h, w = x_shape
    cout, _, kh, kw = weight.shape
    ho, wo = dy.shape[2], dy.shape[3]
    extra_h = (h + 2 * pad - kh) - (ho - 1) * stride
    extra_w = (w + 2 * pad - kw) - (wo - 1) * stride
    sh = (ho - 1) * stride + 1
    sw = (wo - 1) * stride + 1
    stuffed = np.zeros((b, cout, sh + extra_h, sw + extra_w))
    stuffed[:, :, :sh:stride, :sw:stride] = dy
    wt = np.ascontiguousarray(weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx, _ = _conv_forward(stuffed, wt, None, 1, kh - 1 - pad)
    return dx


# ---------------------------------------------------------------------------
# layers


class Conv2d:
    """2-D convolution; caches im2col columns for the backward pass."""

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, pad=1, rng=None):
        fan_in = in_channels * kernel_size ** 2
        fan_out = out_channels * kernel_size ** 2
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        rng = np.random.default_rng() if rng is None else rng
        self.weight = rng.uniform(-limit, limit, (out_channels, in_channels, kernel_size, kernel_size))
        self.bias = np.zeros(out_channels)
        self.stride = stride
        self.pad = pad
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cols = None
        self._x_shape = None

    def forward(self, x):
        if x.shape[1] != self.weight.shape[1]:
            raise ShapeMismatch(
                f"conv expects {self.weight.shape[1]} input channels, got {x.shape[1]}"
            )
        y, self._cols = _conv_forward(x, self.weight, self.bias, self.stride, self.pad)
        self._x_shape = x.shape
        return y

    def backward(self, dy):
        cout = self.weight.shape[0]
        dy_mat = dy.transpose(1, 0, 2, 3).reshape(cout, -1)
        self.grad_weight = (dy_mat @ self._cols.T).reshape(self.weight.shape)
        self.grad_bias = dy_mat.sum(axis=1)
        return _conv_backward_input(dy, self.weight, self._x_shape, self.stride, self.pad)

    def parameters(self):
        return [self.weight, self.bias]

    def gradients(self):
        return [self.grad_weight, self.grad_bias]


class ReLU:
    def forward(self, x):
        self._mask = x > 0  # derivative at exactly 0 is defined as 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class GlobalAvgPool:
    """(B, C, H, W) -> (B, C) spatial mean."""

    def forward(self, x):
        self._hw = x.shape[2:]
        return x.mean(axis=(2, 3))

    def backward(self, dy):
        h, w = self._hw
        return np.broadcast_to(dy[:, :, None, None] / (h * w), dy.shape + (h, w)).copy()


class Linear:
    def __init__(self, in_features, out_features, rng=None):
        limit = np.sqrt(6.0 / (in_features + out_features))
        rng = np.random.default_rng() if rng is None else rng
        self.weight = rng.uniform(-limit, limit, (out_features, in_features))
        self.bias = np.zeros(out_features)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, dy):
        self.grad_weight = dy.T @ self._x
        self.grad_bias = dy.sum(axis=0)
        return dy @ self.weight

    def parameters(self):
        return [self.weight, self.bias]

    def gradients(self):
        return [self.grad_weight, self.grad_bias]


class Sigmoid:
    def forward(self, x):
        out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                       np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        self._out = out
        return out

    def backward(self, dy):
        return dy * self._out * (1.0 - self._out)


class ZeroStuff:
    """Insert (stride - 1) zeros between pixels plus trailing zeros.

    Composed with a stride-1 Conv2d this realizes a transposed convolution;
    the backward pass simply samples the stuffed grid.
    """

    def __init__(self, stride=2, extra=1):
        self.stride = stride
        self.extra = extra

    def forward(self, x):
        b, c, h, w = x.shape
        s = self.stride
        out = np.zeros((b, c, (h - 1) * s + 1 + self.extra, (w - 1) * s + 1 + self.extra))
        out[:, :, :(h - 1) * s + 1:s, :(w - 1) * s + 1:s] = x
        self._in_hw = (h, w)
        return out

    def backward(self, dy):
        h, w = self._in_hw
        s = self.stride
        return np.ascontiguousarray(dy[:, :, :(h - 1) * s + 1:s, :(w - 1) * s + 1:s])


class FitTo:
    """Crop or zero-pad the bottom/right edge so output matches target_hw."""

    def __init__(self):
        self.target_hw = None

    def forward(self, x):
        th, tw = self.target_hw
        self._in_hw = x.shape[2:]
        out = x[:, :, :th, :tw]
        ph, pw = th - out.shape[2], tw - out.shape[3]
        if ph or pw:
            out = np.pad(out, ((0, 0), (0, 0), (0, ph), (0, pw)))
        return out

    def backward(self, dy):
        h, w = self._in_hw
        dx = dy[:, :, :h, :w]
        ph, pw = h - dx.shape[2], w - dx.shape[3]
        if ph or pw:
            dx = np.pad(dx, ((0, 0), (0, 0), (0, ph), (0, pw)))
        return dx


# ---------------------------------------------------------------------------
# classifier


class CamClassifier:
    """Small CAM-compatible stack: 3x3 conv+ReLU blocks, GAP, linear head.

    The post-ReLU output of the final conv block is the feature-map tensor
    that class activation maps are built from; global average pooling feeds
    those same maps to the head, which is what makes the CAM well defined.

    feature_scale is a fixed (non-learned) gain between the pooled features
    and the head. Pooling averages a localized artifact signal over the whole
    grid, which leaves the class signal orders of magnitude below the head's
    step size when training from scratch; the gain restores a workable scale.
    Class activation maps are unaffected: min-max normalization absorbs any
    positive scaling.
    """

    def __init__(self, in_channels=1, conv_channels=(8, 16, 16), n_classes=2,
                 feature_scale=96.0, seed=0, rng=None):
        rng = np.random.default_rng(seed) if rng is None else rng
        self.in_channels = in_channels
        self.conv_channels = tuple(conv_channels)
        self.n_classes = n_classes
        self.feature_scale = feature_scale
        self.convs = []
        self.relus = []
        prev = in_channels
        for ch in self.conv_channels:
            self.convs.append(Conv2d(prev, ch, rng=rng))
            self.relus.append(ReLU())
            prev = ch
        self.pool = GlobalAvgPool()
        self.head = Linear(prev, n_classes, rng=rng)

    def forward_batch(self, images):
        """images (B, C, H, W) -> (logits (B, K), feature_maps (B, C', h, w))."""
        x = images
        for conv, relu in zip(self.convs, self.relus):
            x = relu.forward(conv.forward(x))
        logits = self.head.forward(self.pool.forward(x) * self.feature_scale)
        return logits, x

    def forward(self, image):
        """Single-image view of forward_batch: (C, H, W) -> ((K,), (C', h, w))."""
        if image.ndim != 3:
            raise ShapeMismatch(f"expected a (C, H, W) image, got shape {image.shape}")
        logits, feats = self.forward_batch(image[None])
        return logits[0], feats[0]

    def backward_batch(self, dlogits, dfeatures=None):
        """Reverse pass; returns gradients aligned with parameters().

        dlogits is the upstream gradient of the scalar loss at the logits;
        dfeatures, when given, is an extra upstream gradient injected at the
        final feature maps (the CAM path of the composite loss).
        """
        dx = self.pool.backward(self.head.backward(dlogits) * self.feature_scale)
        if dfeatures is not None:
            dx = dx + dfeatures
        for conv, relu in zip(reversed(self.convs), reversed(self.relus)):
            dx = conv.backward(relu.backward(dx))
        return self.gradients()

    def parameters(self):
        params = []
        for conv in self.convs:
            params.extend(conv.parameters())
        params.extend(self.head.parameters())
        return params

    def gradients(self):
        grads = []
        for conv in self.convs:
            grads.extend(conv.gradients())
        grads.extend(self.head.gradients())
        return grads

    def save(self, path):
        # trailing 0-d array records the fixed feature gain
        save_arrays(path, self.parameters() + [np.asarray(self.feature_scale)])

    @classmethod
    def load(cls, path):
        arrays = load_arrays(path)
        if len(arrays) < 5 or len(arrays) % 2 == 0 or arrays[-1].ndim != 0:
            raise CheckpointError("checkpoint does not hold (weight, bias) pairs plus a gain")
        feature_scale = float(arrays[-1])
        arrays = arrays[:-1]
        conv_weights = arrays[:-2:2]
        if any(w.ndim != 4 for w in conv_weights) or arrays[-2].ndim != 2:
            raise CheckpointError("checkpoint layer shapes do not match a classifier")
        model = cls(
            in_channels=conv_weights[0].shape[1],
            conv_channels=tuple(w.shape[0] for w in conv_weights),
            n_classes=arrays[-2].shape[0],
            feature_scale=feature_scale,
        )
        for param, loaded in zip(model.parameters(), arrays):
            if param.shape != loaded.shape:
                raise CheckpointError(f"shape {loaded.shape} does not match {param.shape}")
            param[...] = loaded
        return model


def raw_cam(model: CamClassifier, feature_maps: np.ndarray, class_index: int) -> np.ndarray:
    """Unnormalized class activation map: head-weighted sum of feature maps.

    feature_maps is the (channels, h, w) tensor returned by forward for one
    image. Linear in the head weights.
    """
    if not 0 <= class_index < model.n_classes:
        raise ShapeMismatch(f"class index {class_index} out of range ({model.n_classes} classes)")
    return np.tensordot(model.head.weight[class_index], feature_maps, axes=1)


def cam(model: CamClassifier, feature_maps: np.ndarray, class_index: int) -> UnitMap:
    """Class activation map, min-max scaled to [0, 1].

    A constant raw map normalizes to all zeros.
    """
    return UnitMap(minmax_normalize_array(raw_cam(model, feature_maps, class_index)))


# ---------------------------------------------------------------------------
# losses


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, label: int) -> float:
    """Stable -log softmax(logits)[label] for a single sample."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise ShapeMismatch(f"label {label} out of range for {logits.shape[-1]} classes")
    return float(-log_softmax(logits)[..., label])


# ---------------------------------------------------------------------------
# optimizers and schedule


def _check_param_grads(params, grads):
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"parameter shape {p.shape} vs gradient shape {g.shape}")


class SGD:
    """Plain gradient descent: p <- p - lr * g."""

    def __init__(self, learning_rate):
        if learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        self.learning_rate = learning_rate

    def step(self, params, grads):
        _check_param_grads(params, grads)
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


class Adam:
    """Adam with bias correction and the standard defaults."""

    def __init__(self, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._m = None
        self._v = None

    def step(self, params, grads):
        _check_param_grads(params, grads)
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


@dataclass(frozen=True)
class LrSchedule:
    """Step decay: initial_rate * decay_factor ** (epoch // step_epochs)."""

    initial_rate: float
    decay_factor: float = 0.1
    step_epochs: int = 12

    def __post_init__(self):
        if self.initial_rate <= 0:
            raise ValueError("initial rate must be positive")
        if not 0 < self.decay_factor < 1:
            raise ValueError("decay factor must lie in (0, 1)")
        if self.step_epochs < 1:
            raise ValueError("step_epochs must be at least 1")

    def rate(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError("epoch must be nonnegative")
        return self.initial_rate * self.decay_factor ** (epoch // self.step_epochs)


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"SFORGE1\n"


def save_arrays(path, arrays) -> None:
    """Versioned binary checkpoint: magic, array count, per-array shape,
    then each payload as little-endian float32."""
    parts = [_MAGIC, struct.pack("<I", len(arrays))]
    for a in arrays:
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_arrays(path) -> list[np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic")
    pos = len(_MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").astype(np.float64)
        arrays.append(data.reshape(shape))
    if pos != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after arrays")
    return arrays
