"""Minimal numerical core: dense / 1-D convolutional layers and optimizers.

Everything operates on plain numpy arrays in float32 (the reference
precision all compression ratios are measured against).  Layers cache
their forward inputs when ``train=True`` so that ``backward`` can produce
parameter gradients without an autograd graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, TrainingError

DTYPE = np.float32

LAYER_KINDS = ("dense", "conv1d", "conv1d_transposed")
ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class LayerSpec:
    """Declarative description of one layer.

    Dense layers reuse ``in_channels``/``out_channels`` as feature counts
    and ignore the kernel fields.  ``output_padding`` is only meaningful
    for ``conv1d_transposed`` and is normally derived by the mirror
    construction, not user supplied.
    """

    kind: str
    in_channels: int
    out_channels: int
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    activation: str = "relu"
    output_padding: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError("channel counts must be positive")
        if self.kind != "dense":
            if self.kernel_size < 1:
                raise ConfigurationError(f"{self.kind} requires kernel_size >= 1")
            if self.stride < 1:
                raise ConfigurationError(f"{self.kind} requires stride >= 1")
            if self.padding < 0:
                raise ConfigurationError("padding must be non-negative")


def _apply_activation(z, activation):
    if activation == "relu":
        return np.maximum(z, 0)
    if activation == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z, activation):
    if activation == "relu":
        return (z > 0).astype(z.dtype)
    if activation == "tanh":
        t = np.tanh(z)
        return 1 - t * t
    return np.ones_like(z)


def glorot_init(shape, fan_in, fan_out, rng, dtype=DTYPE):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base class; subclasses fill in weight/bias and the linear pass."""

    spec: LayerSpec
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __init__(self, spec):
        self.spec = spec
        self.grad_weight = None
        self.grad_bias = None
        self._cache = None

    @property
    def has_params(self):
        return self.weight is not None

    def forward(self, x, train=False):
        z = self._linear(x)
        if train:
            self._cache = (x, z)
        return _apply_activation(z, self.spec.activation)

    def backward(self, dy):
        if self._cache is None:
            raise TrainingError("backward called without a recorded forward pass")
        x, z = self._cache
        dz = dy * _activation_grad(z, self.spec.activation)
        return self._linear_backward(x, dz)

    def _linear(self, x):
        raise NotImplementedError

    def _linear_backward(self, x, dz):
        raise NotImplementedError

    def out_length(self, t_in):
        """Output time length for conv kinds; dense layers have no time axis."""
        return t_in


class Dense(Layer):
    """y = x @ W.T + b over [batch, in_features]."""

    def __init__(self, spec, rng):
        super().__init__(spec)
        n_in, n_out = spec.in_channels, spec.out_channels
        self.weight = glorot_init((n_out, n_in), n_in, n_out, rng)
        self.bias = np.zeros(n_out, dtype=DTYPE)

    def _linear(self, x):
        if x.ndim != 2 or x.shape[1] != self.spec.in_channels:
            raise ConfigurationError(
                f"dense layer expects [batch, {self.spec.in_channels}], got {x.shape}"
            )
        return x @ self.weight.T + self.bias

    def _linear_backward(self, x, dz):
        self.grad_weight = dz.T @ x
        self.grad_bias = dz.sum(axis=0)
        return dz @ self.weight


def conv1d_out_length(t_in, kernel_size, stride, padding):
    t_out = (t_in + 2 * padding - kernel_size) // stride + 1
    if t_out < 1:
        raise ConfigurationError(
            f"conv1d output collapsed: T={t_in}, K={kernel_size}, "
            f"stride={stride}, padding={padding}"
        )
    return t_out


def _im2col(xp, kernel_size, stride, t_out):
    # xp: [B, C, Tp] -> cols [B, C, K, T_out]
    b, c, _ = xp.shape
    cols = np.empty((b, c, kernel_size, t_out), dtype=xp.dtype)
    for k in range(kernel_size):
        cols[:, :, k, :] = xp[:, :, k : k + stride * t_out : stride]
    return cols


def _col2im(dcols, tp, stride):
    # dcols: [B, C, K, T_out] -> [B, C, Tp], overlapping windows summed
    b, c, kernel_size, t_out = dcols.shape
    dxp = np.zeros((b, c, tp), dtype=dcols.dtype)
    for k in range(kernel_size):
        dxp[:, :, k : k + stride * t_out : stride] += dcols[:, :, k, :]
    return dxp


class Conv1d(Layer):
    """Cross-correlation over the time axis of [batch, channels, T] input."""

    def __init__(self, spec, rng):
        super().__init__(spec)
        c_in, c_out, k = spec.in_channels, spec.out_channels, spec.kernel_size
        self.weight = glorot_init((c_out, c_in, k), c_in * k, c_out * k, rng)
        self.bias = np.zeros(c_out, dtype=DTYPE)

    def out_length(self, t_in):
        s = self.spec
        return conv1d_out_length(t_in, s.kernel_size, s.stride, s.padding)

    def _linear(self, x):
        s = self.spec
        if x.ndim != 3 or x.shape[1] != s.in_channels:
            raise ConfigurationError(
                f"conv1d expects [batch, {s.in_channels}, T], got {x.shape}"
            )
        t_out = self.out_length(x.shape[2])
        xp = np.pad(x, ((0, 0), (0, 0), (s.padding, s.padding)))
        cols = _im2col(xp, s.kernel_size, s.stride, t_out)
        y = np.einsum("bckt,ock->bot", cols, self.weight)
        return y + self.bias[None, :, None]

    def _linear_backward(self, x, dz):
        s = self.spec
        t_out = dz.shape[2]
        xp = np.pad(x, ((0, 0), (0, 0), (s.padding, s.padding)))
        cols = _im2col(xp, s.kernel_size, s.stride, t_out)
        self.grad_weight = np.einsum("bot,bckt->ock", dz, cols)
        self.grad_bias = dz.sum(axis=(0, 2))
        dcols = np.einsum("bot,ock->bckt", dz, self.weight)
        dxp = _col2im(dcols, xp.shape[2], s.stride)
        if s.padding:
            return dxp[:, :, s.padding : dxp.shape[2] - s.padding]
        return dxp


class Conv1dTransposed(Layer):
    """Forward pass is the input-gradient of the matching forward conv.

    Weight layout is [in_channels, out_channels, K]; output length is
    (T-1)*stride - 2*padding + K + output_padding.
    """

    def __init__(self, spec, rng):
        super().__init__(spec)
        c_in, c_out, k = spec.in_channels, spec.out_channels, spec.kernel_size
        self.weight = glorot_init((c_in, c_out, k), c_in * k, c_out * k, rng)
        self.bias = np.zeros(c_out, dtype=DTYPE)
        if spec.output_padding < 0 or spec.output_padding >= max(spec.stride, 1):
            raise ConfigurationError("output_padding must lie in [0, stride)")

    def out_length(self, t_in):
        s = self.spec
        t_out = (t_in - 1) * s.stride - 2 * s.padding + s.kernel_size + s.output_padding
        if t_out < 1:
            raise ConfigurationError(f"conv1d_transposed output collapsed: T={t_in}")
        return t_out

    def _linear(self, x):
        s = self.spec
        if x.ndim != 3 or x.shape[1] != s.in_channels:
            raise ConfigurationError(
                f"conv1d_transposed expects [batch, {s.in_channels}, T], got {x.shape}"
            )
        t_in = x.shape[2]
        t_out = self.out_length(t_in)
        full = (t_in - 1) * s.stride + s.kernel_size
        contrib = np.einsum("bit,iok->bokt", x, self.weight)
        tmp = np.zeros((x.shape[0], s.out_channels, full + s.output_padding), dtype=x.dtype)
        for k in range(s.kernel_size):
            tmp[:, :, k : k + s.stride * t_in : s.stride] += contrib[:, :, k, :]
        y = tmp[:, :, s.padding : s.padding + t_out]
        return y + self.bias[None, :, None]

    def _linear_backward(self, x, dz):
        s = self.spec
        t_in = x.shape[2]
        full = (t_in - 1) * s.stride + s.kernel_size
        # scatter dz back onto the un-cropped grid, then gather with im2col
        dtmp = np.zeros((x.shape[0], s.out_channels, full + s.output_padding), dtype=dz.dtype)
        dtmp[:, :, s.padding : s.padding + dz.shape[2]] = dz
        dtmp = dtmp[:, :, :full]
        cols = _im2col(dtmp, s.kernel_size, s.stride, t_in)
        self.grad_weight = np.einsum("bit,bokt->iok", x, cols)
        self.grad_bias = dz.sum(axis=(0, 2))
        return np.einsum("bokt,iok->bit", cols, self.weight)


class Flatten(Layer):
    """Parameterless [B, C, T] -> [B, C*T] bridge between conv and dense."""

    def __init__(self, channels, length):
        super().__init__(LayerSpec("dense", channels * length, channels * length,
                                   activation="identity"))
        self.channels = channels
        self.length = length

    def forward(self, x, train=False):
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(dy.shape[0], self.channels, self.length)


class Unflatten(Layer):
    """Inverse of Flatten: [B, C*T] -> [B, C, T]."""

    def __init__(self, channels, length):
        super().__init__(LayerSpec("dense", channels * length, channels * length,
                                   activation="identity"))
        self.channels = channels
        self.length = length

    def forward(self, x, train=False):
        return x.reshape(x.shape[0], self.channels, self.length)

    def backward(self, dy):
        return dy.reshape(dy.shape[0], -1)


def make_layer(spec, rng):
    if spec.kind == "dense":
        return Dense(spec, rng)
    if spec.kind == "conv1d":
        return Conv1d(spec, rng)
    return Conv1dTransposed(spec, rng)


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")


class Optimizer:
    """Adam (with bias correction) or plain SGD over (layer, attr) slots."""

    def __init__(self, params, config=None):
        # params: list of (name, layer, attr) triples; updates happen in place
        self.config = config or OptimizerConfig()
        self.params = list(params)
        self.t = 0
        if self.config.kind == "adam":
            self.m = [np.zeros_like(getattr(l, a)) for _, l, a in self.params]
            self.v = [np.zeros_like(getattr(l, a)) for _, l, a in self.params]

    def step(self):
        cfg = self.config
        self.t += 1
        for i, (name, layer, attr) in enumerate(self.params):
            grad = getattr(layer, "grad_" + attr)
            if grad is None:
                raise TrainingError(f"no gradient recorded for {name}")
            if not np.all(np.isfinite(grad)):
                raise TrainingError(f"non-finite gradient in {name}")
            value = getattr(layer, attr)
            if cfg.kind == "sgd":
                value -= (cfg.learning_rate * grad).astype(value.dtype)
                continue
            self.m[i] = cfg.beta1 * self.m[i] + (1 - cfg.beta1) * grad
            self.v[i] = cfg.beta2 * self.v[i] + (1 - cfg.beta2) * grad * grad
            m_hat = self.m[i] / (1 - cfg.beta1**self.t)
            v_hat = self.v[i] / (1 - cfg.beta2**self.t)
            value -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(value.dtype)
            assert np.all(np.isfinite(value)), f"non-finite parameter {name}"
