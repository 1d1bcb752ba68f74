"""Symmetric encoder/decoder stacks, reconstruction loss, training loop.

The decoder is always generated as the structural mirror of the encoder:
conv1d becomes conv1d_transposed (with output_padding chosen so the time
axis is restored exactly), dense dimensions are reversed, and an implicit
flatten/unflatten pair bridges conv and dense stages.  The final decoder
layer uses the identity activation so reconstructions are unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, TrainingError
from .nn import (
    DTYPE,
    Flatten,
    LayerSpec,
    Optimizer,
    OptimizerConfig,
    Unflatten,
    conv1d_out_length,
    make_layer,
)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    batches_per_epoch: int | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        if self.batches_per_epoch is not None and self.batches_per_epoch < 1:
            raise ConfigurationError("batches_per_epoch must be positive")


def mirror_specs(encoder_specs, input_shape):
    """Derive decoder LayerSpecs (reversed) plus the encoder shape chain.

    Returns (decoder_specs, shapes) where shapes[i] is the input shape of
    encoder layer i, as either (channels, length) or (features,).
    """
    channels, length = input_shape
    shape = (channels, length)
    shapes = []
    for i, spec in enumerate(encoder_specs):
        shapes.append(shape)
        if spec.kind == "conv1d":
            if len(shape) != 2:
                raise ConfigurationError(
                    f"encoder layer {i}: conv1d after dense is not supported"
                )
            if spec.in_channels != shape[0]:
                raise ConfigurationError(
                    f"encoder layer {i}: expects {spec.in_channels} channels, "
                    f"chain provides {shape[0]}"
                )
            t_out = conv1d_out_length(shape[1], spec.kernel_size, spec.stride, spec.padding)
            shape = (spec.out_channels, t_out)
        elif spec.kind == "dense":
            n_in = shape[0] * shape[1] if len(shape) == 2 else shape[0]
            if spec.in_channels != n_in:
                raise ConfigurationError(
                    f"encoder layer {i}: dense expects {spec.in_channels} features, "
                    f"chain provides {n_in}"
                )
            shape = (spec.out_channels,)
        else:
            raise ConfigurationError(
                f"encoder layer {i}: {spec.kind} is decoder-only"
            )

    decoder = []
    for i in range(len(encoder_specs) - 1, -1, -1):
        spec = encoder_specs[i]
        activation = "identity" if i == 0 else spec.activation
        if spec.kind == "dense":
            decoder.append(LayerSpec("dense", spec.out_channels, spec.in_channels,
                                     activation=activation))
        else:
            t_in = shapes[i][1]
            t_out = conv1d_out_length(t_in, spec.kernel_size, spec.stride, spec.padding)
            opad = t_in - ((t_out - 1) * spec.stride - 2 * spec.padding + spec.kernel_size)
            decoder.append(LayerSpec(
                "conv1d_transposed", spec.out_channels, spec.in_channels,
                kernel_size=spec.kernel_size, stride=spec.stride,
                padding=spec.padding, activation=activation, output_padding=opad,
            ))
    return decoder, shapes


class Autoencoder:
    """Mirror-symmetric autoencoder over [batch, channels, window] input."""

    def __init__(self, encoder_specs, input_shape, seed=0):
        self.encoder_specs = list(encoder_specs)
        self.input_shape = tuple(int(v) for v in input_shape)
        self.seed = int(seed)
        decoder_specs, shapes = mirror_specs(self.encoder_specs, self.input_shape)
        self.decoder_specs = decoder_specs

        rng = np.random.default_rng(seed)
        self.layers = []
        shape = self.input_shape
        for i, spec in enumerate(self.encoder_specs):
            if spec.kind == "dense" and len(shape) == 2:
                self.layers.append(Flatten(*shape))
                shape = (shape[0] * shape[1],)
            self.layers.append(make_layer(spec, rng))
            shape = ((spec.out_channels, self.layers[-1].out_length(shape[1]))
                     if spec.kind == "conv1d" else (spec.out_channels,))
        self.latent_dim = shape[0] * (shape[1] if len(shape) == 2 else 1)
        self._encoder_end = len(self.layers)

        for j, spec in enumerate(decoder_specs):
            enc_index = len(self.encoder_specs) - 1 - j
            enc_input = shapes[enc_index]
            self.layers.append(make_layer(spec, rng))
            if spec.kind == "dense" and len(enc_input) == 2:
                self.layers.append(Unflatten(*enc_input))

    @property
    def param_layers(self):
        """Layers carrying weights, in encoder-to-decoder order."""
        return [l for l in self.layers if l.has_params]

    def parameters(self):
        """(name, layer, attr) triples for the optimizer, weights then biases."""
        out = []
        for i, layer in enumerate(self.param_layers):
            out.append((f"layer{i}.weight", layer, "weight"))
            out.append((f"layer{i}.bias", layer, "bias"))
        return out

    def forward(self, x, train=False, act_quant=None):
        """Full encode/decode pass.

        ``act_quant`` optionally supplies one activation quantizer per
        parameterized layer, applied to each layer's output (used when
        evaluating quantized models; never during training).
        """
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            raise ConfigurationError(
                f"input shape {x.shape[1:]} does not match model {self.input_shape}"
            )
        h = x
        qi = 0
        for i, layer in enumerate(self.layers):
            try:
                h = layer.forward(h, train=train)
            except ConfigurationError as exc:
                raise ConfigurationError(f"layer {i}: {exc}") from None
            if act_quant is not None and layer.has_params:
                h = act_quant[qi](h)
                qi += 1
        return h

    reconstruct = forward

    def encode(self, x):
        h = np.asarray(x)
        for layer in self.layers[: self._encoder_end]:
            h = layer.forward(h)
        return h

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def clone(self):
        """Deep copy with independent parameter arrays."""
        other = Autoencoder(self.encoder_specs, self.input_shape, self.seed)
        for mine, theirs in zip(self.param_layers, other.param_layers):
            theirs.weight = mine.weight.copy()
            theirs.bias = mine.bias.copy()
        return other


def build_autoencoder(encoder_specs, input_shape, seed=0):
    return Autoencoder(encoder_specs, input_shape, seed)


def reconstruction_loss(x, x_hat):
    """Per-window L2 reconstruction error, averaged over the batch axis."""
    x = np.asarray(x)
    x_hat = np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ConfigurationError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    diff = (x_hat - x).reshape(x.shape[0], -1)
    return float(np.sqrt((diff * diff).sum(axis=1)).mean())


def _loss_and_grad(x, x_hat):
    diff = (x_hat - x).astype(DTYPE)
    flat = diff.reshape(x.shape[0], -1)
    norms = np.sqrt((flat * flat).sum(axis=1))
    loss = float(norms.mean())
    safe = np.where(norms > 0, norms, 1).astype(DTYPE)
    grad = diff / safe.reshape((-1,) + (1,) * (x.ndim - 1)) / DTYPE(x.shape[0])
    grad[norms == 0] = 0
    return loss, grad


def train(model, windows, cfg, mask_set=None, optimizer=None):
    """Standard training loop; optionally re-applies a pruning mask per batch.

    Mini-batches are contiguous slices of a fresh shuffle each epoch, all
    driven by ``cfg.seed``.  Masked weights are zeroed after every
    optimizer step, so they may accumulate momentum but never influence a
    forward pass.  Returns the per-epoch mean loss history.
    """
    from .pruning import apply_mask  # local import to avoid a cycle

    windows = np.asarray(windows, dtype=DTYPE)
    if windows.shape[1:] != model.input_shape:
        raise ConfigurationError(
            f"training windows {windows.shape[1:]} do not match model {model.input_shape}"
        )
    opt = optimizer or Optimizer(model.parameters(), cfg.optimizer)
    rng = np.random.default_rng(cfg.seed)
    n = windows.shape[0]
    if n == 0 and cfg.epochs > 0:
        raise ConfigurationError("cannot train on an empty window set")
    history = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        limit = len(perm) if cfg.batches_per_epoch is None else (
            cfg.batches_per_epoch * cfg.batch_size)
        losses = []
        for start in range(0, min(n, limit), cfg.batch_size):
            batch = windows[perm[start : start + cfg.batch_size]]
            x_hat = model.forward(batch, train=True)
            loss, grad = _loss_and_grad(batch, x_hat)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {len(history)}")
            model.backward(grad)
            opt.step()
            if mask_set is not None:
                apply_mask(model, mask_set)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return history
