"""MAC and storage accounting for float, pruned, and quantized models.

Capacity counts weight bits only (biases are excluded, matching how
model footprints are conventionally quoted); two figures are reported:

* dense-math capacity: retained weights times their bit width, the
  convention under which headline reduction percentages are computed;
* deployable capacity: dense-math plus a 1-bit-per-weight bitmap telling
  the decoder which positions survived pruning.

MAC cost uses a hardware scaling factor per multiply: 1.0 for float32
and bits/72 for a bits-wide fixed-point operand (1/9 at 8 bits, scaling
linearly with width).  Nonlinear layers compute on their dequantized
centroids, so their MAC width is the centroid width psi.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError
from .nn import Flatten, Unflatten

FLOAT_BITS = 32


def mac_factor(bits=None):
    """Relative hardware cost of one MAC at the given operand width."""
    if bits is None:
        return 1.0
    return bits / 8 / 9


@dataclass
class LayerCost:
    kind: str
    macs: int
    weight_count: int
    capacity_bits: int
    out_length: int | None


def layer_cost(spec, t_in=None):
    """MACs and float32 capacity of one layer.

    Dense layers: out_features output positions, in_features MACs each.
    Conv kinds: every output position costs in_channels * kernel MACs.
    """
    if spec.kind == "dense":
        macs = spec.out_channels * spec.in_channels
        weights = spec.out_channels * spec.in_channels
        t_out = None
    elif spec.kind == "conv1d":
        if t_in is None:
            raise ConfigurationError("conv1d cost needs the input length")
        t_out = (t_in + 2 * spec.padding - spec.kernel_size) // spec.stride + 1
        if t_out < 1:
            raise ConfigurationError("conv1d output collapsed")
        macs = spec.out_channels * t_out * spec.in_channels * spec.kernel_size
        weights = spec.out_channels * spec.in_channels * spec.kernel_size
    elif spec.kind == "conv1d_transposed":
        if t_in is None:
            raise ConfigurationError("conv1d_transposed cost needs the input length")
        t_out = ((t_in - 1) * spec.stride - 2 * spec.padding
                 + spec.kernel_size + spec.output_padding)
        macs = spec.in_channels * t_in * spec.out_channels * spec.kernel_size
        weights = spec.in_channels * spec.out_channels * spec.kernel_size
    else:
        raise ConfigurationError(f"unknown layer kind {spec.kind!r}")
    return LayerCost(spec.kind, int(macs), int(weights),
                     int(weights) * FLOAT_BITS, t_out)


def model_layer_costs(model):
    """LayerCost per parameterized layer, tracking the time-axis chain."""
    shape = model.input_shape
    costs = []
    for layer in model.layers:
        if isinstance(layer, Flatten):
            shape = (shape[0] * shape[1],)
            continue
        if isinstance(layer, Unflatten):
            shape = (layer.channels, layer.length)
            continue
        spec = layer.spec
        t_in = shape[1] if len(shape) == 2 else None
        cost = layer_cost(spec, t_in)
        costs.append(cost)
        shape = ((spec.out_channels, cost.out_length)
                 if spec.kind != "dense" else (spec.out_channels,))
    return costs


@dataclass
class CompressionReport:
    baseline_capacity_bits: int
    capacity_bits: float
    deployable_capacity_bits: float
    baseline_macs: int
    mac_cost: float
    per_layer: list

    @property
    def capacity_ratio(self):
        return self.capacity_bits / self.baseline_capacity_bits

    @property
    def mac_ratio(self):
        return self.mac_cost / self.baseline_macs

    @property
    def reduction_percent(self):
        return 100.0 * (1.0 - self.capacity_ratio)

    def as_dict(self):
        return {
            "baseline_capacity_bits": self.baseline_capacity_bits,
            "capacity_bits": self.capacity_bits,
            "deployable_capacity_bits": self.deployable_capacity_bits,
            "baseline_macs": self.baseline_macs,
            "mac_cost": self.mac_cost,
            "capacity_ratio": self.capacity_ratio,
            "mac_ratio": self.mac_ratio,
            "reduction_percent": self.reduction_percent,
            "per_layer": self.per_layer,
        }


def compression_report(model, mask_set=None, qmodel=None):
    """Cost report for a model under optional pruning and quantization.

    Ratios multiply across the two stages: the density factor from the
    mask and the bit-width factor from the quantization scheme.
    """
    costs = model_layer_costs(model)
    densities = (mask_set.achieved_densities() if mask_set is not None
                 else [1.0] * len(costs))
    if len(densities) != len(costs):
        raise ConfigurationError("mask set does not match model layers")

    per_layer = []
    capacity = 0.0
    deployable = 0.0
    mac_cost = 0.0
    for i, (cost, density) in enumerate(zip(costs, densities)):
        retained = density * cost.weight_count
        overhead = 0.0
        if qmodel is None:
            bits, width = FLOAT_BITS, None
        else:
            payload = qmodel.layers[i]
            if payload.scheme == "linear":
                bits = payload.weight_params.total_bits
                width = bits
            else:
                cb = payload.codebook
                bits = cb.index_bits
                width = cb.psi
                overhead = len(cb.centroids) * cb.psi
        layer_capacity = retained * bits + overhead
        layer_deployable = layer_capacity + (cost.weight_count if mask_set is not None else 0)
        layer_mac = cost.macs * density * mac_factor(width)
        capacity += layer_capacity
        deployable += layer_deployable
        mac_cost += layer_mac
        per_layer.append({
            "layer": i, "kind": cost.kind, "weights": cost.weight_count,
            "density": density, "bits_per_weight": bits,
            "codebook_bits": overhead, "capacity_bits": layer_capacity,
            "macs": cost.macs, "mac_cost": layer_mac,
        })

    return CompressionReport(
        baseline_capacity_bits=sum(c.capacity_bits for c in costs),
        capacity_bits=capacity,
        deployable_capacity_bits=deployable,
        baseline_macs=sum(c.macs for c in costs),
        mac_cost=mac_cost,
        per_layer=per_layer,
    )


def format_report(report, label=""):
    """Human-readable table for stdout."""
    lines = []
    if label:
        lines.append(f"== {label} ==")
    lines.append(f"{'layer':>5} {'kind':>18} {'weights':>8} {'density':>8} "
                 f"{'bits':>5} {'capacity':>12} {'mac cost':>12}")
    for row in report.per_layer:
        lines.append(
            f"{row['layer']:>5} {row['kind']:>18} {row['weights']:>8} "
            f"{row['density']:>8.4f} {row['bits_per_weight']:>5} "
            f"{row['capacity_bits']:>12.1f} {row['mac_cost']:>12.1f}"
        )
    lines.append(
        f"capacity: {report.capacity_bits:.1f} / {report.baseline_capacity_bits} bits "
        f"(ratio {report.capacity_ratio:.6f}, reduction {report.reduction_percent:.3f}%)"
    )
    lines.append(
        f"deployable capacity (with pruning bitmap): {report.deployable_capacity_bits:.1f} bits"
    )
    lines.append(
        f"mac cost: {report.mac_cost:.1f} / {report.baseline_macs} "
        f"(ratio {report.mac_ratio:.6f})"
    )
    return "\n".join(lines)
