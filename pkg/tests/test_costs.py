import numpy as np
import pytest

from aecompress import (
    LayerSpec,
    MaskSet,
    build_autoencoder,
    build_mask_set,
    compression_report,
    layer_cost,
    quantize_model_linear,
    quantize_model_nonlinear,
)
from aecompress.costs import mac_factor, model_layer_costs
from conftest import conv_encoder


class TestLayerCost:
    def test_dense_formula(self):
        cost = layer_cost(LayerSpec("dense", 8, 4))
        assert cost.macs == 32
        assert cost.capacity_bits == 32 * 32

    def test_unit_kernel_conv(self):
        cost = layer_cost(LayerSpec("conv1d", 1, 1, kernel_size=1), t_in=10)
        assert cost.macs == 10

    def test_doubling_out_channels_doubles_cost(self):
        a = layer_cost(LayerSpec("conv1d", 3, 4, kernel_size=3, padding=1), t_in=10)
        b = layer_cost(LayerSpec("conv1d", 3, 8, kernel_size=3, padding=1), t_in=10)
        assert b.macs == 2 * a.macs
        assert b.capacity_bits == 2 * a.capacity_bits

    def test_conv_shape_chain(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=0)
        costs = model_layer_costs(model)
        assert len(costs) == 6
        # encoder lengths 12 -> 12 -> 6 -> 3, decoder mirrors back up
        assert [c.out_length for c in costs] == [12, 6, 3, 6, 12, 12]


class TestMacFactor:
    def test_reference_points(self):
        assert mac_factor(None) == 1.0
        assert mac_factor(8) == pytest.approx(1 / 9)
        assert mac_factor(4) == pytest.approx(0.5 / 9)
        assert mac_factor(16) == pytest.approx(2 / 9)


class TestCompressionReport:
    def _uniform_mask(self, model, density):
        masks = []
        for layer in model.param_layers:
            size = layer.weight.size
            keep = int(round(density * size))
            mask = np.zeros(size, dtype=np.float32)
            mask[:keep] = 1.0
            masks.append(mask.reshape(layer.weight.shape))
        return MaskSet(masks, [density] * len(masks))

    def test_unmodified_model_no_reduction(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=0)
        report = compression_report(model)
        assert report.capacity_ratio == 1.0
        assert report.mac_ratio == 1.0
        assert report.reduction_percent == 0.0

    def test_eighty_percent_headline(self):
        # density 0.8 + 8-bit: ratio 0.8 * 8/32 = 0.20 exactly
        # (layer sizes chosen so 0.8 * size is integral)
        model = build_autoencoder([LayerSpec("dense", 20, 10)], (4, 5), seed=0)
        mask_set = self._uniform_mask(model, 0.8)
        qm = quantize_model_linear(model, 8)
        report = compression_report(model, mask_set, qm)
        assert report.capacity_ratio == pytest.approx(0.8 * 8 / 32, abs=1e-12)
        assert report.reduction_percent == pytest.approx(80.0, abs=1e-9)

    def test_ninety_seven_percent_case(self):
        # density 0.25 + 4-bit: ratio 0.25 * 4/32 = 0.03125 -> 96.875%
        model = build_autoencoder([LayerSpec("dense", 20, 10)], (4, 5), seed=0)
        mask_set = self._uniform_mask(model, 0.25)
        qm = quantize_model_linear(model, 4)
        report = compression_report(model, mask_set, qm)
        assert report.capacity_ratio == pytest.approx(0.03125, abs=1e-12)
        assert report.reduction_percent == pytest.approx(96.875, abs=1e-9)

    def test_stage_factors_multiply(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=0)
        mask_set = self._uniform_mask(model, 0.5)
        qm = quantize_model_linear(model, 16)
        prune_only = compression_report(model, mask_set, None)
        quant_only = compression_report(model, None, qm)
        both = compression_report(model, mask_set, qm)
        assert both.capacity_ratio == pytest.approx(
            prune_only.capacity_ratio * quant_only.capacity_ratio)
        assert both.mac_ratio == pytest.approx(
            prune_only.mac_ratio * quant_only.mac_ratio)

    def test_deployable_adds_bitmap(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=0)
        mask_set = self._uniform_mask(model, 0.5)
        report = compression_report(model, mask_set)
        total_weights = sum(l.weight.size for l in model.param_layers)
        assert report.deployable_capacity_bits == pytest.approx(
            report.capacity_bits + total_weights)

    def test_nonlinear_capacity_accounting(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=0)
        qm = quantize_model_nonlinear(model, 16, 8, seed=0)
        report = compression_report(model, None, qm)
        expected = 0.0
        index_only = 0.0
        for layer, payload in zip(model.param_layers, qm.layers):
            cb = payload.codebook
            expected += layer.weight.size * cb.index_bits + len(cb.centroids) * cb.psi
            index_only += layer.weight.size * cb.index_bits
        assert report.capacity_bits == pytest.approx(expected)
        assert report.capacity_bits >= index_only

    def test_report_rows_match_totals(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=0)
        mask_set = self._uniform_mask(model, 0.6)
        report = compression_report(model, mask_set)
        assert sum(r["capacity_bits"] for r in report.per_layer) == pytest.approx(
            report.capacity_bits)
        assert sum(r["mac_cost"] for r in report.per_layer) == pytest.approx(
            report.mac_cost)
