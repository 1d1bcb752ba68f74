"""Fixed-point and codebook quantization checks.

optimal_1d_sse is the clustering oracle: optimal 1-D k-clusterings are
contiguous in sorted order, so enumerating split points gives the exact
minimum within-cluster SSE for small inputs.
"""

import itertools

import numpy as np
import pytest

from aecompress import (
    ConfigurationError,
    FixedPointParams,
    build_autoencoder,
    build_mask_set,
    apply_mask,
    calibrate_activations,
    compute_linear_params,
    dequantize,
    kmeans_1d,
    quantize_layer_nonlinear,
    quantize_linear,
    quantize_model_linear,
    quantize_model_nonlinear,
)
from aecompress.quantization import clustering_sse, params_from_max
from conftest import conv_encoder, sine_windows


def optimal_1d_sse(values, k):
    """Exact min within-cluster SSE by enumerating contiguous partitions."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = len(x)
    k = min(k, n)
    best = np.inf
    for cuts in itertools.combinations(range(1, n), k - 1):
        sse = 0.0
        for lo, hi in zip((0,) + cuts, cuts + (n,)):
            seg = x[lo:hi]
            sse += ((seg - seg.mean()) ** 2).sum()
        best = min(best, sse)
    return best


class TestLinearParams:
    @pytest.mark.parametrize("max_abs,int_bits", [(3.2, 2), (0.9, 0), (1.0, 0), (5.0, 3)])
    def test_int_bits_cases(self, max_abs, int_bits):
        params = params_from_max(max_abs, 8)
        assert params.int_bits == int_bits
        assert params.frac_bits == 8 - int_bits - 1

    def test_scale_value(self):
        params = params_from_max(3.2, 8)
        assert params.frac_bits == 5
        assert params.scale == 0.03125

    def test_all_zero_degenerate(self):
        params = params_from_max(0.0, 8)
        assert params.int_bits == 0

    def test_too_few_bits_rejected(self):
        with pytest.raises(ConfigurationError):
            params_from_max(1.0, 1)

    def test_from_tensor(self):
        params = compute_linear_params(np.array([0.1, -3.2, 1.0]), 8)
        assert params.int_bits == 2


class TestQuantizeLinear:
    def test_zero_maps_to_zero(self):
        q, code = quantize_linear(np.array([0.0]), params_from_max(1.0, 8))
        assert q[0] == 0.0 and code[0] == 0

    def test_hand_case(self):
        params = FixedPointParams(8, 2, 5)
        q, code = quantize_linear(np.array([0.07]), params)
        assert code[0] == 2
        assert q[0] == pytest.approx(0.0625)

    def test_rounding_halfwidth_bound(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-3, 3, size=1000)
        params = compute_linear_params(x, 8)
        q, _ = quantize_linear(x, params)
        # non-saturated values stay within half a step
        top = 2.0**params.int_bits - params.scale
        inside = np.abs(x) < top
        assert np.all(np.abs(x[inside] - q[inside]) <= params.scale / 2 + 1e-12)

    def test_saturation_not_wrapping(self):
        params = FixedPointParams(4, 0, 3)
        q, code = quantize_linear(np.array([10.0, -10.0]), params)
        assert code[0] == 7 and code[1] == -8
        assert q[0] == pytest.approx(1.0 - params.scale)

    def test_idempotent_on_lattice(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=500)
        params = compute_linear_params(x, 8)
        q1, c1 = quantize_linear(x, params)
        q2, c2 = quantize_linear(q1, params)
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_array_equal(q1, q2)


class TestQuantizeModelLinear:
    def _trained_model(self):
        return build_autoencoder(conv_encoder(4), (4, 12), seed=4)

    @pytest.mark.parametrize("bits", [4, 5, 8, 16])
    def test_error_bound_and_value_count(self, bits):
        model = self._trained_model()
        qm = quantize_model_linear(model, bits)
        deq = dequantize(qm)
        for orig, got, payload in zip(model.param_layers, deq.param_layers, qm.layers):
            sigma = payload.weight_params.scale
            top = 2.0**payload.weight_params.int_bits - sigma
            inside = np.abs(orig.weight) < top
            assert np.all(np.abs(orig.weight - got.weight)[inside] <= sigma / 2 + 1e-7)
            assert len(np.unique(got.weight)) <= 2**bits

    def test_requantize_same_codes(self):
        model = self._trained_model()
        qm = quantize_model_linear(model, 8)
        deq = dequantize(qm)
        for payload, layer in zip(qm.layers, deq.param_layers):
            _, codes = quantize_linear(layer.weight, payload.weight_params)
            np.testing.assert_array_equal(codes,
                                          payload.weight_codes.reshape(codes.shape))

    def test_pruned_zeros_map_to_code_zero(self):
        model = self._trained_model()
        mask_set = build_mask_set(model, [0.4] * len(model.param_layers))
        apply_mask(model, mask_set)
        qm = quantize_model_linear(model, 8)
        deq = dequantize(qm)
        for layer, mask in zip(deq.param_layers, mask_set.masks):
            assert not (layer.weight * (1 - mask)).any()

    def test_shapes_preserved(self):
        model = self._trained_model()
        deq = dequantize(quantize_model_linear(model, 5))
        for a, b in zip(model.param_layers, deq.param_layers):
            assert a.weight.shape == b.weight.shape
            assert a.bias.shape == b.bias.shape


class TestKmeans1d:
    def test_two_obvious_clusters(self):
        x = np.array([0.1, 0.11, 0.5, 0.52])
        centers, assign = kmeans_1d(x, 2, seed=0)
        np.testing.assert_allclose(centers, [0.105, 0.51], rtol=1e-6)
        np.testing.assert_array_equal(assign, [0, 0, 1, 1])

    def test_k_equals_distinct_lossless(self):
        x = np.array([0.3, -0.2, 0.5, 0.1])
        centers, assign = kmeans_1d(x, 4, seed=0)
        np.testing.assert_allclose(centers, np.sort(x))
        np.testing.assert_allclose(centers[assign], x)

    def test_single_cluster_is_mean(self):
        x = np.array([1.0, 2.0, 6.0])
        centers, assign = kmeans_1d(x, 1, seed=0)
        assert centers[0] == pytest.approx(3.0)
        assert (assign == 0).all()

    def test_sse_near_optimal_small_corpus(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(2, 13))
            k = int(rng.integers(1, 4))
            x = rng.normal(size=n)
            centers, assign = kmeans_1d(x, k, seed=int(rng.integers(1 << 30)))
            sse = clustering_sse(x, centers, assign)
            opt = optimal_1d_sse(x, k)
            assert sse >= opt - 1e-9
            assert sse <= opt * 1.05 + 1e-9

    def test_duplicates_handled(self):
        x = np.array([0.5, 0.5, 0.5, 0.5])
        centers, assign = kmeans_1d(x, 3, seed=0)
        assert len(centers) == 1
        assert (assign == 0).all()


class TestNonlinearLayer:
    def test_cardinality_bound(self):
        rng = np.random.default_rng(6)
        w = rng.normal(size=(10, 10)).astype(np.float32)
        for omega in (1, 2, 7, 16):
            cb = quantize_layer_nonlinear(w, omega, 8, seed=1)
            assert len(cb.centroids) <= omega
            assert len(np.unique(cb.dequantize())) <= omega

    def test_single_cluster_quantized_mean(self):
        w = np.array([0.2, 0.4], dtype=np.float32)
        cb = quantize_layer_nonlinear(w, 1, 8, seed=0)
        params = compute_linear_params(np.array([0.3]), 8)
        expected, _ = quantize_linear(np.array([0.3]), params)
        assert cb.centroids[0] == pytest.approx(expected[0])

    def test_lossless_when_own_centroid(self):
        w = np.array([0.1, 0.25, 0.4, 0.52], dtype=np.float32)
        cb = quantize_layer_nonlinear(w, 4, 32, seed=0)
        np.testing.assert_array_equal(cb.dequantize(), w)

    def test_centroids_on_fixed_point_grid(self):
        rng = np.random.default_rng(7)
        w = rng.normal(size=64).astype(np.float32)
        cb = quantize_layer_nonlinear(w, 8, 6, seed=2)
        sigma = cb.centroid_params.scale
        codes = cb.centroids.astype(np.float64) / sigma
        np.testing.assert_allclose(codes, np.round(codes), atol=1e-9)

    def test_zero_weights_pinned(self):
        rng = np.random.default_rng(8)
        w = rng.normal(size=40).astype(np.float32)
        w[::3] = 0.0
        cb = quantize_layer_nonlinear(w, 4, 8, seed=3)
        deq = cb.dequantize()
        np.testing.assert_array_equal(deq[::3], 0.0)
        assert len(cb.centroids) <= 4

    def test_invalid_omega(self):
        with pytest.raises(ConfigurationError):
            quantize_layer_nonlinear(np.ones(4, dtype=np.float32), 0, 8)


class TestNonlinearModel:
    def test_distinct_values_bounded(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=4)
        qm = quantize_model_nonlinear(model, 16, 4, seed=9)
        deq = dequantize(qm)
        for layer in deq.param_layers:
            assert len(np.unique(layer.weight)) <= 16

    def test_pruned_model_mask_survives(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=4)
        mask_set = build_mask_set(model, [0.3] * len(model.param_layers))
        apply_mask(model, mask_set)
        qm = quantize_model_nonlinear(model, 8, 8, seed=10)
        deq = dequantize(qm)
        for layer, mask in zip(deq.param_layers, mask_set.masks):
            assert not (layer.weight * (1 - mask)).any()


class TestCalibrateActivations:
    def test_hand_int_bits(self):
        from aecompress import LayerSpec
        model = build_autoencoder(
            [LayerSpec("dense", 4, 4, activation="identity")], (2, 2), seed=0)
        layer = model.param_layers[0]
        layer.weight = np.zeros((4, 4), dtype=np.float32)
        layer.bias = np.array([5.0, 0, 0, 0], dtype=np.float32)
        out_layer = model.param_layers[1]
        out_layer.weight = np.zeros((4, 4), dtype=np.float32)
        out_layer.bias = np.zeros(4, dtype=np.float32)
        params = calibrate_activations(model, np.zeros((2, 2, 2), dtype=np.float32))
        assert params[0].int_bits == 3 and params[0].frac_bits == 4
        assert params[1].int_bits == 0  # identically-zero output layer

    def test_deterministic(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=4)
        wins = sine_windows(n=32)
        a = calibrate_activations(model, wins)
        b = calibrate_activations(model, wins)
        assert [p.as_dict() for p in a] == [p.as_dict() for p in b]

    def test_empty_calibration_rejected(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=4)
        with pytest.raises(ConfigurationError):
            calibrate_activations(model, np.zeros((0, 4, 12), dtype=np.float32))

    def test_activation_quantization_applied_in_forward(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=4)
        wins = sine_windows(n=16)
        qm = quantize_model_linear(model, 8, calibration_windows=wins)
        plain = dequantize(qm).forward(wins[:4])
        quantized = dequantize(qm).forward(wins[:4], act_quant=qm.act_quantizers())
        assert not np.array_equal(plain, quantized)
