import numpy as np
import pytest

from aecompress import (
    ConfigurationError,
    LayerSpec,
    MaskSet,
    TrainConfig,
    build_autoencoder,
    reconstruction_loss,
    train,
)
from conftest import conv_encoder, sine_windows


class TestMirrorConstruction:
    def test_dense_mirror(self):
        specs = [LayerSpec("dense", 8, 4), LayerSpec("dense", 4, 2)]
        model = build_autoencoder(specs, (2, 4), seed=0)
        dec = model.decoder_specs
        assert [(d.kind, d.in_channels, d.out_channels) for d in dec] == [
            ("dense", 2, 4), ("dense", 4, 8)]
        assert model.latent_dim == 2

    def test_conv_mirror_restores_length(self):
        specs = [LayerSpec("conv1d", 4, 8, kernel_size=3, stride=2, padding=0)]
        model = build_autoencoder(specs, (4, 12), seed=0)
        dec = model.decoder_specs[0]
        assert dec.kind == "conv1d_transposed"
        assert (dec.in_channels, dec.out_channels) == (8, 4)
        x = np.zeros((2, 4, 12), dtype=np.float32)
        assert model.forward(x).shape == (2, 4, 12)

    def test_same_seed_bit_identical(self):
        a = build_autoencoder(conv_encoder(4), (4, 12), seed=9)
        b = build_autoencoder(conv_encoder(4), (4, 12), seed=9)
        for la, lb in zip(a.param_layers, b.param_layers):
            np.testing.assert_array_equal(la.weight, lb.weight)
            np.testing.assert_array_equal(la.bias, lb.bias)

    def test_shape_chain_break_names_layer(self):
        specs = [LayerSpec("conv1d", 4, 8, kernel_size=3),
                 LayerSpec("conv1d", 6, 4, kernel_size=3)]
        with pytest.raises(ConfigurationError, match="layer 1"):
            build_autoencoder(specs, (4, 12), seed=0)

    def test_final_decoder_activation_is_identity(self):
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=0)
        assert model.decoder_specs[-1].activation == "identity"

    def test_mixed_conv_dense_chain(self):
        specs = [
            LayerSpec("conv1d", 4, 8, kernel_size=3, stride=2, padding=1),
            LayerSpec("dense", 8 * 6, 5),
        ]
        model = build_autoencoder(specs, (4, 12), seed=0)
        assert model.latent_dim == 5
        x = np.random.default_rng(0).normal(size=(3, 4, 12)).astype(np.float32)
        assert model.forward(x).shape == (3, 4, 12)
        assert model.encode(x).shape == (3, 5)


class TestReconstruct:
    def test_identity_composition(self):
        model = build_autoencoder(
            [LayerSpec("dense", 4, 4, activation="identity")], (2, 2), seed=0)
        for layer in model.param_layers:
            layer.weight = np.eye(4, dtype=np.float32)
            layer.bias = np.zeros(4, dtype=np.float32)
        x = np.random.default_rng(1).normal(size=(3, 2, 2)).astype(np.float32)
        np.testing.assert_array_equal(model.forward(x), x)

    def test_identical_windows_identical_outputs(self, small_conv_model):
        w = np.random.default_rng(2).normal(size=(1, 4, 12)).astype(np.float32)
        batch = np.concatenate([w, w])
        out = small_conv_model.forward(batch)
        np.testing.assert_array_equal(out[0], out[1])

    def test_shape_mismatch(self, small_conv_model):
        with pytest.raises(ConfigurationError):
            small_conv_model.forward(np.zeros((1, 4, 9), dtype=np.float32))


class TestReconstructionLoss:
    def test_zero_for_equal(self):
        x = np.ones((2, 3), dtype=np.float32)
        assert reconstruction_loss(x, x) == 0.0

    def test_three_four_five(self):
        x = np.array([[3.0, 4.0]], dtype=np.float32)
        assert reconstruction_loss(x, np.zeros_like(x)) == pytest.approx(5.0)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 6)).astype(np.float32)
        y = rng.normal(size=(4, 6)).astype(np.float32)
        assert reconstruction_loss(x, y) == reconstruction_loss(y, x)

    def test_batch_average(self):
        x = np.array([[3.0, 4.0], [0.0, 0.0]], dtype=np.float32)
        y = np.zeros_like(x)
        assert reconstruction_loss(x, y) == pytest.approx(2.5)


class TestTrain:
    def test_zero_epochs_noop(self, small_conv_model):
        before = [l.weight.copy() for l in small_conv_model.param_layers]
        history = train(small_conv_model, sine_windows(), TrainConfig(epochs=0))
        assert history == []
        for w, l in zip(before, small_conv_model.param_layers):
            np.testing.assert_array_equal(w, l.weight)

    def test_all_ones_mask_matches_unmasked(self):
        windows = sine_windows()
        cfg = TrainConfig(epochs=2, batch_size=16, seed=21)
        a = build_autoencoder(conv_encoder(4), (4, 12), seed=7)
        b = build_autoencoder(conv_encoder(4), (4, 12), seed=7)
        ones = MaskSet([np.ones_like(l.weight) for l in a.param_layers],
                       [1.0] * len(a.param_layers))
        ha = train(a, windows, cfg, mask_set=ones)
        hb = train(b, windows, cfg)
        assert ha == hb
        for la, lb in zip(a.param_layers, b.param_layers):
            np.testing.assert_array_equal(la.weight, lb.weight)

    def test_masked_weights_stay_zero(self):
        windows = sine_windows()
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=7)
        rng = np.random.default_rng(5)
        masks = [(rng.random(l.weight.shape) > 0.5).astype(np.float32)
                 for l in model.param_layers]
        mask_set = MaskSet(masks, [float(m.mean()) for m in masks])
        train(model, windows, TrainConfig(epochs=2, batch_size=16, seed=1),
              mask_set=mask_set)
        for layer, mask in zip(model.param_layers, masks):
            assert not (layer.weight * (1 - mask)).any()

    def test_training_reduces_loss_on_smooth_data(self):
        windows = sine_windows(n=256, seed=8)
        model = build_autoencoder(conv_encoder(4), (4, 12), seed=7)
        untrained = reconstruction_loss(windows, model.forward(windows))
        train(model, windows, TrainConfig(epochs=10, batch_size=32, seed=2))
        trained = reconstruction_loss(windows, model.forward(windows))
        assert trained < untrained

    def test_fixed_seed_reproducible(self):
        windows = sine_windows()
        cfg = TrainConfig(epochs=3, batch_size=16, seed=13)
        runs = []
        for _ in range(2):
            model = build_autoencoder(conv_encoder(4), (4, 12), seed=7)
            history = train(model, windows, cfg)
            runs.append((history, [l.weight.copy() for l in model.param_layers]))
        assert runs[0][0] == runs[1][0]
        for wa, wb in zip(runs[0][1], runs[1][1]):
            np.testing.assert_array_equal(wa, wb)
