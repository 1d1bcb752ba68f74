import numpy as np
import pytest

from aecompress import LayerSpec, build_autoencoder


def conv_encoder(channels=8):
    return [
        LayerSpec("conv1d", channels, 2 * channels, kernel_size=3, stride=1, padding=1),
        LayerSpec("conv1d", 2 * channels, channels, kernel_size=3, stride=2, padding=1),
        LayerSpec("conv1d", channels, max(channels // 2, 2), kernel_size=3, stride=2, padding=1),
    ]


@pytest.fixture
def small_conv_model():
    return build_autoencoder(conv_encoder(4), (4, 12), seed=11)


@pytest.fixture
def dense_model():
    specs = [LayerSpec("dense", 8, 6), LayerSpec("dense", 6, 3)]
    return build_autoencoder(specs, (2, 4), seed=5)


def sine_windows(n=64, channels=4, width=12, seed=0):
    """Deterministic smooth windows for quick training checks."""
    rng = np.random.default_rng(seed)
    t = np.arange(width)
    phases = rng.uniform(0, 2 * np.pi, size=(n, channels, 1))
    periods = rng.uniform(6, 24, size=(n, channels, 1))
    return (0.5 + 0.4 * np.sin(2 * np.pi * t[None, None, :] / periods + phases)
            ).astype(np.float32)
