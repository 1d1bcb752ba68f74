# %% [markdown]
# # Linear and codebook quantization
#
# Two post-training schemes:
#
# * **linear**: every parameter tensor gets its own signed fixed-point grid
#   with step `2^-frac_bits`, sized from the tensor's largest magnitude;
# * **nonlinear**: a layer's weights are clustered (exact 1-D k-means),
#   the centroids are themselves fixed-point quantized, and each weight
#   stores only an index into that small codebook.
#
# Output activations are quantized to 8 bits in both schemes, with grids
# calibrated on training windows.

# %%
import numpy as np

import aecompress as ac
from aecompress.data import fit_normalization

SEED = 7

cfg = ac.SynthConfig(seed=SEED, channels=4, length=2400)
train_s, _, test_s = ac.generate_synthetic(cfg)
stats = fit_normalization(train_s)
train_n, test_n = ac.normalize(train_s, stats), ac.normalize(test_s, stats)
window_cfg = ac.WindowConfig(length=12, stride=1)
windows, _ = ac.window(train_n, window_cfg)

encoder = [
    ac.LayerSpec("conv1d", 4, 32, kernel_size=3, stride=1, padding=1),
    ac.LayerSpec("conv1d", 32, 16, kernel_size=3, stride=2, padding=1),
    ac.LayerSpec("conv1d", 16, 8, kernel_size=3, stride=2, padding=1),
]
model = ac.build_autoencoder(encoder, (4, 12), seed=SEED)
ac.train(model, windows, ac.TrainConfig(epochs=25, batch_size=64, seed=SEED))
baseline = ac.best_f1(ac.anomaly_scores(model, test_n, window_cfg), test_n.labels)
print(f"float32 baseline F1 {baseline.f1:.3f}")

# %% [markdown]
# ## Linear bit-width sweep
#
# 16- and 8-bit grids are essentially free; accuracy falls off as the grid
# coarsens toward 4 bits.

# %%
calib = windows[:256]
print(f"{'bits':>5} {'F1':>7} {'delta':>8}")
for bits in (16, 8, 5, 4):
    qm = ac.quantize_model_linear(model, bits, calibration_windows=calib)
    scores = ac.anomaly_scores(ac.dequantize(qm), test_n, window_cfg,
                               act_quant=qm.act_quantizers())
    f1 = ac.best_f1(scores, test_n.labels).f1
    print(f"{bits:>5} {f1:>7.3f} {f1 - baseline.f1:>+8.3f}")

# %% [markdown]
# ## What a fixed-point grid looks like
#
# `int_bits` covers the magnitude range, the rest of the budget (minus the
# sign bit) becomes fractional resolution.

# %%
layer0 = model.param_layers[0]
params = ac.compute_linear_params(layer0.weight, 8)
print(f"layer 0: max|w| = {np.abs(layer0.weight).max():.4f} -> "
      f"int_bits={params.int_bits}, frac_bits={params.frac_bits}, "
      f"step sigma={params.scale:.6f}")

# %% [markdown]
# ## Codebook (nonlinear) quantization
#
# With `omega` clusters and `psi`-bit centroids, a layer stores
# `ceil(log2 omega)` bits per weight plus a tiny centroid table.
# Exact-zero weights (from pruning) are pinned to a dedicated zero entry.

# %%
print(f"{'omega':>6} {'psi':>4} {'F1':>7} {'distinct weights/layer':>24}")
for omega, psi in ((256, 8), (16, 8), (16, 4), (4, 4)):
    qm = ac.quantize_model_nonlinear(model, omega, psi,
                                     calibration_windows=calib, seed=SEED)
    deq = ac.dequantize(qm)
    scores = ac.anomaly_scores(deq, test_n, window_cfg,
                               act_quant=qm.act_quantizers())
    f1 = ac.best_f1(scores, test_n.labels).f1
    distinct = [len(np.unique(l.weight)) for l in deq.param_layers]
    print(f"{omega:>6} {psi:>4} {f1:>7.3f} {str(distinct):>24}")

# %%
cb = ac.quantize_layer_nonlinear(model.param_layers[2].weight, 8, 8, seed=0)
print("one layer's entire codebook:", np.round(cb.centroids, 4))
print(f"index bits per weight: {cb.index_bits}")
