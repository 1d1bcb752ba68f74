# %% [markdown]
# # Population-based mask search
#
# Magnitude pruning keeps, per layer, the largest-magnitude weights at some
# retained fraction (density). Instead of committing to one density, the
# search samples a population of per-layer density vectors from a clamped
# normal, briefly retrains each masked copy of the pretrained model, scores
# each candidate by F1 on the validation split, and gives only the winner
# the long final retraining.
#
# Pruned positions are zeroed after every optimizer step, so a mask is a
# hard guarantee, not a soft penalty.

# %%
import numpy as np

import aecompress as ac
from aecompress.data import fit_normalization

SEED = 7

cfg = ac.SynthConfig(seed=SEED, channels=4, length=2400)
train_s, val_s, test_s = ac.generate_synthetic(cfg)
stats = fit_normalization(train_s)
train_n, val_n, test_n = (ac.normalize(s, stats) for s in (train_s, val_s, test_s))
window_cfg = ac.WindowConfig(length=12, stride=1)
windows, _ = ac.window(train_n, window_cfg)

encoder = [
    ac.LayerSpec("conv1d", 4, 32, kernel_size=3, stride=1, padding=1),
    ac.LayerSpec("conv1d", 32, 16, kernel_size=3, stride=2, padding=1),
    ac.LayerSpec("conv1d", 16, 8, kernel_size=3, stride=2, padding=1),
]
train_cfg = ac.TrainConfig(epochs=25, batch_size=64, seed=SEED)
model = ac.build_autoencoder(encoder, (4, 12), seed=SEED)
ac.train(model, windows, train_cfg)
baseline = ac.best_f1(ac.anomaly_scores(model, test_n, window_cfg), test_n.labels)
print(f"baseline F1 {baseline.f1:.3f}")

# %% [markdown]
# Density bounds (0.2, 0.8) per layer; each candidate draws its own
# density vector. Candidate selection happens on the validation split so
# the test split stays untouched until the end.

# %%
prune_cfg = ac.PruneConfig(
    population_size=6, v_min=0.2, v_max=0.8,
    short_epochs=2, final_epochs=15,
    train=train_cfg, seed=SEED,
)
pruned, report = ac.lottery_search(model, prune_cfg, windows, val_n, window_cfg)

print(f"{'cand':>4} {'val F1':>8} {'density':>8}  per-layer densities")
for cand in report.candidates:
    marker = "*" if cand.index == report.selected_index else " "
    dens = " ".join(f"{d:.2f}" for d in cand.achieved_densities)
    print(f"{cand.index:>3}{marker} {cand.f1:>8.3f} {cand.achieved_density:>8.3f}  {dens}")

# %%
test_result = ac.best_f1(ac.anomaly_scores(pruned.model, test_n, window_cfg),
                         test_n.labels)
retained = ac.weighted_sparsity(pruned.model, pruned.mask_set)
print(f"selected candidate {report.selected_index}: "
      f"test F1 {test_result.f1:.3f} vs baseline {baseline.f1:.3f}")
print(f"globally retained fraction (weighted): {retained:.3f} "
      f"-> sparsity {1 - retained:.3f}")

# pruned positions are exactly zero, layer by layer
for i, (layer, mask) in enumerate(zip(pruned.model.param_layers,
                                      pruned.mask_set.masks)):
    zeros = int((mask == 0).sum())
    assert not (layer.weight * (1 - mask)).any()
    print(f"layer {i}: {zeros}/{mask.size} weights pruned to exact 0.0")
