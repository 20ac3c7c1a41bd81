"""Mask a fifth of the observed counts and recover expression from the ZINB mean.

Run with ``python3 demos/imputation.py``.
"""
import numpy as np

from sptopo.data import SpatialSlice, make_rng, synth_slice
from sptopo.pipeline import TrainConfig, impute, prepare, train

truth = synth_slice(3, 100, 200, seed=2)
rng = make_rng(2, 99)

# %% Drop 20% of the nonzero entries.
masked = truth.counts.copy()
rows, cols = np.nonzero(masked)
drop = rng.choice(len(rows), size=len(rows) // 5, replace=False)
masked[rows[drop], cols[drop]] = 0
print(f"zeros before {np.mean(truth.counts == 0):.3f}, after masking {np.mean(masked == 0):.3f}")

# %% Train on the masked slice and read off the mean matrix.
slice_ = SpatialSlice(masked, truth.coords, truth.gene_names, truth.spot_ids, labels=truth.labels)
cfg = TrainConfig(seed=2)
prepared = prepare(slice_, cfg)
m = impute(train(prepared, cfg).state)
means = truth.true_means[:, prepared.pre.genes]

r_raw = np.corrcoef(masked[:, prepared.pre.genes].ravel(), means.ravel())[0, 1]
r_imp = np.corrcoef(m.ravel(), means.ravel())[0, 1]
print(f"correlation with generative means: masked counts {r_raw:.3f}, imputed {r_imp:.3f}")

# %% The dropped entries specifically.
hit = np.zeros_like(masked, dtype=bool)
hit[rows[drop], cols[drop]] = True
hit = hit[:, prepared.pre.genes]
print(f"on dropped entries: imputed mean {m[hit].mean():.2f}, true mean {means[hit].mean():.2f}")
