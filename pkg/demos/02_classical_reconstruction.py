#!/usr/bin/env python3
"""l1-wavelet regularized least squares: FISTA convergence at 4-fold
undersampling, and why the regularization weight must be tuned per
distribution (low-noise vs high-noise data prefer different lambdas).
"""

import numpy as np

from shiftmri import data as dm
from shiftmri import fista, kspace
from shiftmri.metrics import SsimConfig, ssim

spec = dm.DistributionSpec("demo", extents=(32, 32), coils=4, snr_db=40.0, seed=3)
item = dm.generate(spec, 1).items[0]
mask = kspace.mask_for_volume(32, 4, 0.08, seed=0, volume_index=0)
y = dm.simulate_measurements(item, mask, noise_seed=1)
target = kspace.ground_truth_rss(item.image, item.sens)
cfg = SsimConfig(data_range=float(target.max()))

result = fista.fista_l1(y, item.sens, mask, fista.FistaConfig(lam=1e-3, max_iters=100))
zf = kspace.zero_filled_rss(y)
print(f"objective: {result.objective_trace[0]:.4f} -> {result.objective_trace[-1]:.4f} "
      f"over {result.iterations_run} iterations (monotone)")
print(f"SSIM: zero-filled {ssim(zf, target, cfg):.3f} -> "
      f"FISTA {ssim(np.abs(result.image), target, cfg):.3f}")

# Per-distribution lambda tuning: same phantoms, different measurement SNR.
grid = [1e-4, 1e-3, 1e-2, 1e-1]
print(f"\nlambda grid search on {grid}")
for name, snr in (("low-noise (30 dB)", 30.0), ("high-noise (10 dB)", 10.0)):
    ds = dm.generate(dm.DistributionSpec("tune", extents=(32, 32), coils=4,
                                         snr_db=snr, seed=100), 3)
    best, table = fista.tune_lambda(ds, grid, fista.FistaConfig(max_iters=60), seed=0)
    row = "  ".join(f"{lam:g}: {v:.3f}" for lam, v in table.items())
    print(f"  {name:20s} best lambda = {best:g}   ({row})")
print("\nhigher measurement noise pushes the optimal lambda up; one weight "
      "cannot serve both distributions")
