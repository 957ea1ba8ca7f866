#!/usr/bin/env python3
"""Effective robustness and train/test similarity on a controlled shift.

Two source distributions bracket the target in contrast space. Specialists
trained per source define the baseline out-of-distribution-vs-in-distribution
line; the model trained on the union of sources lands above that line
(positive effective robustness). Nearest-neighbor feature similarity between
training sets and the target test set tracks transfer performance.
"""

import json
import tempfile
from pathlib import Path

from shiftmri import harness

config = {
    "template": "diversity_robustness",
    "seed": 0,
    "train_count": 24,
    "test_count": 8,
    "sources": [
        {"name": "P1", "contrast": {"kind": "gamma", "gamma": 1.35},
         "extents": [32, 32], "coils": 4, "snr_db": 30, "seed": 31},
        {"name": "P2", "contrast": {"kind": "gamma", "gamma": 0.75},
         "extents": [32, 32], "coils": 4, "snr_db": 30, "seed": 32},
    ],
    "target": {"name": "Q", "contrast": {"kind": "gamma", "gamma": 1.0},
               "extents": [32, 32], "coils": 4, "snr_db": 30, "seed": 33},
    "model": {"kind": "unet_lite", "seed": 0},
    "train": {"epochs": 6, "seed": 0},
}

with tempfile.TemporaryDirectory() as td:
    out = harness.run_experiment(harness.ExperimentConfig.from_dict(config), td)
    details = json.loads((Path(td) / "details.json").read_text())
    fits = json.loads((Path(td) / "fits.json").read_text())

print(f"best single source (by transfer SSIM): index {details['best_source_index']}")
print(f"per-source transfer SSIM on the target: "
      f"{[round(v, 3) for v in details['source_target_ssim']]}")
print(f"baseline line: ood = {fits['ood_vs_id']['slope']:.3f} * id + "
      f"{fits['ood_vs_id']['intercept']:.3f}")
print(f"union-trained model effective robustness (final epoch): "
      f"{details['union_final_effective_robustness']:+.4f}")
print(f"\nsimilarity of each source train set to the target test set: "
      f"{[round(v, 3) for v in details['similarity_means']]}")
print(f"similarity of the union train set: "
      f"{details['union_similarity_mean']:.3f}")
print("\nthe union covers the target's neighborhood from both sides: higher "
      "similarity, and out-of-distribution performance above the specialist line")
