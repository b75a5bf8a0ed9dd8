# Filtering defenses and filter-based detection.
#
# Each defense filter is applied to an image; a detector compares the
# classifier's probability vectors before and after filtering. Thresholds are
# set on clean images so that at most 5% of them are flagged.

import numpy as np

from colorfool import toy
from colorfool.attack import AttackConfig, attack
from colorfool.colorspace import srgb_to_lab
from colorfool.defenses import DEFAULT_GRID, FilterSpec
from colorfool.evaluation import build_report, calibrate
from colorfool.oracle import cached
from colorfool.regions import decompose, load_category_mapping

oracle = cached(toy.template_classifier())
mapping = load_category_mapping()

calibration = [rgb for rgb, _ in toy.scenes(40, seed=100)]
thresholds = [calibrate(calibration, oracle, spec) for spec in DEFAULT_GRID]
for th in thresholds:
    print(f"{str(th.filter):14} tau={th.tau:.4f}")

scenes = toy.scenes(20, seed=200)
clean, adversarial = [], []
for i, (rgb, labels) in enumerate(scenes):
    regions = decompose(srgb_to_lab(rgb), labels, mapping)
    clean.append(rgb)
    adversarial.append(attack(rgb, regions, oracle, AttackConfig(1000, seed=i)).adversarial)

report = build_report([f"scene{i}" for i in range(20)], clean, adversarial, oracle,
                      grid=DEFAULT_GRID, thresholds=thresholds)
summary = report.summary()
print("success rate:", summary["success_rate"])
print("worst-case SR after filtering:", summary["robustness"]["worst_case_sr"],
      "with", summary["robustness"]["worst_filter"])
print("undetectability (no filter flags):", summary["undetectability"]["any_filter"])

# The median filter on its own.
spec = FilterSpec.parse("median:3")
print("median:3 changes", int((spec(adversarial[0]) != adversarial[0]).any(-1).sum()), "pixels")
