# How much does the random color draw matter?
#
# Attack one image many times with different seeds and look at the success
# rate, the spread of trials needed and how many different classes the runs
# end in. The toy oracle answers "redder" or "greener" once the mean a value
# moves by more than 4 units, so there are exactly two reachable classes.

from colorfool import toy
from colorfool.attack import AttackConfig
from colorfool.colorspace import srgb_to_lab
from colorfool.evaluation import randomness_study
from colorfool.regions import decompose, load_category_mapping

rgb, labels = toy.scenes(1, seed=808)[0]
regions = decompose(srgb_to_lab(rgb), labels, load_category_mapping())
oracle = toy.mean_shift_oracle(rgb, threshold=4.0)

stats = randomness_study(rgb, regions, oracle, runs=200, cfg=AttackConfig(1000, seed=0))
print("success rate:", stats.success_rate)
print("trials:", stats.trials)
print("final classes:", stats.final_classes)
counts = {c: sum(r.final_class == c for r in stats.runs if r.success) for c in stats.final_classes}
print("runs per final class:", counts)
