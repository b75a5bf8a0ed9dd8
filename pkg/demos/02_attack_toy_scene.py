# ColorFool against a color-histogram classifier on a synthetic scene.
#
# The scene has sky, a tree, a person and two non-sensitive surfaces, with an
# ADE20K-style label map. The classifier recognises the clean palette; moving
# enough color mass out of it changes the prediction.

import numpy as np

from colorfool import toy
from colorfool.attack import AttackConfig, attack, natural_ranges
from colorfool.colorspace import srgb_to_lab
from colorfool.regions import decompose, load_category_mapping
from colorfool.semanticadv import semanticadv_attack

rgb, labels = toy.scenes(1, seed=3)[0]
lab = srgb_to_lab(rgb)
regions = decompose(lab, labels, load_category_mapping())

print("regions:")
for region in regions:
    name = region.category.value if region.sensitive else f"label {region.label}"
    line = f"  {name:12} {int(region.mask.sum()):4d} px  a in [{region.stats.l_a:6.1f}, {region.stats.u_a:6.1f}]"
    if region.sensitive:
        a_range, b_range = natural_ranges(region.category, region.stats)
        line += f"  offsets a {a_range.lo}..{a_range.hi}, b {b_range.lo}..{b_range.hi}"
    print(line)

oracle = toy.template_classifier()
print("clean prediction:", oracle.classify(rgb))

results = {}
for variant in ("colorfool", "colorfool-r"):
    result = results[variant] = attack(rgb, regions, oracle, AttackConfig(max_trials=1000, seed=1, variant=variant))
    person = labels == toy.PERSON
    moved = np.abs(result.adversarial.astype(int) - rgb)[person].max()
    print(f"{variant:12} success={result.success} trials={result.trials_used} "
          f"class {result.original_class}->{result.final_class}, max person-pixel change {moved}")

sa = semanticadv_attack(rgb, oracle, AttackConfig(max_trials=1000, seed=1, variant="semanticadv"))
print(f"{'semanticadv':12} success={sa.success} trials={sa.trials_used}")

# ColorFool leaves L alone, so lightness only moves through RGB rounding and
# gamut clipping. SemanticAdv keeps HSV value, which is not Lab lightness.
for name, adv in (("colorfool", results["colorfool"].adversarial), ("semanticadv", sa.adversarial)):
    dL = np.abs(srgb_to_lab(adv)[..., 0] - lab[..., 0]).mean()
    print(f"mean |dL| {name}: {dL:.3f}")
