"""SemanticAdv baseline: random global hue and saturation shifts in HSV.

Each trial draws two scalars in [0, 1], rotates every hue by the first,
raises every saturation by the second (clamped) and keeps V fixed.
"""

import numpy as np

from colorfool.attack import SEMANTICADV, AttackConfig, run_trials
from colorfool.colorspace import check_rgb, hsv_to_rgb, rgb_to_hsv


def shift_hsv(hsv, delta_h, delta_s):
    out = np.array(hsv, dtype=np.float64, copy=True)
    out[..., 0] = (out[..., 0] + delta_h) % 1.0
    out[..., 1] = np.clip(out[..., 1] + delta_s, 0.0, 1.0)
    return out


def candidates(img, cfg, rng=None):
    hsv = rgb_to_hsv(check_rgb(img))
    rng = cfg.rng() if rng is None else rng
    for _ in range(cfg.max_trials):
        delta_h, delta_s = rng.random(), rng.random()
        yield hsv_to_rgb(shift_hsv(hsv, delta_h, delta_s))


def semanticadv_attack(img, oracle, cfg=AttackConfig(variant=SEMANTICADV), rng=None):
    """Run the hue/saturation attack; ``rng`` overrides the seeded generator."""
    return run_trials(img, candidates(img, cfg, rng), oracle, cfg)
