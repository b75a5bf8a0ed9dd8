"""ColorFool: semantic, natural-color adversarial recoloring in Lab space.

Each trial ``n = 1..N`` draws fresh a/b offsets for every region, scales
them by ``alpha = n / N`` and adds them to the Lab image. Sensitive regions
draw from per-category natural-color ranges built from the region's own
channel extremes; person regions are never recolored. Non-sensitive regions
draw from the full a/b range. The first candidate whose top-1 class differs
from the clean prediction is returned.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from colorfool.colorspace import AB_RANGE, lab_to_srgb, srgb_to_lab
from colorfool.oracle import OracleError, top1
from colorfool.regions import Category, whole_image_region

COLORFOOL = "colorfool"
COLORFOOL_R = "colorfool-r"
SEMANTICADV = "semanticadv"
VARIANTS = (COLORFOOL, COLORFOOL_R, SEMANTICADV)

# Offsets for non-sensitive regions; this asymmetric interval is deliberate.
NON_SENSITIVE_RANGE = (-127, 128)


class AttackError(OracleError):
    """The oracle failed during a trial."""

    def __init__(self, message, trial):
        super().__init__(message)
        self.trial = trial


@dataclass(frozen=True)
class AttackConfig:
    max_trials: int = 1000
    seed: int = 0
    variant: str = COLORFOOL

    def __post_init__(self):
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def rng(self):
        return np.random.default_rng(self.seed)


@dataclass(eq=False)
class AttackResult:
    adversarial: np.ndarray
    success: bool
    trials_used: int
    original_class: int
    final_class: int
    seed: int = 0
    variant: str = COLORFOOL
    queries: int = 0
    final_probs: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class ChannelRange:
    """Inclusive integer offset interval; ``lo > hi`` means empty."""

    lo: int
    hi: int

    @property
    def empty(self):
        return self.lo > self.hi

    def __contains__(self, value):
        return not self.empty and self.lo <= value <= self.hi


ZERO_RANGE = ChannelRange(0, 0)


def _interval(lo, hi):
    # integer offsets inside the real interval keep the shifted region in bounds
    return ChannelRange(math.ceil(lo), math.floor(hi))


def natural_ranges(category, stats):
    """Natural-color offset ranges ``(a_range, b_range)`` for one region.

    Vegetation is pushed toward green and yellow, water and sky toward green
    and blue, so that after a full-scale shift every pixel of the region stays
    in that quadrant of the a/b plane. Person gets ``{0}`` on both channels.
    """
    if category is Category.PERSON:
        return ZERO_RANGE, ZERO_RANGE
    lo, hi = AB_RANGE
    a_range = _interval(lo - stats.l_a, -stats.u_a)
    if category is Category.VEGETATION:
        b_range = _interval(-stats.l_b, hi - stats.u_b)
    elif category in (Category.WATER, Category.SKY):
        b_range = _interval(lo - stats.l_b, -stats.u_b)
    else:
        raise ValueError(f"no natural-color range for {category}")
    return a_range, b_range


def _draw(rng, channel_range):
    if channel_range.empty:
        return 0
    return int(rng.integers(channel_range.lo, channel_range.hi, endpoint=True))


def sample_sensitive(ranges, rng):
    """Uniform integer offsets ``(N_a, N_b)``; an empty range yields 0."""
    a_range, b_range = ranges
    return _draw(rng, a_range), _draw(rng, b_range)


def sample_non_sensitive(rng):
    lo, hi = NON_SENSITIVE_RANGE
    return (
        int(rng.integers(lo, hi, endpoint=True)),
        int(rng.integers(lo, hi, endpoint=True)),
    )


def perturb(lab, regions, draws, alpha):
    """Shift a and b of each region by ``alpha`` times its offsets.

    ``draws`` holds one ``(N_a, N_b)`` pair per region, in the iteration
    order of ``regions`` (sensitive first). L is returned untouched.
    """
    draws = list(draws)
    if len(draws) != len(regions):
        raise ValueError(f"expected {len(regions)} offset pairs, got {len(draws)}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    lab = np.asarray(lab, dtype=np.float64)
    offset_a = np.zeros(lab.shape[:2])
    offset_b = np.zeros(lab.shape[:2])
    for region, (na, nb) in zip(regions, draws):
        offset_a[region.mask] = na
        offset_b[region.mask] = nb
    out = lab.copy()
    out[..., 1] = np.clip(lab[..., 1] + alpha * offset_a, *AB_RANGE)
    out[..., 2] = np.clip(lab[..., 2] + alpha * offset_b, *AB_RANGE)
    return out


def draw_offsets(regions, rng):
    draws = []
    for region in regions:
        if region.sensitive:
            draws.append(sample_sensitive(natural_ranges(region.category, region.stats), rng))
        else:
            draws.append(sample_non_sensitive(rng))
    return draws


@dataclass(frozen=True, eq=False)
class Trial:
    index: int
    alpha: float
    draws: list
    lab: np.ndarray
    rgb: np.ndarray


def trials(img, regions, cfg, rng=None):
    """Yield every candidate of an attack run, without querying an oracle.

    ``lab`` is the pre-quantization candidate, ``rgb`` the quantized image
    that would be sent to the classifier.
    """
    lab = srgb_to_lab(img)
    if cfg.variant == COLORFOOL_R or regions is None:
        regions = whole_image_region(lab)
    elif regions.shape != lab.shape[:2]:
        raise ValueError(f"regions shape {regions.shape} does not match image {lab.shape[:2]}")
    rng = cfg.rng() if rng is None else rng
    for n in range(1, cfg.max_trials + 1):
        alpha = n / cfg.max_trials
        draws = draw_offsets(regions, rng)
        candidate = perturb(lab, regions, draws, alpha)
        yield Trial(n, alpha, draws, candidate, lab_to_srgb(candidate))


def run_trials(img, candidates, oracle, cfg):
    """Query ``oracle`` on each candidate image until the class changes."""
    try:
        original = top1(oracle.predict(img))
    except OracleError as exc:
        raise AttackError(f"oracle failed on the clean image: {exc}", 0) from exc
    rgb = probs = None
    n = 0
    for n, rgb in enumerate(candidates, 1):
        try:
            probs = oracle.predict(rgb)
        except OracleError as exc:
            raise AttackError(f"oracle failed at trial {n}: {exc}", n) from exc
        label = top1(probs)
        if label != original:
            return AttackResult(
                rgb, True, n, original, label, cfg.seed, cfg.variant, n + 1, probs,
            )
    return AttackResult(
        rgb, False, n, original, top1(probs), cfg.seed, cfg.variant, n + 1, probs,
    )


def attack(img, regions, oracle, cfg=AttackConfig(), rng=None):
    """Run ColorFool (or ColorFool-r) against a black-box oracle.

    ``regions`` must be computed from the Lab conversion of ``img``; it is
    ignored for the ``colorfool-r`` variant, which treats the whole image as
    a single non-sensitive region. A failed attack returns the last
    candidate with ``success=False``.
    """
    if cfg.variant == SEMANTICADV:
        raise ValueError("use semanticadv.semanticadv_attack for the semanticadv variant")
    candidates = (t.rgb for t in trials(img, regions, cfg, rng))
    return run_trials(img, candidates, oracle, cfg)
