"""Synthetic scenes and hand-built oracles for desk-scale experiments.

Scenes are small RGB images with an ADE20K-style label map: a sky band,
vegetation, non-sensitive ground and a person. Base colors sit at the centre
of the reference classifier's 32-level histogram bins, so a clean scene
lands in a known set of bins and Lab round-trip noise never moves it.
"""

import numpy as np

from colorfool.colorspace import srgb_to_lab
from colorfool.oracle import HIST_BINS, FunctionOracle, ReferenceClassifier, softmax

# ADE20K ids used by the bundled category mapping.
SKY, TREE, PERSON, WALL, ROAD = 3, 5, 13, 1, 7

PALETTE = {
    SKY: (112, 176, 208),
    TREE: (80, 144, 48),
    WALL: (144, 112, 80),
    ROAD: (176, 176, 144),
    PERSON: (208, 144, 112),
}

JITTER = 6


def _paint(img, labels, rng):
    for label, color in PALETTE.items():
        mask = labels == label
        if not mask.any():
            continue
        base = np.asarray(color) + rng.integers(-JITTER // 2, JITTER // 2, size=3, endpoint=True)
        noise = rng.integers(-JITTER // 2, JITTER // 2, size=(int(mask.sum()), 3), endpoint=True)
        img[mask] = base + noise
    return img


def scene(rng, height=32, width=32, person_only=False):
    """Return ``(rgb, labels)`` for one random synthetic scene."""
    labels = np.full((height, width), PERSON if person_only else WALL, dtype=np.int64)
    if not person_only:
        sky_rows = int(rng.integers(height // 5, height // 3, endpoint=True))
        labels[:sky_rows] = SKY
        road_rows = int(rng.integers(height // 6, height // 4, endpoint=True))
        labels[height - road_rows:] = ROAD
        tree_w = int(rng.integers(width // 6, width // 3, endpoint=True))
        tree_x = int(rng.integers(0, width - tree_w))
        labels[sky_rows: height - road_rows, tree_x: tree_x + tree_w] = TREE
        pw = max(2, width // 6)
        ph = max(3, height // 3)
        px = int(rng.integers(0, width - pw))
        labels[height - road_rows - ph: height - road_rows, px: px + pw] = PERSON
    img = np.zeros((height, width, 3), dtype=np.int64)
    return _paint(img, labels, rng).astype(np.uint8), labels


def scenes(n, seed=0, person_only=False, **kwargs):
    rng = np.random.default_rng(seed)
    return [scene(rng, person_only=person_only, **kwargs) for _ in range(n)]


def palette_bins():
    """Histogram-feature indices occupied by the clean palette."""
    occupied = set()
    for color in PALETTE.values():
        for channel, value in enumerate(color):
            occupied.add(channel * HIST_BINS + value // 32)
    return sorted(occupied)


def template_classifier(margin=0.4, scale=20.0):
    """Two-class reference classifier that recognises the clean palette.

    Class 0 scores ``scale`` times the histogram mass inside palette bins
    (3.0 for a clean scene); class 1 is a constant ``scale * (3 - margin)``.
    Moving more than ``margin`` of the total channel mass out of the palette
    bins flips the prediction to class 1.
    """
    weights = np.zeros((2, 3 * HIST_BINS))
    weights[0, palette_bins()] = scale
    bias = np.array([0.0, scale * (3.0 - margin)])
    return ReferenceClassifier(weights, bias, name="template")


def mean_shift_oracle(clean, threshold=5.0, name="mean-shift"):
    """Three-class oracle keyed on the change of the mean a channel.

    Class 0 while ``|mean(a) - mean(a_clean)| <= threshold``; class 1 when the
    image got redder, class 2 when it got greener.
    """
    ref = srgb_to_lab(clean)[..., 1].mean()

    def predict(img):
        shift = srgb_to_lab(img)[..., 1].mean() - ref
        label = 0 if abs(shift) <= threshold else (1 if shift > 0 else 2)
        scores = np.zeros(3)
        scores[label] = 8.0
        return softmax(scores)

    return FunctionOracle(predict, name=name)


def constant_oracle(n_classes=3, label=0, name="constant"):
    scores = np.zeros(n_classes)
    scores[label] = 5.0
    probs = softmax(scores)
    return FunctionOracle(lambda img: probs, name=name)
