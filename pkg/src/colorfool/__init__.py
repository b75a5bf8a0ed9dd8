"""Semantic natural-color adversarial attacks and their evaluation."""

from colorfool.attack import (
    AttackConfig,
    AttackResult,
    ChannelRange,
    attack,
    natural_ranges,
    perturb,
    sample_non_sensitive,
    sample_sensitive,
)
from colorfool.colorspace import hsv_to_rgb, lab_to_srgb, rgb_to_hsv, srgb_to_lab
from colorfool.defenses import FilterSpec, jpeg_roundtrip, median_filter, requantize
from colorfool.oracle import (
    CachedOracle,
    ReferenceClassifier,
    RemoteOracle,
    cached,
    reference_classifier,
    remote_oracle,
    top1,
)
from colorfool.regions import Category, decompose, load_category_mapping, load_label_map, whole_image_region
from colorfool.semanticadv import semanticadv_attack

__version__ = "0.1.0"
