"""Semantic decomposition of an image into color-sensitive and other regions.

Label maps are precomputed by an external segmenter (ADE20K label ids by
default) and mapped onto four sensitive categories. Everything else is a
non-sensitive region, one per raw label id.
"""

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class Category(enum.Enum):
    PERSON = "person"
    VEGETATION = "vegetation"
    WATER = "water"
    SKY = "sky"
    NON_SENSITIVE = "non_sensitive"


SENSITIVE = (Category.PERSON, Category.VEGETATION, Category.WATER, Category.SKY)


class LabelMapError(ValueError):
    """Label map file could not be decoded."""


class LabelMapChannelError(LabelMapError):
    """Label map file has more than one channel."""


@dataclass(frozen=True)
class RegionStats:
    """Extremes of the a and b channels over one region (Lab units)."""

    l_a: float
    u_a: float
    l_b: float
    u_b: float

    @classmethod
    def from_lab(cls, lab, mask):
        a = lab[..., 1][mask]
        b = lab[..., 2][mask]
        return cls(float(a.min()), float(a.max()), float(b.min()), float(b.max()))


@dataclass(frozen=True, eq=False)
class Region:
    mask: np.ndarray
    category: Category
    stats: RegionStats
    label: int | None = None

    @property
    def sensitive(self):
        return self.category is not Category.NON_SENSITIVE


@dataclass(frozen=True, eq=False)
class RegionSet:
    sensitive: tuple
    non_sensitive: tuple

    def __iter__(self):
        yield from self.sensitive
        yield from self.non_sensitive

    def __len__(self):
        return len(self.sensitive) + len(self.non_sensitive)

    @property
    def shape(self):
        return next(iter(self)).mask.shape


def load_label_map(path):
    """Read a single-channel PNG (8/16-bit) or PGM label map verbatim.

    Raises ``FileNotFoundError`` for a missing file, ``LabelMapError`` when the
    file cannot be decoded and ``LabelMapChannelError`` for multi-channel
    images.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"label map not found: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if len(im.getbands()) != 1:
                raise LabelMapChannelError(
                    f"label map must be single-channel, got mode {im.mode!r}: {path}"
                )
            labels = np.array(im)
    except UnidentifiedImageError as exc:
        raise LabelMapError(f"cannot decode label map {path}") from exc
    except OSError as exc:
        raise LabelMapError(f"cannot decode label map {path}: {exc}") from exc
    labels = labels.astype(np.int64)
    if labels.ndim != 2:
        raise LabelMapChannelError(f"label map must be single-channel: {path}")
    if labels.min() < 0:
        raise LabelMapError(f"label map has negative labels: {path}")
    return labels


def load_category_mapping(path=None):
    """Load a ``{label id: category name}`` JSON file.

    With no path the bundled ADE20K mapping is used. Keys starting with an
    underscore are ignored so the file can carry comments.
    """
    if path is None:
        text = resources.files("colorfool").joinpath("data/ade20k_categories.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    mapping = {}
    for key, name in raw.items():
        if key.startswith("_"):
            continue
        category = Category(name.lower())
        if category is Category.NON_SENSITIVE:
            continue
        mapping[int(key)] = category
    return mapping


def decompose(lab, labels, mapping):
    """Split a Lab image into sensitive and non-sensitive regions.

    Pixels of each sensitive category are merged into one region; every
    distinct non-sensitive label id forms its own region. Categories with no
    pixels are omitted.
    """
    lab = np.asarray(lab, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape != lab.shape[:2]:
        raise ValueError(
            f"label map shape {labels.shape} does not match image shape {lab.shape[:2]}"
        )
    ids = np.unique(labels)
    by_category = {c: [] for c in SENSITIVE}
    non_sensitive = []
    for label in ids.tolist():
        category = mapping.get(label, Category.NON_SENSITIVE)
        if category is Category.NON_SENSITIVE:
            mask = labels == label
            non_sensitive.append(
                Region(mask, category, RegionStats.from_lab(lab, mask), label)
            )
        else:
            by_category[category].append(label)

    sensitive = []
    for category in SENSITIVE:
        members = by_category[category]
        if not members:
            continue
        mask = np.isin(labels, members)
        sensitive.append(Region(mask, category, RegionStats.from_lab(lab, mask)))
    return RegionSet(tuple(sensitive), tuple(non_sensitive))


def whole_image_region(lab):
    """A single non-sensitive region covering every pixel."""
    lab = np.asarray(lab, dtype=np.float64)
    mask = np.ones(lab.shape[:2], dtype=bool)
    region = Region(mask, Category.NON_SENSITIVE, RegionStats.from_lab(lab, mask))
    return RegionSet((), (region,))
