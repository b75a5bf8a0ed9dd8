"""Input-transformation defenses: re-quantization, median filter, JPEG."""

import io
from dataclasses import dataclass

import numpy as np
import PIL
from PIL import Image, features
from numpy.lib.stride_tricks import sliding_window_view

from colorfool.colorspace import check_rgb, quantize

REQUANTIZE_BITS = (1, 2, 3, 4, 5, 6, 7)
MEDIAN_KERNELS = (2, 3, 5)
JPEG_QUALITIES = (25, 50, 75, 100)

GRID_PARAMS = {
    "requantize": REQUANTIZE_BITS,
    "median": MEDIAN_KERNELS,
    "jpeg": JPEG_QUALITIES,
}


def codec_id():
    return f"Pillow-{PIL.__version__}/libjpeg-{features.version('jpg')}"


def requantize(img, bits):
    """Reduce each channel to ``2**bits`` evenly spaced levels."""
    if bits not in REQUANTIZE_BITS:
        raise ValueError(f"bits must be in 1..7, got {bits}")
    img = check_rgb(img)
    top = 2**bits - 1
    levels = quantize(img.astype(np.float64) * top / 255.0)
    return quantize(levels.astype(np.float64) * 255.0 / top)


def median_filter(img, k):
    """Per-channel k x k median with edge replication.

    Odd kernels are centred. ``k=2`` uses the window whose top-left corner is
    the output pixel. For even windows the lower of the two middle values is
    taken, so the output stays integer.
    """
    if k not in MEDIAN_KERNELS:
        raise ValueError(f"kernel must be one of {MEDIAN_KERNELS}, got {k}")
    img = check_rgb(img)
    h, w = img.shape[:2]
    if h < k or w < k:
        raise ValueError(f"image {h}x{w} is smaller than the {k}x{k} kernel")
    if k % 2:
        pad = ((k // 2, k // 2), (k // 2, k // 2), (0, 0))
    else:
        pad = ((0, k - 1), (0, k - 1), (0, 0))
    padded = np.pad(img, pad, mode="edge")
    windows = sliding_window_view(padded, (k, k), axis=(0, 1)).reshape(h, w, 3, k * k)
    rank = (k * k - 1) // 2
    return np.partition(windows, rank, axis=-1)[..., rank]


def jpeg_roundtrip(img, quality):
    """Encode as baseline JPEG at ``quality`` and decode again.

    Chroma is subsampled 4:2:0 below quality 100 and kept at 4:4:4 at 100.
    """
    if quality not in JPEG_QUALITIES:
        raise ValueError(f"quality must be one of {JPEG_QUALITIES}, got {quality}")
    img = check_rgb(img)
    buf = io.BytesIO()
    subsampling = 0 if quality == 100 else 2
    Image.fromarray(img, "RGB").save(
        buf, format="JPEG", quality=quality, subsampling=subsampling, optimize=False
    )
    buf.seek(0)
    with Image.open(buf) as im:
        out = np.array(im.convert("RGB"))
    if out.shape != img.shape:
        raise RuntimeError(f"JPEG round-trip changed shape {img.shape} -> {out.shape}")
    return out


_FILTERS = {"requantize": requantize, "median": median_filter, "jpeg": jpeg_roundtrip}


@dataclass(frozen=True, order=True)
class FilterSpec:
    kind: str
    param: int

    def __post_init__(self):
        if self.kind not in GRID_PARAMS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.param not in GRID_PARAMS[self.kind]:
            raise ValueError(
                f"{self.kind} parameter must be one of {GRID_PARAMS[self.kind]}, got {self.param}"
            )

    @classmethod
    def parse(cls, text):
        kind, sep, param = text.strip().partition(":")
        if not sep:
            raise ValueError(f"filter must look like kind:param, got {text!r}")
        try:
            value = int(param)
        except ValueError:
            raise ValueError(f"filter parameter must be an integer, got {text!r}") from None
        return cls(kind.strip(), value)

    def __str__(self):
        return f"{self.kind}:{self.param}"

    def __call__(self, img):
        return _FILTERS[self.kind](img, self.param)


DEFAULT_GRID = tuple(FilterSpec(kind, p) for kind, params in GRID_PARAMS.items() for p in params)


def parse_grid(text):
    """Parse a comma-separated list such as ``"median:3,jpeg:75"``."""
    specs = [FilterSpec.parse(part) for part in text.split(",") if part.strip()]
    if not specs:
        raise ValueError("filter grid is empty")
    return tuple(specs)
