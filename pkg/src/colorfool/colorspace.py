"""Conversions between sRGB, CIELAB (D65) and HSV.

Images are numpy arrays of shape ``(height, width, 3)``. RGB images are
``uint8``; Lab and HSV images are ``float64``. Lab planes are ordered
``(L, a, b)`` with L in [0, 100] and a, b in [-128, 127]; HSV planes are
``(H, S, V)`` with every channel in [0, 1] and H taken modulo 1.
"""

import numpy as np

# D65 reference white (2 degree observer), Y normalised to 1.
WHITE_D65 = np.array([0.95047, 1.0, 1.08883])

# Linear sRGB -> XYZ (IEC 61966-2-1, D65).
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)

_DELTA = 6.0 / 29.0

L_RANGE = (0.0, 100.0)
AB_RANGE = (-128.0, 127.0)


def check_rgb(img):
    """Validate an RGB image and return it as a ``uint8`` array.

    Integer arrays outside [0, 255] and arrays of the wrong shape raise
    ``ValueError``; nothing is silently clipped.
    """
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"RGB image must have shape (h, w, 3), got {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("RGB image must be non-empty")
    if arr.dtype == np.uint8:
        return arr
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"RGB image must hold integers, got dtype {arr.dtype}")
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("RGB values must lie in [0, 255]")
    return arr.astype(np.uint8)


def quantize(values):
    """Clamp to [0, 255] and round half away from zero to ``uint8``.

    This is the final pixel quantizer applied to every generated image.
    """
    clipped = np.clip(np.asarray(values, dtype=np.float64), 0.0, 255.0)
    return np.floor(clipped + 0.5).astype(np.uint8)


def _srgb_decode(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _srgb_encode(c):
    c = np.clip(c, 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _f_inv(t):
    return np.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def srgb_to_lab(img):
    """Convert an sRGB ``uint8`` image to CIELAB.

    Returns a float64 array of shape ``(h, w, 3)``; a and b are clamped to
    [-128, 127].
    """
    rgb = check_rgb(img).astype(np.float64) / 255.0
    xyz = _srgb_decode(rgb) @ _RGB_TO_XYZ.T / WHITE_D65
    fx, fy, fz = (_f(xyz[..., i]) for i in range(3))
    lab = np.empty(rgb.shape, dtype=np.float64)
    lab[..., 0] = np.clip(116.0 * fy - 16.0, *L_RANGE)
    lab[..., 1] = np.clip(500.0 * (fx - fy), *AB_RANGE)
    lab[..., 2] = np.clip(200.0 * (fy - fz), *AB_RANGE)
    return lab


def lab_to_srgb(lab):
    """Convert a CIELAB image back to quantized sRGB.

    Lab inputs are first clamped to their nominal ranges. Colors outside the
    sRGB gamut land on the clamped RGB boundary.
    """
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim != 3 or lab.shape[2] != 3:
        raise ValueError(f"Lab image must have shape (h, w, 3), got {lab.shape}")
    L = np.clip(lab[..., 0], *L_RANGE)
    a = np.clip(lab[..., 1], *AB_RANGE)
    b = np.clip(lab[..., 2], *AB_RANGE)
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    xyz = np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * WHITE_D65
    rgb = _srgb_encode(xyz @ _XYZ_TO_RGB.T)
    return quantize(rgb * 255.0)


def rgb_to_hsv(img):
    """Hexcone HSV of an RGB image. Achromatic pixels get H = 0."""
    rgb = check_rgb(img).astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)

    safe_c = np.where(c > 0, c, 1.0)
    h = np.zeros_like(v)
    r_max = (v == r) & (c > 0)
    g_max = (v == g) & (c > 0) & ~r_max
    b_max = (c > 0) & ~r_max & ~g_max
    h[r_max] = ((g - b) / safe_c)[r_max] % 6.0
    h[g_max] = ((b - r) / safe_c)[g_max] + 2.0
    h[b_max] = ((r - g) / safe_c)[b_max] + 4.0
    h = (h / 6.0) % 1.0
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv):
    """Inverse of :func:`rgb_to_hsv`, quantized to ``uint8``.

    H wraps modulo 1; S and V are clamped to [0, 1].
    """
    hsv = np.asarray(hsv, dtype=np.float64)
    if hsv.ndim != 3 or hsv.shape[2] != 3:
        raise ValueError(f"HSV image must have shape (h, w, 3), got {hsv.shape}")
    h = (hsv[..., 0] % 1.0) * 6.0
    s = np.clip(hsv[..., 1], 0.0, 1.0)
    v = np.clip(hsv[..., 2], 0.0, 1.0)

    sector = np.floor(h).astype(int) % 6
    frac = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * frac)
    t = v * (1.0 - s * (1.0 - frac))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    rgb = np.stack(
        [
            np.choose(sector, choices_r),
            np.choose(sector, choices_g),
            np.choose(sector, choices_b),
        ],
        axis=-1,
    )
    return quantize(rgb * 255.0)
