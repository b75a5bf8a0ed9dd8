# Color spaces used by the attacks.
#
# ColorFool perturbs the a/b (chroma) planes of CIELAB and leaves L alone;
# SemanticAdv shifts hue and saturation in HSV. Both go back to 8-bit RGB
# through clamping and rounding.

import numpy as np

from colorfool.colorspace import hsv_to_rgb, lab_to_srgb, rgb_to_hsv, srgb_to_lab

# A few reference colors, as a 1 x 5 image.
swatch = np.array([[[255, 255, 255], [0, 0, 0], [255, 0, 0], [0, 128, 0], [30, 90, 200]]], np.uint8)

lab = srgb_to_lab(swatch)
for rgb, (L, a, b) in zip(swatch[0], lab[0]):
    print(f"RGB {tuple(int(v) for v in rgb)!s:16} -> L={L:6.2f} a={a:7.2f} b={b:7.2f}")

# a < 0 is green, a > 0 red; b < 0 is blue, b > 0 yellow.
# Shift the blue swatch toward green by lowering a, keeping lightness.
shifted = lab.copy()
shifted[0, 4, 1] -= 40
print("shifted blue:", lab_to_srgb(shifted)[0, 4], "from", swatch[0, 4])

# Lab values outside the nominal range are clamped, out-of-gamut colors land
# on the RGB boundary.
print("a=200 clamps:", lab_to_srgb(np.array([[[50.0, 200.0, 0.0]]]))[0, 0])

# Round trips over a 16-level grid lose at most one level per channel.
levels = np.linspace(0, 255, 16).round().astype(np.uint8)
grid = np.stack(np.meshgrid(levels, levels, levels, indexing="ij"), -1).reshape(16, 256, 3)
print("max Lab round-trip error:", np.abs(lab_to_srgb(srgb_to_lab(grid)).astype(int) - grid).max())
print("max HSV round-trip error:", np.abs(hsv_to_rgb(rgb_to_hsv(grid)).astype(int) - grid).max())
