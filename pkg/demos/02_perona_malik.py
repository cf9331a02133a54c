#!/usr/bin/env python3
"""Edge-preserving smoothing on a noisy synthetic nodule.

Perona-Malik diffusion removes background noise while keeping the
nodule's rim sharp; plain linear diffusion (the same stencil with
conductance 1) blurs the rim away.  Writes a side-by-side PNG.
"""

import numpy as np

from noduleforge.imgproc import (DiffusionConfig, linear_diffusion,
                                 perona_malik, write_grayscale)

rng = np.random.default_rng(7)

# a bright ring on a dark, noisy background (8-bit scale)
yy, xx = np.mgrid[0:56, 0:56]
r = np.hypot(yy - 28, xx - 28)
clean = 30.0 + 180.0 * np.exp(-((r - 12.0) ** 2) / 8.0)
noisy = np.clip(clean + rng.normal(0, 20, clean.shape), 0, 255)

cfg = DiffusionConfig(iterations=12, kappa=25.0, lam=0.25,
                      conductance="exponential")
smoothed = perona_malik(noisy, cfg)
blurred = linear_diffusion(noisy, iterations=12, lam=0.25)


def stats(name, img):
    rim = img[28, 40] - img[28, 47]  # ring peak vs background
    print(f"{name:16s} std {img.std():6.2f}   rim contrast {rim:7.2f}   "
          f"sum {img.sum():12.2f}")


print("12 diffusion iterations, kappa 25:")
stats("noisy", noisy)
stats("perona-malik", smoothed)
stats("linear blur", blurred)
print("\npixel sum is conserved (Neumann borders); the rim survives under")
print("Perona-Malik but fades under the linear baseline.")

panel = np.concatenate([noisy, smoothed, blurred], axis=1)
write_grayscale("pm_comparison.png", np.clip(np.round(panel), 0, 255).astype(np.uint8))
print("\nwrote pm_comparison.png (noisy | perona-malik | linear)")
