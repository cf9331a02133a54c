"""Edge-preserving diffusion and patch conditioning.

Perona-Malik anisotropic diffusion smooths noise while leaving strong
edges alone; it is applied to nodule patches before display and,
optionally, before training.  The rest of the module is the plumbing
that moves 8-bit grayscale pixels in and out of the model's [-1, 1]
value range at the fixed 56x56 patch geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

PATCH_SIZE = 56

CONDUCTANCE_KINDS = ("exponential", "rational")


@dataclass
class DiffusionConfig:
    """Explicit-scheme diffusion settings.

    lam is the step size; the 4-neighbor explicit scheme is stable (and
    satisfies the max principle) only for lam <= 0.25.  kappa is the edge
    threshold in the intensity units of the input.
    """

    iterations: int = 5
    kappa: float = 30.0
    lam: float = 0.25
    conductance: str = "exponential"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if not 0.0 < self.lam <= 0.25:
            raise ValueError(f"lambda must be in (0, 0.25], got {self.lam}")
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.conductance not in CONDUCTANCE_KINDS:
            raise ValueError(f"conductance must be one of {CONDUCTANCE_KINDS}, "
                             f"got {self.conductance!r}")


def conductance(s: np.ndarray, kappa: float, kind: str) -> np.ndarray:
    """Diffusion flux weight g(s); g(0) = 1 for both variants."""
    r = s / kappa
    if kind == "exponential":
        return np.exp(-(r * r))
    if kind == "rational":
        return 1.0 / (1.0 + r * r)
    raise ValueError(f"conductance must be one of {CONDUCTANCE_KINDS}, got {kind!r}")


def perona_malik(image: np.ndarray, config: DiffusionConfig) -> np.ndarray:
    """Run the explicit 4-neighbor Perona-Malik scheme with Neumann borders.

    Per iteration: I += lam * sum_d g(|grad_d I|) * grad_d I over the
    directions N, S, E, W.  A missing neighbor across the border
    contributes zero flux (reflecting boundary), so the pixel sum is
    conserved exactly up to float round-off.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite pixels")

    out = img.copy()
    for _ in range(config.iterations):
        d_n = np.zeros_like(out)
        d_s = np.zeros_like(out)
        d_w = np.zeros_like(out)
        d_e = np.zeros_like(out)
        d_n[1:, :] = out[:-1, :] - out[1:, :]
        d_s[:-1, :] = out[1:, :] - out[:-1, :]
        d_w[:, 1:] = out[:, :-1] - out[:, 1:]
        d_e[:, :-1] = out[:, 1:] - out[:, :-1]
        flux = (conductance(np.abs(d_n), config.kappa, config.conductance) * d_n
                + conductance(np.abs(d_s), config.kappa, config.conductance) * d_s
                + conductance(np.abs(d_w), config.kappa, config.conductance) * d_w
                + conductance(np.abs(d_e), config.kappa, config.conductance) * d_e)
        out += config.lam * flux
    return out


def linear_diffusion(image: np.ndarray, iterations: int, lam: float = 0.25) -> np.ndarray:
    """Same stencil with g == 1: the edge-blurring baseline."""
    out = np.asarray(image, dtype=np.float64).copy()
    for _ in range(iterations):
        d_n = np.zeros_like(out)
        d_s = np.zeros_like(out)
        d_w = np.zeros_like(out)
        d_e = np.zeros_like(out)
        d_n[1:, :] = out[:-1, :] - out[1:, :]
        d_s[:-1, :] = out[1:, :] - out[:-1, :]
        d_w[:, 1:] = out[:, :-1] - out[:, 1:]
        d_e[:, :-1] = out[:, 1:] - out[:, :-1]
        out += lam * (d_n + d_s + d_w + d_e)
    return out


def normalize_to_model_range(image: np.ndarray) -> np.ndarray:
    """Map 8-bit pixels [0, 255] linearly onto [-1, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.size and (img.min() < 0 or img.max() > 255):
        raise ValueError(f"pixels outside [0, 255]: min {img.min()}, max {img.max()}")
    return img / 127.5 - 1.0


def denormalize(image: np.ndarray) -> np.ndarray:
    """Inverse of normalize_to_model_range, rounded half-up to uint8."""
    img = np.clip(np.asarray(image, dtype=np.float64), -1.0, 1.0)
    return np.floor((img + 1.0) * 127.5 + 0.5).astype(np.uint8)


def center_crop_resize(patch: np.ndarray, target: int = PATCH_SIZE) -> np.ndarray:
    """Center-crop to a square, then bilinear-resize to target x target.

    Sampling uses half-pixel centers: src = (dst + 0.5) * scale - 0.5,
    clamped to the source, so a target-sized input passes through
    unchanged.
    """
    img = np.asarray(patch, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D patch, got shape {img.shape}")
    h, w = img.shape
    if h <= 1 or w <= 1:
        raise ValueError(f"degenerate source {h}x{w}")
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    sq = img[top:top + side, left:left + side]
    if side == target:
        return sq.copy()

    scale = side / target
    coords = (np.arange(target) + 0.5) * scale - 0.5
    coords = np.clip(coords, 0.0, side - 1.0)
    i0 = np.floor(coords).astype(int)
    i1 = np.minimum(i0 + 1, side - 1)
    frac = coords - i0

    rows = sq[i0, :] * (1.0 - frac)[:, None] + sq[i1, :] * frac[:, None]
    out = rows[:, i0] * (1.0 - frac)[None, :] + rows[:, i1] * frac[None, :]
    return out


def read_grayscale(path) -> np.ndarray:
    """Load an 8-bit grayscale image (PNG or PGM) as a uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_grayscale(path, image: np.ndarray) -> None:
    """Write a uint8 array as PNG or binary PGM, chosen by extension."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {img.dtype}")
    Image.fromarray(img, mode="L").save(path)


def load_patch_pixels(path, target: int = PATCH_SIZE,
                      diffusion: DiffusionConfig | None = None) -> np.ndarray:
    """Read, optionally diffuse (8-bit scale), crop/resize and normalize."""
    raw = read_grayscale(path).astype(np.float64)
    if min(raw.shape) < 8:
        raise ValueError(f"patch {path} is {raw.shape[0]}x{raw.shape[1]}, need >= 8x8")
    if diffusion is not None:
        raw = perona_malik(raw, diffusion)
    return normalize_to_model_range(np.clip(center_crop_resize(raw, target), 0, 255))
