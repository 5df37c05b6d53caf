"""Raster helpers shared by images (H, W, 3) and label masks (H, W).

Rectangles are ``(top, left, height, width)`` in pixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Rect = tuple[int, int, int, int]


def check_rect(rect: Rect, dims: tuple[int, int]) -> None:
    top, left, h, w = rect
    H, W = dims
    if h <= 0 or w <= 0 or top < 0 or left < 0 or top + h > H or left + w > W:
        raise ValueError(f"rect {rect} out of bounds for {H}x{W}")


def crop(grid: np.ndarray, rect: Rect) -> np.ndarray:
    check_rect(rect, grid.shape[:2])
    top, left, h, w = rect
    return grid[top:top + h, left:left + w].copy()


def paste(grid: np.ndarray, rect: Rect, patch: np.ndarray) -> None:
    check_rect(rect, grid.shape[:2])
    top, left, h, w = rect
    grid[top:top + h, left:left + w] = patch


def hflip(grid: np.ndarray) -> np.ndarray:
    return grid[:, ::-1].copy()


def _bilinear_axis(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, (src - i0)


def resize_image(image: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with half-pixel centres (edge-clamped)."""
    H, W = image.shape[:2]
    h, w = dims
    if (h, w) == (H, W):
        return image.copy()
    y0, y1, wy = _bilinear_axis(H, h)
    x0, x1, wx = _bilinear_axis(W, w)
    img = image.astype(np.float64)
    extra = (None,) * (image.ndim - 2)
    wy = wy[(slice(None), None) + extra]
    wx = wx[(None, slice(None)) + extra]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(image.dtype)


def _nearest_axis(n_in: int, n_out: int) -> np.ndarray:
    return np.minimum(np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(int), n_in - 1)


def resize_mask(mask: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resize; never invents class ids."""
    H, W = mask.shape[:2]
    if tuple(dims) == (H, W):
        return mask.copy()
    return mask[_nearest_axis(H, dims[0])][:, _nearest_axis(W, dims[1])]


# -- photometric ---------------------------------------------------------------

@dataclass(frozen=True)
class PhotometricSpec:
    gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)


def sample_photometric(rng: np.random.Generator, gain_amp: float, bias_amp: float) -> PhotometricSpec:
    gain = 1.0 + rng.uniform(-gain_amp, gain_amp, size=3)
    bias = rng.uniform(-bias_amp, bias_amp, size=3)
    return PhotometricSpec(tuple(float(g) for g in gain), tuple(float(b) for b in bias))


def apply_photometric(image: np.ndarray, spec: PhotometricSpec) -> np.ndarray:
    out = image * np.asarray(spec.gain, dtype=image.dtype) + np.asarray(spec.bias, dtype=image.dtype)
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


def photometric(image: np.ndarray, gain_amp: float, bias_amp: float, seed: int) -> np.ndarray:
    """Per-channel colour jitter: gain in [1-a, 1+a], bias in [-b, b], clamped."""
    return apply_photometric(image, sample_photometric(np.random.default_rng(seed), gain_amp, bias_amp))


# -- geometric -----------------------------------------------------------------

@dataclass(frozen=True)
class GeometricSpec:
    rect: Rect
    flip: bool = False


def apply_geometric(grid: np.ndarray, spec: GeometricSpec) -> np.ndarray:
    out = crop(grid, spec.rect)
    return hflip(out) if spec.flip else out


def scale_geometric(spec: GeometricSpec, ratio: float) -> GeometricSpec:
    rect = tuple(int(np.floor(v * ratio + 0.5)) for v in spec.rect)
    return GeometricSpec(rect, spec.flip)


def sample_geometric(
    rng: np.random.Generator,
    dims: tuple[int, int],
    min_frac: float = 0.5,
    multiple: int = 1,
    flip_prob: float = 0.5,
) -> GeometricSpec:
    """Random crop (sides a multiple of ``multiple``, aligned likewise) + flip."""
    H, W = dims
    if H % multiple or W % multiple:
        raise ValueError(f"dims {dims} not divisible by {multiple}")
    gh, gw = H // multiple, W // multiple
    h = int(rng.integers(max(1, int(np.ceil(gh * min_frac))), gh + 1))
    w = int(rng.integers(max(1, int(np.ceil(gw * min_frac))), gw + 1))
    top = int(rng.integers(0, gh - h + 1))
    left = int(rng.integers(0, gw - w + 1))
    flip = bool(rng.random() < flip_prob)
    m = multiple
    return GeometricSpec((top * m, left * m, h * m, w * m), flip)
