"""Patch shuffling, blackout, blurring and puzzle creation.

Every op takes a list of grids sharing (H, W) -- typically an image and its
mask -- samples its randomness once, and applies the same corruption to all
of them. Patches are either the ps x ps tiling of the grid or, when ``rects``
is given, an explicit list of equal-sized non-overlapping rectangles (e.g.
centred on part landmarks).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..data.raster import Rect
from .patches import check_rects, fold, gather, scatter, unfold

KINDS = ("shuffle", "blackout", "blur", "puzzle")


@dataclass
class CorruptionRecord:
    kind: str
    ps: int
    seed: int
    indices: list[int] = field(default_factory=list)
    perms: list[list[int]] = field(default_factory=list)
    kernel_size: int | None = None
    sigma: float | None = None
    rects: list[Rect] | None = None
    source: str | None = None  # image the record applies to, when written to disk

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "CorruptionRecord":
        d = json.loads(line)
        if d.get("rects") is not None:
            d["rects"] = [tuple(r) for r in d["rects"]]
        return cls(**d)


def write_records(path, records: list[CorruptionRecord]) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in records))


def read_records(path) -> list[CorruptionRecord]:
    return [CorruptionRecord.from_json(l) for l in Path(path).read_text().splitlines() if l.strip()]


def derive_seed(seed: int, i: int) -> int:
    """Independent per-item seed, stable regardless of processing order."""
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


# -- patch access --------------------------------------------------------------

def _dims(grids: list[np.ndarray]) -> tuple[int, int]:
    if not grids:
        raise ValueError("no grids given")
    dims = grids[0].shape[:2]
    for g in grids[1:]:
        if g.shape[:2] != dims:
            raise ValueError(f"grids disagree on dims: {g.shape[:2]} vs {dims}")
    return dims


def _count(grids, ps, rects) -> int:
    dims = _dims(grids)
    if rects is not None:
        check_rects(rects, dims)
        return len(rects)
    if ps <= 0 or dims[0] % ps or dims[1] % ps:
        raise ValueError(f"dims {dims[0]}x{dims[1]} are not divisible by patch size {ps}")
    return (dims[0] // ps) * (dims[1] // ps)


def _remap(grid: np.ndarray, ps: int, rects, fn) -> np.ndarray:
    """Apply ``fn`` to the stacked patches of ``grid`` and write them back."""
    if rects is None:
        pg = unfold(grid, ps)
        pg.patches = fn(pg.patches)
        return fold(pg)
    return scatter(grid, rects, fn(gather(grid, rects)))


def cyclic_permutation(p: int, indices) -> np.ndarray:
    """perm[indices[j]] = indices[j+1 mod n]; identity elsewhere."""
    perm = np.arange(p)
    idx = np.asarray(indices, dtype=int)
    perm[idx] = np.roll(idx, -1)
    return perm


def permute(grids: list[np.ndarray], perm, ps: int, rects=None) -> list[np.ndarray]:
    """Slot k of every output receives patch perm[k] of the input."""
    perm = np.asarray(perm, dtype=int)
    return [_remap(g, ps, rects, lambda P: P[perm]) for g in grids]


def _sample_indices(p: int, num_patch: int, seed: int, minimum: int) -> list[int]:
    if not minimum <= num_patch <= p:
        raise ValueError(f"num_patch={num_patch} must lie in [{minimum}, {p}]")
    rng = np.random.default_rng(seed)
    return [int(i) for i in rng.choice(p, size=num_patch, replace=False)]


# -- the four corruptions ------------------------------------------------------

def shuffle_patches(grids, num_patch: int, ps: int, seed: int, rects=None):
    """Cycle the contents of ``num_patch`` randomly chosen patches.

    Returns (corrupted grids, record).
    """
    p = _count(grids, ps, rects)
    indices = _sample_indices(p, num_patch, seed, 2)
    perm = cyclic_permutation(p, indices)
    record = CorruptionRecord("shuffle", ps, seed, indices, [perm.tolist()], rects=rects)
    return permute(grids, perm, ps, rects), record


def blackout_patches(grids, num_patch: int, ps: int, seed: int, rects=None):
    """Zero ``num_patch`` random patches (class 0 on integer masks)."""
    p = _count(grids, ps, rects)
    indices = _sample_indices(p, num_patch, seed, 1)
    record = CorruptionRecord("blackout", ps, seed, indices, rects=rects)
    return [_blackout(g, indices, ps, rects) for g in grids], record


def _blackout(grid, indices, ps, rects):
    def fn(P):
        P = P.copy()
        P[indices] = 0
        return P
    return _remap(grid, ps, rects, fn)


def gaussian_kernel(kernel_size: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian, the outer product of two normalized 1-D ones."""
    if kernel_size <= 0 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and positive, got {kernel_size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = kernel_size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k1 = np.exp(-0.5 * (x / sigma) ** 2)
    k1 /= k1.sum()
    return np.outer(k1, k1)


def blur(patch: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel convolution with reflect padding confined to the patch."""
    half = kernel.shape[0] // 2
    if half == 0:
        return patch.copy()
    h, w = patch.shape[:2]
    pad = [(half, half), (half, half)] + [(0, 0)] * (patch.ndim - 2)
    padded = np.pad(patch.astype(np.float64), pad, mode="reflect")
    out = np.zeros(patch.shape, dtype=np.float64)
    for dy in range(kernel.shape[0]):
        for dx in range(kernel.shape[1]):
            out += kernel[dy, dx] * padded[dy:dy + h, dx:dx + w]
    return out.astype(patch.dtype)


def blur_patches(grids, num_patch: int, ps: int, kernel_size: int, sigma: float, seed: int, rects=None):
    """Gaussian-blur ``num_patch`` random patches of floating-point grids.

    Integer grids (label masks) pass through unchanged.
    """
    kernel = gaussian_kernel(kernel_size, sigma)
    p = _count(grids, ps, rects)
    indices = _sample_indices(p, num_patch, seed, 1)
    record = CorruptionRecord("blur", ps, seed, indices, kernel_size=kernel_size, sigma=sigma, rects=rects)
    return [_blur(g, indices, ps, rects, kernel) for g in grids], record


def _blur(grid, indices, ps, rects, kernel):
    if not np.issubdtype(grid.dtype, np.floating):
        return grid.copy()

    def fn(P):
        P = P.copy()
        for i in indices:
            P[i] = blur(P[i], kernel)
        return P
    return _remap(grid, ps, rects, fn)


def make_puzzles(grids, num_perm: int, ps: int, seed: int, rects=None):
    """Original plus ``num_perm`` fully permuted copies.

    Returns (list of copies, each a list parallel to ``grids``; record).
    """
    if num_perm < 0:
        raise ValueError("num_perm must be non-negative")
    p = _count(grids, ps, rects)
    rng = np.random.default_rng(seed)
    perms = [rng.permutation(p) for _ in range(num_perm)]
    copies = [[g.copy() for g in grids]]
    copies += [permute(grids, perm, ps, rects) for perm in perms]
    record = CorruptionRecord("puzzle", ps, seed, perms=[q.tolist() for q in perms], rects=rects)
    return copies, record


def replay(grids, record: CorruptionRecord):
    """Re-apply a recorded corruption without resampling."""
    rects = record.rects
    _count(grids, record.ps, rects)
    if record.kind == "shuffle":
        return permute(grids, record.perms[0], record.ps, rects)
    if record.kind == "blackout":
        return [_blackout(g, record.indices, record.ps, rects) for g in grids]
    if record.kind == "blur":
        kernel = gaussian_kernel(record.kernel_size, record.sigma)
        return [_blur(g, record.indices, record.ps, rects, kernel) for g in grids]
    if record.kind == "puzzle":
        return [[g.copy() for g in grids]] + [permute(grids, q, record.ps, rects) for q in record.perms]
    raise ValueError(f"unknown corruption kind {record.kind!r}")


def corrupt(grids, kind: str, num: int, ps: int, seed: int, rects=None, kernel_size: int = 7, sigma: float = 3.0):
    """Dispatch by kind; ``num`` is num_patch (or num_perm for puzzles)."""
    if kind == "shuffle":
        return shuffle_patches(grids, num, ps, seed, rects)
    if kind == "blackout":
        return blackout_patches(grids, num, ps, seed, rects)
    if kind == "blur":
        return blur_patches(grids, num, ps, kernel_size, sigma, seed, rects)
    if kind == "puzzle":
        return make_puzzles(grids, num, ps, seed, rects)
    raise ValueError(f"unknown corruption kind {kind!r}; expected one of {KINDS}")
