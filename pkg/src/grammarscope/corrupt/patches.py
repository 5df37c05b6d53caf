"""Patch tiling, plus gather/scatter over explicit rectangles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.raster import Rect, check_rect


@dataclass
class PatchGrid:
    """Non-overlapping ps x ps tiles of a grid, row-major."""

    dims: tuple[int, int]
    ps: int
    patches: np.ndarray  # (p, ps, ps, *channels)

    @property
    def p(self) -> int:
        return self.patches.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.dims[0] // self.ps, self.dims[1] // self.ps


def unfold(grid: np.ndarray, ps: int) -> PatchGrid:
    H, W = grid.shape[:2]
    if ps <= 0 or H % ps or W % ps:
        raise ValueError(f"dims {H}x{W} are not divisible by patch size {ps}")
    gh, gw = H // ps, W // ps
    rest = grid.shape[2:]
    tiles = grid.reshape(gh, ps, gw, ps, *rest).swapaxes(1, 2)
    return PatchGrid((H, W), ps, tiles.reshape(gh * gw, ps, ps, *rest).copy())


def fold(pg: PatchGrid) -> np.ndarray:
    gh, gw = pg.shape
    ps = pg.ps
    rest = pg.patches.shape[3:]
    tiles = pg.patches.reshape(gh, gw, ps, ps, *rest).swapaxes(1, 2)
    return tiles.reshape(gh * ps, gw * ps, *rest).copy()


def check_rects(rects: list[Rect], dims: tuple[int, int]) -> None:
    """Rect lists must be non-empty, equal-sized, in bounds and non-overlapping."""
    if not rects:
        raise ValueError("empty rect list")
    size = tuple(rects[0][2:])
    cover = np.zeros(dims, dtype=bool)
    for r in rects:
        check_rect(r, dims)
        if tuple(r[2:]) != size:
            raise ValueError(f"rect {r} differs in size from {rects[0]}")
        top, left, h, w = r
        if cover[top:top + h, left:left + w].any():
            raise ValueError(f"rect {r} overlaps another rect")
        cover[top:top + h, left:left + w] = True


def gather(grid: np.ndarray, rects: list[Rect]) -> np.ndarray:
    return np.stack([grid[t:t + h, l:l + w] for t, l, h, w in rects])


def scatter(grid: np.ndarray, rects: list[Rect], patches: np.ndarray) -> np.ndarray:
    out = grid.copy()
    for (t, l, h, w), patch in zip(rects, patches):
        out[t:t + h, l:l + w] = patch
    return out
