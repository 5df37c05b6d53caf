"""Patch traversal plans and per-patch semantics."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data.raster import Rect, check_rect, crop

KINDS = ("five-crop", "zig-zag")


@dataclass(frozen=True)
class TraversalPlan:
    kind: str
    ps: int
    dims: tuple[int, int]
    rects: tuple[Rect, ...]
    circular: bool = False  # five-crop only: sequences may start at any rotation

    @property
    def G(self) -> int:
        return len(self.rects)

    def crops(self, grid: np.ndarray) -> list[np.ndarray]:
        if grid.shape[:2] != self.dims:
            raise ValueError(f"grid dims {grid.shape[:2]} differ from plan dims {self.dims}")
        return [crop(grid, r) for r in self.rects]

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "ps": self.ps, "dims": list(self.dims),
                           "rects": [list(r) for r in self.rects], "circular": self.circular})

    @classmethod
    def from_json(cls, text: str) -> "TraversalPlan":
        d = json.loads(text)
        return cls(d["kind"], d["ps"], tuple(d["dims"]), tuple(tuple(r) for r in d["rects"]), d.get("circular", False))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "TraversalPlan":
        return cls.from_json(Path(path).read_text())


def zigzag_rects(dims: tuple[int, int], ps: int) -> list[Rect]:
    H, W = dims
    if ps <= 0 or H % ps or W % ps:
        raise ValueError(f"dims {H}x{W} are not divisible by patch size {ps}")
    rects = []
    for r in range(H // ps):
        cols = range(W // ps) if r % 2 == 0 else reversed(range(W // ps))
        rects.extend((r * ps, c * ps, ps, ps) for c in cols)
    return rects


def anchor_rects(anchors, ps: int) -> list[Rect]:
    """ps x ps rects centred on (row, col) anchors (top = row - ps // 2)."""
    return [(int(y) - ps // 2, int(x) - ps // 2, ps, ps) for y, x in anchors]


def build_traversal(kind: str, dims: tuple[int, int], ps: int, anchors=None, circular: bool = False) -> TraversalPlan:
    dims = tuple(int(d) for d in dims)
    if kind == "zig-zag":
        rects = zigzag_rects(dims, ps)
    elif kind == "five-crop":
        if anchors is None or len(anchors) != 5:
            raise ValueError("five-crop traversal needs exactly 5 anchor centres")
        rects = anchor_rects(anchors, ps)
    else:
        raise ValueError(f"unknown traversal kind {kind!r}; expected one of {KINDS}")
    for r in rects:
        check_rect(r, dims)
    if len(rects) < 2:
        raise ValueError(f"traversal needs at least 2 patches, got {len(rects)}")
    return TraversalPlan(kind, ps, dims, tuple(rects), circular and kind == "five-crop")


def semantics_vector(mask: np.ndarray, C: int) -> np.ndarray:
    """Fraction of pixels of each class."""
    mask = np.asarray(mask)
    if mask.size == 0:
        raise ValueError("empty mask patch")
    if mask.min() < 0 or mask.max() >= C:
        raise ValueError(f"class id {int(mask.max())} out of range for C={C}")
    return np.bincount(mask.ravel(), minlength=C) / mask.size
