"""Procedural face-like and room-like datasets with a fixed part grammar.

Layouts are authored on a 64x64 reference canvas and scaled to the requested
dims. Every part is a rectangle painted in a fixed order; per-sample jitter
moves parts (or part boundaries) by a few pixels and perturbs part colours,
but never reorders the vertical bands, so the row-wise grammar of every mask
is known exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import Manifest, save_image, save_mask, write_manifest

REF = 64

FACE_CLASSES = ("background", "hair", "skin", "brows", "eyes", "nose", "mouth")
ROOM_CLASSES = (
    "wall", "floor", "ceiling", "bed", "books", "chair", "furniture",
    "objects", "picture", "sofa", "table", "tv", "window",
)


@dataclass(frozen=True)
class Part:
    cls: int | tuple[int, ...]  # tuple: one alternative drawn per sample
    rect: tuple[int, int, int, int]  # reference-canvas (top, left, h, w)
    group: str
    mode: str = "shift"  # shift | bottom | top | fixed


# paint order matters: later parts overwrite earlier ones; parts sharing a
# group share one jitter offset, so paired parts stay on the same rows
FACE_PARTS = (
    Part(2, (8, 8, 50, 48), "face", "fixed"),
    Part(1, (0, 4, 11, 56), "hair", "bottom"),
    Part(3, (17, 12, 3, 17), "brows"),
    Part(3, (17, 35, 3, 17), "brows"),
    Part(4, (25, 14, 6, 14), "eyes"),
    Part(4, (25, 36, 6, 14), "eyes"),
    Part(5, (35, 27, 9, 10), "nose"),
    Part(6, (48, 18, 6, 28), "mouth"),
)
# left eye, right eye, nose, left mouth corner, right mouth corner
FACE_ANCHORS = ((28, 21), (28, 43), (40, 32), (52, 22), (52, 42))
FACE_MAX_JITTER = 2

ROOM_PARTS = (
    Part(2, (0, 0, 12, 64), "ceiling", "bottom"),
    Part(1, (42, 0, 22, 64), "floor", "top"),
    Part(12, (16, 6, 14, 16), "window"),
    Part(8, (17, 40, 8, 14), "picture"),
    Part(6, (24, 27, 20, 10), "cabinet"),
    Part(11, (18, 27, 6, 10), "cabinet"),
    Part((3, 9), (38, 3, 16, 22), "left"),
    Part(10, (46, 34, 6, 14), "table"),
    Part(4, (43, 38, 3, 6), "table"),
    Part(5, (44, 52, 12, 8), "chair"),
    Part(7, (58, 28, 3, 5), "objects"),
)
ROOM_MAX_JITTER = 2

FACE_PALETTE = np.array([
    (0.20, 0.30, 0.45),  # background
    (0.30, 0.18, 0.08),  # hair
    (0.92, 0.75, 0.62),  # skin
    (0.35, 0.35, 0.35),  # brows
    (0.95, 0.95, 0.98),  # eyes
    (0.78, 0.52, 0.42),  # nose
    (0.75, 0.20, 0.25),  # mouth
], dtype=np.float32)

ROOM_PALETTE = np.array([
    (0.85, 0.82, 0.70),  # wall
    (0.45, 0.32, 0.20),  # floor
    (0.97, 0.97, 0.97),  # ceiling
    (0.30, 0.40, 0.70),  # bed
    (0.80, 0.10, 0.10),  # books
    (0.20, 0.20, 0.20),  # chair
    (0.55, 0.40, 0.30),  # furniture
    (0.90, 0.60, 0.10),  # objects
    (0.25, 0.55, 0.30),  # picture
    (0.50, 0.20, 0.50),  # sofa
    (0.65, 0.50, 0.35),  # table
    (0.05, 0.05, 0.08),  # tv
    (0.60, 0.80, 0.95),  # window
], dtype=np.float32)

FAMILIES = {
    "face": (FACE_PARTS, FACE_PALETTE, FACE_CLASSES, FACE_MAX_JITTER),
    "room": (ROOM_PARTS, ROOM_PALETTE, ROOM_CLASSES, ROOM_MAX_JITTER),
}


@dataclass(frozen=True)
class SyntheticSpec:
    family: str = "face"
    height: int = 64
    width: int = 64
    jitter: int = 2  # part position jitter, pixels
    color_jitter: float = 0.05  # per-part, per-channel colour offset amplitude
    noise: float = 0.02  # per-pixel gaussian noise sigma
    n: int = 100
    seed: int = 0

    @property
    def num_classes(self) -> int:
        return len(FAMILIES[self.family][2])


def _scaled(rect, H, W):
    sy, sx = H / REF, W / REF
    t, l, h, w = rect
    top, left = round(t * sy), round(l * sx)
    return top, left, max(1, round((t + h) * sy) - top), max(1, round((l + w) * sx) - left)


def validate_spec(spec: SyntheticSpec) -> None:
    if spec.family not in FAMILIES:
        raise ValueError(f"unknown family {spec.family!r}")
    if spec.height <= 0 or spec.width <= 0 or spec.n < 0:
        raise ValueError("dims must be positive and n non-negative")
    if spec.jitter < 0 or spec.color_jitter < 0 or spec.noise < 0:
        raise ValueError("jitter amplitudes must be non-negative")
    parts, _, _, max_jitter = FAMILIES[spec.family]
    j = spec.jitter
    for part in parts:
        top, left, h, w = _scaled(part.rect, spec.height, spec.width)
        if part.mode == "fixed":
            continue
        if part.mode == "bottom":
            ok = top + h + j <= spec.height and h - j >= 1
        elif part.mode == "top":
            ok = top - j >= 0 and h - j >= 1
        else:
            ok = top - j >= 0 and left - j >= 0 and top + h + j <= spec.height and left + w + j <= spec.width
        if not ok:
            raise ValueError(f"part {part.group!r} leaves the canvas under jitter {j}")
    limit = max_jitter * min(spec.height, spec.width) / REF
    if j > limit:
        raise ValueError(f"jitter {j} exceeds {limit:g}, which would break the band order")


def render(spec: SyntheticSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    parts, palette, _, _ = FAMILIES[spec.family]
    H, W = spec.height, spec.width
    mask = np.zeros((H, W), dtype=np.uint8)
    image = np.empty((H, W, 3), dtype=np.float32)
    image[:] = palette[0] + rng.uniform(-spec.color_jitter, spec.color_jitter, 3)
    offsets: dict[str, tuple[int, int]] = {}
    j = spec.jitter
    for part in parts:
        if part.group not in offsets:
            offsets[part.group] = (int(rng.integers(-j, j + 1)), int(rng.integers(-j, j + 1)))
        dy, dx = offsets[part.group]
        top, left, h, w = _scaled(part.rect, H, W)
        if part.mode == "fixed":
            pass
        elif part.mode == "bottom":
            h += dy
        elif part.mode == "top":
            top += dy
            h -= dy
        else:
            top += dy
            left += dx
        cls = part.cls
        if isinstance(cls, tuple):
            cls = cls[int(rng.integers(len(cls)))]
        colour = palette[cls] + rng.uniform(-spec.color_jitter, spec.color_jitter, 3)
        mask[top:top + h, left:left + w] = cls
        image[top:top + h, left:left + w] = colour
    if spec.noise > 0:
        image += rng.normal(0.0, spec.noise, size=image.shape).astype(np.float32)
    return np.clip(image, 0.0, 1.0).astype(np.float32), mask


def generate_samples(spec: SyntheticSpec, start: int = 0, count: int | None = None):
    """Samples ``start .. start+count``; sample i uses seed ``spec.seed + i``."""
    validate_spec(spec)
    stop = spec.n if count is None else start + count
    out = []
    for i in range(start, stop):
        out.append(render(spec, np.random.default_rng(spec.seed + i)))
    return out


def anchors(family: str, dims: tuple[int, int]) -> list[tuple[int, int]]:
    """Canonical five part centres (row, col), scaled to ``dims``."""
    if family != "face":
        raise ValueError(f"family {family!r} has no landmark anchors")
    H, W = dims
    return [(round(y * H / REF), round(x * W / REF)) for y, x in FACE_ANCHORS]


def canonical_mask(family: str, dims: tuple[int, int]) -> np.ndarray:
    spec = SyntheticSpec(family=family, height=dims[0], width=dims[1], jitter=0, color_jitter=0, noise=0, n=1)
    return render(spec, np.random.default_rng(0))[1]


def dominant_row_sequence(mask: np.ndarray) -> list[int]:
    """Most frequent class per row (lowest id on ties), consecutive repeats collapsed."""
    C = int(mask.max()) + 1
    seq: list[int] = []
    for row in mask:
        c = int(np.argmax(np.bincount(row, minlength=C)))
        if not seq or seq[-1] != c:
            seq.append(c)
    return seq


def grammar_template(family: str, dims: tuple[int, int]) -> list[int]:
    return dominant_row_sequence(canonical_mask(family, dims))


def write_synthetic(spec: SyntheticSpec, out_dir, splits: dict[str, int]) -> dict[str, Manifest]:
    """Render ``sum(splits)`` samples to PPM/PGM files plus one manifest per split.

    Samples are assigned to splits in the order given, by index.
    """
    total = sum(splits.values())
    if total > spec.n:
        raise ValueError(f"splits need {total} samples but spec.n is {spec.n}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    C = spec.num_classes
    manifests = {}
    index = 0
    for split, count in splits.items():
        man = Manifest(split=split, num_classes=C, dims=(spec.height, spec.width), seed=spec.seed, root=out)
        for image, mask in generate_samples(spec, index, count):
            name = f"{index:06d}"
            save_image(out / "images" / f"{name}.ppm", image)
            save_mask(out / "masks" / f"{name}.pgm", mask, C)
            man.entries.append((f"images/{name}.ppm", f"masks/{name}.pgm"))
            index += 1
        write_manifest(out / f"{split}.txt", man)
        manifests[split] = man
    return manifests
