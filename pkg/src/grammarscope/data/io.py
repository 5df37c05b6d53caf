"""Binary PPM/PGM codecs and the tab-separated dataset manifest."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


def _parse_header(blob: bytes, magic: bytes, fields: int) -> tuple[list[int], list[str], int]:
    """Return (numeric fields, comment lines, payload offset)."""
    if blob[:2] != magic:
        raise FormatError(f"expected {magic.decode()} header, got {blob[:2]!r}")
    pos = 2
    values: list[int] = []
    comments: list[str] = []
    n = len(blob)
    while len(values) < fields:
        if pos >= n:
            raise FormatError("truncated header")
        c = blob[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            end = blob.find(b"\n", pos)
            if end < 0:
                raise FormatError("unterminated comment in header")
            comments.append(blob[pos + 1:end].decode("ascii", "replace").strip())
            pos = end + 1
        else:
            start = pos
            while pos < n and blob[pos:pos + 1].isdigit():
                pos += 1
            if start == pos:
                raise FormatError(f"unexpected byte {c!r} in header")
            values.append(int(blob[start:pos]))
    if pos >= n or not blob[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after header")
    return values, comments, pos + 1


def _payload(blob: bytes, offset: int, count: int) -> np.ndarray:
    if len(blob) - offset < count:
        raise FormatError(f"truncated payload: need {count} bytes, have {len(blob) - offset}")
    return np.frombuffer(blob, dtype=np.uint8, count=count, offset=offset)


def decode_ppm(blob: bytes) -> np.ndarray:
    (w, h, maxval), _, off = _parse_header(blob, b"P6", 3)
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} (only 255)")
    if w <= 0 or h <= 0:
        raise FormatError("image dims must be positive")
    data = _payload(blob, off, w * h * 3).reshape(h, w, 3)
    return data.astype(np.float32) / 255.0


def encode_ppm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {image.shape}")
    q = quantize(image)
    h, w, _ = q.shape
    return f"P6\n{w} {h}\n255\n".encode() + q.tobytes()


def quantize(image: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """Read a binary PPM into an (H, W, 3) float32 array in [0, 1]."""
    return decode_ppm(Path(path).read_bytes())


def save_image(path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(image))


def decode_pgm_mask(blob: bytes) -> tuple[np.ndarray, int]:
    (w, h, maxval), comments, off = _parse_header(blob, b"P5", 3)
    if maxval > 255:
        raise FormatError("16-bit PGM masks are not supported")
    classes = None
    for c in comments:
        if c.startswith("C="):
            classes = int(c[2:])
    if classes is None or classes <= 0:
        raise FormatError("mask PGM lacks a '#C=<n>' class-count comment")
    mask = _payload(blob, off, w * h).reshape(h, w).copy()
    if mask.size and int(mask.max()) >= classes:
        raise FormatError(f"class id {int(mask.max())} out of range for C={classes}")
    return mask, classes


def encode_pgm_mask(mask: np.ndarray, num_classes: int) -> bytes:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got {mask.shape}")
    if not 0 < num_classes <= 256:
        raise ValueError("num_classes must be in 1..256")
    if mask.size and (mask.min() < 0 or mask.max() >= num_classes):
        raise ValueError(f"mask values must lie in [0, {num_classes})")
    h, w = mask.shape
    return f"P5\n#C={num_classes}\n{w} {h}\n255\n".encode() + mask.astype(np.uint8).tobytes()


def load_mask(path) -> tuple[np.ndarray, int]:
    """Read a P5 mask; returns (uint8 label array, class count)."""
    return decode_pgm_mask(Path(path).read_bytes())


def save_mask(path, mask: np.ndarray, num_classes: int) -> None:
    Path(path).write_bytes(encode_pgm_mask(mask, num_classes))


# -- manifest ------------------------------------------------------------------

@dataclass
class Manifest:
    split: str
    entries: list[tuple[str, str | None]] = field(default_factory=list)
    num_classes: int = 0
    dims: tuple[int, int] = (0, 0)
    seed: int | None = None
    root: Path = Path(".")

    def __len__(self) -> int:
        return len(self.entries)

    def image_path(self, i: int) -> Path:
        return self.root / self.entries[i][0]

    def mask_path(self, i: int) -> Path | None:
        m = self.entries[i][1]
        return None if m is None else self.root / m

    def load(self, i: int) -> tuple[np.ndarray, np.ndarray | None]:
        image = load_image(self.image_path(i))
        mp = self.mask_path(i)
        mask = None
        if mp is not None:
            mask, c = load_mask(mp)
            if self.num_classes and c != self.num_classes:
                raise FormatError(f"{mp}: C={c} but manifest says {self.num_classes}")
        return image, mask


def write_manifest(path, manifest: Manifest) -> None:
    lines = [f"# split={manifest.split}", f"# classes={manifest.num_classes}", f"# dims={manifest.dims[0]}x{manifest.dims[1]}"]
    if manifest.seed is not None:
        lines.append(f"# seed={manifest.seed}")
    for img, mask in manifest.entries:
        lines.append(f"{img}\t{mask if mask is not None else '-'}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path, check_files: bool = True) -> Manifest:
    path = Path(path)
    man = Manifest(split=path.stem, root=path.parent)
    for raw in path.read_text().splitlines():
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key == "split":
                man.split = val
            elif key == "classes":
                man.num_classes = int(val)
            elif key == "dims":
                h, w = val.split("x")
                man.dims = (int(h), int(w))
            elif key == "seed":
                man.seed = int(val)
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}: malformed manifest line {line!r}")
        man.entries.append((parts[0], None if parts[1] == "-" else parts[1]))
    if check_files:
        for i in range(len(man)):
            for p in (man.image_path(i), man.mask_path(i)):
                if p is not None and not p.exists():
                    raise FormatError(f"{path}: missing file {p}")
    return man
