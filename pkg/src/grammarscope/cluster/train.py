"""Supervised prior fine-tuning, two-view clustering training and segmentation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data.raster import (
    GeometricSpec,
    PhotometricSpec,
    apply_geometric,
    apply_photometric,
    resize_image,
    resize_mask,
    sample_geometric,
    sample_photometric,
    scale_geometric,
)
from ..numcore import Adam, Tensor, ops
from .kmeans import assign, minibatch_kmeans
from .losses import cross_entropy, picie_losses
from .models import Extractor, LinearClassifier

log = logging.getLogger(__name__)


def _batches(n: int, size: int, rng: np.random.Generator | None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    return [order[i:i + size] for i in range(0, n, size)]


def _feature_targets(masks: np.ndarray, fdims: tuple[int, int]) -> np.ndarray:
    return np.stack([resize_mask(m, fdims) for m in masks])


def finetune_prior(
    extractor: Extractor,
    classifier: LinearClassifier,
    images: np.ndarray,
    masks: np.ndarray,
    epochs: int = 10,
    lr: float = 1e-3,
    batch_size: int = 8,
    seed: int = 0,
) -> list[float]:
    """Train extractor + classifier on labelled pixels; returns per-epoch mean loss.

    Masks are nearest-downsampled to the feature resolution, so the loss is
    the mean pixel cross-entropy at 1/4 scale.
    """
    images, masks = np.asarray(images), np.asarray(masks)
    if len(images) == 0:
        raise ValueError("empty labelled subset")
    if len(images) != len(masks):
        raise ValueError(f"{len(images)} images but {len(masks)} masks")
    C = classifier.num_classes
    if masks.max() >= C:
        raise ValueError(f"mask class {int(masks.max())} out of range for a {C}-class classifier")
    targets = _feature_targets(masks, extractor.feature_dims(images.shape[1:3]))
    opt = Adam({**{f"e.{k}": v for k, v in extractor.params.items()},
                **{f"c.{k}": v for k, v in classifier.params.items()}}, lr=lr)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        total, count = 0.0, 0
        for idx in _batches(len(images), batch_size, rng):
            loss = cross_entropy(classifier.forward(extractor.forward(images[idx])), targets[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        history.append(total / count)
        log.info("prior epoch %d loss %.4f", epoch + 1, history[-1])
    return history


def finetune_patch_detector(
    extractor: Extractor,
    classifier: LinearClassifier,
    crops: list[np.ndarray],
    crop_masks: list[np.ndarray],
    num_classes: int,
    dims: tuple[int, int] = (64, 64),
    epochs: int = 5,
    lr: float = 1e-3,
    batch_size: int = 8,
    seed: int = 0,
) -> list[float]:
    """Fine-tune on patch crops resized to the training resolution.

    ``crop_masks`` are the stage-1 masks cropped with the same rects.
    """
    if num_classes != classifier.num_classes:
        raise ValueError(f"masks use {num_classes} classes but the classifier has {classifier.num_classes}")
    images = np.stack([resize_image(c, dims) for c in crops])
    masks = np.stack([resize_mask(m, dims) for m in crop_masks])
    return finetune_prior(extractor, classifier, images, masks, epochs, lr, batch_size, seed)


# -- segmentation --------------------------------------------------------------

def segment(
    extractor: Extractor,
    images: np.ndarray,
    centroids: np.ndarray | None = None,
    classifier: LinearClassifier | None = None,
    batch_size: int = 32,
) -> np.ndarray:
    """Per-pixel labels at input resolution (nearest upsampling).

    Uses nearest centroid by cosine distance, or classifier argmax when a
    classifier is given instead.
    """
    if (centroids is None) == (classifier is None):
        raise ValueError("pass exactly one of centroids or classifier")
    images = np.asarray(images)
    single = images.ndim == 3
    if single:
        images = images[None]
    H, W = images.shape[1:3]
    out = np.empty((len(images), H, W), dtype=np.uint8)
    for i in range(0, len(images), batch_size):
        z = extractor.forward(images[i:i + batch_size])
        if classifier is not None:
            lab = np.argmax(classifier.forward(z).data, axis=-1)
        else:
            d = z.shape[-1]
            lab = assign(z.data.reshape(-1, d), centroids)[0].reshape(z.shape[:3])
        for j, l in enumerate(lab):
            out[i + j] = resize_mask(l, (H, W))
    return out[0] if single else out


def merge_clusters(labels: np.ndarray, mapping) -> np.ndarray:
    mapping = np.asarray(mapping)
    if labels.size and labels.max() >= len(mapping):
        raise ValueError(f"cluster id {int(labels.max())} has no entry in a {len(mapping)}-cluster merge map")
    return mapping[labels].astype(np.uint8)


def majority_merge_map(cluster_labels: np.ndarray, class_labels: np.ndarray, K: int, C: int) -> np.ndarray:
    """Map each cluster to the class it overlaps most (lowest id on ties).

    Clusters that never occur map to class 0.
    """
    joint = np.zeros((K, C), dtype=np.int64)
    np.add.at(joint, (np.ravel(cluster_labels), np.ravel(class_labels)), 1)
    mapping = np.argmax(joint, axis=1)
    missing = sorted(set(range(C)) - set(mapping.tolist()))
    if missing:
        log.warning("merge map is not surjective; classes %s receive no cluster", missing)
    return mapping


def write_merge_map(path, mapping) -> None:
    Path(path).write_text("".join(f"{k} {int(c)}\n" for k, c in enumerate(mapping)))


def read_merge_map(path) -> np.ndarray:
    pairs = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        k, c = line.split()
        pairs[int(k)] = int(c)
    K = max(pairs) + 1 if pairs else 0
    if sorted(pairs) != list(range(K)):
        raise ValueError(f"{path}: merge map must cover clusters 0..{K - 1} exactly")
    return np.array([pairs[k] for k in range(K)], dtype=np.int64)


# -- two-view clustering training ----------------------------------------------

def two_stream_features(
    extractor: Extractor,
    image: np.ndarray,
    p1: PhotometricSpec,
    p2: PhotometricSpec,
    g2: GeometricSpec,
    ratio: float = 0.25,
) -> tuple[Tensor, Tensor]:
    """z1 = G2 (scaled) applied to f(P1 x); z2 = f(G2(P2 x)); equal dims."""
    z1_full = extractor.forward(apply_photometric(image, p1))
    small = scale_geometric(g2, ratio)
    top, left, h, w = small.rect
    fh, fw = z1_full.shape[1:3]
    if top < 0 or left < 0 or top + h > fh or left + w > fw:
        raise ValueError(f"scaled rect {small.rect} does not fit the {fh}x{fw} feature map")
    cols = slice(left + w - 1, left - 1 if left else None, -1) if small.flip else slice(left, left + w)
    z1 = z1_full[:, top:top + h, cols]
    z2 = extractor.forward(apply_geometric(apply_photometric(image, p2), g2))
    if z1.shape != z2.shape:
        raise ValueError(f"view dims differ after scaling: {z1.shape} vs {z2.shape}")
    return z1, z2


@dataclass
class PicieConfig:
    K: int = 10
    km_init: int = 4  # batches of features per clustering
    km_num: int = 20  # batches between re-clusterings
    km_iter: int = 20
    epochs: int = 5
    lr: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    gain: float = 0.15  # photometric jitter amplitudes
    bias: float = 0.08
    min_crop: float = 0.5
    flip_prob: float = 0.5


@dataclass
class PicieResult:
    centroids: np.ndarray  # view-1 bank, used for segmentation
    centroids2: np.ndarray
    log: list[dict] = field(default_factory=list)


def _sample_views(rng, image_dims, cfg: PicieConfig):
    p1 = sample_photometric(rng, cfg.gain, cfg.bias)
    p2 = sample_photometric(rng, cfg.gain, cfg.bias)
    g2 = sample_geometric(rng, image_dims, cfg.min_crop, multiple=Extractor.stride, flip_prob=cfg.flip_prob)
    return p1, p2, g2


def _batch_views(extractor, images, idx, rng, cfg):
    z1s, z2s = [], []
    for i in idx:
        p1, p2, g2 = _sample_views(rng, images.shape[1:3], cfg)
        z1, z2 = two_stream_features(extractor, images[i], p1, p2, g2, 1.0 / Extractor.stride)
        d = z1.shape[-1]
        z1s.append(ops.reshape(z1, (-1, d)))
        z2s.append(ops.reshape(z2, (-1, d)))
    return ops.concat(z1s, axis=0), ops.concat(z2s, axis=0)


def train_picie(extractor: Extractor, images: np.ndarray, cfg: PicieConfig) -> PicieResult:
    """Alternate two-view clustering and DC-loss training of ``extractor``.

    Before the first epoch, features from ``km_init`` batches are clustered
    per view. Each training batch is labelled by the current centroids and
    trained on the within + cross loss; every ``km_num`` batches the banks
    are re-clustered (warm-started) from the features of the most recent
    ``km_init`` batches.
    """
    if cfg.km_init < 1:
        raise ValueError("km_init must be at least 1")
    if cfg.km_num < 1:
        raise ValueError("km_num must be at least 1")
    images = np.asarray(images)
    if len(images) == 0:
        raise ValueError("no training images")
    rng = np.random.default_rng(cfg.seed)

    buf1, buf2 = [], []
    for idx in _batches(len(images), cfg.batch_size, rng)[:cfg.km_init]:
        z1, z2 = _batch_views(extractor, images, idx, rng, cfg)
        buf1.append(z1.data)
        buf2.append(z2.data)
    km_seed = int(rng.integers(2**31))
    mu1 = minibatch_kmeans(buf1, cfg.K, iters=cfg.km_iter, seed=km_seed).centroids
    mu2 = minibatch_kmeans(buf2, cfg.K, iters=cfg.km_iter, seed=km_seed + 1).centroids
    result = PicieResult(mu1, mu2)

    opt = Adam(extractor.params, lr=cfg.lr)
    step = 0
    for epoch in range(cfg.epochs):
        sums = np.zeros(3)
        n = 0
        for idx in _batches(len(images), cfg.batch_size, rng):
            z1, z2 = _batch_views(extractor, images, idx, rng, cfg)
            y1 = assign(z1.data, mu1)[0]
            y2 = assign(z2.data, mu2)[0]
            within, cross, total = picie_losses(z1, z2, y1, y2, mu1, mu2)
            opt.zero_grad()
            total.backward()
            opt.step()
            sums += (within.item(), cross.item(), total.item())
            n += 1
            buf1 = (buf1 + [z1.data])[-cfg.km_init:]
            buf2 = (buf2 + [z2.data])[-cfg.km_init:]
            step += 1
            if step % cfg.km_num == 0:
                mu1 = minibatch_kmeans(buf1, cfg.K, init=mu1, iters=cfg.km_iter).centroids
                mu2 = minibatch_kmeans(buf2, cfg.K, init=mu2, iters=cfg.km_iter).centroids
        row = {"epoch": epoch + 1, "L_within": sums[0] / n, "L_cross": sums[1] / n, "L_total": sums[2] / n}
        result.log.append(row)
        log.info("picie epoch %d within %.4f cross %.4f total %.4f", epoch + 1, row["L_within"], row["L_cross"], row["L_total"])
    result.centroids, result.centroids2 = mu1, mu2
    return result


def write_loss_log(path, rows: list[dict]) -> None:
    lines = ["epoch,L_within,L_cross,L_total"]
    lines += [f"{r['epoch']},{r['L_within']:.8f},{r['L_cross']:.8f},{r['L_total']:.8f}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")
