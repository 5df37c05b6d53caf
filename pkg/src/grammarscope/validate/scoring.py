"""Grammar scores for mask sequences: residuals against predicted semantics and mIoU."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..syntax.model import SyntaxModel, predict, step_residuals
from ..syntax.plan import TraversalPlan, semantics_vector

METHODS = ("baseline", "avg", "miou")
# higher score means "more likely corrupted" for residuals, lower for mIoU
HIGHER_IS_CORRUPT = {"baseline": True, "avg": True, "miou": False}


@dataclass
class AveragedSemantics:
    masks: list[np.ndarray]  # per step, modal class per pixel
    vectors: np.ndarray  # (G, C)

    @property
    def G(self) -> int:
        return len(self.masks)


def averaged_semantics(masks, plan: TraversalPlan, C: int) -> AveragedSemantics:
    """Per-step pixelwise modal class (lowest id on ties) and mean semantics."""
    masks = list(masks)
    if not masks:
        raise ValueError("empty training set")
    counts = [np.zeros((C,) + r[2:], dtype=np.int64) for r in plan.rects]
    vec = np.zeros((plan.G, C))
    for mask in masks:
        for t, patch in enumerate(plan.crops(np.asarray(mask))):
            if patch.max() >= C:
                raise ValueError(f"class id {int(patch.max())} out of range for C={C}")
            for c in np.unique(patch):
                counts[t][c] += patch == c
            vec[t] += semantics_vector(patch, C)
    vec /= vec.sum(axis=1, keepdims=True)
    modal = [np.argmax(c, axis=0).astype(np.uint8) for c in counts]
    return AveragedSemantics(modal, vec)


@dataclass
class ResidualTrace:
    forward: np.ndarray  # (G,)
    backward: np.ndarray  # (G,)
    combined: np.ndarray  # (G,) forward + backward
    e_pred: float


def _traces(ef: np.ndarray, eb: np.ndarray) -> list[ResidualTrace]:
    out = []
    for f, b in zip(ef, eb):
        comb = f + b
        # exactly rounded sum, so the total does not depend on summation order
        out.append(ResidualTrace(f, b, comb, math.fsum(comb.tolist())))
    return out


def residual_baseline(model: SyntaxModel, flat: np.ndarray, sem: np.ndarray) -> list[ResidualTrace]:
    """Errors of neighbour predictions against each image's own semantics."""
    pf, pb = predict(model, flat, sem)
    return _traces(*step_residuals(pf, pb, sem))


def residual_avg(model: SyntaxModel, flat: np.ndarray, sem: np.ndarray, avg: AveragedSemantics) -> list[ResidualTrace]:
    """Errors of neighbour predictions against the training-set averaged semantics."""
    pf, pb = predict(model, flat, sem)
    targets = np.broadcast_to(avg.vectors, sem.shape)
    return _traces(*step_residuals(pf, pb, targets))


def iou_score(a: np.ndarray, b: np.ndarray) -> float:
    """Mean IoU over classes present in either mask."""
    classes = np.union1d(np.unique(a), np.unique(b))
    ious = [np.sum((a == c) & (b == c)) / np.sum((a == c) | (b == c)) for c in classes]
    return float(np.mean(ious))


def miou_validation(step_masks, avg: AveragedSemantics) -> float:
    """Mean over steps of the IoU between each patch mask and the averaged one."""
    if len(step_masks) != avg.G:
        raise ValueError(f"{len(step_masks)} steps but averaged semantics has {avg.G}")
    return float(np.mean([iou_score(m, a) for m, a in zip(step_masks, avg.masks)]))


def score_masks(method: str, masks, plan: TraversalPlan, C: int, model: SyntaxModel | None,
                avg: AveragedSemantics | None) -> np.ndarray:
    """One score per full-image mask under the named method."""
    from ..syntax.model import prepare_sequences

    masks = list(masks)
    if method == "miou":
        return np.array([miou_validation(plan.crops(np.asarray(m)), avg) for m in masks])
    flat, sem = prepare_sequences(masks, plan, C, model.mask_res)
    if method == "baseline":
        traces = residual_baseline(model, flat, sem)
    elif method == "avg":
        traces = residual_avg(model, flat, sem, avg)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return np.array([t.e_pred for t in traces])


def solve_puzzle(scores, method: str) -> int:
    """Index of the copy judged correct; ties go to the lowest index."""
    scores = np.asarray(scores)
    return int(np.argmin(scores) if HIGHER_IS_CORRUPT[method] else np.argmax(scores))
