"""Training the syntax model on masks of correct images."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..numcore import Adam, parse_schedule
from .model import SyntaxModel, bilstm_forward, encode, prepare_sequences, syntax_loss
from .plan import TraversalPlan

log = logging.getLogger(__name__)


@dataclass
class SyntaxConfig:
    epochs: int = 40
    lr: float = 1e-4
    schedule: str = "step:20:0.1"
    batch_size: int = 16
    seed: int = 0
    mask_res: int = 64
    embed_dim: int = 128
    hidden: int | None = None  # defaults to embed_dim + C
    circular: bool = False  # random rotation of five-crop sequences


def train_syntax(masks, plan: TraversalPlan, num_classes: int, cfg: SyntaxConfig,
                 model: SyntaxModel | None = None) -> tuple[SyntaxModel, list[float]]:
    """Fit the model by Adam on the neighbour-semantics MSE; returns (model, per-epoch loss)."""
    flat, sem = prepare_sequences(masks, plan, num_classes, cfg.mask_res)
    return train_on_sequences(flat, sem, num_classes, cfg, model, rotate=cfg.circular and plan.kind == "five-crop")


def train_on_sequences(flat: np.ndarray, sem: np.ndarray, num_classes: int, cfg: SyntaxConfig,
                       model: SyntaxModel | None = None, rotate: bool = False) -> tuple[SyntaxModel, list[float]]:
    if len(flat) == 0:
        raise ValueError("empty training set")
    if model is None:
        model = SyntaxModel(num_classes, cfg.mask_res, cfg.embed_dim, cfg.hidden, seed=cfg.seed)
    schedule = parse_schedule(cfg.schedule)
    opt = Adam(model.params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    N, G = flat.shape[:2]
    history = []
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr * schedule(epoch)
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            f, s = flat[idx], sem[idx]
            if rotate:
                shift = rng.integers(G, size=len(idx))
                roll = (np.arange(G)[None, :] + shift[:, None]) % G
                f = np.take_along_axis(f, roll[:, :, None], axis=1)
                s = np.take_along_axis(s, roll[:, :, None], axis=1)
            pf, pb = bilstm_forward(model, encode(model, f, s))
            loss = syntax_loss(pf, pb, s)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / N)
        log.info("syntax epoch %d loss %.6f lr %.2e", epoch + 1, history[-1], opt.lr)
    return model, history


def write_syntax_log(path, losses: list[float]) -> None:
    lines = ["epoch,loss"] + [f"{i + 1},{v:.8f}" for i, v in enumerate(losses)]
    Path(path).write_text("\n".join(lines) + "\n")
