"""Patch-mask encoder, bidirectional LSTM and the next/previous semantics loss."""
from __future__ import annotations

import numpy as np

from ..data.raster import resize_mask
from ..numcore import Tensor, load_weights, ops, save_weights
from .plan import TraversalPlan, semantics_vector

GATES = ("i", "f", "g", "o")


class SyntaxModel:
    """Encoder (mask_res^2 -> embed_dim), forward/backward LSTMs, two projections.

    LSTM weights ``lstm.<dir>.W_<gate>`` have shape (input + hidden, hidden)
    and act on the concatenation [x_t, h_{t-1}].
    """

    def __init__(self, num_classes: int, mask_res: int = 64, embed_dim: int = 128,
                 hidden: int | None = None, seed: int = 0, dtype=np.float32):
        self.num_classes = C = num_classes
        if C < 2:
            raise ValueError("need at least 2 classes")
        self.mask_res = mask_res
        self.embed_dim = embed_dim
        self.input_dim = embed_dim + C
        self.hidden = hidden or self.input_dim
        rng = np.random.default_rng(seed)

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        n_in = mask_res * mask_res
        arrays = {
            "encoder.weight": uniform((n_in, embed_dim), n_in),
            "encoder.bias": uniform((embed_dim,), n_in),
        }
        for d in ("fwd", "bwd"):
            for g in GATES:
                arrays[f"lstm.{d}.W_{g}"] = uniform((self.input_dim + self.hidden, self.hidden), self.hidden)
                arrays[f"lstm.{d}.b_{g}"] = uniform((self.hidden,), self.hidden)
        for d in ("fwd", "bwd"):
            arrays[f"proj.{d}.weight"] = uniform((self.hidden, C), self.hidden)
            arrays[f"proj.{d}.bias"] = uniform((C,), self.hidden)
        self.params = {k: Tensor(v, True, k, dtype) for k, v in arrays.items()}

    # -- persistence -----------------------------------------------------
    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def save(self, path) -> None:
        save_weights(path, self.state())

    @classmethod
    def load(cls, path) -> "SyntaxModel":
        arrays = load_weights(path)
        n_in, embed = arrays["encoder.weight"].shape
        C = arrays["proj.fwd.bias"].shape[0]
        hidden = arrays["lstm.fwd.b_i"].shape[0]
        model = cls(C, int(round(np.sqrt(n_in))), embed, hidden)
        for k in model.params:
            if arrays[k].shape != model.params[k].shape:
                raise ValueError(f"weight {k} has shape {arrays[k].shape}, expected {model.params[k].shape}")
            model.params[k] = Tensor(arrays[k], True, k)
        return model


# -- inputs --------------------------------------------------------------------

def prepare_sequences(masks, plan: TraversalPlan, C: int, mask_res: int) -> tuple[np.ndarray, np.ndarray]:
    """Scaled-id patch masks (N, G, r*r) and semantics vectors (N, G, C)."""
    masks = list(masks)
    if not masks:
        raise ValueError("no masks given")
    G = plan.G
    flat = np.empty((len(masks), G, mask_res * mask_res), dtype=np.float64)
    sem = np.empty((len(masks), G, C), dtype=np.float64)
    for n, mask in enumerate(masks):
        for t, patch in enumerate(plan.crops(np.asarray(mask))):
            sem[n, t] = semantics_vector(patch, C)
            flat[n, t] = (resize_mask(patch, (mask_res, mask_res)).ravel() / (C - 1))
    return flat, sem


def encode_patch(model: SyntaxModel, patch: np.ndarray) -> np.ndarray:
    """Single patch input vector: affine-encoded scaled mask + semantics."""
    patch = np.asarray(patch)
    C, r = model.num_classes, model.mask_res
    sem = semantics_vector(patch, C)
    flat = resize_mask(patch, (r, r)).reshape(1, 1, -1) / (C - 1)
    return encode(model, flat, sem.reshape(1, 1, C)).data[0, 0]


def encode(model: SyntaxModel, flat, sem) -> Tensor:
    """(B, G, r*r) scaled masks + (B, G, C) semantics -> (B, G, embed + C)."""
    p = model.params
    dtype = p["encoder.weight"].dtype
    flat = flat if isinstance(flat, Tensor) else Tensor(np.asarray(flat, dtype=dtype))
    sem = sem if isinstance(sem, Tensor) else Tensor(np.asarray(sem, dtype=dtype))
    emb = flat @ p["encoder.weight"] + p["encoder.bias"]
    return ops.concat([emb, sem], axis=2)


# -- recurrence ----------------------------------------------------------------

def _lstm_stream(model: SyntaxModel, x: Tensor, direction: str) -> list[Tensor]:
    """Hidden states per step (in input order) for one direction."""
    p = model.params
    B, G, _ = x.shape
    dtype = p["encoder.weight"].dtype
    h = Tensor(np.zeros((B, model.hidden), dtype=dtype))
    c = Tensor(np.zeros((B, model.hidden), dtype=dtype))
    steps = range(G) if direction == "fwd" else range(G - 1, -1, -1)
    out: list[Tensor | None] = [None] * G
    for t in steps:
        xh = ops.concat([x[:, t, :], h], axis=1)
        gate = {g: xh @ p[f"lstm.{direction}.W_{g}"] + p[f"lstm.{direction}.b_{g}"] for g in GATES}
        i, f, o = ops.sigmoid(gate["i"]), ops.sigmoid(gate["f"]), ops.sigmoid(gate["o"])
        c = f * c + i * ops.tanh(gate["g"])
        h = o * ops.tanh(c)
        out[t] = h
    return out


def bilstm_forward(model: SyntaxModel, x: Tensor) -> tuple[Tensor, Tensor]:
    """Forward-stream and backward-stream predictions, each (B, G, C).

    The forward prediction at step t targets s_{t+1}; the backward one s_{t-1}.
    """
    if x.ndim != 3:
        raise ValueError(f"expected (B, G, D) inputs, got {x.shape}")
    B, G, _ = x.shape
    if G < 2:
        raise ValueError(f"sequence length must be at least 2, got {G}")
    p = model.params
    preds = []
    for d in ("fwd", "bwd"):
        hs = ops.concat([ops.reshape(h, (B, 1, model.hidden)) for h in _lstm_stream(model, x, d)], axis=1)
        preds.append(hs @ p[f"proj.{d}.weight"] + p[f"proj.{d}.bias"])
    return preds[0], preds[1]


def syntax_loss(pf: Tensor, pb: Tensor, sem) -> Tensor:
    """Mean squared L2 error over the 2(G-1) in-range terms and the batch."""
    B, G, _ = pf.shape
    sem = sem if isinstance(sem, Tensor) else Tensor(np.asarray(sem, dtype=pf.dtype))
    fwd = ops.sum_squares(pf[:, :-1, :] - sem[:, 1:, :])
    bwd = ops.sum_squares(pb[:, 1:, :] - sem[:, :-1, :])
    return (fwd + bwd) * (1.0 / (2 * (G - 1) * B))


def step_residuals(pf: np.ndarray, pb: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-step L2 prediction errors (B, G) for each direction.

    The forward error at step t compares the prediction made at t-1 with
    targets[t]; the backward error compares the prediction made at t+1. Steps
    without a defined prediction get 0.
    """
    B, G, _ = pf.shape
    ef = np.zeros((B, G))
    eb = np.zeros((B, G))
    ef[:, 1:] = np.linalg.norm(pf[:, :-1] - targets[:, 1:], axis=2)
    eb[:, :-1] = np.linalg.norm(pb[:, 1:] - targets[:, :-1], axis=2)
    return ef, eb


def predict(model: SyntaxModel, flat: np.ndarray, sem: np.ndarray, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    pfs, pbs = [], []
    for i in range(0, len(flat), batch_size):
        pf, pb = bilstm_forward(model, encode(model, flat[i:i + batch_size], sem[i:i + batch_size]))
        pfs.append(pf.data)
        pbs.append(pb.data)
    return np.concatenate(pfs).astype(np.float64), np.concatenate(pbs).astype(np.float64)
