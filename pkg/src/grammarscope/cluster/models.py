"""Pixel embedding network and linear per-pixel classifier."""
from __future__ import annotations

import numpy as np

from ..numcore import Tensor, load_weights, ops, save_weights


def _uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)


class Extractor:
    """Two 3x3 stride-2 conv layers with tanh, NHWC in and out.

    (B, H, W, 3) -> (B, H/4, W/4, dim). Parameters live in ``params`` under
    ``conv1.weight`` etc.; weights are (9 * C_in, C_out) matrices applied to
    im2col columns.
    """

    stride = 4
    # inputs in [0, 1] are centred and scaled before the first layer; without
    # this every pixel shares one dominant feature direction
    input_mean = 0.5
    input_scale = 4.0

    def __init__(self, dim: int = 32, hidden: int = 16, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.dim = dim
        self.params = {
            "conv1.weight": Tensor(_uniform(rng, 9 * 3, hidden), True, "conv1.weight", dtype),
            "conv1.bias": Tensor(np.zeros(hidden), True, "conv1.bias", dtype),
            "conv2.weight": Tensor(_uniform(rng, 9 * hidden, dim), True, "conv2.weight", dtype),
            "conv2.bias": Tensor(np.zeros(dim), True, "conv2.bias", dtype),
        }

    def forward(self, images) -> Tensor:
        x = images if isinstance(images, Tensor) else Tensor(images, dtype=self.params["conv1.weight"].dtype)
        if x.ndim == 3:
            x = ops.reshape(x, (1,) + x.shape)
        x = (x - self.input_mean) * self.input_scale
        p = self.params
        h = ops.tanh(ops.unfold2d(x, 3, stride=2, pad=1) @ p["conv1.weight"] + p["conv1.bias"])
        return ops.tanh(ops.unfold2d(h, 3, stride=2, pad=1) @ p["conv2.weight"] + p["conv2.bias"])

    def features(self, images: np.ndarray) -> np.ndarray:
        """Forward without building a graph worth keeping; returns numpy."""
        return self.forward(np.asarray(images)).data

    def feature_dims(self, dims: tuple[int, int]) -> tuple[int, int]:
        H, W = dims
        return (H + 3) // 4, (W + 3) // 4

    def state(self) -> dict[str, np.ndarray]:
        return {f"extractor.{k}": v.data for k, v in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        _load_into(self.params, arrays, "extractor.")

    def copy(self) -> "Extractor":
        other = Extractor.__new__(Extractor)
        other.dim = self.dim
        other.params = {k: Tensor(v.data.copy(), True, k) for k, v in self.params.items()}
        return other


class LinearClassifier:
    """Per-pixel affine map from features (..., d) to logits (..., C)."""

    def __init__(self, dim: int, num_classes: int, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.num_classes = num_classes
        self.params = {
            "weight": Tensor(_uniform(rng, dim, num_classes), True, "weight", dtype),
            "bias": Tensor(np.zeros(num_classes), True, "bias", dtype),
        }

    def forward(self, z: Tensor) -> Tensor:
        return z @ self.params["weight"] + self.params["bias"]

    def state(self) -> dict[str, np.ndarray]:
        return {f"classifier.{k}": v.data for k, v in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        _load_into(self.params, arrays, "classifier.")
        self.num_classes = self.params["weight"].shape[1]

    def copy(self) -> "LinearClassifier":
        other = LinearClassifier.__new__(LinearClassifier)
        other.num_classes = self.num_classes
        other.params = {k: Tensor(v.data.copy(), True, k) for k, v in self.params.items()}
        return other


def _load_into(params: dict[str, Tensor], arrays: dict[str, np.ndarray], prefix: str) -> None:
    for k in params:
        key = prefix + k
        if key not in arrays:
            raise KeyError(f"missing weight {key!r}")
        params[k] = Tensor(np.asarray(arrays[key], dtype=np.float32), True, k)


def save_models(path, extractor: Extractor, classifier: LinearClassifier | None = None,
                centroids: np.ndarray | None = None) -> None:
    arrays = dict(extractor.state())
    if classifier is not None:
        arrays.update(classifier.state())
    if centroids is not None:
        arrays["centroids"] = np.asarray(centroids, dtype=np.float32)
    save_weights(path, arrays)


def load_models(path) -> tuple[Extractor, LinearClassifier | None, np.ndarray | None]:
    arrays = load_weights(path)
    w2 = arrays["extractor.conv2.weight"]
    ext = Extractor(dim=w2.shape[1], hidden=w2.shape[0] // 9)
    ext.load_state(arrays)
    clf = None
    if "classifier.weight" in arrays:
        w = arrays["classifier.weight"]
        clf = LinearClassifier(w.shape[0], w.shape[1])
        clf.load_state(arrays)
    return ext, clf, arrays.get("centroids")
