"""Plain-text key=value run configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .corrupt import KINDS as CORRUPTION_KINDS
from .data.synthetic import FAMILIES, anchors
from .numcore import parse_schedule
from .syntax import KINDS as TRAVERSAL_KINDS
from .syntax import build_traversal
from .validate import METHODS

MASK_SOURCES = ("gt", "cluster", "classifier", "patch")


class ConfigError(ValueError):
    pass


def _key(default, help: str, choices=None, minimum=None):
    return field(default=default, metadata={"help": help, "choices": choices, "min": minimum})


@dataclass(frozen=True)
class RunConfig:
    seed: int = _key(None, "master seed (required)")
    # data
    family: str = _key("face", "synthetic family", tuple(FAMILIES))
    height: int = _key(64, "image height", minimum=8)
    width: int = _key(64, "image width", minimum=8)
    jitter: int = _key(2, "part position jitter in pixels", minimum=0)
    color_jitter: float = _key(0.05, "per-part colour offset amplitude", minimum=0)
    noise: float = _key(0.02, "per-pixel noise sigma", minimum=0)
    n: int = _key(0, "images rendered; 0 means n_train + n_val + n_test", minimum=0)
    n_train: int = _key(2000, "training images", minimum=1)
    n_val: int = _key(500, "validation images", minimum=1)
    n_test: int = _key(500, "test images", minimum=1)
    C: int = _key(0, "class count; 0 takes it from the family", minimum=0)
    # traversal
    traversal: str = _key("five-crop", "patch traversal kind", TRAVERSAL_KINDS)
    ps: int = _key(12, "patch size in pixels", minimum=1)
    circular: bool = _key(False, "random rotations of five-crop sequences during training")
    # corruption
    corruption: str = _key("shuffle", "corruption kind for detection", tuple(k for k in CORRUPTION_KINDS if k != "puzzle"))
    num_patch: str = _key("all", "patches to corrupt: an integer or 'all'")
    kernel_size: int = _key(7, "blur kernel size (odd)", minimum=1)
    sigma: float = _key(3.0, "blur sigma", minimum=0)
    # stage 1
    mask_source: str = _key("gt", "where test-time masks come from", MASK_SOURCES)
    K: int = _key(10, "clusters", minimum=1)
    km_init: int = _key(4, "batches per clustering", minimum=1)
    km_num: int = _key(20, "batches between re-clusterings", minimum=1)
    km_iter: int = _key(20, "k-means iterations", minimum=1)
    cluster_epochs: int = _key(5, "two-view clustering epochs", minimum=0)
    cluster_lr: float = _key(1e-3, "two-view clustering learning rate", minimum=0)
    cluster_batch: int = _key(16, "two-view clustering batch size", minimum=1)
    feature_dim: int = _key(32, "pixel feature dimension", minimum=1)
    feature_hidden: int = _key(16, "extractor hidden channels", minimum=1)
    prior_epochs: int = _key(10, "supervised fine-tuning epochs", minimum=0)
    prior_lr: float = _key(3e-3, "supervised fine-tuning learning rate", minimum=0)
    prior_batch: int = _key(8, "supervised fine-tuning batch size", minimum=1)
    # stage 2
    epochs: int = _key(40, "syntax model epochs", minimum=0)
    lr: float = _key(1e-4, "syntax model learning rate", minimum=0)
    schedule: str = _key("step:20:0.1", "learning-rate schedule")
    batch_size: int = _key(16, "syntax model batch size", minimum=1)
    mask_res: int = _key(64, "patch mask resolution fed to the encoder", minimum=1)
    embed_dim: int = _key(128, "encoder output size", minimum=1)
    hidden: int = _key(0, "LSTM hidden size; 0 means embed_dim + C", minimum=0)
    # validation
    method: str = _key("baseline", "grammar validation method", METHODS)
    num_fakes: int = _key(3, "permuted copies per puzzle", minimum=1)
    num_puzzles: int = _key(200, "puzzles drawn from the test split", minimum=1)

    # -- derived -----------------------------------------------------------
    @property
    def num_classes(self) -> int:
        return self.C or len(FAMILIES[self.family][2])

    @property
    def dims(self) -> tuple[int, int]:
        return (self.height, self.width)

    def patch_count(self, G: int) -> int:
        return G if self.num_patch == "all" else int(self.num_patch)

    @property
    def scenario(self) -> str:
        return f"{self.corruption}-{self.num_patch}-ps{self.ps}"

    def with_overrides(self, pairs: dict[str, str]) -> "RunConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({k: _parse(k, v) for k, v in pairs.items()})
        return _checked(RunConfig(**values))

    def dump(self) -> str:
        return "".join(f"{f.name}={_format(getattr(self, f.name))}\n" for f in fields(self))


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse(key: str, text: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown key {key!r}")
    default = _FIELDS[key].default
    text = text.strip()
    try:
        if key == "seed" or isinstance(default, int) and not isinstance(default, bool):
            return int(text)
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, float):
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return text


def _checked(cfg: RunConfig) -> RunConfig:
    if cfg.seed is None:
        raise ConfigError("seed is required")
    for name, f in _FIELDS.items():
        v = getattr(cfg, name)
        choices, minimum = f.metadata["choices"], f.metadata["min"]
        if choices and v not in choices:
            raise ConfigError(f"{name}={v!r} not in {list(choices)}")
        if minimum is not None and v < minimum:
            raise ConfigError(f"{name}={v} below minimum {minimum}")
    if cfg.num_patch != "all":
        try:
            n = int(cfg.num_patch)
        except ValueError:
            raise ConfigError(f"num_patch must be an integer or 'all', got {cfg.num_patch!r}") from None
        if n < 1:
            raise ConfigError("num_patch must be positive")
    if cfg.n and cfg.n_train + cfg.n_val + cfg.n_test > cfg.n:
        raise ConfigError(f"split {cfg.n_train}/{cfg.n_val}/{cfg.n_test} needs more than n={cfg.n} images")
    if cfg.kernel_size % 2 == 0:
        raise ConfigError("kernel_size must be odd")
    if cfg.traversal == "five-crop" and cfg.family != "face":
        raise ConfigError("five-crop traversal needs landmark anchors (family=face)")
    family_C = len(FAMILIES[cfg.family][2])
    if cfg.C not in (0, family_C):
        raise ConfigError(f"C={cfg.C} but family {cfg.family} has {family_C} classes")
    try:
        parse_schedule(cfg.schedule)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None
    try:
        pts = anchors(cfg.family, cfg.dims) if cfg.traversal == "five-crop" else None
        G = build_traversal(cfg.traversal, cfg.dims, cfg.ps, pts).G
    except ValueError as exc:
        raise ConfigError(f"traversal: {exc}") from None
    if cfg.patch_count(G) > G:
        raise ConfigError(f"num_patch={cfg.num_patch} exceeds the {G} patches of the plan")
    return cfg


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{n}: expected key=value")
        key = key.strip()
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        values[key] = _parse(key, val)
    return _checked(replace(RunConfig(), **values))


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(), str(path))


def describe_keys() -> str:
    """One line per key with its default, for --help."""
    lines = []
    for name, f in _FIELDS.items():
        default = "(required)" if name == "seed" else _format(f.default)
        extra = f" one of {', '.join(f.metadata['choices'])}" if f.metadata["choices"] else ""
        lines.append(f"  {name}={default}  {f.metadata['help']}{extra}")
    return "\n".join(lines)
