"""Flat dotted-key configuration: parsing, validation, and TrainConfig.

Config files are plain text, one `key = value` per line, `#` comments.
Dotted namespaces (optim.base_lr, encoder.backbone_dims) keep --set overrides
unambiguous. Unknown keys and malformed values raise ConfigError naming the
offending key.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .augment import AugmentPolicy
from .errors import ConfigError
from .model import EncoderSpec

OBJECTIVES = ("simclr", "nnclr", "nnsiam")
NN_KINDS = ("hard", "soft", "oracle")
REPLACEMENTS = ("fifo", "random")
AUGMENT_MODES = ("full", "crop_only", "none")


@dataclass
class DataConfig:
    kind: str = "blobs"          # blobs | cifar10
    path: str = ""               # cifar10 binary batch directory
    num_classes: int = 8
    samples_per_class: int = 1000
    dim: int = 16
    std: float = 0.1
    seed: int = 0
    limit: int = 0               # cap on train samples, 0 = all
    test_limit: int = 0
    labels_enabled: bool = True


@dataclass
class TrainConfig:
    objective: str = "nnclr"
    tau: float = 0.1
    queue_size: int = 4096
    batch_size: int = 256
    epochs: int = 100
    warmup_epochs: int = 10
    base_lr: float = 0.3
    weight_decay: float = 1e-6
    momentum: float = 0.9
    trust_coefficient: float = 0.001
    scale_lr_with_batch: bool = False
    top_k: int = 1
    nn_kind: str = "hard"
    soft_temperature: float = 0.1
    replacement: str = "fifo"
    use_prediction_head: bool = True
    use_momentum_encoder: bool = False
    momentum_coeff: float = 0.99
    symmetric_denominator: bool = False
    seed: int = 0
    eval_every: int = 50              # metric cadence in steps
    checkpoint_every_epochs: int = 0  # 0 = final checkpoint only
    strict_deterministic: bool = False
    encoder: EncoderSpec = field(default_factory=lambda: EncoderSpec(input_dim=16))
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ConfigError("objective", f"must be one of {OBJECTIVES}")
        if self.nn_kind not in NN_KINDS:
            raise ConfigError("nn_kind", f"must be one of {NN_KINDS}")
        if self.replacement not in REPLACEMENTS:
            raise ConfigError("replacement", f"must be one of {REPLACEMENTS}")
        if self.augment.mode not in AUGMENT_MODES:
            raise ConfigError("augment.mode", f"must be one of {AUGMENT_MODES}")
        if self.tau <= 0:
            raise ConfigError("tau", "must be positive")
        if self.queue_size < self.batch_size:
            raise ConfigError("queue_size", "must be >= batch_size")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError("warmup_epochs", "needs 0 <= warmup_epochs < epochs")
        if not 1 <= self.top_k <= self.queue_size:
            raise ConfigError("top_k", "must be in [1, queue_size]")
        if self.data.kind not in ("blobs", "cifar10"):
            raise ConfigError("data.kind", "must be blobs or cifar10")
        if not 0.0 <= self.momentum_coeff < 1.0:
            raise ConfigError("momentum_coeff", "must be in [0, 1)")
        try:
            self.encoder.validate()
        except AssertionError as exc:
            raise ConfigError("encoder", str(exc)) from exc

    def effective_lr(self) -> float:
        if self.scale_lr_with_batch:
            return self.base_lr * self.batch_size / 256.0
        return self.base_lr


# keys that must appear in every config file
REQUIRED_KEYS = ("objective", "queue_size", "batch_size", "epochs", "encoder.input_dim")

_BOOL_VALUES = {"true": True, "on": True, "yes": True, "1": True,
                "false": False, "off": False, "no": False, "0": False}


def _parse_value(key: str, raw: str, target):
    raw = raw.strip()
    try:
        if isinstance(target, bool):
            return _BOOL_VALUES[raw.lower()]
        if isinstance(target, int):
            return int(raw)
        if isinstance(target, float):
            return float(raw)
        if isinstance(target, str):
            return raw
        if isinstance(target, list):
            return [int(v) for v in raw.split(",") if v.strip()]
        if isinstance(target, tuple):
            parts = [float(v) for v in raw.split(",")]
            if len(parts) != len(target):
                raise ValueError(f"expected {len(target)} values")
            if all(isinstance(t, int) for t in target):
                return tuple(int(p) for p in parts)
            return tuple(parts)
    except (ValueError, KeyError) as exc:
        raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from exc
    raise ConfigError(key, f"unsupported value type {type(target).__name__}")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines into a flat string map."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _set_key(cfg: TrainConfig, key: str, raw: str) -> None:
    if key.startswith("encoder."):
        sub = cfg.encoder
        name = key[len("encoder."):]
    elif key.startswith("augment."):
        sub = cfg.augment
        name = key[len("augment."):]
    elif key.startswith("data."):
        sub = cfg.data
        name = key[len("data."):]
    else:
        sub = cfg
        name = key
    valid = {f.name for f in fields(sub)}
    if name not in valid:
        raise ConfigError(key, "unknown configuration key")
    setattr(sub, name, _parse_value(key, raw, getattr(sub, name)))


def build_config(file_pairs: dict[str, str],
                 overrides: dict[str, str] | None = None) -> TrainConfig:
    """Assemble and validate a TrainConfig from file pairs plus --set overrides."""
    merged = dict(file_pairs)
    if overrides:
        merged.update(overrides)
    for key in REQUIRED_KEYS:
        if key not in merged:
            raise ConfigError(key, "required key is missing")
    cfg = TrainConfig()
    for key, raw in merged.items():
        _set_key(cfg, key, raw)
    cfg.validate()
    return cfg


def load_config(path: str, overrides: dict[str, str] | None = None) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        pairs = parse_config_text(fh.read())
    return build_config(pairs, overrides)


def config_to_pairs(cfg: TrainConfig) -> dict[str, str]:
    """Flatten a TrainConfig back to dotted key/value strings (manifests)."""
    out: dict[str, str] = {}

    def emit(prefix: str, obj) -> None:
        for f in fields(obj):
            v = getattr(obj, f.name)
            key = f"{prefix}{f.name}"
            if key in ("encoder", "augment", "data"):
                continue
            if isinstance(v, bool):
                out[key] = "true" if v else "false"
            elif isinstance(v, (list, tuple)):
                out[key] = ",".join(str(x) for x in v)
            else:
                out[key] = str(v)

    emit("", cfg)
    emit("encoder.", cfg.encoder)
    emit("augment.", cfg.augment)
    emit("data.", cfg.data)
    return out
