"""Run configuration: dataclasses, the key-value config file format, and the
flat string form echoed into checkpoints.

File grammar: UTF-8 lines of ``section.key = value``; ``#`` starts a comment;
blank lines ignored. Learning-rate stages use ``epochs:lr`` pairs joined by
commas, e.g. ``optimizer.lr_stages = 30:0.05,20:0.005,10:0.0005``. Command
line overrides use the same dotted keys and win over file values.
"""

from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .losses import LossConfig
from .vit import ModelConfig

DATASET_KINDS = ("digits", "gauss", "idx")


@dataclass
class OptimizerConfig:
    lr_stages: list = field(default_factory=lambda: [(30, 0.05), (20, 0.005), (10, 0.0005)])
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def validate(self, total_epochs):
        if sum(e for e, _ in self.lr_stages) != total_epochs:
            raise ConfigError(f"lr stage epochs {self.lr_stages} do not sum to total_epochs {total_epochs}")
        if any(lr <= 0 for _, lr in self.lr_stages):
            raise ConfigError("every stage lr must be > 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        return self

    def lr_for_epoch(self, epoch):
        """Learning rate of 1-based ``epoch`` under the staged schedule."""
        done = 0
        for stage_epochs, lr in self.lr_stages:
            done += stage_epochs
            if epoch <= done:
                return lr
        return self.lr_stages[-1][1]


@dataclass
class DatasetConfig:
    kind: str = "digits"
    train_size: int = 2000
    test_size: int = 1000
    seed: int = 0
    val_fraction: float = 0.05
    normalize: bool = True  # standardize inputs with train-set statistics
    # digits generator
    noise_lo: float = 0.2
    noise_hi: float = 0.7
    flip_fraction: float = 0.0
    # gaussian generator
    classes: int = 10
    separation: float = 3.0
    # idx files
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""

    def validate(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset.kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if self.kind == "idx" and not (self.train_images and self.train_labels):
            raise ConfigError("dataset.kind=idx needs train_images and train_labels paths")
        if not (0.0 < self.val_fraction < 1.0):
            raise ConfigError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        return self


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    batch_size: int = 64
    total_epochs: int = 60
    seed: int = 0
    output_dir: str = "run"

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.total_epochs < 0:
            raise ConfigError(f"total_epochs must be >= 0, got {self.total_epochs}")
        # Rebuild the model config so its cross-field checks run on the
        # final values (overrides bypass __post_init__).
        self.model = ModelConfig(**{f.name: getattr(self.model, f.name) for f in fields(ModelConfig)})
        self.optimizer.validate(self.total_epochs)
        self.loss.validate()
        self.dataset.validate()
        return self


_SECTIONS = {"model": ModelConfig, "loss": LossConfig, "optimizer": OptimizerConfig, "dataset": DatasetConfig}
# Config-file spelling for fields whose Python name differs.
_KEY_ALIASES = {("loss", "lambda"): "lam"}


def parse_value(name, current, text):
    """Parse ``text`` against the type of the current (default) value."""
    text = text.strip()
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}")
    if isinstance(current, int):
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected an integer, got {text!r}") from exc
    if isinstance(current, float):
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected a number, got {text!r}") from exc
    if isinstance(current, list):  # lr stages
        return _parse_stages(name, text)
    return text


def _parse_stages(name, text):
    stages = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigError(f"{name}: stage {part!r} is not epochs:lr")
        e, lr = part.split(":", 1)
        try:
            stages.append((int(e), float(lr)))
        except ValueError as exc:
            raise ConfigError(f"{name}: stage {part!r} is not epochs:lr") from exc
    if not stages:
        raise ConfigError(f"{name}: no stages given")
    return stages


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(f"{e}:{lr!r}" for e, lr in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def set_key(cfg, dotted, text):
    """Assign one ``section.key = text`` pair into a RunConfig."""
    parts = dotted.split(".")
    if len(parts) == 1:
        target, key = cfg, parts[0]
    elif len(parts) == 2 and parts[0] in _SECTIONS:
        target, key = getattr(cfg, parts[0]), _KEY_ALIASES.get((parts[0], parts[1]), parts[1])
    else:
        raise ConfigError(f"unknown config key {dotted!r}")
    if not hasattr(target, key) or key.startswith("_"):
        raise ConfigError(f"unknown config key {dotted!r}")
    setattr(target, key, parse_value(dotted, getattr(target, key), text))


def load_config(path, overrides=()):
    """Read a config file, apply ``key=value`` overrides, validate."""
    cfg = RunConfig()
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            pairs.append((key.strip(), value.strip()))
    for key, value in pairs:
        set_key(cfg, key, value)
    apply_overrides(cfg, overrides)
    return cfg.validate()


def apply_overrides(cfg, overrides):
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        set_key(cfg, key.strip(), value.strip())
    return cfg


def flatten(cfg):
    """RunConfig -> flat dotted-key strings (the checkpoint echo)."""
    out = {}
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            section_cls = _SECTIONS[f.name]
            alias_back = {v: k for (s, k), v in _KEY_ALIASES.items() if s == f.name}
            for sf in fields(section_cls):
                key = alias_back.get(sf.name, sf.name)
                out[f"{f.name}.{key}"] = _format_value(getattr(value, sf.name))
        else:
            out[f.name] = _format_value(value)
    return out


def unflatten(echo):
    """Flat dotted-key strings -> validated RunConfig."""
    cfg = RunConfig()
    for key, value in echo.items():
        set_key(cfg, key, value)
    return cfg.validate()
