"""Settings management for training and preprocessing configuration"""

import typing
from dataclasses import dataclass, asdict, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar

from ..core.errors import ConfigError

# Base recommenders, in the order the CLI lists them
MODEL_KINDS = ("top", "utop", "mf", "seqrec", "gru")

_TRUE = {"1", "true", "on", "yes"}
_FALSE = {"0", "false", "off", "no"}

ConfigT = TypeVar("ConfigT")


@dataclass
class JointConfig:
    """Joint training configuration"""
    model: str = "gru"
    dim: int = 64
    epochs: int = 20
    lr: float = 0.001
    batch_size: int = 64          # tuples per JTLL batch, sequences/transitions per base batch
    negatives: int = 5            # k sampled negatives per positive
    dropout: float = 0.8          # drop probability on JTLL embedding rows
    jtll_enabled: bool = True
    seed: int = 0
    tuple_multiplicity: bool = False  # one tuple per check-in instead of per distinct pair
    fixed_negatives: bool = False     # draw JTLL negatives once instead of every epoch
    base_lr: Optional[float] = None   # overrides lr for the base model pass
    jtll_lr: Optional[float] = None   # overrides lr for the JTLL pass

    def validate(self) -> "JointConfig":
        """
        Check value ranges

        Returns:
            self, for chaining

        Raises:
            ConfigError: if any field is out of range
        """
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"Unknown model kind '{self.model}' (expected one of {', '.join(MODEL_KINDS)})")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.negatives < 0:
            raise ConfigError(f"negatives must be >= 0, got {self.negatives}")
        for name in ("lr", "base_lr", "jtll_lr"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(f"{name} must be >= 0, got {value}")
        return self

    @property
    def effective_base_lr(self) -> float:
        return self.lr if self.base_lr is None else self.base_lr

    @property
    def effective_jtll_lr(self) -> float:
        return self.lr if self.jtll_lr is None else self.jtll_lr


@dataclass
class PreprocessConfig:
    """Raw check-in filtering and splitting thresholds"""
    min_visits: int = 20
    max_visits: int = 50
    min_users_per_poi: int = 10
    train_fraction: float = 0.8

    def validate(self) -> "PreprocessConfig":
        if self.min_visits < 1 or self.max_visits < 1 or self.min_users_per_poi < 1:
            raise ConfigError("Preprocessing thresholds must be positive")
        if self.min_visits > self.max_visits:
            raise ConfigError(f"min_visits ({self.min_visits}) exceeds max_visits ({self.max_visits})")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        return self


def read_key_value_file(path: Path) -> Dict[str, str]:
    """
    Read a key=value text file

    Blank lines and lines starting with '#' are ignored.

    Args:
        path: File to read

    Returns:
        Mapping of keys to raw string values
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e

    values: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got '{line}'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def parse_value(field_type: Any, text: str) -> Any:
    """
    Coerce a string to a dataclass field's declared type

    Args:
        field_type: Annotation of the target field
        text: Raw value

    Returns:
        Converted value
    """
    args = typing.get_args(field_type)
    if typing.get_origin(field_type) is typing.Union and type(None) in args:
        if text.lower() in ("", "none", "null"):
            return None
        field_type = next(a for a in args if a is not type(None))

    if field_type is bool:
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"not a boolean: '{text}'")
    if field_type is int:
        return int(text)
    if field_type is float:
        return float(text)
    return text


def coerce_fields(config_cls: Type[ConfigT], raw: Mapping[str, str], source: str) -> Dict[str, Any]:
    """
    Convert raw strings into typed values for config_cls

    Raises:
        ConfigError: on unknown keys or unparsable values
    """
    hints = typing.get_type_hints(config_cls)
    known = {f.name for f in fields(config_cls)}
    converted: Dict[str, Any] = {}
    for key, text in raw.items():
        if key not in known:
            raise ConfigError(f"{source}: unknown key '{key}'")
        try:
            converted[key] = parse_value(hints[key], text)
        except ValueError as e:
            raise ConfigError(f"{source}: bad value for '{key}': {e}") from e
    return converted


class SettingsManager:
    """Resolves configuration from defaults, an optional file, and overrides"""

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize settings manager

        Args:
            config_path: Path to a key=value config file, or None for defaults only
        """
        self.config_path = Path(config_path) if config_path else None

    def load(self, config_cls: Type[ConfigT] = JointConfig) -> ConfigT:
        """
        Load configuration from file

        Keys in the file that belong to other config classes are ignored, so one
        file can carry both preprocessing and training settings.

        Returns:
            Config object (defaults if no file was given)
        """
        if self.config_path is None:
            return config_cls()

        raw = read_key_value_file(self.config_path)
        known = {f.name for f in fields(config_cls)}
        relevant = {k: v for k, v in raw.items() if k in known}
        return config_cls(**coerce_fields(config_cls, relevant, str(self.config_path)))

    def resolve(
        self,
        overrides: Optional[Mapping[str, Any]] = None,
        config_cls: Type[ConfigT] = JointConfig
    ) -> ConfigT:
        """
        Apply precedence flags > file > defaults

        Args:
            overrides: Already-typed values (None entries are ignored)
            config_cls: Config dataclass to build

        Returns:
            Validated config
        """
        config = self.load(config_cls)
        if overrides:
            known = {f.name for f in fields(config_cls)}
            updates = {k: v for k, v in overrides.items() if v is not None and k in known}
            config = replace(config, **updates)
        validate = getattr(config, "validate", None)
        if validate is not None:
            validate()
        return config

    @staticmethod
    def save(config: Any, path: Path) -> None:
        """
        Save configuration as key=value text

        Args:
            config: Config dataclass instance
            path: Output file
        """
        Path(path).write_text(to_text(config), encoding="utf-8")


def as_dict(config: Any) -> Dict[str, Any]:
    """Plain dict view of a config dataclass"""
    return asdict(config)


def to_text(config: Any) -> str:
    """Render a config dataclass as key=value lines"""
    lines = []
    for key, value in asdict(config).items():
        if isinstance(value, bool):
            value = "on" if value else "off"
        lines.append(f"{key}={'none' if value is None else value}")
    return "\n".join(lines) + "\n"
