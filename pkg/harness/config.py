"""Experiment configuration.

Values are resolved in this order (later wins): built-in defaults, the
FAIRFL_* environment variables (a .env file is honoured), the YAML file,
explicit overrides (CLI flags).

YAML layout:

    scheme: gbppffl
    seed: 0
    training: {rounds: 30, learning_rate: 1.0, local_batch_size: 0, ...}
    split: {regime: iid_powerlaw, participants: 5, ...}
    fairness: {alpha: 0.95, q_variant: parameter_free, ...}
    he: {backend: mock, preset: test, mock_noise: 0.0}

The split seed is not configured directly; it is derived from the master
seed's "split" stream.
"""
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv

from core.datasets import DataError, SplitRegime, SplitSpec
from crypto.he_params import PRESET_NAMES, HeParams, preset
from fairness.reputation import (
    FairnessError,
    FairnessParams,
    InitialReputation,
    MaskStrategy,
    QVariant,
)

load_dotenv()


class ConfigError(ValueError):
    """Raised for unknown keys, bad values and inconsistent settings."""


class Scheme(Enum):
    STANDALONE = "standalone"
    FEDSGD = "fedsgd"
    FFLX = "fflx"
    GBPPFFL = "gbppffl"


BACKEND_NAMES = ("mock", "ckks")

# Default phi report tolerance per backend
TOL_PHI = {"mock": 0.0, "ckks": 1e-4}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; defaults give the desk-scale setup."""
    scheme: Scheme = Scheme.GBPPFFL
    backend: str = "mock"
    split: SplitSpec = field(default_factory=SplitSpec)
    fairness: FairnessParams = field(default_factory=FairnessParams)
    learning_rate: float = 1.0
    rounds: int = 30
    local_batch_size: int = 0   # 0: full local dataset each round
    seed: int = 0
    he_preset: str = "test"
    output: Optional[str] = None
    transcript: Optional[str] = None
    data_path: Optional[str] = None   # columnar file; synthetic data when unset
    num_features: int = 128
    hidden_units: int = 20
    separation: float = 0.15
    tol_phi: Optional[float] = None   # None: 0 for mock, 1e-4 for ckks
    report_redundancy: int = 1
    workers: int = 1
    mock_noise: float = 0.0

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.num_features, self.hidden_units, self.split.num_classes)

    @property
    def phi_tolerance(self) -> float:
        return TOL_PHI[self.backend] if self.tol_phi is None else self.tol_phi

    def he_params(self) -> HeParams:
        return preset(self.he_preset)

    def validate(self) -> None:
        if self.backend not in BACKEND_NAMES:
            raise ConfigError(f"backend must be one of {BACKEND_NAMES}, got '{self.backend}'")
        if self.he_preset not in PRESET_NAMES:
            raise ConfigError(f"he preset must be one of {list(PRESET_NAMES)}, got '{self.he_preset}'")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.local_batch_size < 0:
            raise ConfigError(f"local batch size must be >= 0 (0 = full batch), got {self.local_batch_size}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if min(self.num_features, self.hidden_units) < 1:
            raise ConfigError("feature and hidden-unit counts must be positive")
        if self.tol_phi is not None and self.tol_phi < 0:
            raise ConfigError("tol_phi must be non-negative")
        if self.report_redundancy < 1 or self.workers < 1:
            raise ConfigError("report_redundancy and workers must be >= 1")
        if self.mock_noise < 0:
            raise ConfigError("mock_noise must be non-negative")
        if self.scheme is Scheme.GBPPFFL:
            params = self.he_params()
            layers = self.layer_sizes
            length = sum(a * b + b for a, b in zip(layers[:-1], layers[1:]))
            if length > params.max_length:
                raise ConfigError(
                    f"model has {length} parameters, the '{self.he_preset}' preset packs at most {params.max_length}"
                )
        try:
            self.split.validate()
            self.fairness.validate()
        except (DataError, FairnessError) as exc:
            raise ConfigError(str(exc)) from exc

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        split = self.split
        fair = self.fairness
        return {
            "scheme": self.scheme.value,
            "seed": self.seed,
            "output": self.output,
            "transcript": self.transcript,
            "data_path": self.data_path,
            "training": {
                "rounds": self.rounds,
                "learning_rate": self.learning_rate,
                "local_batch_size": self.local_batch_size,
                "num_features": self.num_features,
                "hidden_units": self.hidden_units,
                "separation": self.separation,
                "workers": self.workers,
            },
            "split": {
                "regime": split.regime.value,
                "participants": split.participants,
                "total_samples": split.total_samples,
                "num_classes": split.num_classes,
                "test_samples": split.test_samples,
                "powerlaw_exponent": split.powerlaw_exponent,
                "classes_per_participant": (
                    None if split.classes_per_participant is None else list(split.classes_per_participant)
                ),
            },
            "fairness": {
                "alpha": fair.alpha,
                "beta": fair.beta,
                "gamma": fair.gamma,
                "delta": fair.delta,
                "q_variant": fair.q_variant.value,
                "mask_strategy": fair.mask_strategy.value,
                "clamp_negative_phi": fair.clamp_negative_phi,
                "initial_reputation": fair.initial_reputation.value,
                "tol_phi": self.tol_phi,
                "report_redundancy": self.report_redundancy,
            },
            "he": {
                "backend": self.backend,
                "preset": self.he_preset,
                "mock_noise": self.mock_noise,
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
        """Build a config from the nested layout; missing keys keep base values."""
        flat = _flatten(data)
        return apply_overrides(base or cls(), flat)


# dotted key -> (owner, attribute, converter)
_TOP = {
    "scheme": ("config", "scheme", Scheme),
    "seed": ("config", "seed", int),
    "output": ("config", "output", lambda v: None if v is None else str(v)),
    "transcript": ("config", "transcript", lambda v: None if v is None else str(v)),
    "data_path": ("config", "data_path", lambda v: None if v is None else str(v)),
    "training.rounds": ("config", "rounds", int),
    "training.learning_rate": ("config", "learning_rate", float),
    "training.local_batch_size": ("config", "local_batch_size", int),
    "training.num_features": ("config", "num_features", int),
    "training.hidden_units": ("config", "hidden_units", int),
    "training.separation": ("config", "separation", float),
    "training.workers": ("config", "workers", int),
    "split.regime": ("split", "regime", SplitRegime),
    "split.participants": ("split", "participants", int),
    "split.total_samples": ("split", "total_samples", int),
    "split.num_classes": ("split", "num_classes", int),
    "split.test_samples": ("split", "test_samples", int),
    "split.powerlaw_exponent": ("split", "powerlaw_exponent", float),
    "split.classes_per_participant": (
        "split", "classes_per_participant", lambda v: None if v is None else tuple(int(k) for k in v)
    ),
    "fairness.alpha": ("fairness", "alpha", float),
    "fairness.beta": ("fairness", "beta", lambda v: None if v is None else float(v)),
    "fairness.gamma": ("fairness", "gamma", lambda v: None if v is None else float(v)),
    "fairness.delta": ("fairness", "delta", float),
    "fairness.q_variant": ("fairness", "q_variant", QVariant),
    "fairness.mask_strategy": ("fairness", "mask_strategy", MaskStrategy),
    "fairness.clamp_negative_phi": ("fairness", "clamp_negative_phi", lambda v: _to_bool(v)),
    "fairness.initial_reputation": ("fairness", "initial_reputation", InitialReputation),
    "fairness.tol_phi": ("config", "tol_phi", lambda v: None if v is None else float(v)),
    "fairness.report_redundancy": ("config", "report_redundancy", int),
    "he.backend": ("config", "backend", str),
    "he.preset": ("config", "he_preset", str),
    "he.mock_noise": ("config", "mock_noise", float),
}

KNOWN_KEYS = tuple(_TOP)


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _flatten(data: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def apply_overrides(config: ExperimentConfig, overrides: Mapping[str, Any]) -> ExperimentConfig:
    """Return config with dotted-key overrides applied (e.g. {"fairness.beta": 1.5}).

    Raises:
        ConfigError: unknown key or unconvertible value
    """
    changes: Dict[str, Dict[str, Any]] = {"config": {}, "split": {}, "fairness": {}}
    for key, value in overrides.items():
        if key not in _TOP:
            raise ConfigError(f"unknown config key '{key}'")
        owner, attribute, convert = _TOP[key]
        try:
            changes[owner][attribute] = convert(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for '{key}': {value!r}") from exc
    split = replace(config.split, **changes["split"])
    fairness = replace(config.fairness, **changes["fairness"])
    return replace(config, split=split, fairness=fairness, **changes["config"])


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """Config values taken from FAIRFL_* environment variables."""
    environ = os.environ if environ is None else environ
    found: Dict[str, Any] = {}
    if environ.get("FAIRFL_WORKERS"):
        found["training.workers"] = environ["FAIRFL_WORKERS"]
    if environ.get("FAIRFL_OUTPUT"):
        found["output"] = environ["FAIRFL_OUTPUT"]
    if environ.get("FAIRFL_TRANSCRIPT"):
        found["transcript"] = environ["FAIRFL_TRANSCRIPT"]
    return found


def log_level(environ: Optional[Mapping[str, str]] = None) -> str:
    environ = os.environ if environ is None else environ
    return environ.get("FAIRFL_LOG_LEVEL", "INFO").upper()


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
    """Resolve a config from defaults, environment, YAML file and overrides.

    Args:
        path: YAML file; FAIRFL_CONFIG is used when omitted
        overrides: Dotted-key values that win over everything else
        environ: Environment mapping (os.environ by default)

    Returns:
        Validated ExperimentConfig
    """
    environ = os.environ if environ is None else environ
    config = apply_overrides(ExperimentConfig(), env_overrides(environ))
    path = path or environ.get("FAIRFL_CONFIG") or None
    if path:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = yaml.safe_load(handle) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
        if not isinstance(data, Mapping):
            raise ConfigError(f"{path} must contain a mapping at the top level")
        config = ExperimentConfig.from_dict(data, base=config)
    if overrides:
        config = apply_overrides(config, overrides)
    config.validate()
    return config


def serialize(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def parse(text: str) -> ExperimentConfig:
    """Inverse of serialize()."""
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ConfigError("config text must contain a mapping")
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(serialize(config), encoding="utf-8")
