"""Experiment configuration: JSON loading, validation and hashing."""

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from netsym.core.correlators import default_samples
from netsym.core.ensembles import architecture_from_dict
from netsym.core.symmetry import GroupSpec
from netsym.core.training import TrainingConfig
from netsym.core.types import ActionSide, GroupName

logger = logging.getLogger(__name__)

SUBCOMMANDS = (
    "check-symmetry",
    "gp-limit",
    "translate-check",
    "su-check",
    "ward",
    "ntk",
    "train-grid",
    "train-onecold",
    "flow-check",
    "perturbative",
)

# Subcommands that evaluate an architecture on explicit inputs.
_NEEDS_INPUTS = {
    "check-symmetry",
    "gp-limit",
    "translate-check",
    "su-check",
    "ward",
    "ntk",
    "perturbative",
}
_NEEDS_ARCHITECTURE = _NEEDS_INPUTS | {"flow-check"}
_NEEDS_GROUP = {"check-symmetry", "translate-check"}
DATASETS = ("blobs", "fashion-mnist")
SYNTHETIC_GP = "synthetic-gp"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every ``"<field>: <message>"`` problem."""

    def __init__(self, errors: List[str]) -> None:
        super().__init__("invalid config:\n  " + "\n  ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str
    seed: int = 0
    workers: int = 1
    output: str = "runs"
    data_dir: Optional[str] = None
    architecture: Optional[Dict[str, Any]] = None
    inputs: Optional[List[List[float]]] = None
    group: Optional[Dict[str, Any]] = None
    orders: Tuple[int, ...] = (2,)
    samples: Dict[str, int] = field(default_factory=dict)
    widths: Tuple[int, ...] = ()
    experiments: int = 10
    elements: int = 1000
    threshold: float = 3.0
    ks: Tuple[int, ...] = (0,)
    mus: Tuple[float, ...] = (0.0,)
    seeds: Tuple[int, ...] = (0,)
    training: Dict[str, Any] = field(default_factory=dict)
    dataset: str = "blobs"
    dataset_limit: Optional[int] = None
    steps: int = 100
    members: int = 2000
    patterns: Optional[List[List[Any]]] = None
    generator: int = 0

    def samples_for(self, order: int) -> int:
        """Sample count for an ``order``-point estimate.

        Looks up the order, then ``"default"``, then the built-in count.
        """
        if str(order) in self.samples:
            return int(self.samples[str(order)])
        if "default" in self.samples:
            return int(self.samples["default"])
        return default_samples(order)

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(**self.training)

    @property
    def is_synthetic(self) -> bool:
        return bool(self.architecture) and self.architecture.get("builder") == SYNTHETIC_GP

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form; equal configs hash equally."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_TUPLE_FIELDS = {"orders": int, "widths": int, "ks": int, "mus": float, "seeds": int}
_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_architecture(config: ExperimentConfig, errors: List[str]) -> None:
    arch = config.architecture
    if not isinstance(arch, dict):
        errors.append("architecture: must be an object")
        return
    if arch.get("builder") == SYNTHETIC_GP:
        if config.subcommand != "check-symmetry":
            errors.append(f"architecture: {SYNTHETIC_GP} is only supported by check-symmetry")
        kernel = arch.get("kernel")
        if (
            not isinstance(kernel, list)
            or not kernel
            or any(not isinstance(row, list) or len(row) != len(kernel) for row in kernel)
        ):
            errors.append("architecture.kernel: must be a square matrix")
        if not _is_int(arch.get("output_dim")) or arch["output_dim"] < 1:
            errors.append("architecture.output_dim: must be a positive integer")
        return
    try:
        spec = architecture_from_dict(arch, width=config.widths[0] if config.widths else None)
    except (ValueError, TypeError, KeyError) as exc:
        errors.append(f"architecture: {exc}")
        return
    if config.inputs and all(isinstance(p, list) for p in config.inputs):
        if any(len(p) != spec.input_dim for p in config.inputs):
            errors.append(f"inputs: every point must have {spec.input_dim} coordinates")


def validate(config: ExperimentConfig) -> None:
    """Check every field and raise one :class:`ConfigError` listing all problems."""
    errors: List[str] = []
    sub = config.subcommand
    if sub not in SUBCOMMANDS:
        expected = ", ".join(SUBCOMMANDS)
        errors.append(f"subcommand: unknown subcommand {sub!r}; expected one of {expected}")
    if not _is_int(config.seed) or config.seed < 0:
        errors.append("seed: must be a non-negative integer")
    if not _is_int(config.workers) or config.workers < 1:
        errors.append("workers: must be a positive integer")
    if not config.output:
        errors.append("output: must be a non-empty path")

    if sub in _NEEDS_ARCHITECTURE and config.architecture is None:
        errors.append(f"architecture: required for {sub}")
    if sub in _NEEDS_INPUTS and config.inputs is None and not config.is_synthetic:
        errors.append(f"inputs: required for {sub}")
    if config.inputs is not None:
        points = config.inputs
        if (
            not isinstance(points, list)
            or not points
            or any(not isinstance(p, list) or not p for p in points)
            or any(not _is_number(v) for p in points for v in p)
        ):
            errors.append("inputs: must be a non-empty list of numeric points")
        elif len({len(p) for p in points}) > 1:
            errors.append("inputs: all points must have the same dimension")
        elif sub == "ntk" and len(points) != 2:
            errors.append("inputs: ntk needs exactly two points")
    if config.architecture is not None:
        _check_architecture(config, errors)

    if sub in _NEEDS_GROUP and config.group is None:
        errors.append(f"group: required for {sub}")
    if config.group is not None:
        try:
            default_side = "input" if sub == "translate-check" else "output"
            side = config.group.get("side", default_side)
            group = GroupSpec(config.group["name"], config.group["dim"], side)
            if sub == "translate-check" and group.side is not ActionSide.INPUT:
                errors.append("group: translate-check needs an input-side group")
            elif sub == "translate-check" and group.name is GroupName.SU:
                errors.append("group: SU input checks are not supported")
        except (KeyError, TypeError) as exc:
            errors.append(f"group: missing or bad field {exc}")
        except ValueError as exc:
            errors.append(f"group: {exc}")

    for name in _TUPLE_FIELDS:
        values = getattr(config, name)
        if name in ("orders", "mus", "seeds") or (name == "ks" and sub == "train-grid"):
            if not values:
                errors.append(f"{name}: must not be empty")
    if any(not _is_int(n) or n < 1 for n in config.orders):
        errors.append("orders: must be positive integers")
    elif sub == "gp-limit" and any(n % 2 for n in config.orders):
        errors.append("orders: gp-limit needs even orders")
    if any(not _is_int(n) or n < 1 for n in config.widths):
        errors.append("widths: must be positive integers")
    if sub == "gp-limit" and not config.widths:
        errors.append("widths: gp-limit needs at least one width")
    if any(not _is_int(k) or k < 0 for k in config.ks):
        errors.append("ks: must be non-negative integers")
    if any(not _is_int(s) or s < 0 for s in config.seeds):
        errors.append("seeds: must be non-negative integers")
    for key, value in config.samples.items():
        if key != "default" and not key.isdigit():
            errors.append(f"samples.{key}: keys are orders or 'default'")
        elif not _is_int(value) or value < 2:
            errors.append(f"samples.{key}: must be an integer >= 2")

    if not _is_int(config.experiments) or config.experiments < 2:
        errors.append("experiments: must be an integer >= 2")
    if not _is_int(config.elements) or config.elements < 1:
        errors.append("elements: must be a positive integer")
    if not isinstance(config.threshold, (int, float)) or config.threshold <= 0:
        errors.append("threshold: must be positive")
    if not _is_int(config.steps) or config.steps < 0:
        errors.append("steps: must be a non-negative integer")
    if not _is_int(config.members) or config.members < 2:
        errors.append("members: must be an integer >= 2")
    if config.dataset not in DATASETS:
        errors.append(f"dataset: must be one of {', '.join(DATASETS)}")
    limit = config.dataset_limit
    if limit is not None and (not _is_int(limit) or limit < 1):
        errors.append("dataset_limit: must be a positive integer")
    try:
        config.training_config()
    except (TypeError, ValueError) as exc:
        errors.append(f"training: {exc}")

    if errors:
        raise ConfigError(errors)


def config_from_dict(
    data: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None
) -> ExperimentConfig:
    """Build and validate a config; non-``None`` ``overrides`` replace top-level keys.

    Raises:
        ConfigError: Listing every invalid or unknown field.
    """
    if not isinstance(data, Mapping):
        raise ConfigError(["config: top level must be an object"])
    merged = dict(data)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(merged) - _FIELDS)
    if unknown:
        raise ConfigError([f"{key}: unknown field" for key in unknown])
    if "subcommand" not in merged:
        raise ConfigError(["subcommand: required"])
    for name in _TUPLE_FIELDS:
        if name in merged:
            if not isinstance(merged[name], (list, tuple)):
                raise ConfigError([f"{name}: must be a list"])
            merged[name] = tuple(merged[name])
    if "samples" in merged:
        samples = merged["samples"]
        if _is_int(samples):
            merged["samples"] = {"default": samples}
        elif isinstance(samples, dict):
            merged["samples"] = {str(k): v for k, v in samples.items()}
        else:
            raise ConfigError(["samples: must be an integer or an object keyed by order"])
    config = ExperimentConfig(**merged)
    validate(config)
    return config


def load_config(
    path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None
) -> ExperimentConfig:
    """Read a JSON config file and apply CLI overrides."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON at line {exc.lineno}: {exc.msg}"]) from None
    config = config_from_dict(data, overrides)
    logger.debug(
        "loaded %s config from %s (hash %s)", config.subcommand, path, config.config_hash()[:12]
    )
    return config
