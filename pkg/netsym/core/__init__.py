"""Core module for netsym."""

from netsym.core.config import ConfigError, ExperimentConfig, load_config
from netsym.core.correlators import CorrelatorTensor, InputSet, Kernel
from netsym.core.ensembles import ArchitectureSpec, LayerSpec, NetworkDraw
from netsym.core.experiment_core import ExperimentCore
from netsym.core.linalg import RngStream
from netsym.core.prior_base import ParameterPrior
from netsym.core.symmetry import DeviationReport, GroupElement, GroupSpec
from netsym.core.types import (
    ActionSide,
    Activation,
    Encoder,
    FieldType,
    GroupName,
    LayerKind,
    LossKind,
    PriorKind,
    Slot,
)

__all__ = [
    "ActionSide",
    "Activation",
    "ArchitectureSpec",
    "ConfigError",
    "CorrelatorTensor",
    "DeviationReport",
    "Encoder",
    "ExperimentConfig",
    "ExperimentCore",
    "FieldType",
    "GroupElement",
    "GroupName",
    "GroupSpec",
    "InputSet",
    "Kernel",
    "LayerKind",
    "LayerSpec",
    "LossKind",
    "NetworkDraw",
    "ParameterPrior",
    "PriorKind",
    "RngStream",
    "Slot",
]
