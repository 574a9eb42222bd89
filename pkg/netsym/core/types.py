"""Core data types for netsym."""

from enum import Enum
from typing import NamedTuple


class FieldType(Enum):
    """Scalar field of network outputs."""

    REAL = "real"
    COMPLEX = "complex"


class PriorKind(Enum):
    """Families of parameter priors."""

    GAUSSIAN = "gaussian"
    UNIFORM_CIRCLE = "uniform-circle"
    QUARTIC = "quartic"


class LayerKind(Enum):
    """Layer types an architecture can stack."""

    LINEAR = "linear"
    T_LAYER = "t-layer"
    ACTIVATION = "activation"


class Activation(Enum):
    """Elementwise nonlinearities."""

    RELU = "relu"
    EXP_NORMALIZED = "exp-normalized"


class GroupName(Enum):
    """Symmetry groups that can be checked."""

    SO = "SO"
    SU = "SU"
    TRANSLATION = "translation"


class ActionSide(Enum):
    """Which side of the network a group acts on."""

    INPUT = "input"
    OUTPUT = "output"


class LossKind(Enum):
    """Training losses."""

    MSE = "mse"
    SO_INVARIANT = "so-invariant"


class Encoder(Enum):
    """Class label encodings."""

    ONE_HOT = "one-hot"
    ONE_COLD = "one-cold"


class Slot(NamedTuple):
    """One factor of a correlator: the input point it reads and whether it is conjugated."""

    point: int
    conjugate: bool = False
