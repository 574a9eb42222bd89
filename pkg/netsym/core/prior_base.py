"""Abstract base class for parameter priors."""

from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from netsym.core.linalg import RngStream
from netsym.core.types import PriorKind


class ParameterPrior(ABC):
    """A sampleable distribution over one weight or bias tensor."""

    kind: PriorKind

    @abstractmethod
    def sample(
        self, shape: Sequence[int], rng: RngStream, count: Optional[int] = None
    ) -> np.ndarray:
        """Draw one tensor of ``shape``, or ``count`` of them stacked on a leading axis."""

    @abstractmethod
    def is_zero_mean(self) -> bool:
        """Whether every entry of the tensor has zero mean."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """JSON-compatible description, inverse of :func:`netsym.priors.prior_from_dict`."""


def full_shape(shape: Sequence[int], count: Optional[int]) -> Tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ValueError(f"prior shape must be positive, got {shape}")
    return shape if count is None else (int(count),) + shape
