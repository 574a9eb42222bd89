"""Uniform prior on the circle of circumference 1."""

from typing import Any, Dict, Optional, Sequence

import numpy as np

from netsym.core.linalg import RngStream
from netsym.core.prior_base import ParameterPrior, full_shape
from netsym.core.types import PriorKind


class UniformCirclePrior(ParameterPrior):
    """Entries uniform on ``[0, 1)``, the bias prior of a t-layer."""

    kind = PriorKind.UNIFORM_CIRCLE

    def sample(
        self, shape: Sequence[int], rng: RngStream, count: Optional[int] = None
    ) -> np.ndarray:
        return rng.random(full_shape(shape, count))

    def is_zero_mean(self) -> bool:
        return False

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value}

    def __repr__(self) -> str:
        return "UniformCirclePrior()"
