"""Independent Gaussian prior, optionally with a mean on the leading rows only."""

from typing import Any, Dict, Optional, Sequence

import numpy as np

from netsym.core.linalg import RngStream
from netsym.core.prior_base import ParameterPrior, full_shape
from netsym.core.types import PriorKind


class GaussianPrior(ParameterPrior):
    """Entries drawn i.i.d. from ``N(mean, std^2)``.

    ``std`` is the full standard deviation; width factors such as ``1/sqrt(N)`` are
    applied by whoever builds the prior. When ``rows`` is set, only the first
    ``rows`` entries along the leading axis carry ``mean`` and the rest are
    centred, which is how output rows are broken at initialization.
    """

    kind = PriorKind.GAUSSIAN

    def __init__(self, mean: float = 0.0, std: float = 1.0, rows: Optional[int] = None) -> None:
        if not np.isfinite(mean):
            raise ValueError(f"gaussian mean must be finite, got {mean}")
        if not std > 0:
            raise ValueError(f"gaussian std must be positive, got {std}")
        if rows is not None and rows < 0:
            raise ValueError(f"rows must be non-negative, got {rows}")
        self.mean = float(mean)
        self.std = float(std)
        self.rows = rows

    def sample(
        self, shape: Sequence[int], rng: RngStream, count: Optional[int] = None
    ) -> np.ndarray:
        draws = rng.normal(0.0, self.std, full_shape(shape, count))
        if self.mean == 0.0:
            return draws
        offset = np.zeros(tuple(shape))
        if self.rows is None:
            offset[...] = self.mean
        else:
            if self.rows > shape[0]:
                raise ValueError(
                    f"cannot break {self.rows} rows of a tensor with {shape[0]} rows"
                )
            offset[: self.rows] = self.mean
        return draws + offset

    def is_zero_mean(self) -> bool:
        return self.mean == 0.0 or self.rows == 0

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "mean": self.mean, "std": self.std, "rows": self.rows}

    def __repr__(self) -> str:
        return f"GaussianPrior(mean={self.mean}, std={self.std}, rows={self.rows})"
