"""Concrete parameter priors."""

from typing import Any, Dict

from netsym.core.prior_base import ParameterPrior
from netsym.core.types import PriorKind
from netsym.priors.gaussian import GaussianPrior
from netsym.priors.quartic import (
    MetropolisResult,
    QuarticPrior,
    metropolis_sample,
    quartic_moment_quadrature,
)
from netsym.priors.uniform_circle import UniformCirclePrior


def prior_from_dict(data: Dict[str, Any]) -> ParameterPrior:
    """Build a prior from the dict produced by its ``to_dict``.

    Raises:
        ValueError: On an unknown kind or invalid parameters.
    """
    try:
        kind = PriorKind(data["kind"])
    except (KeyError, ValueError):
        raise ValueError(f"unknown prior kind: {data.get('kind')!r}") from None
    params = {k: v for k, v in data.items() if k != "kind"}
    try:
        if kind is PriorKind.GAUSSIAN:
            return GaussianPrior(**params)
        if kind is PriorKind.UNIFORM_CIRCLE:
            return UniformCirclePrior(**params)
        return QuarticPrior(**params)
    except TypeError as exc:
        raise ValueError(f"bad {kind.value} prior parameters: {exc}") from None


__all__ = [
    "GaussianPrior",
    "MetropolisResult",
    "QuarticPrior",
    "UniformCirclePrior",
    "metropolis_sample",
    "prior_from_dict",
    "quartic_moment_quadrature",
]
