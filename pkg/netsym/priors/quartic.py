"""Gaussian prior deformed by a quartic term, sampled with Metropolis chains.

The unnormalized log density of a tensor ``theta`` is
``-|theta|^2 / (2 std^2) - coupling * (|theta|^2)^2`` where ``|theta|^2`` sums over
every entry, so the quartic term couples all entries of the tensor.
"""

import logging
import math
from typing import Any, Dict, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate

from netsym.core.linalg import RngStream
from netsym.core.prior_base import ParameterPrior, full_shape
from netsym.core.types import PriorKind

logger = logging.getLogger(__name__)

DEFAULT_BURN_IN = 10_000
DEFAULT_THINNING = 10
DEFAULT_CHAINS = 64
TARGET_ACCEPTANCE = 0.4

# Step size is adapted every this many burn-in sweeps.
_ADAPT_EVERY = 100


class MetropolisResult(NamedTuple):
    """Draws from :func:`metropolis_sample`.

    ``chain_ids[i]`` is the chain that produced ``draws[i]``; chain-level batch
    means give honest standard errors for correlated draws.
    """

    draws: np.ndarray
    acceptance_rate: float
    chain_ids: np.ndarray
    step: float

    def chain_stderr(self, values) -> np.ndarray:
        """Standard error of ``values.mean(axis=0)`` from per-chain batch means.

        ``values`` holds one entry (or one array) per draw, in draw order.
        """
        values = np.asarray(values)
        chains = np.unique(self.chain_ids)
        if len(chains) < 2:
            return values.std(axis=0, ddof=1) / math.sqrt(len(values))
        means = np.stack([values[self.chain_ids == c].mean(axis=0) for c in chains])
        return means.std(axis=0, ddof=1) / math.sqrt(len(chains))


class QuarticPrior(ParameterPrior):
    """``p(theta) ~ exp(-|theta|^2 / (2 std^2) - coupling * |theta|^4)``.

    A zero coupling reduces exactly to an independent Gaussian and is sampled
    directly. A positive coupling goes through Metropolis with one chain per
    draw, so the tensors of a batch are independent. Each chain is burned in
    for ``burn_in`` sweeps and keeps only its final state.
    """

    kind = PriorKind.QUARTIC

    def __init__(
        self,
        std: float = 1.0,
        coupling: float = 0.0,
        burn_in: int = DEFAULT_BURN_IN,
    ) -> None:
        if not std > 0:
            raise ValueError(f"quartic std must be positive, got {std}")
        if not coupling >= 0:
            raise ValueError(f"quartic coupling must be non-negative, got {coupling}")
        if burn_in < 0:
            raise ValueError(f"burn_in must be non-negative, got {burn_in}")
        self.std = float(std)
        self.coupling = float(coupling)
        self.burn_in = int(burn_in)

    def log_density(self, theta: np.ndarray) -> np.ndarray:
        """Unnormalized log density over the trailing axes after the first."""
        theta = np.asarray(theta)
        sq = np.sum(theta.reshape(theta.shape[0], -1) ** 2, axis=1)
        return -sq / (2.0 * self.std**2) - self.coupling * sq**2

    def sample(
        self, shape: Sequence[int], rng: RngStream, count: Optional[int] = None
    ) -> np.ndarray:
        if self.coupling == 0.0:
            return rng.normal(0.0, self.std, full_shape(shape, count))
        n = 1 if count is None else count
        result = metropolis_sample(self, shape, rng, n, burn_in=self.burn_in, thinning=1, chains=n)
        return result.draws[0] if count is None else result.draws

    def is_zero_mean(self) -> bool:
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "std": self.std,
            "coupling": self.coupling,
            "burn_in": self.burn_in,
        }

    def __repr__(self) -> str:
        return f"QuarticPrior(std={self.std}, coupling={self.coupling})"


def _check_chain_settings(burn_in: int, thinning: int, chains: int) -> None:
    if burn_in < 0:
        raise ValueError(f"burn_in must be non-negative, got {burn_in}")
    if thinning < 1:
        raise ValueError(f"thinning must be >= 1, got {thinning}")
    if chains < 1:
        raise ValueError(f"chains must be >= 1, got {chains}")


def _sweep(prior: QuarticPrior, state, logp, step: float, rng: RngStream):
    proposal = state + step * rng.normal(size=state.shape)
    logp_new = prior.log_density(proposal)
    accept = rng.random(state.shape[0]) < np.exp(np.minimum(0.0, logp_new - logp))
    state = np.where(accept[:, None], proposal, state)
    logp = np.where(accept, logp_new, logp)
    return state, logp, int(accept.sum())


def metropolis_sample(
    prior: QuarticPrior,
    shape: Sequence[int],
    rng: RngStream,
    count: int,
    burn_in: int = DEFAULT_BURN_IN,
    thinning: int = DEFAULT_THINNING,
    chains: int = DEFAULT_CHAINS,
) -> MetropolisResult:
    """Draw ``count`` tensors of ``shape`` from ``prior`` with parallel random-walk chains.

    Chains start from the Gaussian part of the prior. During burn-in the step
    size is tuned toward a 40% acceptance rate; it is frozen afterwards, so the
    reported acceptance rate covers retained sweeps only. Each chain keeps every
    ``thinning``-th state and draws are interleaved chain by chain.

    Raises:
        ValueError: On a non-positive count or invalid chain settings.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    _check_chain_settings(burn_in, thinning, chains)
    shape = full_shape(shape, None)
    size = int(np.prod(shape))
    chains = min(chains, count)

    state = rng.normal(0.0, prior.std, (chains, size))
    logp = prior.log_density(state)
    step = 2.4 * prior.std / math.sqrt(size)

    accepted = 0
    for sweep in range(burn_in):
        state, logp, n = _sweep(prior, state, logp, step, rng)
        accepted += n
        if (sweep + 1) % _ADAPT_EVERY == 0:
            rate = accepted / (_ADAPT_EVERY * chains)
            step *= math.exp(rate - TARGET_ACCEPTANCE)
            accepted = 0

    per_chain = -(-count // chains)
    draws = np.empty((per_chain * chains, size))
    accepted = 0
    for j in range(per_chain):
        for _ in range(thinning):
            state, logp, n = _sweep(prior, state, logp, step, rng)
            accepted += n
        draws[j * chains : (j + 1) * chains] = state

    rate = accepted / (per_chain * thinning * chains)
    if not 0.1 <= rate <= 0.9:
        logger.warning(
            "metropolis acceptance rate %.3f far from target %.2f", rate, TARGET_ACCEPTANCE
        )
    logger.debug(
        "metropolis: %d draws, %d chains, step %.4g, acceptance %.3f", count, chains, step, rate
    )
    chain_ids = np.tile(np.arange(chains), per_chain)[:count]
    return MetropolisResult(draws[:count].reshape((count,) + shape), rate, chain_ids, step)


def quartic_moment_quadrature(std: float, coupling: float, power: int) -> float:
    """``E[theta^power]`` for a single scalar under the quartic prior, by adaptive quadrature.

    Integrates over ``[-10 s, 10 s]`` with ``s = max(std, 1)``, outside of which the
    density is negligible.
    """
    if not std > 0:
        raise ValueError(f"quartic std must be positive, got {std}")
    if power < 0:
        raise ValueError(f"power must be non-negative, got {power}")
    bound = 10.0 * max(std, 1.0)

    def weight(x: float) -> float:
        return math.exp(-x * x / (2.0 * std * std) - coupling * x**4)

    norm, _ = integrate.quad(weight, -bound, bound, epsabs=1e-13, epsrel=1e-12)
    moment, _ = integrate.quad(
        lambda x: x**power * weight(x), -bound, bound, epsabs=1e-13, epsrel=1e-12
    )
    return moment / norm
