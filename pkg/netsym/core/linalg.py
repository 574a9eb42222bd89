"""Dense matrix and tensor helpers plus the seedable random stream used everywhere.

Matrices and tensors are plain ``numpy`` arrays; complex data uses ``complex128``.
"""

import logging
from typing import Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Taylor terms are summed on a matrix scaled to 1-norm <= this bound.
_EXPM_SCALED_NORM = 0.5
_EXPM_MAX_TERMS = 40


class RngStream:
    """A reproducible stream of random draws.

    Identical ``(seed, stream_id)`` pairs reproduce identical sequences. Worker
    streams are derived with :meth:`child`, which never collides with the parent
    or with children of a different index.
    """

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self._init(int(seed), (int(stream_id),))

    def _init(self, seed: int, key: Tuple[int, ...]) -> None:
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self._seed = seed
        self._key = key
        sequence = np.random.SeedSequence(seed, spawn_key=key)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    @classmethod
    def _from_key(cls, seed: int, key: Tuple[int, ...]) -> "RngStream":
        stream = cls.__new__(cls)
        stream._init(seed, key)
        return stream

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def stream_id(self) -> int:
        return self._key[-1]

    @property
    def key(self) -> Tuple[int, ...]:
        return self._key

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream for worker ``index``."""
        return RngStream._from_key(self._seed, self._key + (int(index),))

    # -- draws ----------------------------------------------------------------

    def normal(self, loc=0.0, scale=1.0, size=None) -> np.ndarray:
        return self._generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def random(self, size=None) -> np.ndarray:
        return self._generator.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self._seed}, key={self._key})"


# -- matrices -----------------------------------------------------------------


def _check_square(a: np.ndarray, name: str) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} requires a square matrix, got shape {a.shape}")


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a truncated Taylor series.

    Raises:
        ValueError: If ``a`` is not square or has non-finite entries.
    """
    a = np.asarray(a)
    _check_square(a, "expm")
    if not np.all(np.isfinite(a)):
        raise ValueError("expm requires finite entries")

    dtype = np.result_type(a.dtype, np.float64)
    identity = np.eye(a.shape[0], dtype=dtype)
    norm = float(np.max(np.sum(np.abs(a), axis=0))) if a.size else 0.0
    squarings = 0
    if norm > _EXPM_SCALED_NORM:
        squarings = int(np.ceil(np.log2(norm / _EXPM_SCALED_NORM)))
    scaled = a.astype(dtype) / (2.0**squarings)

    result = identity.copy()
    term = identity
    for k in range(1, _EXPM_MAX_TERMS + 1):
        term = (term @ scaled) / k
        result = result + term
        if np.max(np.abs(term)) <= np.finfo(np.float64).eps * np.max(np.abs(result)):
            break

    for _ in range(squarings):
        result = result @ result
    return result


def orthogonality_residual(r: np.ndarray) -> float:
    """Mean magnitude of the off-diagonal entries of ``R^T R``."""
    r = np.asarray(r)
    _check_square(r, "orthogonality_residual")
    product = r.conj().T @ r
    n = r.shape[0]
    if n == 1:
        return 0.0
    off = product[~np.eye(n, dtype=bool)]
    return float(np.mean(np.abs(off)))


def max_unitarity_error(r: np.ndarray) -> float:
    """``max |R^dagger R - I|`` over all entries."""
    r = np.asarray(r)
    _check_square(r, "max_unitarity_error")
    return float(np.max(np.abs(r.conj().T @ r - np.eye(r.shape[0]))))


# -- tensors ------------------------------------------------------------------


def contract_index(t, m, axis: int) -> np.ndarray:
    """Contract ``axis`` of ``t`` against the column index of ``m``.

    The result has ``m.shape[0]`` entries along ``axis``; other axes are untouched:
    ``out[..., i, ...] = sum_j m[i, j] * t[..., j, ...]``.
    """
    t = np.asarray(t)
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"contraction matrix must be 2-D, got shape {m.shape}")
    if not -t.ndim <= axis < t.ndim:
        raise ValueError(f"axis {axis} out of range for tensor of rank {t.ndim}")
    axis = axis % t.ndim
    if t.shape[axis] != m.shape[1]:
        raise ValueError(
            f"dimension mismatch: tensor axis {axis} has {t.shape[axis]} entries, "
            f"matrix has {m.shape[1]} columns"
        )
    out = np.tensordot(m, t, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def contract_all(t, matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Contract axis ``k`` of ``t`` with ``matrices[k]`` for every axis, in ascending order."""
    t = np.asarray(t)
    if len(matrices) != t.ndim:
        raise ValueError(f"need {t.ndim} matrices, got {len(matrices)}")
    for axis, m in enumerate(matrices):
        t = contract_index(t, m, axis)
    return t


def outer_all(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Batched outer product: ``(B, D1), (B, D2), ... -> (B, D1, D2, ...)``."""
    if not vectors:
        raise ValueError("outer_all needs at least one factor")
    result = vectors[0]
    for v in vectors[1:]:
        result = result[..., None] * v.reshape(v.shape[:1] + (1,) * (result.ndim - 1) + v.shape[1:])
    return result


def delta_tensor(dim: int, pairs: Sequence[Tuple[int, int]], rank: int) -> np.ndarray:
    """Rank-``rank`` tensor ``prod delta_{i_a i_b}`` over the index ``pairs``."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    if rank > len(letters):
        raise ValueError(f"rank {rank} too large")
    eye = np.eye(dim)
    operands = []
    subscripts = []
    for a, b in pairs:
        operands.append(eye)
        subscripts.append(letters[a] + letters[b])
    spec = ",".join(subscripts) + "->" + letters[:rank]
    return np.einsum(spec, *operands)
