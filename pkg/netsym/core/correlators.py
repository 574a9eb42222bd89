"""Monte Carlo n-point correlators, the Gaussian-process Wick oracle and related checks.

Correlators are estimated from batches of independently drawn networks. Every
worker owns a child stream of the caller's :class:`RngStream` and accumulates
running moments; partial results are merged in worker order, so a fixed
``(seed, workers)`` pair reproduces the same tensor bit for bit.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from netsym.core.ensembles import ArchitectureSpec, forward, sample_networks
from netsym.core.linalg import RngStream, contract_index, delta_tensor, outer_all
from netsym.core.types import FieldType, Slot
from netsym.core.workers import map_ordered, split_count

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES_2PT = 4_000_000
DEFAULT_SAMPLES_4PT = 1_000_000
DEFAULT_BATCH_SIZE = 8192
JACKKNIFE_BLOCKS = 16

# Upper bound on sampled parameter entries held per batch.
_MAX_BATCH_ENTRIES = 1 << 24


def default_samples(order: int) -> int:
    return DEFAULT_SAMPLES_2PT if order <= 2 else DEFAULT_SAMPLES_4PT


def _encode(arr: np.ndarray) -> Any:
    if np.iscomplexobj(arr):
        return np.stack([arr.real, arr.imag], axis=-1).tolist()
    return arr.tolist()


def _decode(data: Any, shape: Tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape == shape:
        return arr
    if arr.shape == shape + (2,):
        return arr[..., 0] + 1j * arr[..., 1]
    raise ValueError(f"tensor data has shape {arr.shape}, expected {shape}")


def as_slots(slots: Sequence[Any]) -> Tuple[Slot, ...]:
    """Normalize ints or ``(point, conjugate)`` pairs to :class:`Slot` tuples."""
    out = []
    for s in slots:
        if isinstance(s, (int, np.integer)):
            out.append(Slot(int(s)))
        else:
            point, conjugate = s
            out.append(Slot(int(point), bool(conjugate)))
    if not out:
        raise ValueError("a correlator needs at least one slot")
    return tuple(out)


# -- types --------------------------------------------------------------------


@dataclass(frozen=True)
class InputSet:
    """Points ``x_1 ... x_m`` in ``R^d`` stored as an ``(m, d)`` array."""

    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.array(self.points)
        if not np.iscomplexobj(points):
            points = points.astype(float)
        if points.ndim == 1:
            points = points[None, :]
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise ValueError(f"inputs must be a non-empty (m, d) array, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("inputs must be finite")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class CorrelatorTensor:
    """Estimate of ``G^(n)_{i_1...i_n}`` at fixed inputs.

    ``slots[k]`` names the input point read by tensor axis ``k`` and whether that
    factor is conjugated. ``mean`` and ``stderr`` share the shape ``(D,) * n``.
    """

    slots: Tuple[Slot, ...]
    mean: np.ndarray
    stderr: np.ndarray
    samples: int
    seed: Optional[int] = None
    connected: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "slots", as_slots(self.slots))
        mean = np.asarray(self.mean)
        stderr = np.asarray(self.stderr, dtype=float)
        if mean.shape != stderr.shape:
            raise ValueError(f"mean shape {mean.shape} differs from stderr shape {stderr.shape}")
        if mean.ndim != len(self.slots):
            raise ValueError(f"tensor of rank {mean.ndim} for {len(self.slots)} slots")
        if len(set(mean.shape)) > 1:
            raise ValueError(f"correlator axes must share one dimension, got {mean.shape}")
        if np.any(stderr < 0):
            raise ValueError("stderr entries must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stderr", stderr)

    @property
    def order(self) -> int:
        return len(self.slots)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def replace(self, mean: np.ndarray, stderr: np.ndarray) -> "CorrelatorTensor":
        return CorrelatorTensor(self.slots, mean, stderr, self.samples, self.seed, self.connected)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "order": self.order,
            "slots": [[s.point, s.conjugate] for s in self.slots],
            "shape": list(self.mean.shape),
            "mean": _encode(self.mean),
            "stderr": self.stderr.tolist(),
            "samples": self.samples,
            "seed": self.seed,
            "connected": self.connected,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CorrelatorTensor":
        shape = tuple(data["shape"])
        return cls(
            slots=as_slots(data["slots"]),
            mean=_decode(data["mean"], shape),
            stderr=_decode(data["stderr"], shape),
            samples=int(data["samples"]),
            seed=data.get("seed"),
            connected=bool(data.get("connected", False)),
        )


@dataclass(frozen=True)
class Kernel:
    """Per-component 2-pt function ``K(x_a, x_b)`` over an input set."""

    matrix: np.ndarray
    stderr: np.ndarray = field(default=None)
    samples: int = 0

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"kernel must be a square matrix, got shape {matrix.shape}")
        if self.stderr is None:
            stderr = np.zeros_like(matrix)
        else:
            stderr = np.asarray(self.stderr, dtype=float)
        if stderr.shape != matrix.shape:
            raise ValueError(
                f"stderr shape {stderr.shape} differs from kernel shape {matrix.shape}"
            )
        if np.any(stderr < 0):
            raise ValueError("stderr entries must be non-negative")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "stderr", stderr)

    def __len__(self) -> int:
        return self.matrix.shape[0]


# -- accumulation -------------------------------------------------------------


class RunningMoments:
    """Running count, mean and summed squared deviation, merged pairwise (Chan et al.)."""

    def __init__(self) -> None:
        self.count = 0
        self.mean: Optional[np.ndarray] = None
        self.m2: Optional[np.ndarray] = None

    def add_batch(self, values: np.ndarray) -> None:
        mean = values.mean(axis=0)
        m2 = np.sum(np.abs(values - mean) ** 2, axis=0)
        self.merge(len(values), mean, m2)

    def merge(self, count: int, mean: np.ndarray, m2: np.ndarray) -> None:
        if count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = count, mean, m2
            return
        total = self.count + count
        delta = mean - self.mean
        self.mean = self.mean + delta * (count / total)
        self.m2 = self.m2 + m2 + np.abs(delta) ** 2 * (self.count * count / total)
        self.count = total

    def stderr(self) -> np.ndarray:
        if self.count < 2:
            raise ValueError("standard errors need at least 2 samples")
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def _slot_factors(out: np.ndarray, slots: Sequence[Slot]) -> List[np.ndarray]:
    return [np.conj(out[:, s.point, :]) if s.conjugate else out[:, s.point, :] for s in slots]


def _subsets(n: int) -> List[Tuple[int, ...]]:
    return [c for size in range(1, n + 1) for c in itertools.combinations(range(n), size)]


class _SlotBlock:
    """Moments of slot products for one block of draws.

    With ``connected`` the block also keeps sums of every sub-product, which the
    cumulant and its jackknife error are built from.
    """

    def __init__(
        self,
        slots: Sequence[Slot],
        connected: bool = False,
        transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ) -> None:
        self.slots = slots
        self.connected = connected
        self.transform = transform
        self.moments = RunningMoments()
        self.sums: Dict[Tuple[int, ...], np.ndarray] = {}

    @property
    def count(self) -> int:
        return self.moments.count

    def add(self, out: np.ndarray) -> None:
        factors = _slot_factors(out, self.slots)
        product = outer_all(factors)
        if self.transform is not None:
            product = self.transform(product)
        self.moments.add_batch(product)
        if self.connected:
            for subset in _subsets(len(self.slots)):
                part = outer_all([factors[i] for i in subset]).sum(axis=0)
                self.sums[subset] = self.sums[subset] + part if subset in self.sums else part


class _KernelBlock:
    def __init__(self) -> None:
        self.moments = RunningMoments()

    @property
    def count(self) -> int:
        return self.moments.count

    def add(self, out: np.ndarray) -> None:
        self.moments.add_batch(np.einsum("bpi,bqi->bpq", out, out) / out.shape[-1])


def _collect(
    spec: ArchitectureSpec,
    points: np.ndarray,
    samples: int,
    rng: RngStream,
    workers: int,
    batch_size: int,
    blocks: int,
    make_block: Callable[[], Any],
) -> List[Any]:
    """Sample ``samples`` networks across workers and feed their outputs to blocks.

    Returns all non-empty blocks in worker order.
    """
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    workers = max(1, int(workers))
    batch_size = max(1, min(batch_size, _MAX_BATCH_ENTRIES // max(1, spec.parameter_count)))
    per_worker = split_count(samples, workers)
    blocks_per_worker = max(1, -(-blocks // workers))

    def job(index: int) -> List[Any]:
        stream = rng.child(index)
        done = []
        for count in split_count(per_worker[index], blocks_per_worker):
            if count == 0:
                continue
            block = make_block()
            remaining = count
            while remaining > 0:
                size = min(batch_size, remaining)
                block.add(forward(sample_networks(spec, size, stream), points))
                remaining -= size
            done.append(block)
        logger.debug("worker %d: %d draws in %d blocks", index, per_worker[index], len(done))
        return done

    return [block for part in map_ordered(job, workers, workers) for block in part]


def set_partitions(items: Sequence[int]) -> Iterator[List[Tuple[int, ...]]]:
    """All set partitions of ``items``; blocks keep the input order."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in set_partitions(rest):
        yield [(first,)] + partition
        for i, block in enumerate(partition):
            yield partition[:i] + [(first,) + block] + partition[i + 1 :]


def _cumulant(moments: Dict[Tuple[int, ...], np.ndarray], n: int) -> np.ndarray:
    letters = "abcdefghijklmnopqrstuvwxyz"[:n]
    total = None
    for partition in set_partitions(range(n)):
        k = len(partition)
        coefficient = (-1) ** (k - 1) * math.factorial(k - 1)
        spec = ",".join("".join(letters[i] for i in block) for block in partition) + "->" + letters
        term = coefficient * np.einsum(spec, *[moments[block] for block in partition])
        total = term if total is None else total + term
    return total


def _finish(blocks: List[Any], slots: Tuple[Slot, ...], seed: Optional[int], connected: bool):
    merged = RunningMoments()
    for block in blocks:
        merged.merge(block.moments.count, block.moments.mean, block.moments.m2)
    if not connected:
        return CorrelatorTensor(slots, merged.mean, merged.stderr(), merged.count, seed)

    if len(blocks) < 2:
        raise ValueError("connected correlators need at least 2 sample blocks")
    n = len(slots)
    total = merged.count
    sums = {s: sum(block.sums[s] for block in blocks) for s in blocks[0].sums}
    kappa = _cumulant({s: v / total for s, v in sums.items()}, n)
    leave_out = np.stack(
        [
            _cumulant({s: (v - block.sums[s]) / (total - block.count) for s, v in sums.items()}, n)
            for block in blocks
        ]
    )
    j = len(blocks)
    spread = np.sum(np.abs(leave_out - leave_out.mean(axis=0)) ** 2, axis=0)
    stderr = np.sqrt((j - 1) / j * spread)
    return CorrelatorTensor(slots, kappa, stderr, total, seed, connected=True)


# -- estimators ---------------------------------------------------------------


def _check_slots(slots: Tuple[Slot, ...], inputs: InputSet) -> None:
    for s in slots:
        if not 0 <= s.point < len(inputs):
            raise ValueError(f"slot point {s.point} out of range for {len(inputs)} inputs")


def estimate_correlator(
    spec: ArchitectureSpec,
    inputs: InputSet,
    slots: Sequence[Any],
    samples: int,
    rng: RngStream,
    workers: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
    connected: bool = False,
) -> CorrelatorTensor:
    """Monte Carlo estimate of ``E[f(x_{p_1}) ... f(x_{p_n})]``.

    ``slots`` lists the input point of every factor, optionally with a conjugation
    flag. The standard error is the elementwise sample standard deviation over
    ``sqrt(samples)``; for complex entries the deviation is taken in modulus.
    With ``connected`` the tensor is the joint cumulant obtained by subtracting
    every product of lower moments, and its error is a block jackknife.

    Raises:
        ValueError: If ``samples < 2``, a slot point is out of range, or the input
            dimension does not match the architecture.
    """
    slots = as_slots(slots)
    if not isinstance(inputs, InputSet):
        inputs = InputSet(inputs)
    _check_slots(slots, inputs)
    if inputs.dim != spec.input_dim:
        raise ValueError(
            f"dimension mismatch: network expects {spec.input_dim} inputs, got {inputs.dim}"
        )
    logger.info(
        "estimating %d-pt%s correlator from %d samples on %d worker(s)",
        len(slots),
        " connected" if connected else "",
        samples,
        workers,
    )
    blocks = _collect(
        spec,
        inputs.points,
        samples,
        rng,
        workers,
        batch_size,
        JACKKNIFE_BLOCKS if connected else 1,
        lambda: _SlotBlock(slots, connected),
    )
    return _finish(blocks, slots, rng.seed, connected)


def correlator_from_outputs(
    outputs, slots: Sequence[Any], connected: bool = False, seed: Optional[int] = None
) -> CorrelatorTensor:
    """Correlator from an explicit ``(samples, points, D)`` array of network outputs."""
    outputs = np.asarray(outputs)
    if outputs.ndim != 3:
        raise ValueError(f"outputs must have shape (samples, points, D), got {outputs.shape}")
    if len(outputs) < 2:
        raise ValueError(f"samples must be >= 2, got {len(outputs)}")
    slots = as_slots(slots)
    for s in slots:
        if not 0 <= s.point < outputs.shape[1]:
            raise ValueError(f"slot point {s.point} out of range for {outputs.shape[1]} inputs")
    blocks = []
    bounds = np.cumsum([0] + split_count(len(outputs), JACKKNIFE_BLOCKS if connected else 1))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi > lo:
            block = _SlotBlock(slots, connected)
            block.add(outputs[lo:hi])
            blocks.append(block)
    return _finish(blocks, slots, seed, connected)


def estimate_kernel(
    spec: ArchitectureSpec,
    inputs: InputSet,
    samples: int,
    rng: RngStream,
    workers: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> Kernel:
    """Per-component averaged 2-pt function ``K(x_a, x_b) = (1/D) sum_i E[f_i(x_a) f_i(x_b)]``.

    The matrix is symmetric by construction.
    """
    if spec.field is FieldType.COMPLEX:
        raise ValueError("estimate_kernel supports real architectures only")
    if not isinstance(inputs, InputSet):
        inputs = InputSet(inputs)
    if inputs.dim != spec.input_dim:
        raise ValueError(
            f"dimension mismatch: network expects {spec.input_dim} inputs, got {inputs.dim}"
        )
    blocks = _collect(spec, inputs.points, samples, rng, workers, batch_size, 1, _KernelBlock)
    merged = RunningMoments()
    for block in blocks:
        merged.merge(block.moments.count, block.moments.mean, block.moments.m2)
    stderr = merged.stderr()
    return Kernel(0.5 * (merged.mean + merged.mean.T), 0.5 * (stderr + stderr.T), merged.count)


# -- Gaussian process oracle ---------------------------------------------------


def pair_partitions(items: Sequence[int]) -> Iterator[List[Tuple[int, int]]]:
    """All perfect matchings of ``items``, pairing the lowest unpaired element first."""
    items = list(items)
    if not items:
        yield []
        return
    first = items.pop(0)
    for i, item in enumerate(items):
        for rest in pair_partitions(items[:i] + items[i + 1 :]):
            yield [(first, item)] + rest


def _check_even(order: int) -> None:
    if order % 2:
        raise ValueError(f"wick contractions need an even order, got odd order {order}")


def wick_correlator(kernel: Kernel, points: Sequence[int], output_dim: int) -> np.ndarray:
    """Gaussian ``G^(2n)`` from its 2-pt function.

    ``points[k]`` is the kernel index read by tensor axis ``k``; the result is
    ``sum over pairings of prod delta_{i_a i_b} K(x_{p_a}, x_{p_b})``.

    Raises:
        ValueError: On an odd order or a point outside the kernel.
    """
    points = [int(p) for p in points]
    order = len(points)
    _check_even(order)
    if order == 0:
        raise ValueError("wick_correlator needs at least two points")
    if any(not 0 <= p < len(kernel) for p in points):
        raise ValueError(f"points {points} out of range for a kernel over {len(kernel)} inputs")
    total = np.zeros((output_dim,) * order)
    for pairing in pair_partitions(range(order)):
        weight = math.prod(kernel.matrix[points[a], points[b]] for a, b in pairing)
        total += weight * delta_tensor(output_dim, pairing, order)
    return total


def wick_stderr(kernel: Kernel, points: Sequence[int], output_dim: int) -> np.ndarray:
    """Error of :func:`wick_correlator` from the kernel's stderr.

    Within a pairing the relative errors of the kernel factors add in quadrature;
    pairings are summed linearly, which overestimates since they share factors.
    """
    points = [int(p) for p in points]
    order = len(points)
    _check_even(order)
    total = np.zeros((output_dim,) * order)
    for pairing in pair_partitions(range(order)):
        values = [kernel.matrix[points[a], points[b]] for a, b in pairing]
        errors = [kernel.stderr[points[a], points[b]] for a, b in pairing]
        term = 0.0
        for k, err in enumerate(errors):
            term += (err * math.prod(v for j, v in enumerate(values) if j != k)) ** 2
        total += math.sqrt(term) * delta_tensor(output_dim, pairing, order)
    return total


def gaussian_process_outputs(
    kernel: Kernel, output_dim: int, samples: int, rng: RngStream
) -> np.ndarray:
    """Exact GP draws with ``Cov(f_i(x_a), f_j(x_b)) = delta_ij K_ab``: ``(samples, m, D)``."""
    w, v = np.linalg.eigh(kernel.matrix)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    z = rng.normal(size=(samples, output_dim, len(kernel)))
    return np.swapaxes(z @ root.T, -1, -2)


def standardized_difference(
    a: np.ndarray, da: np.ndarray, b: np.ndarray, db: np.ndarray
) -> np.ndarray:
    """``|a - b| / sqrt(da^2 + db^2)``; zero where both the difference and the error vanish."""
    diff = np.abs(a - b)
    sigma = np.sqrt(np.abs(da) ** 2 + np.abs(db) ** 2)
    out = np.where(diff > 0, np.inf, 0.0)
    np.divide(diff, sigma, out=out, where=sigma > 0)
    return out


class GPLimitRow(NamedTuple):
    width: int
    order: int
    discrepancy: float
    mean_sigma: float
    pass_fraction: float


class GPLimitReport(NamedTuple):
    """Per-width comparison of measured correlators with their Wick prediction.

    ``discrepancy`` is the largest standardized difference over tensor elements
    and ``mean_sigma`` its mean; ``pass_fraction`` counts elements within ``threshold``.
    """

    rows: List[GPLimitRow]
    threshold: float

    def discrepancies(self, order: int) -> List[float]:
        return [row.discrepancy for row in self.rows if row.order == order]

    def decreasing(self, order: int) -> bool:
        values = self.discrepancies(order)
        return all(b < a for a, b in zip(values, values[1:]))

    def to_dict(self) -> Dict[str, Any]:
        return {"threshold": self.threshold, "rows": [row._asdict() for row in self.rows]}

    def csv_rows(self) -> List[List[Any]]:
        return [[r.width, r.order, r.discrepancy, r.mean_sigma, r.pass_fraction] for r in self.rows]


GP_LIMIT_COLUMNS = ["N", "n", "discrepancy", "mean_sigma", "pass_fraction"]


def gp_limit_check(
    family: Callable[[int], ArchitectureSpec],
    widths: Sequence[int],
    inputs: InputSet,
    rng: RngStream,
    orders: Sequence[int] = (4,),
    samples: Optional[int] = None,
    kernel_samples: Optional[int] = None,
    workers: int = 1,
    threshold: float = 4.0,
) -> GPLimitReport:
    """Compare measured even correlators with the Wick expansion of the measured kernel.

    ``family(N)`` builds the architecture at width ``N``. Slot ``k`` reads input
    ``k mod m``. The kernel and the correlator use independent streams.
    """
    if not isinstance(inputs, InputSet):
        inputs = InputSet(inputs)
    rows = []
    for index, width in enumerate(widths):
        spec = family(width)
        stream = rng.child(index)
        n_kernel = kernel_samples or DEFAULT_SAMPLES_2PT
        kernel = estimate_kernel(spec, inputs, n_kernel, stream.child(0), workers)
        for order in orders:
            _check_even(order)
            points = [k % len(inputs) for k in range(order)]
            n_samples = samples or default_samples(order)
            measured = estimate_correlator(
                spec, inputs, points, n_samples, stream.child(order), workers
            )
            predicted = wick_correlator(kernel, points, spec.output_dim)
            predicted_err = wick_stderr(kernel, points, spec.output_dim)
            z = standardized_difference(measured.mean, measured.stderr, predicted, predicted_err)
            rows.append(
                GPLimitRow(
                    int(width),
                    int(order),
                    float(np.max(z)),
                    float(np.mean(z)),
                    float(np.mean(z <= threshold)),
                )
            )
            logger.info("gp-limit N=%d n=%d: discrepancy %.3f", width, order, rows[-1].discrepancy)
    return GPLimitReport(rows, float(threshold))


# -- non-Gaussian priors -------------------------------------------------------


def gaussian_moment(std: float, power: int) -> float:
    """``E[theta^power]`` for ``theta ~ N(0, std^2)``."""
    if power % 2:
        return 0.0
    return std**power * math.prod(range(power - 1, 0, -2))


def _quartic_connected_sum(std: float, count: int) -> float:
    """``E[theta^2 S^2] - E[theta^2] E[S^2]`` with ``S`` the squared norm over ``count`` entries.

    Index coincidences are enumerated class by class; the two quartic indices are
    excluded from the observed index pairwise.
    """
    e2, e4, e6 = (gaussian_moment(std, p) for p in (2, 4, 6))
    same = e6 - e2 * e4  # both quartic indices on the observed entry
    one_shared = 2 * (count - 1) * (e4 * e2 - e2**3)
    # the remaining coincidence classes factorize and cancel
    return same + one_shared


def quartic_second_moment(std: float, coupling: float, count: int = 1) -> float:
    """``E[theta^2]`` to first order in ``coupling``.

    ``theta`` is one entry of a quartic-invariant tensor with ``count`` entries.
    """
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return gaussian_moment(std, 2) - coupling * _quartic_connected_sum(std, count)


def perturbative_ngp_2pt(
    std: float, coupling: float, hidden_kernel: Kernel, width: int, output_dim: int = 1
) -> Kernel:
    """First-order 2-pt function of a network whose ``D x N`` output weight is quartic.

    With ``f_i = sum_j W_ij g_j`` and ``hidden_kernel`` the per-unit
    ``E[g_j(x) g_j(x')]``, the result is ``delta_{i1 i2} E[W^2] N k(x, x')`` where
    ``E[W^2]`` is expanded to first order in ``coupling``.
    """
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    if coupling < 0:
        raise ValueError(f"coupling must be non-negative, got {coupling}")
    if coupling > 0.1 * (2.0 * std**2) ** -2:
        logger.warning("coupling %.3g beyond the perturbative regime for std %.3g", coupling, std)
    factor = quartic_second_moment(std, coupling, output_dim * width) * width
    return Kernel(
        factor * hidden_kernel.matrix, abs(factor) * hidden_kernel.stderr, hidden_kernel.samples
    )


# -- Ward identity -------------------------------------------------------------


def ward_identity_sum(
    spec: ArchitectureSpec,
    inputs: InputSet,
    slots: Sequence[Any],
    generator: np.ndarray,
    samples: int,
    rng: RngStream,
    workers: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> CorrelatorTensor:
    """``sum_k E[f(x_1) ... (T f)(x_k) ... f(x_n)]`` for generator ``T``.

    The insertion is applied per draw, so the stderr accounts for correlations
    between the terms. Conjugated slots receive ``conj(T)``. Zero within errors
    for an ensemble invariant under ``exp(t T)``.

    Raises:
        ValueError: If ``T`` is not ``D x D``.
    """
    slots = as_slots(slots)
    if not isinstance(inputs, InputSet):
        inputs = InputSet(inputs)
    _check_slots(slots, inputs)
    generator = np.asarray(generator)
    d = spec.output_dim
    if generator.shape != (d, d):
        raise ValueError(f"generator must be {d}x{d}, got shape {generator.shape}")
    matrices = [generator.conj() if s.conjugate else generator for s in slots]

    def insert(product: np.ndarray) -> np.ndarray:
        return sum(contract_index(product, m, axis=k + 1) for k, m in enumerate(matrices))

    blocks = _collect(
        spec,
        inputs.points,
        samples,
        rng,
        workers,
        batch_size,
        1,
        lambda: _SlotBlock(slots, transform=insert),
    )
    return _finish(blocks, slots, rng.seed, False)
