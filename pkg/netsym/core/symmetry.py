"""Group elements, their action on correlators and inputs, and deviation statistics."""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from netsym.core.correlators import (
    CorrelatorTensor,
    InputSet,
    as_slots,
    estimate_correlator,
    standardized_difference,
)
from netsym.core.ensembles import ArchitectureSpec
from netsym.core.linalg import RngStream, contract_all, expm, orthogonality_residual
from netsym.core.types import ActionSide, GroupName
from netsym.core.workers import map_ordered

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 3.0

# Recorded in every deviation report. dG is the elementwise spread of G across experiments.
STDERR_FORMULA = (
    "dG = std_e(G_e) (ddof 1); "
    "dG'^2 = (|S|^2)^(n) . dG^2 + dR^2 * sum_t (|S|^2)^(n, axis t -> ones) . |G|^2; "
    "dM = sqrt(dG'^2 + dG^2)"
)

DEVIATION_COLUMNS = ["n", "D", "N", "mu_M", "sigma_M", "delta_M", "pass_fraction"]


@dataclass(frozen=True)
class GroupSpec:
    """A group acting on the inputs or outputs of a network."""

    name: GroupName
    dim: int
    side: ActionSide = ActionSide.OUTPUT

    def __post_init__(self) -> None:
        object.__setattr__(self, "name", GroupName(self.name))
        object.__setattr__(self, "side", ActionSide(self.side))
        if self.name is GroupName.TRANSLATION:
            if self.dim < 1:
                raise ValueError(f"translation dimension must be >= 1, got {self.dim}")
            if self.side is not ActionSide.INPUT:
                raise ValueError("translations act on inputs only")
        elif self.dim < 2:
            raise ValueError(f"{self.name.value}({self.dim}) is trivial; dimension must be >= 2")

    @property
    def generator_count(self) -> int:
        if self.name is GroupName.SO:
            return self.dim * (self.dim - 1) // 2
        if self.name is GroupName.SU:
            return self.dim * self.dim - 1
        return self.dim


class GroupElement(NamedTuple):
    """A concrete group element.

    ``matrix`` is set for SO and SU, ``shift`` for translations. ``residual`` is the
    mean magnitude of the off-diagonal entries of ``M^dagger M`` (zero for
    translations) and enters error propagation as ``dR``.
    """

    group: GroupSpec
    matrix: Optional[np.ndarray] = None
    shift: Optional[np.ndarray] = None
    residual: float = 0.0


def so_generators(dim: int) -> List[np.ndarray]:
    """Skew-symmetric basis of so(D): ``T[p, q] = -1``, ``T[q, p] = +1`` for ``p < q``.

    Planes are ordered reverse-lexicographically in ``(p, q)``, so for ``D = 3`` the
    basis rotates the (2,3), (1,3) and (1,2) planes in that order.
    """
    if dim < 2:
        raise ValueError(f"so(D) needs D >= 2, got {dim}")
    generators = []
    for p, q in reversed(list(itertools.combinations(range(dim), 2))):
        t = np.zeros((dim, dim))
        t[p, q] = -1.0
        t[q, p] = 1.0
        generators.append(t)
    return generators


def su_generators(dim: int) -> List[np.ndarray]:
    """Generalized Gell-Mann basis of su(D): ``D^2 - 1`` Hermitian traceless matrices.

    Symmetric off-diagonal generators come first, then antisymmetric ones, then
    the diagonal ones; all are normalized to ``Tr(H_a H_b) = 2 delta_ab``.
    """
    if dim < 2:
        raise ValueError(f"su(D) needs D >= 2, got {dim}")
    pairs = list(itertools.combinations(range(dim), 2))
    generators = []
    for j, k in pairs:
        h = np.zeros((dim, dim), dtype=complex)
        h[j, k] = h[k, j] = 1.0
        generators.append(h)
    for j, k in pairs:
        h = np.zeros((dim, dim), dtype=complex)
        h[j, k] = -1j
        h[k, j] = 1j
        generators.append(h)
    for level in range(1, dim):
        h = np.zeros((dim, dim), dtype=complex)
        h[np.arange(level), np.arange(level)] = 1.0
        h[level, level] = -level
        generators.append(h * math.sqrt(2.0 / (level * (level + 1))))
    return generators


def random_group_element(
    group: GroupSpec,
    rng: RngStream,
    coefficients: Optional[Sequence[float]] = None,
    shift_scale: float = 1.0,
) -> GroupElement:
    """Draw one element of ``group``.

    SO: ``expm(sum_a alpha_a T_a)``; SU: ``expm(i sum_a alpha_a H_a)``, with
    ``alpha_a ~ U(0, 1)`` unless ``coefficients`` is given. Translations draw
    ``c ~ N(0, shift_scale^2)`` per coordinate, or use ``coefficients`` as ``c``.
    """
    if coefficients is None:
        if group.name is GroupName.TRANSLATION:
            coefficients = rng.normal(0.0, shift_scale, group.dim)
        else:
            coefficients = rng.uniform(0.0, 1.0, group.generator_count)
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (group.generator_count,):
        raise ValueError(
            f"{group.name.value}({group.dim}) needs {group.generator_count} coefficients, "
            f"got {coefficients.shape}"
        )
    if group.name is GroupName.TRANSLATION:
        return GroupElement(group, shift=coefficients)
    if group.name is GroupName.SO:
        algebra = np.tensordot(coefficients, np.stack(so_generators(group.dim)), axes=1)
    else:
        algebra = 1j * np.tensordot(coefficients, np.stack(su_generators(group.dim)), axes=1)
    matrix = expm(algebra)
    return GroupElement(group, matrix=matrix, residual=orthogonality_residual(matrix))


def random_group_elements(
    group: GroupSpec, count: int, rng: RngStream, workers: int = 1
) -> List[GroupElement]:
    """``count`` independent elements; element ``i`` is drawn from ``rng.child(i)``."""
    if count < 1:
        raise ValueError(f"element count must be >= 1, got {count}")
    return map_ordered(lambda i: random_group_element(group, rng.child(i)), count, workers)


def _slot_matrices(g: CorrelatorTensor, matrix: np.ndarray) -> List[np.ndarray]:
    return [matrix.conj() if s.conjugate else matrix for s in g.slots]


def transform_correlator(g: CorrelatorTensor, element: GroupElement) -> CorrelatorTensor:
    """Act with an output-side element on every axis of ``g``.

    f-slots contract with ``S`` and f-dagger slots with ``conj(S)``. The stderr is
    propagated elementwise from the stderr of ``g`` and the element's residual.

    Raises:
        ValueError: For input-side groups or a dimension mismatch.
    """
    if element.group.side is not ActionSide.OUTPUT or element.matrix is None:
        raise ValueError("transform_correlator needs an output-side SO or SU element")
    if element.matrix.shape != (g.dim, g.dim):
        raise ValueError(
            f"dimension mismatch: element is {element.matrix.shape[0]}-dimensional, "
            f"correlator has D={g.dim}"
        )
    matrices = _slot_matrices(g, element.matrix)
    mean = contract_all(g.mean, matrices)
    squares = [np.abs(m) ** 2 for m in matrices]
    variance = contract_all(g.stderr**2, squares)
    if element.residual > 0:
        ones = np.ones_like(squares[0])
        magnitude = np.abs(g.mean) ** 2
        for t in range(g.order):
            variance = variance + element.residual**2 * contract_all(
                magnitude, squares[:t] + [ones] + squares[t + 1 :]
            )
    return g.replace(mean, np.sqrt(variance))


def transform_inputs(inputs: InputSet, element: GroupElement) -> InputSet:
    """``x -> R x`` for rotations, ``x -> x + c`` for translations."""
    if element.group.side is not ActionSide.INPUT:
        raise ValueError("transform_inputs needs an input-side element")
    if element.group.dim != inputs.dim:
        raise ValueError(
            f"dimension mismatch: element acts on {element.group.dim} dimensions, "
            f"inputs have {inputs.dim}"
        )
    if element.shift is not None:
        return InputSet(inputs.points + element.shift)
    return InputSet(inputs.points @ element.matrix.T)


# -- deviation statistics -----------------------------------------------------


@dataclass(frozen=True)
class DeviationReport:
    """Elementwise deviation ``M_n = |G' - G|`` summarized over tensor elements.

    ``mu_M`` and ``sigma_M`` are the mean and spread across experiments,
    ``delta_M`` the propagated bound, each averaged over tensor elements.
    ``pass_fraction`` is the share of tensor elements with ``mu_M <= threshold * delta_M``.
    """

    order: int
    dim: int
    elements: int
    experiments: int
    mu_M: float
    sigma_M: float
    delta_M: float
    pass_fraction: float
    threshold: float
    residual: float
    width: Optional[int] = None
    formula: str = STDERR_FORMULA

    @property
    def within_band(self) -> bool:
        return self.mu_M <= self.delta_M

    def with_width(self, width: int) -> "DeviationReport":
        return DeviationReport(**{**self.to_dict(), "width": int(width)})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "order": self.order,
            "dim": self.dim,
            "elements": self.elements,
            "experiments": self.experiments,
            "mu_M": self.mu_M,
            "sigma_M": self.sigma_M,
            "delta_M": self.delta_M,
            "pass_fraction": self.pass_fraction,
            "threshold": self.threshold,
            "residual": self.residual,
            "width": self.width,
            "formula": self.formula,
        }

    def csv_row(self) -> List[Any]:
        return [
            self.order,
            self.dim,
            self.width,
            self.mu_M,
            self.sigma_M,
            self.delta_M,
            self.pass_fraction,
        ]


def deviation_report(
    experiments: Sequence[CorrelatorTensor],
    group: GroupSpec,
    elements: int,
    rng: RngStream,
    threshold: float = DEFAULT_THRESHOLD,
    group_elements: Optional[Sequence[GroupElement]] = None,
    workers: int = 1,
) -> DeviationReport:
    """Deviation statistics of independently estimated correlators under random elements.

    For every experiment, ``M_n`` is averaged over ``elements`` random group
    elements (or ``group_elements`` when given). The same elements are applied
    to every experiment. ``dG`` is the elementwise standard deviation of the
    experiments' means, not the Monte Carlo stderr of a single estimate; it is
    propagated through each element to give ``dG'``.

    Raises:
        ValueError: With fewer than two experiments, no elements, or mismatched
            tensor shapes or slots between experiments.
    """
    if len(experiments) < 2:
        raise ValueError(f"deviation_report needs at least 2 experiments, got {len(experiments)}")
    first = experiments[0]
    for g in experiments[1:]:
        if g.mean.shape != first.mean.shape or g.slots != first.slots:
            raise ValueError(
                f"mismatched correlators between experiments: {g.mean.shape} vs {first.mean.shape}"
            )
    if group.side is not ActionSide.OUTPUT:
        raise ValueError("deviation_report checks output-side groups; use input_invariance_check")
    if group_elements is None:
        group_elements = random_group_elements(group, elements, rng, workers)
    if not group_elements:
        raise ValueError("deviation_report needs at least one group element")

    spread = np.std(np.stack([g.mean for g in experiments]), axis=0, ddof=1)
    deviations = []
    bounds = []
    for g in experiments:
        g = g.replace(g.mean, spread)
        m_sum = np.zeros(g.mean.shape)
        b_sum = np.zeros(g.mean.shape)
        for element in group_elements:
            transformed = transform_correlator(g, element)
            m_sum += np.abs(transformed.mean - g.mean)
            b_sum += np.sqrt(transformed.stderr**2 + spread**2)
        deviations.append(m_sum / len(group_elements))
        bounds.append(b_sum / len(group_elements))
    deviations = np.stack(deviations)
    mu = deviations.mean(axis=0)
    sigma = deviations.std(axis=0, ddof=1)
    delta = np.mean(bounds, axis=0)
    passed = mu <= threshold * delta
    report = DeviationReport(
        order=first.order,
        dim=first.dim,
        elements=len(group_elements),
        experiments=len(experiments),
        mu_M=float(mu.mean()),
        sigma_M=float(sigma.mean()),
        delta_M=float(delta.mean()),
        pass_fraction=float(np.mean(passed)),
        threshold=float(threshold),
        residual=float(np.mean([e.residual for e in group_elements])),
    )
    logger.info(
        "deviation n=%d: mu_M %.3g sigma_M %.3g delta_M %.3g pass %.3f",
        report.order,
        report.mu_M,
        report.sigma_M,
        report.delta_M,
        report.pass_fraction,
    )
    return report


# -- re-estimating checks ------------------------------------------------------


class InvarianceRow(NamedTuple):
    element: int
    mean_sigma: float
    max_sigma: float
    pass_fraction: float


class InputInvarianceReport(NamedTuple):
    """Correlators re-estimated on transformed inputs, compared in combined standard errors."""

    order: int
    threshold: float
    rows: List[InvarianceRow]

    @property
    def pass_fraction(self) -> float:
        return float(np.mean([row.pass_fraction for row in self.rows]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "order": self.order,
            "threshold": self.threshold,
            "pass_fraction": self.pass_fraction,
            "rows": [row._asdict() for row in self.rows],
        }


def input_invariance_check(
    spec: ArchitectureSpec,
    inputs: InputSet,
    slots: Sequence[Any],
    group: GroupSpec,
    elements: int,
    samples: int,
    rng: RngStream,
    workers: int = 1,
    threshold: float = DEFAULT_THRESHOLD,
    group_elements: Optional[Sequence[GroupElement]] = None,
) -> InputInvarianceReport:
    """Compare ``G^(n)`` at ``inputs`` with ``G^(n)`` at transformed inputs.

    Supports SO(d) rotations and translations. Every estimate uses its own
    child stream, so the comparison is between independent Monte Carlo runs.
    """
    if group.side is not ActionSide.INPUT:
        raise ValueError("input_invariance_check needs an input-side group")
    if group.name is GroupName.SU:
        raise ValueError("SU(d) input checks need complex inputs, which networks do not accept")
    if not isinstance(inputs, InputSet):
        inputs = InputSet(inputs)
    slots = as_slots(slots)
    reference = estimate_correlator(spec, inputs, slots, samples, rng.child(0), workers)
    if group_elements is None:
        group_elements = random_group_elements(group, elements, rng.child(1), workers)
    rows = []
    for index, element in enumerate(group_elements):
        moved = estimate_correlator(
            spec, transform_inputs(inputs, element), slots, samples, rng.child(index + 2), workers
        )
        z = standardized_difference(reference.mean, reference.stderr, moved.mean, moved.stderr)
        rows.append(
            InvarianceRow(
                index, float(np.mean(z)), float(np.max(z)), float(np.mean(z <= threshold))
            )
        )
        logger.info("input check element %d: max %.2f sigma", index, rows[-1].max_sigma)
    return InputInvarianceReport(len(slots), float(threshold), rows)


class BalanceRow(NamedTuple):
    slots: List[List[Any]]
    balanced: bool
    max_sigma: float
    vanishes: bool


def su_balance_check(
    spec: ArchitectureSpec,
    inputs: InputSet,
    patterns: Sequence[Sequence[Any]],
    samples: int,
    rng: RngStream,
    workers: int = 1,
    threshold: float = 4.0,
) -> List[BalanceRow]:
    """Estimate complex correlators for several slot patterns and test which vanish.

    A pattern is balanced when it has as many f-dagger slots as f slots; only
    those may be nonzero for an SU(D)-invariant density. ``max_sigma`` is the
    largest ``|mean| / stderr`` over tensor elements.
    """
    rows = []
    for index, pattern in enumerate(patterns):
        slots = as_slots(pattern)
        g = estimate_correlator(spec, inputs, slots, samples, rng.child(index), workers)
        conjugated = sum(s.conjugate for s in slots)
        z = standardized_difference(g.mean, g.stderr, 0.0, 0.0)
        max_sigma = float(np.max(z))
        rows.append(
            BalanceRow(
                [[s.point, s.conjugate] for s in slots],
                2 * conjugated == len(slots),
                max_sigma,
                max_sigma <= threshold,
            )
        )
    return rows
