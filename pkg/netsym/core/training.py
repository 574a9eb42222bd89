"""Minibatch SGD for the symmetry-breaking experiments, NTKs and density-flow checks."""

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import stats

from netsym.core.correlators import CorrelatorTensor, RunningMoments, correlator_from_outputs
from netsym.core.ensembles import (
    ArchitectureSpec,
    NetworkDraw,
    backward,
    breaking_net,
    flatten_gradients,
    forward,
    hidden_features,
    jacobian,
    mod_boundary_hits,
    sample_network,
    sample_networks,
)
from netsym.core.linalg import RngStream
from netsym.core.symmetry import DeviationReport, GroupSpec, deviation_report
from netsym.core.types import ActionSide, Encoder, GroupName, LayerKind, LossKind
from netsym.core.workers import map_ordered, split_count
from netsym.priors import GaussianPrior

logger = logging.getLogger(__name__)

DEFAULT_EPOCHS = 20
DEFAULT_BATCH_SIZE = 64
DEFAULT_LEARNING_RATE = 0.001

TRAINING_COLUMNS = ["seed", "k", "mu_W", "epoch", "train_loss", "acc"]
ONE_COLD_COLUMNS = ["mu_W", "mean_acc", "ci_low", "ci_high"]


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, epoch: int, batch: int, loss: float) -> None:
        super().__init__(f"loss became {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = DEFAULT_LEARNING_RATE
    loss: LossKind = LossKind.MSE
    encoder: Encoder = Encoder.ONE_HOT
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "loss", LossKind(self.loss))
        object.__setattr__(self, "encoder", Encoder(self.encoder))
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")

    def replace(self, **changes: Any) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)


class Dataset(NamedTuple):
    """Flattened features in ``[0, 1]`` with integer class labels."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int

    @property
    def input_dim(self) -> int:
        return self.train_x.shape[1]


class EpochMetrics(NamedTuple):
    epoch: int
    train_loss: float
    accuracy: float


class TrainingResult(NamedTuple):
    net: NetworkDraw
    metrics: List[EpochMetrics]

    @property
    def max_accuracy(self) -> float:
        return max(m.accuracy for m in self.metrics)


# -- labels -------------------------------------------------------------------


def encode_labels(labels, num_classes: int, encoder=Encoder.ONE_HOT) -> np.ndarray:
    """Class ``i`` as ``e_i`` (one-hot) or ``1 - e_i`` (one-cold)."""
    labels = np.asarray(labels, dtype=int)
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    hot = np.eye(num_classes)[labels]
    return hot if Encoder(encoder) is Encoder.ONE_HOT else 1.0 - hot


def decode_predictions(outputs, encoder=Encoder.ONE_HOT) -> np.ndarray:
    outputs = np.asarray(outputs)
    if Encoder(encoder) is Encoder.ONE_HOT:
        return np.argmax(outputs, axis=-1)
    return np.argmin(outputs, axis=-1)


def make_blobs(
    n_per_class: int,
    rng: RngStream,
    num_classes: int = 2,
    dim: int = 2,
    separation: float = 4.0,
    std: float = 1.0,
    test_fraction: float = 0.25,
) -> Dataset:
    """Gaussian blobs centred at ``separation * e_(c mod dim)``, rescaled into ``[0, 1]``."""
    if n_per_class < 1 or num_classes < 2 or dim < 1:
        raise ValueError("make_blobs needs n_per_class >= 1, num_classes >= 2 and dim >= 1")
    centers = separation * np.eye(dim)[np.arange(num_classes) % dim]
    labels = np.repeat(np.arange(num_classes), n_per_class)
    x = centers[labels] + rng.normal(0.0, std, (len(labels), dim))
    x = (x - x.min(axis=0)) / np.maximum(x.max(axis=0) - x.min(axis=0), 1e-12)
    order = rng.permutation(len(labels))
    x, labels = x[order], labels[order]
    n_test = int(round(test_fraction * len(labels)))
    return Dataset(x[n_test:], labels[n_test:], x[:n_test], labels[:n_test], num_classes)


# -- initialization -----------------------------------------------------------


def breaking_architecture(
    input_dim: int, output_dim: int, width: int, k: int = 0, mu: float = 0.0
) -> ArchitectureSpec:
    return breaking_net(input_dim, output_dim, width, k, mu)


def breaking_init(spec: ArchitectureSpec, k: int, mu: float, rng: RngStream) -> NetworkDraw:
    """Draw a network whose first ``k`` output rows have mean ``mu``.

    The output layer keeps its std (``1/sqrt(N)`` when its prior is not Gaussian).

    Raises:
        ValueError: If the final layer is not a linear layer without bias, or
            ``k`` lies outside ``[0, D]``.
    """
    index = spec.output_layer
    last = spec.layers[index]
    is_last = index == len(spec.layers) - 1
    if not is_last or last.kind is not LayerKind.LINEAR or last.bias_prior is not None:
        raise ValueError("breaking_init needs a linear output layer without bias")
    if last.weight_prior is None:
        raise ValueError("breaking_init needs a sampled output weight")
    if not 0 <= k <= spec.output_dim:
        raise ValueError(f"k out of range: must lie in [0, {spec.output_dim}], got {k}")
    if isinstance(last.weight_prior, GaussianPrior):
        std = last.weight_prior.std
    else:
        std = 1.0 / math.sqrt(last.in_dim)
    broken = dataclasses.replace(last, weight_prior=GaussianPrior(mean=mu, std=std, rows=k))
    return sample_network(dataclasses.replace(spec, layers=spec.layers[:-1] + (broken,)), rng)


# -- losses -------------------------------------------------------------------


def _loss_and_grad(
    outputs: np.ndarray, targets: np.ndarray, loss: LossKind
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-network mean loss over points and its gradient with respect to the outputs."""
    count = outputs.shape[-2]
    if loss is LossKind.MSE:
        residual = outputs - targets
        value = np.sum(residual**2, axis=(-2, -1)) / count
        return value, 2.0 * residual / count
    # invariant under f -> R f for orthogonal R
    gap = np.sum(outputs**2, axis=-1) - np.sum(targets**2, axis=-1)
    value = np.sum(gap**2, axis=-1) / count
    return value, 4.0 * gap[..., None] * outputs / count


def _step(net: NetworkDraw, x: np.ndarray, targets: np.ndarray, loss: LossKind, lr: float):
    outputs = forward(net, x)
    value, grad = _loss_and_grad(outputs, targets, loss)
    if lr == 0.0:
        return net, value
    grads = flatten_gradients(net, backward(net, x, grad))
    return net.with_parameter_vector(net.parameter_vector() - lr * grads), value


def accuracy(net: NetworkDraw, x, labels, encoder=Encoder.ONE_HOT) -> float:
    return float(np.mean(decode_predictions(forward(net, x), encoder) == np.asarray(labels)))


def sgd_train(net: NetworkDraw, dataset: Dataset, config: TrainingConfig) -> TrainingResult:
    """Plain minibatch SGD; the batch order is drawn from ``config.seed``.

    Records the mean training loss and the test accuracy after every epoch.

    Raises:
        ValueError: On an empty dataset or a batched network.
        TrainingDivergedError: If the loss becomes NaN or infinite.
    """
    if len(dataset.train_x) == 0:
        raise ValueError("cannot train on an empty dataset")
    if net.batch_shape:
        raise ValueError("sgd_train trains a single network")
    targets = encode_labels(dataset.train_y, net.spec.output_dim, config.encoder)
    test_x, test_y = dataset.test_x, dataset.test_y
    if not len(test_x):
        test_x, test_y = dataset.train_x, dataset.train_y
    stream = RngStream(config.seed, stream_id=1)
    metrics = []
    for epoch in range(config.epochs):
        order = stream.permutation(len(dataset.train_x))
        losses = []
        for batch, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start : start + config.batch_size]
            net, value = _step(
                net, dataset.train_x[idx], targets[idx], config.loss, config.learning_rate
            )
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, batch, float(value))
            losses.append(float(value))
        acc = accuracy(net, test_x, test_y, config.encoder)
        metrics.append(EpochMetrics(epoch, float(np.mean(losses)), acc))
        logger.info("epoch %d: loss %.4f acc %.4f", epoch, metrics[-1].train_loss, acc)
    return TrainingResult(net, metrics)


# -- experiment grids ---------------------------------------------------------


class TrainingRow(NamedTuple):
    seed: int
    k: int
    mu_W: float
    epoch: int
    train_loss: float
    acc: float


class TrainingGrid(NamedTuple):
    """Per-epoch metrics of every ``(seed, k, mu_W)`` run."""

    rows: List[TrainingRow]

    def max_accuracies(self, k: int, mu: float) -> List[float]:
        best: Dict[int, float] = {}
        for row in self.rows:
            if row.k == k and row.mu_W == mu:
                best[row.seed] = max(best.get(row.seed, 0.0), row.acc)
        return [best[s] for s in sorted(best)]

    def mean_max_accuracy(self, k: int, mu: float) -> float:
        values = self.max_accuracies(k, mu)
        if not values:
            raise ValueError(f"no runs for k={k}, mu={mu}")
        return float(np.mean(values))

    def csv_rows(self) -> List[List[Any]]:
        return [list(row) for row in self.rows]


def _run(
    dataset: Dataset, config: TrainingConfig, width: int, seed: int, k: int, mu: float
) -> List[TrainingRow]:
    spec = breaking_architecture(dataset.input_dim, dataset.num_classes, width)
    net = breaking_init(spec, k, mu, RngStream(seed))
    result = sgd_train(net, dataset, config.replace(seed=seed))
    return [TrainingRow(seed, k, mu, m.epoch, m.train_loss, m.accuracy) for m in result.metrics]


def train_grid(
    dataset: Dataset,
    ks: Sequence[int],
    mus: Sequence[float],
    seeds: Sequence[int],
    config: TrainingConfig,
    width: int = 50,
    workers: int = 1,
) -> TrainingGrid:
    """Train one network per ``(seed, k, mu_W)``; runs are spread over workers."""
    jobs = [(seed, int(k), float(mu)) for seed in seeds for k in ks for mu in mus]
    if not jobs:
        raise ValueError("training grid is empty")
    logger.info("training grid: %d runs of %d epochs", len(jobs), config.epochs)
    parts = map_ordered(lambda i: _run(dataset, config, width, *jobs[i]), len(jobs), workers)
    return TrainingGrid([row for part in parts for row in part])


class OneColdPoint(NamedTuple):
    mu_W: float
    mean_acc: float
    ci_low: float
    ci_high: float


def one_cold_experiment(
    dataset: Dataset,
    mus: Sequence[float],
    seeds: Sequence[int],
    config: TrainingConfig,
    width: int = 50,
    workers: int = 1,
    confidence: float = 0.95,
) -> Tuple[List[OneColdPoint], TrainingGrid]:
    """Max test accuracy per ``mu_W`` with every output row broken and one-cold targets.

    The interval is a Student-t interval over seeds; it collapses to the mean for
    a single seed.
    """
    config = config.replace(encoder=Encoder.ONE_COLD)
    grid = train_grid(dataset, [dataset.num_classes], mus, seeds, config, width, workers)
    points = []
    for mu in mus:
        values = np.asarray(grid.max_accuracies(dataset.num_classes, float(mu)))
        mean = float(values.mean())
        half = 0.0
        if len(values) > 1:
            sem = values.std(ddof=1) / math.sqrt(len(values))
            half = float(stats.t.ppf(0.5 + confidence / 2, len(values) - 1) * sem)
        points.append(OneColdPoint(float(mu), mean, mean - half, mean + half))
    return points, grid


def mean_activation(net: NetworkDraw, x) -> float:
    """Average post-activation feeding the output layer over points, units and draws."""
    return float(np.mean(hidden_features(net, x)))


def predicted_one_cold_peak(activation: float, width: int, target: float = 1.0) -> float:
    """``mu_W`` at which the broken mean ``N mu_W E[g]`` reaches the one-cold target level."""
    if activation <= 0 or width < 1:
        raise ValueError("predicted_one_cold_peak needs a positive activation and width")
    return target / (width * activation)


# -- neural tangent kernel ----------------------------------------------------


@dataclass(frozen=True)
class NTKTensor:
    """``Theta_{i1 i2}(x, x')`` as a ``D x D`` matrix.

    ``boundary_hits`` counts t-layer entries on the ``mod`` discontinuity, where
    the identity gradient convention was used.
    """

    mean: np.ndarray
    stderr: np.ndarray
    ensemble: bool = False
    samples: int = 1
    boundary_hits: int = 0

    def to_correlator(self) -> CorrelatorTensor:
        return CorrelatorTensor((0, 1), self.mean, self.stderr, self.samples)


def _ntk(net: NetworkDraw, x, x2) -> np.ndarray:
    j1 = jacobian(net, x)
    j2 = jacobian(net, x2)
    return np.einsum("...ip,...jp->...ij", j1, j2)


def empirical_ntk(net: NetworkDraw, x, x2) -> NTKTensor:
    """``sum_theta df_i1(x)/dtheta df_i2(x')/dtheta`` by backpropagated Jacobians."""
    if net.batch_shape:
        raise ValueError("empirical_ntk takes a single network")
    x, x2 = np.asarray(x, dtype=float), np.asarray(x2, dtype=float)
    if x.ndim != 1 or x2.ndim != 1:
        raise ValueError("empirical_ntk takes two single input points")
    theta = _ntk(net, x, x2)
    hits = mod_boundary_hits(net, np.stack([x, x2]))
    return NTKTensor(theta, np.zeros_like(theta), False, 1, hits)


def ensemble_ntk(
    spec: ArchitectureSpec,
    x,
    x2,
    samples: int,
    rng: RngStream,
    workers: int = 1,
    batch_size: int = 256,
) -> NTKTensor:
    """Monte Carlo average of the empirical NTK over independent draws, with stderr."""
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    x, x2 = np.asarray(x, dtype=float), np.asarray(x2, dtype=float)
    workers = max(1, int(workers))

    def job(index: int) -> RunningMoments:
        stream = rng.child(index)
        moments = RunningMoments()
        remaining = split_count(samples, workers)[index]
        while remaining > 0:
            size = min(batch_size, remaining)
            moments.add_batch(_ntk(sample_networks(spec, size, stream), x, x2))
            remaining -= size
        return moments

    merged = RunningMoments()
    for part in map_ordered(job, workers, workers):
        merged.merge(part.count, part.mean, part.m2)
    return NTKTensor(merged.mean, merged.stderr(), True, merged.count)


# -- symmetry-preserving training ---------------------------------------------


class FlowReport(NamedTuple):
    """Output-symmetry deviations of an ensemble after ``steps`` gradient steps."""

    loss: LossKind
    steps: int
    reports: Dict[int, DeviationReport]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "loss": self.loss.value,
            "steps": self.steps,
            "reports": {str(n): r.to_dict() for n, r in self.reports.items()},
        }


def density_flow_check(
    spec: ArchitectureSpec,
    dataset: Dataset,
    steps: int,
    loss,
    rng: RngStream,
    members: int = 2000,
    experiments: int = 10,
    elements: int = 100,
    learning_rate: float = 0.05,
    eval_points: int = 2,
    threshold: float = 3.0,
) -> FlowReport:
    """Train an ensemble by full-batch gradient descent and test its output SO(D) symmetry.

    ``members`` networks per experiment are trained on the training split with
    one-hot targets. Outputs at the first ``eval_points`` test inputs give the
    1-pt and 2-pt correlators of every experiment, which feed
    :func:`deviation_report`.
    """
    loss = LossKind(loss)
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    if experiments < 2:
        raise ValueError(f"experiments must be >= 2, got {experiments}")
    net = sample_networks(spec, members * experiments, rng.child(0))
    targets = encode_labels(dataset.train_y, spec.output_dim)
    for step in range(steps):
        net, value = _step(net, dataset.train_x, targets, loss, learning_rate)
        if not np.all(np.isfinite(value)):
            raise TrainingDivergedError(0, step, float(np.max(value)))
    outputs = forward(net, dataset.test_x[:eval_points])
    outputs = outputs.reshape(experiments, members, eval_points, -1)
    group = GroupSpec(GroupName.SO, spec.output_dim, ActionSide.OUTPUT)
    reports = {}
    for order, slots in ((1, [0]), (2, [0, 1 % eval_points])):
        tensors = [correlator_from_outputs(o, slots) for o in outputs]
        reports[order] = deviation_report(tensors, group, elements, rng.child(order), threshold)
    logger.info(
        "flow check (%s, %d steps): 1-pt mu_M %.3g vs delta_M %.3g",
        loss.value,
        steps,
        reports[1].mu_M,
        reports[1].delta_M,
    )
    return FlowReport(loss, steps, reports)
