"""Central orchestration layer that binds a validated config to the numerical modules."""

import csv
import json
import logging
import platform
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional

import numpy as np
import scipy

from netsym.core.config import ExperimentConfig, validate
from netsym.core.correlators import (
    GP_LIMIT_COLUMNS,
    CorrelatorTensor,
    GPLimitReport,
    InputSet,
    Kernel,
    RunningMoments,
    estimate_correlator,
    estimate_kernel,
    gp_limit_check,
    perturbative_ngp_2pt,
    standardized_difference,
    ward_identity_sum,
    wick_correlator,
)
from netsym.core.ensembles import (
    ArchitectureSpec,
    architecture_from_dict,
    hidden_features,
    sample_network,
    sample_networks,
)
from netsym.core.idx import load_fashion_mnist, to_dataset
from netsym.core.linalg import RngStream
from netsym.core.symmetry import (
    DEVIATION_COLUMNS,
    GroupSpec,
    deviation_report,
    input_invariance_check,
    random_group_elements,
    so_generators,
    su_balance_check,
    su_generators,
    transform_correlator,
)
from netsym.core.training import (
    ONE_COLD_COLUMNS,
    TRAINING_COLUMNS,
    Dataset,
    breaking_architecture,
    density_flow_check,
    ensemble_ntk,
    make_blobs,
    mean_activation,
    one_cold_experiment,
    predicted_one_cold_peak,
    train_grid,
)
from netsym.core.types import ActionSide, GroupName, LossKind

logger = logging.getLogger(__name__)

RESULT_JSON = "result.json"
RESULT_CSV = "result.csv"
MANIFEST_JSON = "manifest.json"

DEFAULT_WIDTH = 50
BLOB_CLASSES = 10
BLOBS_PER_CLASS = 100
FLOW_LEARNING_RATE = 0.05
HIDDEN_KERNEL_BATCH = 1024

# Unbalanced (one f), unbalanced (two f, one f-dagger), balanced (f, f-dagger).
DEFAULT_SU_PATTERNS = (
    ((0, False),),
    ((0, False), (0, False), (0, True)),
    ((0, False), (1, True)),
)


class RunResult(NamedTuple):
    """What a subcommand produced: the JSON payload and one CSV table."""

    payload: Dict[str, Any]
    columns: List[str]
    rows: List[List[Any]]


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return np.stack([value.real, value.imag], axis=-1).tolist()
        return value.tolist()
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _write_json(path: Path, data: Dict[str, Any]) -> None:
    text = json.dumps(data, sort_keys=True, indent=2, default=_jsonable)
    path.write_text(text + "\n", encoding="utf-8")


def _slot_points(order: int, count: int) -> List[int]:
    """Slot ``k`` reads input ``k mod m``."""
    return [k % count for k in range(order)]


def versions() -> Dict[str, str]:
    from netsym import __version__

    return {
        "netsym": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


class ExperimentCore:
    """Runs one subcommand of a validated config and writes its artifacts."""

    def __init__(self, config: ExperimentConfig) -> None:
        validate(config)
        self._config = config
        root = RngStream(config.seed)
        self._data_rng = root.child(0)
        self._rng = root.child(1)
        self._handlers: Dict[str, Callable[[], RunResult]] = {
            "check-symmetry": self._check_symmetry,
            "gp-limit": self._gp_limit,
            "translate-check": self._translate_check,
            "su-check": self._su_check,
            "ward": self._ward,
            "ntk": self._ntk,
            "train-grid": self._train_grid,
            "train-onecold": self._train_onecold,
            "flow-check": self._flow_check,
            "perturbative": self._perturbative,
        }

    @property
    def config(self) -> ExperimentConfig:
        return self._config

    @property
    def output_dir(self) -> Path:
        return Path(self._config.output)

    # -- lifecycle ------------------------------------------------------------

    def execute(self, subcommand: Optional[str] = None) -> RunResult:
        """Compute the result of ``subcommand`` (default: the config's) without writing anything.

        Raises:
            ValueError: For an unknown subcommand.
        """
        name = subcommand or self._config.subcommand
        if name not in self._handlers:
            expected = ", ".join(self._handlers)
            raise ValueError(f"unknown subcommand {name!r}; expected one of {expected}")
        cfg = self._config
        logger.info("running %s (seed %d, %d workers)", name, cfg.seed, cfg.workers)
        return self._handlers[name]()

    def run(self, subcommand: Optional[str] = None) -> Path:
        """Execute and then write ``result.json``, ``result.csv`` and ``manifest.json``.

        Nothing is written unless the computation succeeds.
        """
        result = self.execute(subcommand)
        out = self.output_dir
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "subcommand": subcommand or self._config.subcommand,
            "config_hash": self._config.config_hash(),
            "result": result.payload,
        }
        _write_json(out / RESULT_JSON, payload)
        with open(out / RESULT_CSV, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(result.columns)
            writer.writerows(result.rows)
        manifest = {
            "subcommand": payload["subcommand"],
            "seed": self._config.seed,
            "workers": self._config.workers,
            "config_hash": payload["config_hash"],
            "config": self._config.to_dict(),
            "versions": versions(),
            "files": [RESULT_JSON, RESULT_CSV],
        }
        _write_json(out / MANIFEST_JSON, manifest)
        logger.info("wrote %s, %s and %s to %s", RESULT_JSON, RESULT_CSV, MANIFEST_JSON, out)
        return out

    # -- shared pieces --------------------------------------------------------

    def _architecture(self, width: Optional[int] = None) -> ArchitectureSpec:
        if width is None and self._config.widths:
            width = self._config.widths[0]
        return architecture_from_dict(self._config.architecture, width)

    def _inputs(self) -> InputSet:
        return InputSet(self._config.inputs)

    def _output_group(self, dim: int, default: GroupName = GroupName.SO) -> GroupSpec:
        group = self._config.group
        if group is None or ActionSide(group.get("side", "output")) is not ActionSide.OUTPUT:
            return GroupSpec(default, dim, ActionSide.OUTPUT)
        return GroupSpec(group["name"], group["dim"], ActionSide.OUTPUT)

    def _dataset(self, num_classes: int = BLOB_CLASSES, dim: Optional[int] = None) -> Dataset:
        cfg = self._config
        if cfg.dataset == "fashion-mnist":
            train, test = load_fashion_mnist(cfg.data_dir)
            return to_dataset(train, test, cfg.dataset_limit)
        per_class = BLOBS_PER_CLASS
        if cfg.dataset_limit is not None:
            per_class = max(1, cfg.dataset_limit // num_classes)
        return make_blobs(per_class, self._data_rng, num_classes, dim or num_classes)

    # -- symmetry checks ------------------------------------------------------

    def _check_symmetry(self) -> RunResult:
        cfg = self._config
        reports = []
        if cfg.is_synthetic:
            kernel = Kernel(np.asarray(cfg.architecture["kernel"], dtype=float))
            d = int(cfg.architecture["output_dim"])
            group = self._output_group(d)
            elements = random_group_elements(group, cfg.elements, self._rng.child(0), cfg.workers)
            for order in cfg.orders:
                points = _slot_points(order, len(kernel))
                if order % 2:
                    mean = np.zeros((d,) * order)
                else:
                    mean = wick_correlator(kernel, points, d)
                exact = CorrelatorTensor(points, mean, np.zeros(mean.shape), 0, cfg.seed)
                experiments = [exact] * cfg.experiments
                report = deviation_report(
                    experiments, group, len(elements), self._rng, cfg.threshold, elements
                )
                reports.append(report)
        else:
            inputs = self._inputs()
            for w_index, width in enumerate(cfg.widths or (None,)):
                spec = self._architecture(width)
                group = self._output_group(spec.output_dim)
                elements = random_group_elements(
                    group, cfg.elements, self._rng.child(0), cfg.workers
                )
                stream = self._rng.child(w_index + 1)
                for order in cfg.orders:
                    points = _slot_points(order, len(inputs))
                    samples = cfg.samples_for(order)
                    experiments = [
                        estimate_correlator(
                            spec, inputs, points, samples, stream.child(order).child(e), cfg.workers
                        )
                        for e in range(cfg.experiments)
                    ]
                    report = deviation_report(
                        experiments, group, len(elements), stream, cfg.threshold, elements
                    )
                    reports.append(report.with_width(width if width is not None else spec.width))
        return RunResult(
            {"reports": [r.to_dict() for r in reports]},
            DEVIATION_COLUMNS,
            [r.csv_row() for r in reports],
        )

    def _gp_limit(self) -> RunResult:
        cfg = self._config
        rows = []
        for order in cfg.orders:
            report = gp_limit_check(
                lambda width: self._architecture(width),
                cfg.widths,
                self._inputs(),
                self._rng.child(order),
                orders=(order,),
                samples=cfg.samples_for(order),
                kernel_samples=cfg.samples_for(2),
                workers=cfg.workers,
                threshold=cfg.threshold,
            )
            rows.extend(report.rows)
        report = GPLimitReport(rows, float(cfg.threshold))
        payload = report.to_dict()
        payload["decreasing"] = {str(n): report.decreasing(n) for n in cfg.orders}
        return RunResult(payload, GP_LIMIT_COLUMNS, report.csv_rows())

    def _translate_check(self) -> RunResult:
        cfg = self._config
        spec = self._architecture()
        inputs = self._inputs()
        group = GroupSpec(cfg.group["name"], cfg.group["dim"], cfg.group.get("side", "input"))
        reports = []
        rows = []
        for order in cfg.orders:
            report = input_invariance_check(
                spec,
                inputs,
                _slot_points(order, len(inputs)),
                group,
                cfg.elements,
                cfg.samples_for(order),
                self._rng.child(order),
                cfg.workers,
                cfg.threshold,
            )
            reports.append(report.to_dict())
            rows.extend([order, *row] for row in report.rows)
        return RunResult(
            {"group": group.name.value, "reports": reports},
            ["n", "element", "mean_sigma", "max_sigma", "pass_fraction"],
            rows,
        )

    def _su_check(self) -> RunResult:
        cfg = self._config
        spec = self._architecture()
        inputs = self._inputs()
        patterns = cfg.patterns if cfg.patterns is not None else DEFAULT_SU_PATTERNS
        balance = su_balance_check(
            spec,
            inputs,
            patterns,
            cfg.samples_for(3),
            self._rng.child(0),
            cfg.workers,
            cfg.threshold,
        )
        group = self._output_group(spec.output_dim, GroupName.SU)
        slots = [(0, False), (1 % len(inputs), True)]
        stream = self._rng.child(1)
        experiments = [
            estimate_correlator(
                spec, inputs, slots, cfg.samples_for(2), stream.child(e), cfg.workers
            )
            for e in range(cfg.experiments)
        ]
        report = deviation_report(
            experiments, group, cfg.elements, self._rng.child(2), cfg.threshold
        )
        return RunResult(
            {"balance": [row._asdict() for row in balance], "invariance": report.to_dict()},
            ["slots", "balanced", "max_sigma", "vanishes"],
            [[json.dumps(row.slots), row.balanced, row.max_sigma, row.vanishes] for row in balance],
        )

    def _ward(self) -> RunResult:
        cfg = self._config
        spec = self._architecture()
        inputs = self._inputs()
        group = self._output_group(spec.output_dim)
        if group.name is GroupName.SO:
            generators = so_generators(group.dim)
        else:
            generators = su_generators(group.dim)
        if not 0 <= cfg.generator < len(generators):
            raise ValueError(
                f"generator index must lie in [0, {len(generators)}), got {cfg.generator}"
            )
        generator = generators[cfg.generator]
        tensors = []
        rows = []
        for order in cfg.orders:
            g = ward_identity_sum(
                spec,
                inputs,
                _slot_points(order, len(inputs)),
                generator,
                cfg.samples_for(order),
                self._rng.child(order),
                cfg.workers,
            )
            z = standardized_difference(g.mean, g.stderr, 0.0, 0.0)
            tensors.append({"order": order, "max_sigma": float(z.max()), "sum": g.to_dict()})
            rows.append([order, cfg.generator, float(z.mean()), float(z.max())])
            logger.info("ward n=%d: max %.2f sigma from zero", order, z.max())
        return RunResult(
            {"group": group.name.value, "generator": cfg.generator, "sums": tensors},
            ["n", "generator", "mean_sigma", "max_sigma"],
            rows,
        )

    # -- kernels --------------------------------------------------------------

    def _ntk(self) -> RunResult:
        cfg = self._config
        spec = self._architecture()
        x, x2 = (np.asarray(p, dtype=float) for p in cfg.inputs)
        ntk = ensemble_ntk(spec, x, x2, cfg.samples_for(2), self._rng.child(0), cfg.workers)
        theta = ntk.to_correlator()
        off = ~np.eye(spec.output_dim, dtype=bool)
        z_off = standardized_difference(theta.mean[off], theta.stderr[off], 0.0, 0.0)
        group = GroupSpec(GroupName.SO, spec.output_dim, ActionSide.OUTPUT)
        z_rot = []
        for element in random_group_elements(group, cfg.elements, self._rng.child(1), cfg.workers):
            rotated = transform_correlator(theta, element)
            z_rot.append(
                standardized_difference(rotated.mean, rotated.stderr, theta.mean, theta.stderr)
            )
        z_rot = np.stack(z_rot)
        payload = {
            "ntk": theta.to_dict(),
            "offdiag_max_sigma": float(z_off.max()) if z_off.size else 0.0,
            "rotation_max_sigma": float(z_rot.max()),
            "rotation_pass_fraction": float(np.mean(z_rot <= cfg.threshold)),
        }
        rows = [
            [i, j, float(theta.mean[i, j]), float(theta.stderr[i, j])]
            for i in range(spec.output_dim)
            for j in range(spec.output_dim)
        ]
        return RunResult(payload, ["i1", "i2", "mean", "stderr"], rows)

    def _hidden_kernel(
        self, spec: ArchitectureSpec, inputs: InputSet, samples: int, rng: RngStream
    ) -> Kernel:
        """Unit-averaged ``E[g_j(x_a) g_j(x_b)]`` of the layer feeding the output."""
        moments = RunningMoments()
        remaining = samples
        while remaining > 0:
            size = min(HIDDEN_KERNEL_BATCH, remaining)
            g = hidden_features(sample_networks(spec, size, rng), inputs.points)
            moments.add_batch(np.einsum("san,sbn->sab", g, g) / g.shape[-1])
            remaining -= size
        return Kernel(moments.mean, moments.stderr(), moments.count)

    def _perturbative(self) -> RunResult:
        cfg = self._config
        arch = dict(cfg.architecture)
        if arch.get("builder") != "quartic_output_net":
            raise ValueError("perturbative runs need the quartic_output_net builder")
        spec = self._architecture()
        inputs = self._inputs()
        sigma = float(arch.get("sigma", 1.0))
        coupling = float(arch.get("coupling", 0.0))
        width = spec.width
        hidden = self._hidden_kernel(spec, inputs, cfg.samples_for(2), self._rng.child(0))
        predicted = perturbative_ngp_2pt(sigma, coupling, hidden, width, spec.output_dim)
        gaussian = perturbative_ngp_2pt(sigma, 0.0, hidden, width, spec.output_dim)
        measured = estimate_kernel(
            spec, inputs, cfg.samples_for(2), self._rng.child(1), cfg.workers
        )
        z = standardized_difference(
            measured.matrix, measured.stderr, predicted.matrix, predicted.stderr
        )
        payload = {
            "std": sigma,
            "coupling": coupling,
            "width": width,
            "predicted": predicted.matrix,
            "predicted_stderr": predicted.stderr,
            "gaussian": gaussian.matrix,
            "measured": measured.matrix,
            "measured_stderr": measured.stderr,
            "max_sigma": float(z.max()),
        }
        rows = [
            [
                a,
                b,
                float(predicted.matrix[a, b]),
                float(measured.matrix[a, b]),
                float(measured.stderr[a, b]),
                float(z[a, b]),
            ]
            for a in range(len(inputs))
            for b in range(len(inputs))
        ]
        return RunResult(payload, ["a", "b", "predicted", "measured", "stderr", "sigma"], rows)

    # -- training -------------------------------------------------------------

    def _width(self) -> int:
        return self._config.widths[0] if self._config.widths else DEFAULT_WIDTH

    def _train_grid(self) -> RunResult:
        cfg = self._config
        dataset = self._dataset()
        grid = train_grid(
            dataset, cfg.ks, cfg.mus, cfg.seeds, cfg.training_config(), self._width(), cfg.workers
        )
        summary = [
            {"k": k, "mu_W": float(mu), "mean_max_acc": grid.mean_max_accuracy(k, float(mu))}
            for k in cfg.ks
            for mu in cfg.mus
        ]
        return RunResult(
            {"runs": [row._asdict() for row in grid.rows], "summary": summary},
            TRAINING_COLUMNS,
            grid.csv_rows(),
        )

    def _train_onecold(self) -> RunResult:
        cfg = self._config
        dataset = self._dataset()
        width = self._width()
        points, grid = one_cold_experiment(
            dataset, cfg.mus, cfg.seeds, cfg.training_config(), width, cfg.workers
        )
        probe = sample_network(
            breaking_architecture(dataset.input_dim, dataset.num_classes, width), self._rng.child(0)
        )
        activation = mean_activation(probe, dataset.test_x)
        return RunResult(
            {
                "points": [p._asdict() for p in points],
                "mean_activation": activation,
                "predicted_peak": predicted_one_cold_peak(activation, width),
                "runs": [row._asdict() for row in grid.rows],
            },
            ONE_COLD_COLUMNS,
            [list(p) for p in points],
        )

    def _flow_check(self) -> RunResult:
        cfg = self._config
        spec = self._architecture()
        dataset = self._dataset(spec.output_dim, spec.input_dim)
        if dataset.input_dim != spec.input_dim or dataset.num_classes != spec.output_dim:
            raise ValueError(
                f"flow-check architecture maps {spec.input_dim} -> {spec.output_dim}, "
                f"dataset has {dataset.input_dim} features and {dataset.num_classes} classes"
            )
        learning_rate = float(cfg.training.get("learning_rate", FLOW_LEARNING_RATE))
        flows = []
        rows = []
        for index, loss in enumerate((LossKind.SO_INVARIANT, LossKind.MSE)):
            flow = density_flow_check(
                spec,
                dataset,
                cfg.steps,
                loss,
                self._rng.child(index),
                members=cfg.members,
                experiments=cfg.experiments,
                elements=cfg.elements,
                learning_rate=learning_rate,
                threshold=cfg.threshold,
            )
            flows.append(flow.to_dict())
            for order, r in sorted(flow.reports.items()):
                rows.append(
                    [loss.value, cfg.steps, order, r.mu_M, r.sigma_M, r.delta_M, r.pass_fraction]
                )
        return RunResult(
            {"flows": flows},
            ["loss", "steps", "n", "mu_M", "sigma_M", "delta_M", "pass_fraction"],
            rows,
        )
