"""
netsym: symmetry checks for neural-network function-space densities

Network ensembles are sampled in parameter space; their output correlators are
estimated by Monte Carlo and tested for invariance under SO, SU and translation
groups, compared with Gaussian-process predictions, and tracked through training.
"""

from pathlib import Path
from typing import Any, Union

from netsym.core.config import ConfigError, ExperimentConfig, config_from_dict, load_config
from netsym.core.correlators import (
    CorrelatorTensor,
    InputSet,
    Kernel,
    correlator_from_outputs,
    estimate_correlator,
    estimate_kernel,
    gaussian_process_outputs,
    gp_limit_check,
    pair_partitions,
    perturbative_ngp_2pt,
    quartic_second_moment,
    standardized_difference,
    ward_identity_sum,
    wick_correlator,
)
from netsym.core.ensembles import (
    ArchitectureSpec,
    LayerSpec,
    NetworkDraw,
    architecture_from_dict,
    backward,
    breaking_net,
    complex_output_net,
    forward,
    forward_complex,
    gauss_net,
    jacobian,
    linear_net,
    quartic_output_net,
    relu_net,
    sample_network,
    sample_networks,
    t_layer_net,
)
from netsym.core.experiment_core import ExperimentCore
from netsym.core.idx import IdxDataset, IdxFormatError, load_fashion_mnist, parse_idx, write_idx
from netsym.core.linalg import RngStream, expm, max_unitarity_error, orthogonality_residual
from netsym.core.symmetry import (
    DeviationReport,
    GroupElement,
    GroupSpec,
    deviation_report,
    input_invariance_check,
    random_group_element,
    so_generators,
    su_balance_check,
    su_generators,
    transform_correlator,
)
from netsym.core.training import (
    Dataset,
    TrainingConfig,
    TrainingDivergedError,
    breaking_init,
    density_flow_check,
    empirical_ntk,
    ensemble_ntk,
    make_blobs,
    one_cold_experiment,
    sgd_train,
    train_grid,
)
from netsym.core.types import ActionSide, FieldType, GroupName, LossKind, Slot
from netsym.priors import GaussianPrior, QuarticPrior, UniformCirclePrior, metropolis_sample

__version__ = "0.1.0"
__author__ = "netsym Contributors"
__license__ = "BSD-3-Clause"


# -- runs ---------------------------------------------------------------------


def run(config: Union[ExperimentConfig, str, Path], **overrides: Any) -> Path:
    """Run an experiment from a config object or JSON path and return its output directory.

    ``overrides`` replace top-level config keys, as the CLI flags do.
    """
    if not isinstance(config, ExperimentConfig):
        config = load_config(config, overrides)
    elif overrides:
        config = config_from_dict(config.to_dict(), overrides)
    return ExperimentCore(config).run()


__all__ = [
    # -- runs ---
    "ConfigError",
    "ExperimentConfig",
    "ExperimentCore",
    "config_from_dict",
    "load_config",
    "run",
    # -- linalg ---
    "RngStream",
    "expm",
    "max_unitarity_error",
    "orthogonality_residual",
    # -- ensembles ---
    "ArchitectureSpec",
    "FieldType",
    "GaussianPrior",
    "LayerSpec",
    "NetworkDraw",
    "QuarticPrior",
    "UniformCirclePrior",
    "architecture_from_dict",
    "backward",
    "breaking_net",
    "complex_output_net",
    "forward",
    "forward_complex",
    "gauss_net",
    "jacobian",
    "linear_net",
    "metropolis_sample",
    "quartic_output_net",
    "relu_net",
    "sample_network",
    "sample_networks",
    "t_layer_net",
    # -- correlators ---
    "CorrelatorTensor",
    "InputSet",
    "Kernel",
    "Slot",
    "correlator_from_outputs",
    "estimate_correlator",
    "estimate_kernel",
    "gaussian_process_outputs",
    "gp_limit_check",
    "pair_partitions",
    "perturbative_ngp_2pt",
    "quartic_second_moment",
    "standardized_difference",
    "ward_identity_sum",
    "wick_correlator",
    # -- symmetry ---
    "ActionSide",
    "DeviationReport",
    "GroupElement",
    "GroupName",
    "GroupSpec",
    "deviation_report",
    "input_invariance_check",
    "random_group_element",
    "so_generators",
    "su_balance_check",
    "su_generators",
    "transform_correlator",
    # -- training ---
    "Dataset",
    "LossKind",
    "TrainingConfig",
    "TrainingDivergedError",
    "breaking_init",
    "density_flow_check",
    "empirical_ntk",
    "ensemble_ntk",
    "make_blobs",
    "one_cold_experiment",
    "sgd_train",
    "train_grid",
    # -- data ---
    "IdxDataset",
    "IdxFormatError",
    "load_fashion_mnist",
    "parse_idx",
    "write_idx",
]
