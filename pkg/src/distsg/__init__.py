"""Distributed stochastic-gradient parameter estimation over sensor networks."""

from .estimator import (
    AlgorithmParams,
    NetworkState,
    StackedOperators,
    TrajectoryRecord,
    build_stacked_operators,
    diffuse_energy,
    init_network,
    matrix_form_step,
    network_step,
    run_network,
    standard_sg_network_step,
    standard_sg_step,
)
from .exceptions import HorizonOverflowError, OracleCapacityError, ValidationError
from .graph import (
    LaplacianSpectrum,
    Topology,
    WeightMatrix,
    build_metropolis,
    connectivity_and_diameter,
    laplacian_spectrum,
    load_edgelist,
)
from .regressors import DistributedSGRegressor, StandardSGRegressor

__version__ = "0.1.0"

__all__ = [
    "AlgorithmParams",
    "DistributedSGRegressor",
    "HorizonOverflowError",
    "LaplacianSpectrum",
    "NetworkState",
    "OracleCapacityError",
    "StackedOperators",
    "StandardSGRegressor",
    "Topology",
    "TrajectoryRecord",
    "ValidationError",
    "WeightMatrix",
    "build_metropolis",
    "build_stacked_operators",
    "connectivity_and_diameter",
    "diffuse_energy",
    "init_network",
    "laplacian_spectrum",
    "load_edgelist",
    "matrix_form_step",
    "network_step",
    "run_network",
    "standard_sg_network_step",
    "standard_sg_step",
]
