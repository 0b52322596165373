"""Learning local Lindbladians from short-time dynamics of product states."""

from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from .exact import ExactPropagator, PauliLindbladian, exact_expectations, time_derivatives_at_zero
from .interp import FitConfig, PolynomialFit, RobustPolynomialRegressor, derivative_at_zero, robust_fit, select_degree
from .isolation import IsolationRule, ParamId, plan_chip, plan_pair, recover
from .pauli import PauliAxis, PauliString, ProductStateSpec
from .rng import derive_rng
from .shadows import estimate_overlaps
from .simulator import LindbladModel, SimConfig, TimeTrace, evolve_and_measure

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "dump_config",
    "load_config",
    "parse_config",
    "ExactPropagator",
    "PauliLindbladian",
    "exact_expectations",
    "time_derivatives_at_zero",
    "FitConfig",
    "PolynomialFit",
    "RobustPolynomialRegressor",
    "derivative_at_zero",
    "robust_fit",
    "select_degree",
    "IsolationRule",
    "ParamId",
    "plan_chip",
    "plan_pair",
    "recover",
    "PauliAxis",
    "PauliString",
    "ProductStateSpec",
    "derive_rng",
    "estimate_overlaps",
    "LindbladModel",
    "SimConfig",
    "TimeTrace",
    "evolve_and_measure",
]
