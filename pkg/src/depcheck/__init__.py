"""Probabilistic model checking of dependability properties for risk-level DTMCs."""
from .checker import SolverConfig
from .dependability import DependabilityReport, report
from .errors import (ConditioningError, DataError, DepcheckError, PctlSyntaxError, SolverError,
                     UnknownNameError, UnsupportedNesting)
from .estimation import Episode, RiskMap, build_from_episodes
from .model import LabeledDtmc, RewardStructure, load_model, save_model, validate
from .pctl import evaluate, parse, to_string

__version__ = "0.1.0"

__all__ = [
    "ConditioningError", "DataError", "DependabilityReport", "DepcheckError", "Episode",
    "LabeledDtmc", "PctlSyntaxError", "RewardStructure", "RiskMap", "SolverConfig",
    "SolverError", "UnknownNameError", "UnsupportedNesting", "build_from_episodes", "evaluate",
    "load_model", "parse", "report", "save_model", "to_string", "validate",
]
