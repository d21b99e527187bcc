"""Distributed coordination via Glauber dynamics: simulator, exact oracles and game analysis."""

from .graph import ENUMERATION_CAP, ConfigurationError, Network, SizeError, build_topology
from .objective import ClampBounds, ObjectiveSpec, a1_bounds, builtin_objective, custom_objective
from .oracle import ExactSolution, NonConvergenceError, solve_a_cg_opt, solve_cg_opt
from .coord import Trace, run
from .game import GameInstance, NashResult, find_ne
from .harness import PRESETS, Scenario, load_scenario, run_experiment, sweep_beta

__all__ = [
    "ENUMERATION_CAP", "ConfigurationError", "Network", "SizeError", "build_topology",
    "ClampBounds", "ObjectiveSpec", "a1_bounds", "builtin_objective", "custom_objective",
    "ExactSolution", "NonConvergenceError", "solve_a_cg_opt", "solve_cg_opt",
    "Trace", "run", "GameInstance", "NashResult", "find_ne",
    "PRESETS", "Scenario", "load_scenario", "run_experiment", "sweep_beta",
]
