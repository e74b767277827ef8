"""Recover world models from goal-conditioned agents."""

from .mdp import FiniteHistory, ObservableWorld, ObservationHistory, StationaryPolicy, World, validate_world
from .goals import FALSE, Goal, CountedFamily, Family, make_family
from .goal_syntax import format_goal, parse_goal
from .worldfile import load_world, parse_world, random_world, save_world
from .builtins import make_builtin
from .prob import SuccessProbability, exact_success_prob, optimal_success_prob, monte_carlo_prob
from .agents import DeltaConfig, Mode, delta_agent, family_optimal_agent, random_walk_agent
from .extraction import Estimate, ExtractionMethod, PreconditionError, reconstruct_world, run_extraction

__all__ = [
    "CountedFamily", "DeltaConfig", "Estimate", "ExtractionMethod", "FALSE", "Family", "FiniteHistory", "Goal",
    "Mode", "ObservableWorld", "ObservationHistory", "PreconditionError", "StationaryPolicy", "SuccessProbability",
    "World", "delta_agent", "exact_success_prob", "family_optimal_agent", "format_goal", "load_world",
    "make_builtin", "make_family", "monte_carlo_prob", "optimal_success_prob", "parse_goal", "parse_world",
    "random_walk_agent", "random_world", "reconstruct_world", "run_extraction", "save_world", "validate_world",
]
