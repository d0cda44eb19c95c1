"""Coordinated team strategies in adversarial team games."""

from .game import Game, GameError, PerfectRecallError, RawNode, make_game
from .games import BENCHMARKS, benchmark
from .refinement import RecallWarning, merge_team, perfect_recall_refinement, recall_report
from .rng import stream
from .sampling import FspConfig, TrajectoryBuffer, sample_from_equilibrium, sample_fsp
from .sims import SignalMediatedStrategy, SimsConfig, to_coordinated_strategy, train_sims
from .solver import SolveResult, best_response, solve_zero_sum, tmecor_bruteforce, tmecor_via_refinement
from .strategies import BehavioralStrategy, CoordinatedStrategy, NormalFormStrategy, ReducedPlan

__version__ = "0.1.0"

__all__ = [
    "BENCHMARKS", "BehavioralStrategy", "CoordinatedStrategy", "FspConfig", "Game", "GameError",
    "NormalFormStrategy", "PerfectRecallError", "RawNode", "RecallWarning", "ReducedPlan",
    "SignalMediatedStrategy", "SimsConfig", "SolveResult", "TrajectoryBuffer", "benchmark", "best_response",
    "make_game", "merge_team", "perfect_recall_refinement", "recall_report", "sample_from_equilibrium",
    "sample_fsp", "solve_zero_sum", "stream", "tmecor_bruteforce", "tmecor_via_refinement",
    "to_coordinated_strategy", "train_sims",
]
