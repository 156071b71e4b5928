"""Zonotope reachable sets and contingency MPC for interactive planning."""

from .constraints import ConstraintBatch, ConstraintRecord, dynamic_constraint, static_constraint
from .metrics import MetricsRow, MetricsTable, compute_metrics
from .planner import PlannerConfig, PlanResult, build_problem, mpc_step, solve
from .predictor import ModePrediction, SocialForcePredictor, StateHistory
from .reachset import continuous_reach, discrete_reach, joint_reach, line_segment_zonotope
from .simulator import EpisodeLog, Scene, SimConfig, generate_scene, run_episode
from .zonotope import (
    HPolytope,
    Zonotope,
    cartesian_product,
    collision_zonotope,
    confidence_zonotope,
    minkowski_sum,
    project,
    to_hrep,
)

__version__ = "0.1.0"

__all__ = [
    "ConstraintBatch", "ConstraintRecord", "EpisodeLog", "HPolytope", "MetricsRow", "MetricsTable",
    "ModePrediction", "PlanResult", "PlannerConfig", "Scene", "SimConfig", "SocialForcePredictor",
    "StateHistory", "Zonotope", "build_problem", "cartesian_product", "collision_zonotope",
    "compute_metrics", "confidence_zonotope", "continuous_reach", "discrete_reach", "dynamic_constraint",
    "generate_scene", "joint_reach", "line_segment_zonotope", "minkowski_sum", "mpc_step", "project",
    "run_episode", "solve", "static_constraint", "to_hrep",
]
