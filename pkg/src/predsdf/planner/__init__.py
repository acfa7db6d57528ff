"""Trajectory optimization against time-indexed signed-distance fields."""

from .problem import FactorGraphProblem, PlannerConfig, TrajectoryState
from .robots import PlanarArm, PointRobot, RobotModel, Sphere
from .solver import PlanResult, optimize

__all__ = ["FactorGraphProblem", "PlannerConfig", "TrajectoryState", "PlanarArm", "PointRobot", "RobotModel",
           "Sphere", "PlanResult", "optimize"]
