"""Benchmark scenarios and the closed-loop simulation harness."""

from . import problems
from .problems import BallOnPlate, Crane2D, Cstr, DoubleIntegratorShrinking, DualArmRobot

__all__ = ["problems", "BallOnPlate", "Crane2D", "Cstr", "DoubleIntegratorShrinking", "DualArmRobot"]
