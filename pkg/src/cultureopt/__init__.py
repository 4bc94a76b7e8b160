"""Stochastic cell-culture modeling, inference, and decision optimization."""

from cultureopt.kinetics import (
    GroundTruthConfig,
    GroundTruthProcess,
    Intervention,
    ModelTheta,
    PhaseParams,
    ProcessState,
    Trajectory,
    simulate_ground_truth,
    simulate_hybrid_trajectory,
)

__version__ = "0.1.0"
