"""Optimal control of Bose-Einstein condensate transport and splitting.

Modules
-------
grid            space-time grids, wavefields, inner products
potentials      lambda-parameterised trap families and offset splitting
solver          forward, adjoint and imaginary-time propagation
optimal_control cost, gradient and optimizers for lambda(t) and lambda(x)
analysis        Wigner maps and observables
fileio          raw binary fields, CSV and manifests
config, presets, runner, cli   batch experiment driver
"""

from ._accel import backend_name
from .grid import Grid1D, Grid2D, WaveField, fidelity_infidelity, gaussian, inner_product
from .optimal_control import (
    ControlTrajectory,
    OctProblem,
    OctReport,
    SpatialControl,
    SpatialProblem,
    compute_gradient,
    evaluate_cost,
    optimize,
    optimize_spatial,
)
from .solver import PropagationSpec, TrajectoryStore, groundstate_imaginary_time, propagate, propagate_adjoint

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "Grid1D",
    "Grid2D",
    "WaveField",
    "fidelity_infidelity",
    "gaussian",
    "inner_product",
    "ControlTrajectory",
    "OctProblem",
    "OctReport",
    "SpatialControl",
    "SpatialProblem",
    "compute_gradient",
    "evaluate_cost",
    "optimize",
    "optimize_spatial",
    "PropagationSpec",
    "TrajectoryStore",
    "groundstate_imaginary_time",
    "propagate",
    "propagate_adjoint",
]
