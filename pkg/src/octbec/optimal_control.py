"""Optimal control of the trap parameter lambda.

The cost is

    J = (1 - |<psi_d|psi(T)>|^2) / 2 + (gamma/2) * int lambda'(t)^2 dt

with ``lambda(0) = 0`` and ``lambda(T) = 1`` held fixed. The penalty uses
forward differences and the midpoint rule, so on the node grid it is
``gamma/2 * sum((lam[m+1] - lam[m])**2) / dt``.

Gradients are reported as functional derivatives: ``grad[m] * dt`` is the
derivative of the discrete cost with respect to the node value ``lam[m]``.
The infidelity part comes from the exact discrete adjoint in
:func:`octbec.solver.adjoint_sweep`; the penalty part is ``-gamma * lam''``
with the usual three-point stencil.

A second cost term (e.g. an energy penalty) would attach in
:func:`_cost_terms` and contribute an extra terminal or running adjoint source.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (
    ContractError,
    EdgeDensityWarning,
    Grid,
    Grid2D,
    GridError,
    WaveField,
    _require_normalized,
    fidelity_infidelity,
    warn_if_edge_density,
)
from .potentials import PotentialFamily
from .solver import (
    ControlRangeWarning,
    PropagationSpec,
    StaticPotential,
    TrajectoryStore,
    adjoint_sweep,
    propagate,
)

OPTIMIZERS = ("gradient_descent", "bfgs")
DEFAULT_GAMMA = 1e-3


# ---------------------------------------------------------------------------
# Control representation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlTrajectory:
    """Control values at the time nodes ``t_m = m * dt``; endpoints pinned to 0 and 1."""

    values: np.ndarray
    dt: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size < 3:
            raise ValueError("a control needs at least three nodes")
        vals[0], vals[-1] = 0.0, 1.0
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def linear(cls, grid: Grid) -> "ControlTrajectory":
        return cls(grid.times / grid.t_final, grid.dt)

    @classmethod
    def square_root(cls, grid: Grid) -> "ControlTrajectory":
        return cls(np.sqrt(grid.times / grid.t_final), grid.dt)

    @classmethod
    def from_interior(cls, interior, dt: float) -> "ControlTrajectory":
        return cls(np.concatenate(([0.0], interior, [1.0])), dt)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.size)

    def velocity(self) -> np.ndarray:
        """Forward differences, one per interval."""
        return np.diff(self.values) / self.dt

    def acceleration(self) -> np.ndarray:
        """``(lam[m+1] - 2 lam[m] + lam[m-1]) / dt^2`` at interior nodes."""
        v = self.values
        return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / self.dt**2

    def penalty(self, gamma: float) -> float:
        return smoothness_penalty(self.values, self.dt, gamma)

    def in_unit_interval(self) -> bool:
        return bool(np.all(self.values >= -1e-12) and np.all(self.values <= 1 + 1e-12))


def smoothness_penalty(values, step: float, gamma: float) -> float:
    d = np.diff(values)
    return float(0.5 * gamma * np.sum(d * d) / step)


def smoothness_gradient(values, step: float, gamma: float) -> np.ndarray:
    """``-gamma * lam''`` at interior nodes (derivative of the penalty / step)."""
    v = np.asarray(values, dtype=float)
    return -gamma * (v[2:] - 2.0 * v[1:-1] + v[:-2]) / step**2


# ---------------------------------------------------------------------------
# Problem definition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OctProblem:
    """Transfer ``initial -> desired`` by steering ``lambda(t)``.

    ``scheme``, ``subtract_offset``, ``storage`` and ``stride`` are passed to
    the propagator. ``cost_target`` stops the optimizer as soon as ``J``
    falls below it.
    """

    grid: Grid
    potential: PotentialFamily
    initial: WaveField
    desired: WaveField
    g: float = 0.0
    gamma: float = DEFAULT_GAMMA
    optimizer: str = "bfgs"
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    cost_target: float = 1e-4
    scheme: str = "auto"
    subtract_offset: bool = False
    storage: str = "full"
    stride: int = 16
    memory: int = 20
    max_backtracks: int = 40

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        _require_normalized(self.initial, "initial state")
        _require_normalized(self.desired, "desired state")
        for psi in (self.initial, self.desired):
            if psi.grid.spatial_key() != self.grid.spatial_key():
                raise GridError("initial/desired states live on a different grid")

    def spec(self, values) -> PropagationSpec:
        return PropagationSpec(
            self.grid,
            self.potential,
            control=values,
            initial=self.initial,
            g=self.g,
            scheme=self.scheme,
            subtract_offset=self.subtract_offset,
            storage=self.storage,
            stride=self.stride,
        )

    def with_options(self, **kw) -> "OctProblem":
        return replace(self, **kw)


def _as_values(control, grid) -> np.ndarray:
    if isinstance(control, ControlTrajectory):
        vals = control.values
    else:
        vals = np.asarray(control, dtype=float)
    if vals.shape != (grid.n_t + 1,):
        raise GridError(f"control needs {grid.n_t + 1} node values, got {vals.shape}")
    if vals[0] != 0.0 or vals[-1] != 1.0:
        raise ContractError("control endpoints must be pinned to lambda(0)=0 and lambda(T)=1")
    return vals


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    infidelity: float
    penalty: float

    def __iter__(self):
        return iter((self.total, self.infidelity, self.penalty))


def _forward_quiet(spec):
    # line-search trials may wander far; only the accepted result is checked
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ControlRangeWarning)
        warnings.simplefilter("ignore", EdgeDensityWarning)
        return propagate(spec)


def _cost_terms(problem: OctProblem, values, trajectory: TrajectoryStore) -> CostBreakdown:
    final = trajectory.final()
    infid = fidelity_infidelity(final, problem.desired)
    pen = smoothness_penalty(values, problem.grid.dt, problem.gamma)
    return CostBreakdown(infid + pen, infid, pen)


def evaluate_cost(problem: OctProblem, control) -> CostBreakdown:
    """Forward solve and return ``(J, infidelity, penalty)``."""
    values = _as_values(control, problem.grid)
    traj = _forward_quiet(problem.spec(values))
    return _cost_terms(problem, values, traj)


def _temporal_cost_and_gradient(problem: OctProblem, values):
    grid = problem.grid
    spec = problem.spec(values)
    traj = _forward_quiet(spec)
    cost = _cost_terms(problem, values, traj)
    final = traj.final()
    overlap = np.vdot(problem.desired.values, final.values) * grid.weight
    chi_t = overlap * problem.desired.values
    family = spec.family
    dI = np.zeros(grid.n_t + 1)

    def collect(m, sens):
        if 0 < m < grid.n_t:
            dI[m] = float(np.sum(sens * family.d_on_grid(grid, values[m])))

    adjoint_sweep(traj, chi_t, collect, keep_states=False)
    grad = dI[1:-1] / grid.dt + smoothness_gradient(values, grid.dt, problem.gamma)
    return cost, grad


def compute_gradient(problem: OctProblem, control) -> np.ndarray:
    """Gradient over the interior nodes; ``grad[m-1] * dt = dJ/dlam[m]``."""
    values = _as_values(control, problem.grid)
    return _temporal_cost_and_gradient(problem, values)[1]


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class OctReport:
    control: object
    history: list = field(default_factory=list)
    final_infidelity: float = math.nan
    final_penalty: float = math.nan
    gradient_norm: float = math.nan
    iterations: int = 0
    exit_reason: str = ""
    left_unit_interval: bool = False

    @property
    def final_cost(self) -> float:
        return self.final_infidelity + self.final_penalty

    @property
    def costs(self) -> np.ndarray:
        return np.array([h["J"] for h in self.history])


def _minimize(fun, x0, weight, optimizer, max_iterations, gtol, cost_target, memory=20, max_backtracks=40, c1=1e-4):
    """Armijo-backtracking gradient descent or L-BFGS.

    ``fun(x) -> (CostBreakdown, grad)``; ``grad`` is the Riesz representative
    for the inner product ``weight * dot(a, b)``, so ``-grad`` is the steepest
    descent direction and a unit step is a natural first trial.
    """

    def dot(a, b):
        return weight * float(np.dot(a, b))

    x = np.array(x0, dtype=float)
    cost, grad = fun(x)
    history = [_record(0, cost, grad)]
    s_hist, y_hist = [], []
    reason = "max_iterations"
    it = 0
    while True:
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm < gtol:
            reason = "gradient_tolerance"
            break
        if cost.total < cost_target:
            reason = "cost_target"
            break
        if it >= max_iterations:
            break
        if optimizer == "bfgs" and s_hist:
            d = -_two_loop(grad, s_hist, y_hist, dot)
            if dot(d, grad) >= 0:  # not a descent direction: restart
                s_hist.clear()
                y_hist.clear()
                d = -grad
        else:
            d = -grad
        slope = dot(grad, d)
        step = 1.0
        accepted = False
        for _ in range(max_backtracks + 1):
            x_new = x + step * d
            cost_new, grad_new = fun(x_new)
            if np.isfinite(cost_new.total) and cost_new.total <= cost.total + c1 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if optimizer == "bfgs" and s_hist:
                # retry once along the plain gradient before giving up
                s_hist.clear()
                y_hist.clear()
                continue
            reason = "stagnation"
            break
        it += 1
        if optimizer == "bfgs":
            s = x_new - x
            y = grad_new - grad
            if dot(s, y) > 1e-12 * math.sqrt(dot(s, s) * dot(y, y)):
                s_hist.append(s)
                y_hist.append(y)
                if len(s_hist) > memory:
                    s_hist.pop(0)
                    y_hist.pop(0)
            else:
                s_hist.clear()
                y_hist.clear()
        x, cost, grad = x_new, cost_new, grad_new
        history.append(_record(it, cost, grad))
    return x, cost, grad, history, it, reason


def _two_loop(grad, s_hist, y_hist, dot):
    q = grad.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / dot(y, s)
        a = rho * dot(s, q)
        alphas.append((rho, a))
        q -= a * y
    s, y = s_hist[-1], y_hist[-1]
    q *= dot(s, y) / dot(y, y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * dot(y, q)
        q += (a - b) * s
    return q


def _record(it, cost, grad):
    return {
        "iteration": it,
        "J": cost.total,
        "infidelity": cost.infidelity,
        "penalty": cost.penalty,
        "gradient_norm": float(np.max(np.abs(grad))) if grad.size else 0.0,
    }


def _finish(control, cost, grad, history, it, reason):
    report = OctReport(
        control=control,
        history=history,
        final_infidelity=cost.infidelity,
        final_penalty=cost.penalty,
        gradient_norm=float(np.max(np.abs(grad))) if grad.size else 0.0,
        iterations=it,
        exit_reason=reason,
    )
    vals = np.asarray(control.values)
    report.left_unit_interval = bool(np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12))
    if report.left_unit_interval:
        warnings.warn(
            f"optimized control spans [{vals.min():.4g}, {vals.max():.4g}], outside [0, 1]",
            ControlRangeWarning,
            stacklevel=3,
        )
    return report


def optimize(problem: OctProblem, initial=None) -> OctReport:
    """Minimise ``J`` over the interior control nodes.

    Starts from the linear ramp unless ``initial`` is given. Never raises on a
    failed line search; the report's ``exit_reason`` is then ``"stagnation"``.
    """
    grid = problem.grid
    if initial is None:
        initial = ControlTrajectory.linear(grid)
    values = _as_values(initial, grid)

    def fun(interior):
        return _temporal_cost_and_gradient(problem, np.concatenate(([0.0], interior, [1.0])))

    x, cost, grad, history, it, reason = _minimize(
        fun,
        values[1:-1],
        grid.dt,
        problem.optimizer,
        problem.max_iterations,
        problem.gradient_tolerance,
        problem.cost_target,
        problem.memory,
        problem.max_backtracks,
    )
    control = ControlTrajectory.from_interior(x, grid.dt)
    warn_if_edge_density(_forward_quiet(problem.spec(control.values)).final().values, "for the optimized control")
    return _finish(control, cost, grad, history, it, reason)


# ---------------------------------------------------------------------------
# Space-dependent control lambda(x)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialControl:
    """``lambda`` at the x-grid points of the control region; pinned 0 and 1 at its ends.

    Left of the region ``lambda = 0``, right of it ``lambda = 1``.
    """

    values: np.ndarray
    start_index: int
    dx: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size < 3:
            raise ValueError("the control region needs at least three grid points")
        vals[0], vals[-1] = 0.0, 1.0
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    def field(self, n_x: int) -> np.ndarray:
        """``lambda`` at every x-grid point."""
        out = np.zeros(n_x)
        stop = self.start_index + self.values.size
        out[self.start_index:stop] = self.values
        out[stop:] = 1.0
        return out

    def with_interior(self, interior) -> "SpatialControl":
        return SpatialControl(np.concatenate(([0.0], interior, [1.0])), self.start_index, self.dx)


def region_indices(grid: Grid2D, x_start: float, x_stop: float) -> tuple[int, int]:
    """First and last x-grid index inside ``[x_start, x_stop]``."""
    x = grid.x
    idx = np.nonzero((x >= x_start - 1e-9 * grid.dx) & (x <= x_stop + 1e-9 * grid.dx))[0]
    if idx.size < 3:
        raise GridError("control region holds fewer than three grid points")
    return int(idx[0]), int(idx[-1])


@dataclass(frozen=True)
class SpatialProblem:
    """Static 2D geometry ``V(x, y) = family((x, y), lambda(x))`` shaped by ``lambda(x)``."""

    grid: Grid2D
    potential: PotentialFamily
    initial: WaveField
    desired: WaveField
    region: tuple = (0.0, 10.0)
    g: float = 0.0
    gamma: float = DEFAULT_GAMMA
    optimizer: str = "bfgs"
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    cost_target: float = 1e-4
    storage: str = "full"
    stride: int = 16
    memory: int = 20
    max_backtracks: int = 40

    def __post_init__(self):
        if self.grid.ndim != 2:
            raise GridError("the spatial control variant needs a 2D grid")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        _require_normalized(self.initial, "initial state")
        _require_normalized(self.desired, "desired state")

    def indices(self) -> tuple[int, int]:
        return region_indices(self.grid, *self.region)

    def linear_control(self) -> SpatialControl:
        i0, i1 = self.indices()
        n = i1 - i0 + 1
        return SpatialControl(np.linspace(0.0, 1.0, n), i0, self.grid.dx)

    def potential_values(self, control: SpatialControl) -> np.ndarray:
        lam = control.field(self.grid.n_x)[:, None]
        return np.broadcast_to(self.potential.potential(self.grid.coords, lam), self.grid.shape)

    def spec(self, control: SpatialControl) -> PropagationSpec:
        return PropagationSpec(
            self.grid,
            StaticPotential(self.potential_values(control)),
            initial=self.initial,
            g=self.g,
            scheme="split_operator_nonlinear" if self.g > 0 else "split_operator",
            storage=self.storage,
            stride=self.stride,
        )


def _spatial_cost_and_gradient(problem: SpatialProblem, control: SpatialControl):
    grid = problem.grid
    traj = _forward_quiet(problem.spec(control))
    infid = fidelity_infidelity(traj.final(), problem.desired)
    pen = smoothness_penalty(control.values, control.dx, problem.gamma)
    cost = CostBreakdown(infid + pen, infid, pen)
    overlap = np.vdot(problem.desired.values, traj.final().values) * grid.weight
    total = np.zeros(grid.shape)

    def collect(m, sens):
        total[...] += sens

    adjoint_sweep(traj, overlap * problem.desired.values, collect, keep_states=False)
    lam = control.field(grid.n_x)[:, None]
    dv = np.broadcast_to(problem.potential.dpotential(grid.coords, lam), grid.shape)
    per_column = np.sum(total * dv, axis=1)
    i0 = control.start_index
    dI = per_column[i0 + 1:i0 + control.values.size - 1]
    grad = dI / control.dx + smoothness_gradient(control.values, control.dx, problem.gamma)
    return cost, grad


def evaluate_spatial_cost(problem: SpatialProblem, control: SpatialControl) -> CostBreakdown:
    traj = _forward_quiet(problem.spec(control))
    infid = fidelity_infidelity(traj.final(), problem.desired)
    pen = smoothness_penalty(control.values, control.dx, problem.gamma)
    return CostBreakdown(infid + pen, infid, pen)


def compute_spatial_gradient(problem: SpatialProblem, control: SpatialControl) -> np.ndarray:
    """Gradient over interior region nodes; ``grad[i-1] * dx = dJ/dlam(x_i)``."""
    return _spatial_cost_and_gradient(problem, control)[1]


def optimize_spatial(problem: SpatialProblem, initial: SpatialControl | None = None) -> OctReport:
    """Minimise the outgoing infidelity plus ``gamma/2 int lambda'(x)^2 dx``."""
    if initial is None:
        initial = problem.linear_control()
    i0, i1 = problem.indices()
    if initial.start_index != i0 or initial.values.size != i1 - i0 + 1:
        raise GridError("initial spatial control does not cover the configured region")

    def fun(interior):
        return _spatial_cost_and_gradient(problem, initial.with_interior(interior))

    x, cost, grad, history, it, reason = _minimize(
        fun,
        initial.interior,
        initial.dx,
        problem.optimizer,
        problem.max_iterations,
        problem.gradient_tolerance,
        problem.cost_target,
        problem.memory,
        problem.max_backtracks,
    )
    return _finish(initial.with_interior(x), cost, grad, history, it, reason)
