import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _problems import double_well, single_well, smooth_control
from octbec.grid import ContractError, Grid1D, Grid2D, WaveField, gaussian
from octbec.optimal_control import (
    ControlTrajectory,
    OctProblem,
    SpatialControl,
    SpatialProblem,
    compute_gradient,
    compute_spatial_gradient,
    evaluate_cost,
    evaluate_spatial_cost,
    optimize,
    smoothness_penalty,
)
from octbec.potentials import ShiftedHarmonicQuartic, ShiftingChannel, ThreeWireTrap
from octbec.solver import PropagationSpec, StaticPotential, groundstate_imaginary_time, propagate


def fd_gradient(cost, values, nodes, eps=1e-6):
    out = []
    for m in nodes:
        up, dn = values.copy(), values.copy()
        up[m] += eps
        dn[m] -= eps
        out.append((cost(up) - cost(dn)) / (2 * eps))
    return np.array(out)


def check_fd(problem, seed, n_nodes=6, tol=1e-3):
    rng = np.random.default_rng(seed)
    lam = smooth_control(problem.grid, rng)
    grad = compute_gradient(problem, lam)
    nodes = rng.choice(np.arange(1, problem.grid.n_t), size=n_nodes, replace=False)
    fd = fd_gradient(lambda v: evaluate_cost(problem, v).total, lam, nodes)
    adj = grad[nodes - 1] * problem.grid.dt
    err = np.max(np.abs(adj - fd)) / np.max(np.abs(fd))
    assert err < tol, (adj, fd)


def quartic_problem(g):
    base = single_well(t_final=4.0, n_x=200, n_t=200, g=g)
    fam = ShiftedHarmonicQuartic(5.0, 0.2)
    init = groundstate_imaginary_time(base.grid, fam, 0.0, g=g).state
    des = groundstate_imaginary_time(base.grid, fam, 1.0, g=g).state
    return OctProblem(base.grid, fam, init, des, g=g)


def three_wire_problem(g):
    grid = Grid1D(-5.0, 5.0, 200, 1.5, 200)
    fam = ThreeWireTrap()
    init = groundstate_imaginary_time(grid, fam, 0.0, g=g).state
    des = groundstate_imaginary_time(grid, fam, 1.0, g=g).state
    return OctProblem(grid, fam, init, des, g=g, subtract_offset=True)


BUILDERS = {
    "single_well": lambda g: single_well(t_final=4.0, n_x=200, n_t=200, g=g),
    "double_well": lambda g: double_well(t_final=4.0, n_x=200, n_t=200, g=g),
    "quartic": quartic_problem,
    "three_wire": three_wire_problem,
}


@pytest.mark.parametrize("family", sorted(BUILDERS))
@pytest.mark.parametrize("g", [0.0, 1.0, 20.0])
@settings(max_examples=2, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(family, g, seed):
    problem = BUILDERS[family](g)
    check_fd(problem, seed, tol=1e-3 if g == 0 else 1e-2)


def test_gradient_is_penalty_only_without_control_coupling():
    base = single_well(t_final=3.0, n_x=128, n_t=150)
    grid = base.grid
    static = StaticPotential(base.potential.on_grid(grid, 0.0))
    reached = propagate(PropagationSpec(grid, static, initial=base.initial)).final()
    problem = OctProblem(grid, static, base.initial, WaveField(grid, reached.values), gamma=2e-3)
    lin = ControlTrajectory.linear(grid)
    assert np.max(np.abs(compute_gradient(problem, lin))) < 1e-12
    curved = ControlTrajectory(np.sin(0.5 * np.pi * grid.times / grid.t_final) ** 2, grid.dt)
    assert np.allclose(compute_gradient(problem, curved), -2e-3 * curved.acceleration(), rtol=1e-12, atol=1e-14)
    cost = evaluate_cost(problem, lin)
    assert cost.infidelity < 1e-14
    assert cost.total == pytest.approx(cost.penalty, abs=1e-14)


def test_linear_ramp_penalty():
    grid = Grid1D(-10.0, 15.0, 64, 9.0, 500)
    lin = ControlTrajectory.linear(grid)
    assert lin.penalty(1e-3) == pytest.approx(1e-3 / 18, rel=1e-12)
    assert lin.penalty(1e-3) == pytest.approx(5.56e-5, abs=1e-7)
    assert np.max(np.abs(lin.acceleration())) < 1e-9
    assert smoothness_penalty(lin.values, grid.dt, 1e-3) == lin.penalty(1e-3)


def test_global_phase_of_target_is_irrelevant():
    problem = single_well(t_final=3.0, n_x=200, n_t=200)
    rotated = problem.with_options(desired=problem.desired * np.exp(0.9j))
    lam = smooth_control(problem.grid, np.random.default_rng(1))
    a, b = evaluate_cost(problem, lam), evaluate_cost(rotated, lam)
    assert abs(a.total - b.total) < 1e-12
    ga, gb = compute_gradient(problem, lam), compute_gradient(rotated, lam)
    assert np.max(np.abs(ga - gb)) < 1e-12


def test_controls_are_pinned():
    lam = ControlTrajectory.from_interior(np.full(5, 3.0), 0.1)
    assert lam.values[0] == 0.0 and lam.values[-1] == 1.0
    problem = single_well(t_final=3.0, n_x=128, n_t=150)
    bad = np.linspace(0, 1, 151)
    bad[-1] = 0.9
    with pytest.raises(ContractError):
        evaluate_cost(problem, bad)
    with pytest.raises(ValueError):
        problem.with_options(gamma=0.0)


def test_gradient_descent_never_increases_cost():
    problem = single_well(t_final=3.0, n_x=128, n_t=150, optimizer="gradient_descent", max_iterations=15)
    report = optimize(problem)
    assert np.all(np.diff(report.costs) <= 0)
    assert report.iterations == 15 and report.exit_reason == "max_iterations"
    assert report.control.values[0] == 0.0 and report.control.values[-1] == 1.0


def test_converged_control_is_stationary():
    problem = single_well(t_final=6.0, n_x=128, n_t=150, gradient_tolerance=1e-5, cost_target=0.0,
                          max_iterations=300)
    report = optimize(problem)
    assert report.exit_reason == "gradient_tolerance"
    regrad = compute_gradient(problem, report.control)
    assert np.max(np.abs(regrad)) < 10 * problem.gradient_tolerance
    assert report.final_cost < evaluate_cost(problem, ControlTrajectory.linear(problem.grid)).total
    assert np.all(np.diff(report.costs) <= 0)


def _channel_problem(y0=2.0, **kw):
    grid = Grid2D(-12.0, 12.0, 64, -5.0, 7.0, 16, 2.0, 100)
    fam = ShiftingChannel(y0)
    line = Grid1D(-5.0, 7.0, 16, 2.0, 100)
    trans = groundstate_imaginary_time(line, 0.5 * line.x**2).state.values
    x = grid.x
    packet = np.exp(-((x + 5.0) ** 2) / 2 + 3j * x)
    init = WaveField(grid, packet[:, None] * trans[None, :]).normalized()
    des = gaussian(grid, center=(1.0, y0), width=(1.0, 1.0), momentum=(3.0, 0.0))
    return SpatialProblem(grid, fam, init, des, region=(-3.0, 3.0), **kw)


def test_spatial_gradient_matches_finite_differences():
    problem = _channel_problem()
    start = problem.linear_control()
    rng = np.random.default_rng(4)
    vals = start.values + 0.1 * np.sin(np.pi * np.linspace(0, 1, start.values.size)) * rng.standard_normal()
    ctrl = SpatialControl(vals, start.start_index, start.dx)
    grad = compute_spatial_gradient(problem, ctrl)
    nodes = np.arange(1, ctrl.values.size - 1)

    def cost(v):
        return evaluate_spatial_cost(problem, SpatialControl(v, ctrl.start_index, ctrl.dx)).total

    fd = fd_gradient(cost, ctrl.values.copy(), nodes)
    err = np.max(np.abs(grad * ctrl.dx - fd)) / np.max(np.abs(fd))
    assert err < 1e-2


def test_spatial_control_layout():
    ctrl = SpatialControl(np.array([0.3, 0.2, 0.9, 0.4]), 3, 0.5)
    assert ctrl.values.tolist() == [0.0, 0.2, 0.9, 1.0]
    assert ctrl.field(9).tolist() == [0, 0, 0, 0.0, 0.2, 0.9, 1.0, 1, 1]
