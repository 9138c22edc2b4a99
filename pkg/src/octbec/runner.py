"""Turn an effective configuration into objects and run one experiment."""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .analysis import observables, wigner, wigner_time_integrated
from .fileio import OutputDirectory, read_csv, read_tabulated_potential
from .grid import Grid1D, Grid2D, WaveField
from .optimal_control import (
    ControlTrajectory,
    OctProblem,
    SpatialProblem,
    evaluate_cost,
    evaluate_spatial_cost,
    optimize,
    optimize_spatial,
)
from .potentials import (
    DoubleWell,
    Separable2D,
    ShiftedHarmonic,
    ShiftedHarmonicQuartic,
    ShiftingChannel,
    TabulatedPotential,
    ThreeWireTrap,
    ThreeWireTrapSpec,
    WithOffset,
)
from .solver import groundstate_imaginary_time, propagate
from .units import ms_to_time


class RunError(RuntimeError):
    """A configured experiment could not be carried out."""


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_grid(cfg, t_final=None):
    g = cfg["grid"]
    t = g["t_final"] if t_final is None else t_final
    if g["time_unit"] == "ms":
        t = ms_to_time(t)
    if g["n_y"] is not None:
        if g["y_min"] is None or g["y_max"] is None:
            raise RunError("a 2D grid needs y_min, y_max and n_y")
        return Grid2D(g["x_min"], g["x_max"], g["n_x"], g["y_min"], g["y_max"], g["n_y"], t, g["n_t"])
    return Grid1D(g["x_min"], g["x_max"], g["n_x"], t, g["n_t"])


def _base_family(name, p):
    if name == "shifted_harmonic":
        return ShiftedHarmonic(p["x0"])
    if name == "shifted_harmonic_quartic":
        return ShiftedHarmonicQuartic(p["x0"], p["eta"])
    if name == "double_well":
        return DoubleWell(p["d"])
    raise RunError(f"unsupported base family {name!r}")


def build_potential(cfg, grid):
    p = cfg["potential"]
    name = p["family"]
    if name in ("shifted_harmonic", "shifted_harmonic_quartic", "double_well"):
        fam = _base_family(name, p)
    elif name == "three_wire_trap":
        spec = ThreeWireTrapSpec(
            wire_spacing=p["wire_spacing"],
            bias_field=p["bias_field"],
            ioffe_field=p["ioffe_field"],
            current_ext_base=p["current_ext_base"],
            current_ext_slope=p["current_ext_slope"],
            current_c_base=p["current_c_base"],
            current_c_slope=p["current_c_slope"],
            atom_state_moment=p["atom_state_moment"],
            trap_height=p["trap_height"],
        )
        fam = ThreeWireTrap(spec)
    elif name == "separable_2d":
        fam = Separable2D(_base_family(p["base"], p), p["omega_y"])
    elif name == "shifting_channel":
        fam = ShiftingChannel(p["y0"], p["omega"])
    elif name == "tabulated":
        if not p["file"]:
            raise RunError("the tabulated family needs [potential] file")
        lam, slices = read_tabulated_potential(p["file"])
        if slices.shape[1:] != grid.shape:
            raise RunError(f"tabulated slices have shape {slices.shape[1:]}, grid is {grid.shape}")
        fam = TabulatedPotential(lam, slices)
    else:  # guarded by config validation
        raise RunError(f"unknown family {name!r}")
    if fam.ndim != grid.ndim:
        raise RunError(f"family {name!r} is {fam.ndim}D but the grid is {grid.ndim}D")
    if p["offset_coefficients"]:
        fam = WithOffset(fam, tuple(float(c) for c in p["offset_coefficients"]))
    return fam


def _free_packet(grid, center, width, momentum, time):
    # Gaussian in x evolved freely for ``time``
    x = grid.x
    psi = np.exp(-((x - center) ** 2) / (2 * width**2) + 1j * momentum * x)
    k = 2 * np.pi * np.fft.fftfreq(grid.n_x, d=grid.dx)
    return np.fft.ifft(np.exp(-0.5j * k**2 * time) * np.fft.fft(psi))


def _packet_state(cfg, grid, family, lam, time, g):
    s = cfg["states"]
    if grid.ndim == 1:
        vals = _free_packet(grid, s["packet_center"], s["packet_width"], s["packet_momentum"], time)
        return WaveField(grid, vals).normalized()
    # transverse ground state of the potential column far left (lambda uniform)
    line = Grid1D(grid.y_min, grid.y_max, grid.n_y, grid.t_final, grid.n_t)
    column = np.asarray(family.potential((grid.x[:1, None] * 0.0, line.x[None, :]), lam)).reshape(-1)
    trans = groundstate_imaginary_time(line, column, g=0.0).state.values
    xpart = _free_packet(grid, s["packet_center"], s["packet_width"], s["packet_momentum"], time)
    return WaveField(grid, xpart[:, None] * trans[None, :]).normalized()


def build_states(cfg, grid, family, g):
    s = cfg["states"]
    sv = cfg["solver"]
    out = []
    for which, lam in (("initial", s["initial_lambda"]), ("desired", s["desired_lambda"])):
        if s[which] == "groundstate":
            gs = groundstate_imaginary_time(
                grid, family, lam, g=g, tol=sv["groundstate_tol"], max_steps=sv["groundstate_max_steps"]
            )
            out.append(gs.state)
        else:
            time = 0.0 if which == "initial" else grid.t_final
            out.append(_packet_state(cfg, grid, family, lam, time, g))
    return tuple(out)


def build_control(cfg, grid) -> ControlTrajectory:
    c = cfg["control"]
    if c["initial"] == "linear":
        return ControlTrajectory.linear(grid)
    if c["initial"] == "square_root":
        return ControlTrajectory.square_root(grid)
    if not c["file"]:
        raise RunError("control.initial = 'file' needs [control] file")
    header, rows = read_csv(c["file"])
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise RunError("control file must have columns t, lambda")
    t, lam = data[:, 0], data[:, 1]
    return ControlTrajectory(np.interp(grid.times, t * (grid.t_final / t[-1]), lam), grid.dt)


@dataclass
class Setup:
    grid: object
    family: object
    initial: WaveField
    desired: WaveField
    g: float


def build_setup(cfg, t_final=None, g=None) -> Setup:
    grid = build_grid(cfg, t_final)
    family = build_potential(cfg, grid)
    g = cfg["solver"]["g"] if g is None else g
    initial, desired = build_states(cfg, grid, family, g)
    return Setup(grid, family, initial, desired, g)


def build_problem(cfg, setup: Setup) -> OctProblem:
    o, sv = cfg["oct"], cfg["solver"]
    return OctProblem(
        setup.grid,
        setup.family,
        setup.initial,
        setup.desired,
        g=setup.g,
        gamma=o["gamma"],
        optimizer=o["optimizer"],
        max_iterations=o["max_iterations"],
        gradient_tolerance=o["gradient_tolerance"],
        cost_target=o["cost_target"],
        scheme=sv["scheme"],
        subtract_offset=cfg["potential"]["subtract_offset"],
        storage=sv["storage"],
        stride=sv["stride"],
        memory=o["memory"],
        max_backtracks=o["max_backtracks"],
    )


def build_spatial_problem(cfg, setup: Setup) -> SpatialProblem:
    o, sv, sp = cfg["oct"], cfg["solver"], cfg["spatial"]
    return SpatialProblem(
        setup.grid,
        setup.family,
        setup.initial,
        setup.desired,
        region=(sp["region_start"], sp["region_stop"]),
        g=setup.g,
        gamma=o["gamma"],
        optimizer=o["optimizer"],
        max_iterations=o["max_iterations"],
        gradient_tolerance=o["gradient_tolerance"],
        cost_target=o["cost_target"],
        storage=sv["storage"],
        stride=sv["stride"],
        memory=o["memory"],
        max_backtracks=o["max_backtracks"],
    )


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _wants(cfg, name):
    return name in cfg["output"]["artifacts"]


def _time_columns(cfg, grid):
    cols = [grid.times]
    header = ["t"]
    if cfg["grid"]["time_unit"] == "ms":
        from .units import time_to_ms

        cols.append(time_to_ms(grid.times))
        header.append("t_ms")
    return header, cols


def _write_control(out, cfg, grid, values, name="control.csv"):
    header, cols = _time_columns(cfg, grid)
    out.csv(name, header + ["lambda"], zip(*cols, values))


def _write_state(out, name, psi: WaveField):
    grid = psi.grid
    axes = {"x": grid.x} if grid.ndim == 1 else {"x": grid.x, "y": grid.y}
    out.field(name, psi.values, **axes)


def _write_observables(out, name, psi, family, lam, g):
    rec = observables(psi, family, lam, g)
    out.csv(name, ("quantity", "value"), sorted(rec.items()))


def run_groundstate(cfg, out):
    grid = build_grid(cfg)
    family = build_potential(cfg, grid)
    g = cfg["solver"]["g"]
    sv = cfg["solver"]
    rows = []
    for label, lam in (("initial", cfg["states"]["initial_lambda"]), ("desired", cfg["states"]["desired_lambda"])):
        gs = groundstate_imaginary_time(grid, family, lam, g=g, tol=sv["groundstate_tol"], max_steps=sv["groundstate_max_steps"])
        rows.append((label, float(lam), gs.energy, gs.chemical_potential, gs.steps, gs.residual))
        _write_state(out, f"groundstate_{label}.gpf", gs.state)
        if _wants(cfg, "observables"):
            _write_observables(out, f"observables_{label}.csv", gs.state, family, lam, g)
    out.csv("groundstate.csv", ("state", "lambda", "energy", "chemical_potential", "steps", "residual"), rows)
    return {"rows": rows}


def run_propagate(cfg, out):
    setup = build_setup(cfg)
    problem = build_problem(cfg, setup)
    control = build_control(cfg, setup.grid)
    spec = problem.spec(control.values)
    traj = propagate(spec)
    cost = evaluate_cost(problem, control)
    out.csv("cost.csv", ("J", "infidelity", "penalty"), [tuple(cost)])
    if _wants(cfg, "control"):
        _write_control(out, cfg, setup.grid, control.values)
    final = traj.final()
    if _wants(cfg, "final_state"):
        _write_state(out, "final_state.gpf", final)
    if _wants(cfg, "observables"):
        _write_observables(out, "observables_final.csv", final, setup.family, 1.0, setup.g)
    if _wants(cfg, "trajectory"):
        stride = max(1, setup.grid.n_t // 100)
        arr = traj.as_array(stride)
        out.field("trajectory.gpf", arr)
    norms = [(m, float(np.sqrt(np.sum(np.abs(traj.raw(m)) ** 2) * setup.grid.weight)))
             for m in range(0, setup.grid.n_t + 1, max(1, setup.grid.n_t // 100))]
    out.csv("norm.csv", ("node", "norm"), norms)
    return {"cost": cost}


def _write_report(out, cfg, report, grid=None, axis=None):
    if _wants(cfg, "history"):
        keys = ("iteration", "J", "infidelity", "penalty", "gradient_norm")
        out.csv("history.csv", keys, [[h[k] for k in keys] for h in report.history])
    out.csv(
        "summary.csv",
        ("quantity", "value"),
        [
            ("J", report.final_cost),
            ("infidelity", report.final_infidelity),
            ("penalty", report.final_penalty),
            ("gradient_norm", report.gradient_norm),
            ("iterations", report.iterations),
            ("exit_reason", report.exit_reason),
            ("left_unit_interval", report.left_unit_interval),
        ],
    )


def run_optimize(cfg, out):
    setup = build_setup(cfg)
    problem = build_problem(cfg, setup)
    start = build_control(cfg, setup.grid)
    if not cfg["oct"]["enabled"]:
        raise RunError("optimize requested with [oct] enabled = false")
    report = optimize(problem, start)
    _write_report(out, cfg, report)
    if _wants(cfg, "control"):
        _write_control(out, cfg, setup.grid, report.control.values)
    if _wants(cfg, "final_state") or _wants(cfg, "observables"):
        final = propagate(problem.spec(report.control.values)).final()
        if _wants(cfg, "final_state"):
            _write_state(out, "final_state.gpf", final)
        if _wants(cfg, "observables"):
            _write_observables(out, "observables_final.csv", final, setup.family, 1.0, setup.g)
    return {"report": report}


def run_optimize_spatial(cfg, out):
    setup = build_setup(cfg)
    if setup.grid.ndim != 2:
        raise RunError("optimize_spatial needs a 2D grid")
    problem = build_spatial_problem(cfg, setup)
    start = problem.linear_control()
    linear_cost = evaluate_spatial_cost(problem, start)
    report = optimize_spatial(problem, start)
    _write_report(out, cfg, report)
    ctrl = report.control
    x = setup.grid.x[ctrl.start_index:ctrl.start_index + ctrl.values.size]
    if _wants(cfg, "control"):
        out.csv("control.csv", ("x", "lambda"), zip(x, ctrl.values))
    out.csv("linear_cost.csv", ("J", "infidelity", "penalty"), [tuple(linear_cost)])
    return {"report": report, "linear_cost": linear_cost}


def _sweep_values(cfg):
    sw = cfg["sweep"]
    if sw["t_values"]:
        ts = [float(t) for t in sw["t_values"]]
    elif sw["t_start"] is not None:
        stop, step = sw["t_stop"], sw["t_step"]
        if stop is None or not step:
            raise RunError("a T range needs t_start, t_stop and t_step")
        n = int(round((stop - sw["t_start"]) / step))
        ts = [sw["t_start"] + i * step for i in range(n + 1)]
    else:
        ts = [float(cfg["grid"]["t_final"])]
    ks = [float(k) for k in sw["kappa_values"]] or [float(cfg["solver"]["g"])]
    return ts, ks


def sweep_point(cfg, t_final, kappa):
    """One row of a sweep: ``(T, kappa, J_linear[, J_optimized, iterations])``."""
    setup = build_setup(cfg, t_final=t_final, g=kappa)
    problem = build_problem(cfg, setup)
    control = build_control(cfg, setup.grid)
    lin = evaluate_cost(problem, control).total
    row = [t_final, kappa, lin]
    if cfg["oct"]["enabled"]:
        rep = optimize(problem, control)
        row += [rep.final_cost, rep.iterations]
    return row


def run_sweep(cfg, out, workers=1):
    ts, ks = _sweep_values(cfg)
    points = [(t, k) for t in ts for k in ks]
    if workers > 1 and len(points) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_point, [cfg] * len(points), *zip(*points)))
    else:
        rows = [sweep_point(cfg, t, k) for t, k in points]
    header = ["T", "kappa", "J_linear"]
    if cfg["oct"]["enabled"]:
        header += ["J_optimized", "iterations"]
    out.csv("sweep.csv", header, rows)
    return {"rows": rows}


def run_wigner(cfg, out):
    setup = build_setup(cfg)
    if setup.grid.ndim != 1:
        raise RunError("Wigner maps are computed for 1D configurations only")
    snap = cfg["wigner"]["snapshot"]
    if snap == "initial":
        wmap = wigner(setup.initial)
    elif snap == "desired":
        wmap = wigner(setup.desired)
    else:
        problem = build_problem(cfg, setup)
        control = build_control(cfg, setup.grid)
        traj = propagate(problem.spec(control.values))
        if snap == "final":
            wmap = wigner(traj.final())
        else:
            stride = cfg["wigner"]["stride"] or None
            wmap = wigner_time_integrated(traj, stride)
    out.field("wigner.gpf", wmap.values, x=wmap.x, p=wmap.p)
    meta = [("snapshot", snap), ("time_integrated", wmap.time_integrated)]
    meta += sorted((k, v) for k, v in wmap.metadata.items())
    out.csv("wigner_meta.csv", ("quantity", "value"), meta)
    return {"wigner": wmap}


RUNNERS = {
    "groundstate": run_groundstate,
    "propagate": run_propagate,
    "optimize": run_optimize,
    "optimize_spatial": run_optimize_spatial,
    "sweep": run_sweep,
    "wigner": run_wigner,
}


def run(cfg, out_dir=None, workers=1):
    """Run ``cfg`` and write its artifacts, the echoed config and a manifest."""
    out = OutputDirectory(Path(out_dir or cfg["output"]["directory"]))
    kind = cfg["experiment"]
    if kind == "sweep":
        result = run_sweep(cfg, out, workers)
    else:
        result = RUNNERS[kind](cfg, out)
    out.text("effective_config.toml", cfgmod.dumps(cfg))
    out.write_manifest()
    result["output"] = out
    return result
