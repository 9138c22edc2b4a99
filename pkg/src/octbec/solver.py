"""Forward, adjoint and imaginary-time propagation of the (Gross-Pitaevskii)
Schroedinger equation ``i dpsi/dt = (-lap/2 + V(r, lambda(t)) + g|psi|^2) psi``.

Three real-time schemes are available:

``crank_nicolson_1d``
    Second-order finite-difference Laplacian, Cayley transform of the
    Hamiltonian averaged over each step (exactly unitary, linear only).
``split_operator``
    Strang splitting ``exp(-i dt V/2) exp(-i dt T) exp(-i dt V/2)`` with the
    kinetic factor applied by FFT, 1D and 2D, linear only.
``split_operator_nonlinear``
    Same splitting with ``g|psi|^2`` added to the potential half steps; each
    half step uses the density of the state it acts on. With ``g = 0`` it
    reproduces ``split_operator`` bit for bit.

The adjoint sweep is the exact adjoint of the discrete forward map, so the
gradients built from it agree with finite differences of the discrete cost to
round-off. The adjoint state is stored as ``p = i chi`` where
``chi = d(infidelity)/d(conj psi)`` (up to sign), and its terminal value is
``p(T) = i <psi_d|psi(T)> psi_d``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels
from .grid import (
    ContractError,
    Grid,
    GridError,
    WaveField,
    kinetic_energy,
    kinetic_symbol,
    warn_if_edge_density,
)
from .potentials import OffsetRemoved, PotentialFamily

SCHEMES = ("crank_nicolson_1d", "split_operator", "split_operator_nonlinear")
DIRECTIONS = ("forward", "backward_adjoint", "imaginary_time")
STORAGE = ("full", "strided")

GROUNDSTATE_TOL = 1e-10
GROUNDSTATE_MAX_STEPS = 100_000


class ConvergenceError(RuntimeError):
    """Imaginary-time relaxation did not reach the requested tolerance."""

    def __init__(self, message, residual=np.nan, steps=0):
        super().__init__(message)
        self.residual = residual
        self.steps = steps


class ControlRangeWarning(RuntimeWarning):
    """The control left the interval [0, 1] where the potential family is defined."""


class StaticPotential(PotentialFamily):
    """A fixed potential array; the control argument is ignored."""

    kind = "static"

    def __init__(self, values, ndim: int | None = None):
        self.values = np.asarray(values, dtype=float)
        self.ndim = self.values.ndim if ndim is None else ndim

    def potential(self, r, lam):
        return self.values

    def dpotential(self, r, lam):
        return np.zeros_like(self.values)

    def on_grid(self, grid, lam):
        return self.values

    def d_on_grid(self, grid, lam):
        return np.zeros(grid.shape)


@dataclass(frozen=True)
class PropagationSpec:
    """Everything needed to propagate one trajectory.

    Parameters
    ----------
    grid : Grid1D or Grid2D
        Space-time grid; ``grid.n_t`` steps of ``grid.dt``.
    potential : PotentialFamily
        ``V(r, lambda)``.
    control : array_like, optional
        ``lambda`` at the ``n_t + 1`` time nodes. Defaults to zeros.
    initial : WaveField, optional
        Starting state for forward and imaginary-time runs.
    g : float
        Nonlinear coupling ``kappa`` (``>= 0``).
    scheme : str
        One of ``SCHEMES`` or ``"auto"`` (Crank-Nicolson for linear 1D
        problems, split operator otherwise).
    subtract_offset : bool
        Propagate with ``V - min_grid V`` and track the removed global phase.
    storage : {"full", "strided"}
        Keep every state, or only every ``stride``-th and recompute the rest.
    """

    grid: Grid
    potential: PotentialFamily
    control: np.ndarray | None = None
    initial: WaveField | None = None
    g: float = 0.0
    scheme: str = "auto"
    direction: str = "forward"
    subtract_offset: bool = False
    storage: str = "full"
    stride: int = 16

    def __post_init__(self):
        n = self.grid.n_t + 1
        if self.control is None:
            lam = np.zeros(n)
        else:
            lam = np.array(self.control, dtype=float).reshape(-1)
        if lam.shape != (n,):
            raise GridError(f"control needs {n} node values, got {lam.size}")
        if not np.all(np.isfinite(lam)):
            raise ValueError("control contains non-finite values")
        lam.flags.writeable = False
        object.__setattr__(self, "control", lam)
        if self.g < 0:
            raise ValueError(f"nonlinear coupling must be >= 0, got {self.g}")
        if self.scheme not in SCHEMES + ("auto",):
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.storage not in STORAGE:
            raise ValueError(f"unknown storage policy {self.storage!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.potential.ndim != self.grid.ndim:
            raise GridError(f"{self.potential.ndim}D potential on a {self.grid.ndim}D grid")

    @property
    def resolved_scheme(self) -> str:
        if self.scheme != "auto":
            return self.scheme
        if self.g == 0.0 and self.grid.ndim == 1:
            return "crank_nicolson_1d"
        return "split_operator" if self.g == 0.0 else "split_operator_nonlinear"

    @property
    def family(self) -> PotentialFamily:
        """The family actually propagated (offset-free if requested)."""
        if self.subtract_offset and not isinstance(self.potential, OffsetRemoved):
            return OffsetRemoved(self.potential, self.grid)
        return self.potential

    def with_control(self, control) -> "PropagationSpec":
        return replace(self, control=np.asarray(control, dtype=float))

    def potential_nodes(self) -> np.ndarray:
        return self.family.series(self.grid, self.control)

    def potential_at(self, m: int) -> np.ndarray:
        return self.family.on_grid(self.grid, self.control[m])

    def offset_phase(self) -> np.ndarray:
        """Global phase removed by offset subtraction, at every node.

        ``Phi(t_m)`` is the trapezoid integral of ``V0(lambda(t))``; the full
        state is ``exp(-i Phi) psi_propagated``.
        """
        if not self.subtract_offset:
            return np.zeros(self.grid.n_t + 1)
        base = self.potential.base if isinstance(self.potential, OffsetRemoved) else self.potential
        v0 = np.array([np.min(base.on_grid(self.grid, lam)) for lam in self.control])
        phase = np.zeros_like(v0)
        phase[1:] = np.cumsum(0.5 * self.grid.dt * (v0[1:] + v0[:-1]))
        return phase


def _report_control_range(lam):
    lo, hi = float(np.min(lam)), float(np.max(lam))
    if lo < -1e-9 or hi > 1 + 1e-9:
        warnings.warn(
            f"control range [{lo:.4g}, {hi:.4g}] leaves [0, 1]; the potential is extrapolated",
            ControlRangeWarning,
            stacklevel=3,
        )
        return True
    return False


# ---------------------------------------------------------------------------
# Trajectory storage
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryStore:
    """States at the time nodes of one propagation.

    With ``policy="strided"`` only every ``stride``-th node (plus the last)
    is kept; other nodes are recomputed from the nearest earlier checkpoint
    when a ``recompute`` callback is available.
    """

    grid: Grid
    policy: str
    stride: int
    snapshots: dict
    phase: np.ndarray | None = None
    recompute: Callable | None = field(default=None, repr=False)
    spec: PropagationSpec | None = field(default=None, repr=False)
    kind: str = "state"

    @classmethod
    def from_array(cls, grid, states, **kw) -> "TrajectoryStore":
        return cls(grid, "full", 1, {m: states[m] for m in range(states.shape[0])}, **kw)

    @property
    def n_nodes(self) -> int:
        return self.grid.n_t + 1

    def __len__(self):
        return self.n_nodes

    def raw(self, m: int) -> np.ndarray:
        """Stored or recomputed array at node ``m`` (offset phase not applied)."""
        if m < 0:
            m += self.n_nodes
        if not 0 <= m < self.n_nodes:
            raise IndexError(m)
        if m in self.snapshots:
            return self.snapshots[m]
        if self.recompute is None:
            raise KeyError(f"node {m} was not stored and cannot be recomputed")
        start = max(k for k in self.snapshots if k <= m)
        return self.recompute(start, self.snapshots[start], m)[-1]

    def __getitem__(self, m: int) -> WaveField:
        if m < 0:
            m += self.n_nodes
        vals = self.raw(m)
        if self.phase is not None and self.phase[m] != 0.0:
            vals = vals * np.exp(-1j * self.phase[m])
        return WaveField(self.grid, vals, m)

    def final(self) -> WaveField:
        return self[self.n_nodes - 1]

    def initial(self) -> WaveField:
        return self[0]

    def segment(self, start: int, stop: int) -> np.ndarray:
        """Raw states for nodes ``start..stop`` inclusive, as one array."""
        if all(k in self.snapshots for k in range(start, stop + 1)):
            return np.stack([self.snapshots[k] for k in range(start, stop + 1)])
        return self.recompute(start, self.raw(start), stop)

    def as_array(self, stride: int = 1) -> np.ndarray:
        idx = list(range(0, self.n_nodes, stride))
        if idx[-1] != self.n_nodes - 1:
            idx.append(self.n_nodes - 1)
        return np.stack([self[m].values for m in idx])

    def checkpoints(self) -> list[int]:
        return sorted(self.snapshots)


# ---------------------------------------------------------------------------
# Split-operator stepping
# ---------------------------------------------------------------------------


class _SplitStepper:
    def __init__(self, grid: Grid, g: float, imaginary: bool = False):
        self.grid = grid
        self.g = float(g)
        self.a = 0.5 * grid.dt
        self.imaginary = imaginary
        sym = kinetic_symbol(grid)
        if imaginary:
            self.kin = np.exp(-grid.dt * sym)
        else:
            self.kin = np.exp(-1j * grid.dt * sym)
        self.kin_adj = np.conj(self.kin)

    def kinetic(self, psi):
        return np.fft.ifftn(self.kin * np.fft.fftn(psi))

    def kinetic_adjoint(self, chi):
        return np.fft.ifftn(self.kin_adj * np.fft.fftn(chi))

    def step(self, psi, v_now, v_next, shift=None):
        if self.imaginary:
            # ``shift`` (a running chemical potential) keeps the norm near one
            if shift is None:
                shift = float(np.min(v_now))
            phi = self.kinetic(kernels.damp(psi, v_now - shift, self.g, self.a))
            return kernels.damp(phi, v_next - shift, self.g, self.a)
        phi = self.kinetic(kernels.phase(psi, v_now, self.g, self.a))
        return kernels.phase(phi, v_next, self.g, self.a)

    def adjoint_step(self, chi_next, psi_now, psi_next, v_now, v_next, sens_now, sens_next):
        # Undo the last half step to recover the state it acted on; the
        # density is unchanged by a pure phase so this is exact.
        w = self.grid.weight
        phi2 = kernels.phase(psi_next, v_next, self.g, -self.a)
        xi = kernels.phase_adjoint(chi_next, phi2, v_next, self.g, self.a, w, sens_next)
        xi = self.kinetic_adjoint(xi)
        return kernels.phase_adjoint(xi, psi_now, v_now, self.g, self.a, w, sens_now)


class _NodePotentials:
    """Potential arrays per node, cached in full for small problems."""

    CACHE_LIMIT = 64 * 2**20  # bytes

    def __init__(self, spec: PropagationSpec):
        self.spec = spec
        n = spec.grid.n_t + 1
        size = n * int(np.prod(spec.grid.shape)) * 8
        self.cache = spec.potential_nodes() if size <= self.CACHE_LIMIT else None

    def __call__(self, m):
        if self.cache is not None:
            return self.cache[m]
        return self.spec.potential_at(m)


def _split_segment(stepper, pots, start, psi_start, stop, normalize=False):
    out = np.empty((stop - start + 1,) + psi_start.shape, dtype=np.complex128)
    out[0] = psi_start
    w = stepper.grid.weight
    for j, m in enumerate(range(start, stop)):
        out[j + 1] = stepper.step(out[j], pots(m), pots(m + 1))
        if normalize:
            out[j + 1] /= np.sqrt(np.sum(np.abs(out[j + 1]) ** 2) * w)
    return out


def _checkpoint_nodes(n_t, stride):
    nodes = list(range(0, n_t + 1, stride))
    if nodes[-1] != n_t:
        nodes.append(n_t)
    return nodes


def _initial_values(spec: PropagationSpec) -> np.ndarray:
    if spec.initial is None:
        raise ContractError("propagation needs an initial state")
    psi0 = spec.initial
    if psi0.grid.spatial_key() != spec.grid.spatial_key():
        raise GridError("initial state lives on a different grid")
    return np.array(psi0.values, dtype=np.complex128)


def _run_split(spec: PropagationSpec, imaginary: bool = False) -> TrajectoryStore:
    grid = spec.grid
    stepper = _SplitStepper(grid, spec.g, imaginary=imaginary)
    pots = _NodePotentials(spec)
    psi = _initial_values(spec)
    stride = spec.stride if spec.storage == "strided" else 1
    keep = set(_checkpoint_nodes(grid.n_t, stride))
    snaps = {0: psi.copy()}
    for m in range(grid.n_t):
        psi = stepper.step(psi, pots(m), pots(m + 1))
        if imaginary:
            psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.weight)
        if m + 1 in keep:
            snaps[m + 1] = psi.copy()

    def recompute(start, psi_start, stop):
        return _split_segment(stepper, pots, start, psi_start, stop, normalize=imaginary)

    phase = None if imaginary else spec.offset_phase()
    store = TrajectoryStore(grid, spec.storage, stride, snaps, phase=phase, recompute=recompute, spec=spec)
    if not imaginary:
        warn_if_edge_density(psi, "at the final time")
    return store


def _check_direction(spec):
    if spec.direction != "forward":
        raise ValueError(f"forward propagation requested with direction {spec.direction!r}")


def propagate_split_operator(spec: PropagationSpec) -> TrajectoryStore:
    """Linear Strang split-operator propagation (1D or 2D)."""
    _check_direction(spec)
    if spec.g != 0.0:
        raise ValueError("split_operator is linear; use split_operator_nonlinear for g > 0")
    _report_control_range(spec.control)
    return _run_split(replace(spec, scheme="split_operator"))


def propagate_split_operator_nonlinear(spec: PropagationSpec) -> TrajectoryStore:
    """Strang splitting with the mean-field term in the potential half steps."""
    _check_direction(spec)
    _report_control_range(spec.control)
    return _run_split(replace(spec, scheme="split_operator_nonlinear"))


def propagate_cn_1d(spec: PropagationSpec) -> TrajectoryStore:
    """Crank-Nicolson propagation on a 1D grid (linear equation only).

    Each step uses the Hamiltonian with the potential averaged over the step
    endpoints, which keeps the step exactly unitary.
    """
    _check_direction(spec)
    if spec.grid.ndim != 1:
        raise GridError("Crank-Nicolson is implemented for 1D grids only")
    if spec.g != 0.0:
        raise ValueError("Crank-Nicolson is implemented for the linear equation only")
    _report_control_range(spec.control)
    grid = spec.grid
    v = spec.potential_nodes()
    vbar = np.ascontiguousarray(0.5 * (v[1:] + v[:-1]))
    traj = kernels.cn_sweep(_initial_values(spec), vbar, grid.dx, grid.dt, False)
    warn_if_edge_density(traj[-1], "at the final time")
    spec = replace(spec, scheme="crank_nicolson_1d", storage="full")
    return TrajectoryStore.from_array(grid, traj, phase=spec.offset_phase(), spec=spec)


def propagate(spec: PropagationSpec) -> TrajectoryStore:
    """Dispatch on ``spec.direction`` and ``spec.resolved_scheme``."""
    if spec.direction == "imaginary_time":
        return _run_split(spec, imaginary=True)
    scheme = spec.resolved_scheme
    if scheme == "crank_nicolson_1d":
        return propagate_cn_1d(spec)
    if scheme == "split_operator":
        return propagate_split_operator(spec)
    return propagate_split_operator_nonlinear(spec)


# ---------------------------------------------------------------------------
# Adjoint
# ---------------------------------------------------------------------------


def terminal_adjoint(final: WaveField, desired: WaveField) -> WaveField:
    """``p(T) = i <psi_d|psi(T)> psi_d`` for the infidelity cost."""
    overlap = np.vdot(desired.values, final.values) * final.grid.weight
    return WaveField(final.grid, 1j * overlap * desired.values, final.grid.n_t)


def adjoint_sweep(
    forward: TrajectoryStore,
    chi_terminal: np.ndarray,
    node_callback: Callable[[int, np.ndarray], None] | None = None,
    keep_states: bool = True,
):
    """Backward sweep of the exact discrete adjoint.

    Parameters
    ----------
    forward : TrajectoryStore
        Result of a forward propagation (its ``spec`` fixes scheme and potential).
    chi_terminal : ndarray
        ``d(cost)/d(conj psi(T))`` in the sense ``dI = -Re <chi, dpsi>``.
    node_callback : callable, optional
        Called as ``node_callback(m, G_m)`` once ``G_m = dI/dV(t_m, r)`` is
        complete; nodes arrive in decreasing order.
    keep_states : bool
        Store ``chi`` at the nodes (all of them for full storage, the
        checkpoints for strided storage).

    Returns
    -------
    dict
        node -> chi array (may be empty when ``keep_states`` is false).
    """
    spec = forward.spec
    if spec is None:
        raise ValueError("trajectory carries no propagation spec")
    grid = spec.grid
    n_t = grid.n_t
    chi_terminal = np.asarray(chi_terminal, dtype=np.complex128)
    if forward.phase is not None and forward.phase[-1] != 0.0:
        # the stored trajectory is offset-free; move chi into the same frame
        chi_terminal = chi_terminal * np.exp(1j * forward.phase[-1])
    scheme = spec.resolved_scheme
    states = {}

    if scheme == "crank_nicolson_1d":
        v = spec.potential_nodes()
        vbar = np.ascontiguousarray(0.5 * (v[1:] + v[:-1]))
        chi = kernels.cn_sweep(chi_terminal, vbar, grid.dx, grid.dt, True)
        if node_callback is not None:
            psi = forward.segment(0, n_t)
            cbar = 0.5 * (chi[1:] + chi[:-1])
            pbar = 0.5 * (psi[1:] + psi[:-1])
            sbar = -grid.dt * grid.weight * np.imag(np.conj(cbar) * pbar)
            for m in range(n_t, -1, -1):
                s = np.zeros(grid.shape)
                if m < n_t:
                    s += 0.5 * sbar[m]
                if m > 0:
                    s += 0.5 * sbar[m - 1]
                node_callback(m, s)
        if keep_states:
            states = {m: chi[m] for m in range(n_t + 1)}
        return states

    stepper = _SplitStepper(grid, spec.g)
    pots = _NodePotentials(spec)
    nodes = forward.checkpoints() if forward.policy == "strided" else [0, n_t]
    if forward.policy == "full":
        nodes = list(range(0, n_t + 1, max(1, min(n_t, 64))))
        if nodes[-1] != n_t:
            nodes.append(n_t)
    sens_next = np.zeros(grid.shape)
    chi = chi_terminal.copy()
    if keep_states:
        states[n_t] = chi.copy()
    for k in range(len(nodes) - 1, 0, -1):
        lo, hi = nodes[k - 1], nodes[k]
        seg = forward.segment(lo, hi)
        for m in range(hi - 1, lo - 1, -1):
            sens_now = np.zeros(grid.shape)
            chi = stepper.adjoint_step(
                chi, seg[m - lo], seg[m + 1 - lo], pots(m), pots(m + 1), sens_now, sens_next
            )
            if node_callback is not None:
                node_callback(m + 1, sens_next)
            sens_next = sens_now
            if keep_states and (forward.policy == "full" or m == lo):
                states[m] = chi.copy()
    if node_callback is not None:
        node_callback(0, sens_next)
    return states


def propagate_adjoint(spec: PropagationSpec, forward: TrajectoryStore, p_terminal: WaveField) -> TrajectoryStore:
    """Propagate the adjoint ``p`` backwards from ``p(T)`` along ``forward``.

    ``spec`` must describe the same problem as the forward run; the scheme
    used is the one the forward trajectory was computed with.
    """
    if spec.direction not in ("forward", "backward_adjoint"):
        raise ValueError("adjoint propagation needs a real-time spec")
    if forward.spec is None:
        forward.spec = spec
    elif forward.spec.grid != spec.grid or not np.array_equal(forward.spec.control, spec.control):
        raise GridError("forward trajectory was computed for a different problem")
    chi_t = -1j * np.asarray(p_terminal.values)
    states = adjoint_sweep(forward, chi_t)
    p = {m: 1j * c for m, c in states.items()}
    phase = None
    if forward.phase is not None and forward.phase[-1] != 0.0:
        phase = forward.phase
    policy = "full" if len(p) == spec.grid.n_t + 1 else "strided"
    return TrajectoryStore(
        spec.grid, policy, forward.stride, p, phase=phase, spec=replace(spec, direction="backward_adjoint"), kind="adjoint"
    )


# ---------------------------------------------------------------------------
# Ground states
# ---------------------------------------------------------------------------


def energy_terms(psi: WaveField, v: np.ndarray, g: float = 0.0) -> dict:
    """Kinetic, potential and interaction contributions for a normalised state."""
    dens = psi.density()
    w = psi.grid.weight
    kin = kinetic_energy(psi)
    pot = float(np.sum(v * dens) * w)
    inter = float(0.5 * g * np.sum(dens**2) * w)
    return {"kinetic": kin, "potential": pot, "interaction": inter}


@dataclass(frozen=True)
class GroundState:
    state: WaveField
    energy: float
    chemical_potential: float
    steps: int
    residual: float


def groundstate_imaginary_time(
    grid: Grid,
    potential,
    lam: float = 0.0,
    g: float = 0.0,
    tol: float = GROUNDSTATE_TOL,
    max_steps: int = GROUNDSTATE_MAX_STEPS,
    dt: float | None = None,
    initial: WaveField | None = None,
) -> GroundState:
    """Relax to the lowest state of ``V(., lam)`` by split-operator imaginary time.

    The state is renormalised after every step and the iteration stops once
    ``max |psi_new - psi_old| < tol``. For ``g > 0`` the linear ground state
    is used as the starting guess.

    Raises
    ------
    ConvergenceError
        If ``max_steps`` is reached first.
    """
    if isinstance(potential, PotentialFamily):
        v = np.asarray(potential.on_grid(grid, lam), dtype=float)
    else:
        v = np.asarray(potential, dtype=float)
    if v.shape != grid.shape:
        raise GridError("potential does not match the grid")
    if dt is not None:
        grid = replace(grid, t_final=dt * grid.n_t)
    if initial is None:
        if g > 0:
            initial = groundstate_imaginary_time(grid, v, g=0.0, tol=max(tol, 1e-8), max_steps=max_steps).state
        else:
            # exp(-(V - Vmin)) is exact for the unit harmonic well and keeps
            # the symmetry of the potential
            initial = WaveField(grid, np.exp(-np.minimum(v - v.min(), 700.0))).normalized()
    stepper = _SplitStepper(grid, g, imaginary=True)
    psi = np.array(initial.values, dtype=np.complex128)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.weight)
    residual = np.inf
    shift = float(np.min(v))
    for step in range(1, max_steps + 1):
        new = stepper.step(psi, v, v, shift)
        nrm = np.sqrt(np.sum(np.abs(new) ** 2) * grid.weight)
        # with the shift equal to the chemical potential the norm is conserved
        shift -= np.log(nrm) / grid.dt
        new /= nrm
        residual = float(np.max(np.abs(new - psi)))
        psi = new
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"imaginary-time relaxation stopped after {max_steps} steps with residual {residual:.3e}",
            residual=residual,
            steps=max_steps,
        )
    state = WaveField(grid, psi)
    terms = energy_terms(state, v, g)
    energy = terms["kinetic"] + terms["potential"] + terms["interaction"]
    mu = energy + terms["interaction"]
    return GroundState(state, energy, mu, step, residual)
