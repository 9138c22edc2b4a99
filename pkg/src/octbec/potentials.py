"""Confinement potentials V(r, lambda) parameterised by a scalar control.

Every family exposes ``potential(r, lam)`` and ``dpotential(r, lam)`` (the
analytic lambda-derivative). These raw methods accept any real ``lam`` and
broadcast it against ``r``; the module-level :func:`evaluate` and
:func:`derivative_wrt_lambda` add the ``lam in [0, 1]`` contract check.
For 2D families ``r`` is the pair ``(X, Y)`` of ``indexing="ij"`` meshes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import Grid
from .units import gauss_to_energy

LAMBDA_SLACK = 1e-9


class DomainError(ValueError):
    """Control value outside the unit interval."""


class SingularityError(ValueError):
    """Potential evaluated on top of a current-carrying wire."""


def check_lambda(lam):
    arr = np.asarray(lam, dtype=float)
    if np.any(arr < -LAMBDA_SLACK) or np.any(arr > 1.0 + LAMBDA_SLACK):
        raise DomainError(f"control value outside [0, 1]: {lam}")
    return np.clip(arr, 0.0, 1.0) if arr.ndim else float(np.clip(arr, 0.0, 1.0))


class PotentialFamily:
    """Base class; subclasses set ``kind`` and ``ndim``."""

    kind = "abstract"
    ndim = 1
    # analytic families broadcast lam[:, None] against positions
    lambda_broadcast = False

    def potential(self, r, lam):
        raise NotImplementedError

    def dpotential(self, r, lam):
        raise NotImplementedError

    def on_grid(self, grid: Grid, lam) -> np.ndarray:
        return np.broadcast_to(self.potential(grid.coords, lam), grid.shape).astype(float)

    def d_on_grid(self, grid: Grid, lam) -> np.ndarray:
        return np.broadcast_to(self.dpotential(grid.coords, lam), grid.shape).astype(float)

    def series(self, grid: Grid, lams, derivative: bool = False) -> np.ndarray:
        """Potential (or its lambda-derivative) on ``grid`` for each control value."""
        lams = np.asarray(lams, dtype=float)
        if self.lambda_broadcast and grid.ndim == 1:
            f = self.dpotential if derivative else self.potential
            out = f(grid.x[None, :], lams[:, None])
            return np.ascontiguousarray(np.broadcast_to(out, (lams.size, grid.n_x)), dtype=float)
        f = self.d_on_grid if derivative else self.on_grid
        return np.stack([f(grid, lam) for lam in lams])


def evaluate(family: PotentialFamily, position, lam):
    """Potential at ``position`` for a control value in ``[0, 1]``."""
    return family.potential(position, check_lambda(lam))


def derivative_wrt_lambda(family: PotentialFamily, position, lam):
    """Analytic ``dV/dlambda`` at ``position`` for a control value in ``[0, 1]``."""
    return family.dpotential(position, check_lambda(lam))


# ---------------------------------------------------------------------------
# model potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftedHarmonic(PotentialFamily):
    """``(x - lam*x0)^2 / 2``: a unit-frequency well dragged from 0 to ``x0``."""

    x0: float = 5.0
    kind = "shifted_harmonic"
    lambda_broadcast = True

    def potential(self, x, lam):
        return 0.5 * (x - lam * self.x0) ** 2

    def dpotential(self, x, lam):
        return -self.x0 * (x - lam * self.x0)


@dataclass(frozen=True)
class ShiftedHarmonicQuartic(PotentialFamily):
    """Shifted harmonic well plus the anharmonic term ``eta (x - lam*x0)^4 / 4``."""

    x0: float = 5.0
    eta: float = 0.2
    kind = "shifted_harmonic_quartic"
    lambda_broadcast = True

    def potential(self, x, lam):
        u = x - lam * self.x0
        return 0.5 * u**2 + 0.25 * self.eta * u**4

    def dpotential(self, x, lam):
        u = x - lam * self.x0
        return -self.x0 * (u + self.eta * u**3)


@dataclass(frozen=True)
class DoubleWell(PotentialFamily):
    """Single well at ``lam = 0`` deforming into two wells at ``+-d/2`` at ``lam = 1``.

    Outside ``|x| > lam*d/4`` the wells are unit-frequency parabolas centred at
    ``+-lam*d/2``; inside, an inverted parabola joins them with matching value
    and slope. The barrier height is ``(lam*d)^2 / 16``.
    """

    d: float = 4.0
    kind = "double_well"
    lambda_broadcast = True

    def potential(self, x, lam):
        ax = np.abs(x)
        ld = lam * self.d
        outer = 0.5 * (ax - 0.5 * ld) ** 2
        inner = 0.5 * (ld**2 / 8.0 - x**2)
        return np.where(ax > 0.25 * ld, outer, inner)

    def dpotential(self, x, lam):
        ax = np.abs(x)
        ld = lam * self.d
        outer = -0.5 * self.d * (ax - 0.5 * ld)
        inner = ld * self.d / 8.0 + 0.0 * x
        return np.where(ax > 0.25 * ld, outer, inner)


@dataclass(frozen=True)
class WithOffset(PotentialFamily):
    """``base + sum_k c_k lam^k``: a control-dependent energy offset."""

    base: PotentialFamily
    coefficients: tuple = (0.0,)

    @property
    def kind(self):
        return self.base.kind

    @property
    def ndim(self):
        return self.base.ndim

    def offset(self, lam):
        return np.polynomial.polynomial.polyval(lam, self.coefficients)

    def potential(self, r, lam):
        return self.base.potential(r, lam) + self.offset(lam)

    def dpotential(self, r, lam):
        dc = np.polynomial.polynomial.polyder(self.coefficients)
        return self.base.dpotential(r, lam) + np.polynomial.polynomial.polyval(lam, dc)


# ---------------------------------------------------------------------------
# two-dimensional families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Separable2D(PotentialFamily):
    """``V(x, lam) + omega_y^2 y^2 / 2``; the control never touches ``y``."""

    base: PotentialFamily
    omega_y: float = 1.0
    kind = "separable_2d"
    ndim = 2

    def potential(self, r, lam):
        X, Y = r
        return self.base.potential(X, lam) + 0.5 * self.omega_y**2 * Y**2

    def dpotential(self, r, lam):
        X, Y = r
        return self.base.dpotential(X, lam) + 0.0 * Y


@dataclass(frozen=True)
class ShiftingChannel(PotentialFamily):
    """Transverse waveguide ``omega^2 (y - lam*y0)^2 / 2``.

    Used with a position-dependent control ``lam(x)``: the guide bends
    sideways by ``y0`` as ``lam`` goes from 0 to 1 along the propagation axis.
    """

    y0: float = 2.0
    omega: float = 1.0
    kind = "shifting_channel"
    ndim = 2

    def potential(self, r, lam):
        X, Y = r
        return 0.5 * self.omega**2 * (Y - lam * self.y0) ** 2 + 0.0 * X

    def dpotential(self, r, lam):
        X, Y = r
        return -self.omega**2 * self.y0 * (Y - lam * self.y0) + 0.0 * X


# ---------------------------------------------------------------------------
# tabulated potentials
# ---------------------------------------------------------------------------


class TabulatedPotential(PotentialFamily):
    """Potential slices sampled at increasing control values, linear in between.

    ``potential_slices[k]`` is V on the grid at ``lambda_samples[k]``. Values
    outside ``[0, 1]`` extrapolate from the end intervals (optimisers may
    step there; :func:`evaluate` still rejects them).
    """

    kind = "tabulated"

    def __init__(self, lambda_samples, potential_slices):
        lams = np.asarray(lambda_samples, dtype=float)
        slices = np.asarray(potential_slices, dtype=float)
        if lams.ndim != 1 or lams.size < 2:
            raise ValueError("need at least two lambda samples")
        if np.any(np.diff(lams) <= 0):
            raise ValueError("lambda samples must be strictly increasing")
        if lams[0] != 0.0 or lams[-1] != 1.0:
            raise ValueError("lambda samples must start at 0 and end at 1")
        if slices.shape[0] != lams.size:
            raise ValueError("one potential slice per lambda sample is required")
        if not np.all(np.isfinite(slices)):
            raise ValueError("potential slices must be finite")
        self.lambda_samples = lams
        self.potential_slices = slices
        self.ndim = slices.ndim - 1
        self.shape = slices.shape[1:]

    def _interval(self, lam):
        k = int(np.searchsorted(self.lambda_samples, lam, side="right")) - 1
        return min(max(k, 0), self.lambda_samples.size - 2)

    def _check_r(self, r):
        ref = r[0] if isinstance(r, tuple) else r
        if np.shape(ref) != self.shape:
            raise ValueError(f"tabulated potential lives on a {self.shape} grid, got positions {np.shape(ref)}")

    def potential(self, r, lam):
        self._check_r(r)
        lam = float(lam)
        k = self._interval(lam)
        l0, l1 = self.lambda_samples[k], self.lambda_samples[k + 1]
        w = (lam - l0) / (l1 - l0)
        return (1.0 - w) * self.potential_slices[k] + w * self.potential_slices[k + 1]

    def dpotential(self, r, lam):
        self._check_r(r)
        k = self._interval(float(lam))
        l0, l1 = self.lambda_samples[k], self.lambda_samples[k + 1]
        return (self.potential_slices[k + 1] - self.potential_slices[k]) / (l1 - l0)

    def on_grid(self, grid, lam):
        return self.potential(grid.coords, lam)

    def d_on_grid(self, grid, lam):
        return self.dpotential(grid.coords, lam)

    def shifted(self, constant: float) -> "TabulatedPotential":
        return TabulatedPotential(self.lambda_samples, self.potential_slices + constant)


# ---------------------------------------------------------------------------
# three-wire magnetic microtrap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThreeWireTrapSpec:
    """Three parallel chip wires plus uniform fields (lengths in um, fields in G, currents in mA).

    The two outer wires at ``x = +-wire_spacing`` carry ``I_ext`` and the
    central wire carries ``I_c`` in the opposite direction; both currents are
    affine in the control. ``bias_field`` points across the wires in the chip
    plane and sets the trap height; ``ioffe_field`` points along the wires and
    keeps ``|B|`` away from zero. ``bias_field=None`` picks the value midway
    between the hexapole points at ``lam = 0`` and ``lam = 1``, which is what
    makes the trap split. ``trap_height=None`` evaluates the potential at
    the height of the ``lam = 0`` hexapole point, which lies between the two
    on-axis field zeros at ``lam = 0`` and level with the split pair at ``lam = 1``.
    """

    wire_spacing: float = 20.0
    bias_field: float | None = None
    ioffe_field: float = 1.0
    current_ext_base: float = 140.0
    current_ext_slope: float = 2.91
    current_c_base: float = 0.25
    current_c_slope: float = 4.4
    atom_state_moment: float = 1.0
    trap_height: float | None = None

    def currents(self, lam):
        """``(I_ext, I_c)`` in mA."""
        return (
            self.current_ext_base + lam * self.current_ext_slope,
            self.current_c_base + lam * self.current_c_slope,
        )

    def scaled(self, factor: float) -> "ThreeWireTrapSpec":
        """All currents and fields multiplied by ``factor`` (geometry unchanged)."""
        return ThreeWireTrapSpec(
            wire_spacing=self.wire_spacing,
            bias_field=self.resolved_bias() * factor,
            ioffe_field=self.ioffe_field * factor,
            current_ext_base=self.current_ext_base * factor,
            current_ext_slope=self.current_ext_slope * factor,
            current_c_base=self.current_c_base * factor,
            current_c_slope=self.current_c_slope * factor,
            atom_state_moment=self.atom_state_moment,
            trap_height=self.resolved_height(),
        )

    # On the symmetry axis the transverse field is
    #   B_x(0, z) = B_bias + 2 I_c / z - 4 I_ext z / (z^2 + s^2)   [G, mA, um]
    # and the field zeros solve B_bias = axis_gap(z).
    def _axis_gap(self, z, lam):
        i_ext, i_c = self.currents(lam)
        s = self.wire_spacing
        return 4.0 * i_ext * z / (z**2 + s**2) - 2.0 * i_c / z

    def critical_bias(self, lam) -> tuple[float, float]:
        """Bias at which the two on-axis zeros merge (hexapole) and their height."""
        s = self.wire_spacing
        res = minimize_scalar(lambda z: -self._axis_gap(z, lam), bounds=(1e-3 * s, 10 * s), method="bounded",
                              options={"xatol": 1e-12})
        return float(-res.fun), float(res.x)

    def resolved_bias(self) -> float:
        if self.bias_field is not None:
            return float(self.bias_field)
        b0, _ = self.critical_bias(0.0)
        b1, _ = self.critical_bias(1.0)
        return 0.5 * (b0 + b1)

    def resolved_height(self) -> float:
        if self.trap_height is not None:
            return float(self.trap_height)
        return self.critical_bias(0.0)[1]


def _wire_fields(spec: ThreeWireTrapSpec, x, z, i_ext, i_c):
    """Field components (B_x, B_z) in gauss from the three wires alone."""
    s = spec.wire_spacing
    bx = 0.0
    bz = 0.0
    for xw, current in ((-s, -i_ext), (0.0, i_c), (s, -i_ext)):
        dx = x - xw
        r2 = dx * dx + z * z
        if np.any(r2 == 0.0):
            raise SingularityError(f"evaluation point coincides with the wire at x = {xw}")
        bx = bx + 2.0 * current * z / r2
        bz = bz - 2.0 * current * dx / r2
    return bx, bz


def field_magnitude(spec: ThreeWireTrapSpec, x, lam, z=None):
    """``|B|`` in gauss along the line at height ``z`` (default: the trap height)."""
    z = spec.resolved_height() if z is None else z
    i_ext, i_c = spec.currents(lam)
    bx, bz = _wire_fields(spec, np.asarray(x, dtype=float), z, i_ext, i_c)
    bx = bx + spec.resolved_bias()
    return np.sqrt(bx**2 + bz**2 + spec.ioffe_field**2)


def three_wire_potential(spec: ThreeWireTrapSpec, x, lam):
    """Zeeman potential ``m_F g_F mu_B |B(x)|`` in dimensionless energy units."""
    return gauss_to_energy(field_magnitude(spec, x, lam), spec.atom_state_moment)


class ThreeWireTrap(PotentialFamily):
    """Three-wire microtrap evaluated along ``x`` at a fixed height above the chip."""

    kind = "three_wire_trap"
    lambda_broadcast = True

    def __init__(self, spec: ThreeWireTrapSpec | None = None):
        self.spec = spec or ThreeWireTrapSpec()
        self.bias = self.spec.resolved_bias()
        self.height = self.spec.resolved_height()

    def _components(self, x, lam):
        i_ext, i_c = self.spec.currents(lam)
        bx, bz = _wire_fields(self.spec, np.asarray(x, dtype=float), self.height, i_ext, i_c)
        return bx + self.bias, bz

    def potential(self, x, lam):
        bx, bz = self._components(x, lam)
        return gauss_to_energy(np.sqrt(bx**2 + bz**2 + self.spec.ioffe_field**2), self.spec.atom_state_moment)

    def dpotential(self, x, lam):
        bx, bz = self._components(x, lam)
        # the wire fields are linear in the currents
        dbx, dbz = _wire_fields(self.spec, np.asarray(x, dtype=float), self.height,
                                self.spec.current_ext_slope, self.spec.current_c_slope)
        mag = np.sqrt(bx**2 + bz**2 + self.spec.ioffe_field**2)
        return gauss_to_energy((bx * dbx + bz * dbz) / mag, self.spec.atom_state_moment)


# ---------------------------------------------------------------------------
# offset splitting
# ---------------------------------------------------------------------------


class OffsetRemoved(PotentialFamily):
    """``V - V0(lam)`` with ``V0`` the minimum of ``V`` over a grid."""

    def __init__(self, base: PotentialFamily, grid: Grid):
        self.base = base
        self.grid = grid
        self.kind = base.kind
        self.ndim = base.ndim

    def offset(self, lam) -> float:
        return float(np.min(self.base.on_grid(self.grid, lam)))

    def offset_derivative(self, lam) -> float:
        vals = self.base.on_grid(self.grid, lam)
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        return float(self.base.d_on_grid(self.grid, lam)[idx])

    def potential(self, r, lam):
        return self.base.potential(r, lam) - self.offset(lam)

    def dpotential(self, r, lam):
        return self.base.dpotential(r, lam) - self.offset_derivative(lam)

    def on_grid(self, grid, lam):
        vals = self.base.on_grid(grid, lam)
        return vals - vals.min()


def split_offset(family: PotentialFamily, grid: Grid, lam):
    """Return ``(V0, shifted_family)`` with ``V0 = min_grid V(., lam)``.

    The shifted family has minimum zero on ``grid`` for every control value.
    """
    lam = check_lambda(lam)
    if isinstance(family, OffsetRemoved):
        family = family.base
    view = OffsetRemoved(family, grid)
    return view.offset(lam), view
