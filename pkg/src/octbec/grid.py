"""Space-time grids, wavefunction snapshots and the inner products on them.

Units are dimensionless throughout: hbar = 1, mass = atom mass, lengths in
micrometres (see :mod:`octbec.units` for the 87Rb time/energy scales).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

EDGE_WARN_DENSITY = 1e-6
NORM_CONTRACT_TOL = 1e-6


class GridError(ValueError):
    """Invalid grid parameters or mismatched grids."""


class ContractError(ValueError):
    """An input violated a documented precondition (e.g. not normalised)."""


class EdgeDensityWarning(RuntimeWarning):
    """Wavefunction density at the periodic boundary is not negligible."""


def _is_fft_friendly(n: int) -> bool:
    for p in (2, 3, 5, 7):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on ``[x_min, x_max)`` with ``n_t`` steps up to ``t_final``."""

    x_min: float
    x_max: float
    n_x: int
    t_final: float
    n_t: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise GridError(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")
        if int(self.n_x) != self.n_x or self.n_x < 8:
            raise GridError(f"n_x must be an integer >= 8, got {self.n_x}")
        if int(self.n_t) != self.n_t or self.n_t < 2:
            raise GridError(f"n_t must be an integer >= 2, got {self.n_t}")
        if not self.t_final > 0:
            raise GridError(f"t_final must be positive, got {self.t_final}")

    ndim = 1

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dt(self) -> float:
        return self.t_final / self.n_t

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,)

    @property
    def weight(self) -> float:
        """Volume element used by every quadrature on this grid."""
        return self.dx

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def coords(self) -> np.ndarray:
        return self.x

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t + 1)

    def spatial_key(self) -> tuple:
        return (self.x_min, self.x_max, self.n_x)

    def with_time(self, t_final: float, n_t: int | None = None) -> "Grid1D":
        return Grid1D(self.x_min, self.x_max, self.n_x, t_final, self.n_t if n_t is None else n_t)

    def fft_friendly(self) -> bool:
        return _is_fft_friendly(self.n_x)


@dataclass(frozen=True)
class Grid2D:
    """Periodic ``x`` by ``y`` grid; arrays are indexed ``[ix, iy]``."""

    x_min: float
    x_max: float
    n_x: int
    y_min: float
    y_max: float
    n_y: int
    t_final: float
    n_t: int

    def __post_init__(self):
        for lo, hi, n, name in ((self.x_min, self.x_max, self.n_x, "x"), (self.y_min, self.y_max, self.n_y, "y")):
            if not hi > lo:
                raise GridError(f"{name}_max must exceed {name}_min")
            if int(n) != n or n < 8:
                raise GridError(f"n_{name} must be an integer >= 8, got {n}")
        if int(self.n_t) != self.n_t or self.n_t < 2:
            raise GridError(f"n_t must be an integer >= 2, got {self.n_t}")
        if not self.t_final > 0:
            raise GridError(f"t_final must be positive, got {self.t_final}")
        if not (_is_fft_friendly(self.n_x) and _is_fft_friendly(self.n_y)):
            warnings.warn(
                f"grid {self.n_x}x{self.n_y} has large prime factors; FFTs will be slow",
                RuntimeWarning,
                stacklevel=3,
            )

    ndim = 2

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.n_y

    @property
    def dt(self) -> float:
        return self.t_final / self.n_t

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x, self.n_y)

    @property
    def weight(self) -> float:
        return self.dx * self.dy

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def y(self) -> np.ndarray:
        return self.y_min + self.dy * np.arange(self.n_y)

    @property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t + 1)

    def spatial_key(self) -> tuple:
        return (self.x_min, self.x_max, self.n_x, self.y_min, self.y_max, self.n_y)

    def with_time(self, t_final: float, n_t: int | None = None) -> "Grid2D":
        return Grid2D(
            self.x_min, self.x_max, self.n_x, self.y_min, self.y_max, self.n_y,
            t_final, self.n_t if n_t is None else n_t,
        )

    def fft_friendly(self) -> bool:
        return _is_fft_friendly(self.n_x) and _is_fft_friendly(self.n_y)


Grid = Union[Grid1D, Grid2D]


@dataclass(frozen=True)
class WaveField:
    """Complex amplitudes on a grid slice. ``values`` is treated as read-only."""

    grid: Grid
    values: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != self.grid.shape:
            raise GridError(f"values shape {vals.shape} does not match grid shape {self.grid.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.weight))

    def normalized(self) -> "WaveField":
        return WaveField(self.grid, self.values / self.norm(), self.time_index)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def __mul__(self, factor) -> "WaveField":
        return WaveField(self.grid, self.values * factor, self.time_index)

    __rmul__ = __mul__


def _check_same_grid(a: WaveField, b: WaveField):
    if a.grid.ndim != b.grid.ndim or a.grid.spatial_key() != b.grid.spatial_key():
        raise GridError("wavefields live on different grids")


def inner_product(a: WaveField, b: WaveField) -> complex:
    """``sum(conj(a) * b) * dV``; conjugate-linear in ``a``."""
    _check_same_grid(a, b)
    return complex(np.vdot(a.values, b.values) * a.grid.weight)


def _require_normalized(psi: WaveField, name: str):
    nrm = psi.norm()
    if abs(nrm - 1.0) > NORM_CONTRACT_TOL:
        raise ContractError(f"{name} is not normalised (norm = {nrm:.8g})")


def fidelity_infidelity(final: WaveField, desired: WaveField) -> float:
    """Infidelity ``(1 - |<desired|final>|^2) / 2`` between two normalised states."""
    _check_same_grid(final, desired)
    _require_normalized(final, "final state")
    _require_normalized(desired, "desired state")
    overlap = inner_product(desired, final)
    val = 0.5 * (1.0 - abs(overlap) ** 2)
    return float(min(max(val, 0.0), 1.0))


def kinetic_wavenumbers(grid: Grid):
    """Angular wavenumbers in FFT order; kinetic energy acts as ``k**2 / 2``.

    Returns one array for a 1D grid and a pair of broadcastable arrays
    (``kx[:, None]``, ``ky[None, :]``) for a 2D grid.
    """
    kx = 2.0 * np.pi * np.fft.fftfreq(grid.n_x, d=grid.dx)
    if grid.ndim == 1:
        return kx
    ky = 2.0 * np.pi * np.fft.fftfreq(grid.n_y, d=grid.dy)
    return kx[:, None], ky[None, :]


def kinetic_symbol(grid: Grid) -> np.ndarray:
    """``|k|^2 / 2`` on the spectral grid, same shape as the spatial grid."""
    k = kinetic_wavenumbers(grid)
    if grid.ndim == 1:
        return 0.5 * k**2
    kx, ky = k
    return 0.5 * (kx**2 + ky**2)


def spectral_weight(grid: Grid) -> float:
    """Weight turning ``sum |fft(psi)|^2`` into ``||psi||^2`` (Parseval)."""
    n = int(np.prod(grid.shape))
    return grid.weight / n


def kinetic_energy(psi: WaveField) -> float:
    """``<psi| -laplacian/2 |psi>`` evaluated spectrally."""
    spec = np.fft.fftn(psi.values)
    return float(np.sum(kinetic_symbol(psi.grid) * np.abs(spec) ** 2) * spectral_weight(psi.grid))


def edge_density(values: np.ndarray) -> float:
    """Largest density on the outermost grid lines."""
    dens = np.abs(values) ** 2
    if dens.ndim == 1:
        return float(max(dens[0], dens[-1]))
    return float(max(dens[0, :].max(), dens[-1, :].max(), dens[:, 0].max(), dens[:, -1].max()))


def warn_if_edge_density(values: np.ndarray, where: str = "") -> bool:
    level = edge_density(values)
    if level > EDGE_WARN_DENSITY:
        warnings.warn(
            f"edge density {level:.2e} exceeds {EDGE_WARN_DENSITY:g}{' ' + where if where else ''}; "
            "enlarge the spatial domain",
            EdgeDensityWarning,
            stacklevel=3,
        )
        return True
    return False


def gaussian(grid: Grid, center=0.0, width=1.0, momentum=0.0) -> WaveField:
    """Normalised Gaussian ``exp(-(x-c)^2 / (2 w^2) + i k x)`` (per axis in 2D)."""
    if grid.ndim == 1:
        x = grid.x
        vals = np.exp(-((x - center) ** 2) / (2.0 * width**2) + 1j * momentum * x)
    else:
        cx, cy = np.broadcast_to(np.asarray(center, dtype=float), (2,))
        wx, wy = np.broadcast_to(np.asarray(width, dtype=float), (2,))
        kx, ky = np.broadcast_to(np.asarray(momentum, dtype=float), (2,))
        X, Y = grid.coords
        vals = np.exp(
            -((X - cx) ** 2) / (2 * wx**2) - ((Y - cy) ** 2) / (2 * wy**2) + 1j * (kx * X + ky * Y)
        )
    return WaveField(grid, vals).normalized()
