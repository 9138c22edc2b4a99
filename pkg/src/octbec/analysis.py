"""Phase-space diagnostics: Wigner maps and moments of a wavefunction.

The Wigner function follows the unnormalised convention

    w(x, p) = int exp(-i p s) psi(x + s/2) conj(psi(x - s/2)) ds,

so ``sum(w) dx dp = 2 pi ||psi||^2`` and ``sum_p w dp = 2 pi |psi(x)|^2``.
The half-step shifts ``x +- s/2`` are evaluated on a twice-refined grid
obtained by spectral (zero-padded FFT) interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import Grid, GridError, WaveField, kinetic_wavenumbers, spectral_weight, warn_if_edge_density
from .solver import TrajectoryStore, energy_terms

IMAG_TOL = 1e-10


class UnsupportedDimensionError(GridError):
    """Raised for Wigner transforms of 2D fields (take a 1D slice first)."""


@dataclass(frozen=True)
class WignerMap:
    """Real Wigner samples ``values[i, k]`` at ``(x[i], p[k])``; ``p`` ascending."""

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray
    time_integrated: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    def total(self) -> float:
        return float(np.sum(self.values) * self.dx * self.dp)

    def position_marginal(self) -> np.ndarray:
        """``int w dp`` (equals ``2 pi |psi(x)|^2``)."""
        return np.sum(self.values, axis=1) * self.dp

    def momentum_marginal(self) -> np.ndarray:
        """``int w dx`` (equals ``|int psi exp(-ipx) dx|^2``)."""
        return np.sum(self.values, axis=0) * self.dx

    def moments(self) -> dict:
        """Means and widths of the (quasi-)distribution."""
        tot = np.sum(self.values)
        px = np.sum(self.values, axis=1) / tot
        pp = np.sum(self.values, axis=0) / tot
        mx = float(np.sum(px * self.x))
        mp = float(np.sum(pp * self.p))
        sx = float(np.sqrt(max(np.sum(px * (self.x - mx) ** 2), 0.0)))
        sp = float(np.sqrt(max(np.sum(pp * (self.p - mp) ** 2), 0.0)))
        return {"x": mx, "p": mp, "dx": sx, "dp": sp}


def _upsample(values: np.ndarray) -> np.ndarray:
    # band-limited interpolation onto the half-spacing grid
    n = values.size
    spec = np.fft.fft(values)
    pad = np.zeros(2 * n, dtype=np.complex128)
    half = n // 2
    pad[:half] = spec[:half]
    pad[-(n - half):] = spec[half:]
    if n % 2 == 0:
        # split the Nyquist coefficient symmetrically
        pad[half] = 0.5 * spec[half]
        pad[-half] = 0.5 * spec[half]
    return np.fft.ifft(pad) * 2.0


def momentum_axis(grid: Grid) -> np.ndarray:
    """Ascending momenta ``2 pi k / (n dx)`` covering the grid's spectral range."""
    return np.fft.fftshift(2.0 * np.pi * np.fft.fftfreq(grid.n_x, d=grid.dx))


def _wigner_values(psi: WaveField) -> np.ndarray:
    grid = psi.grid
    corr = kernels.wigner_corr(_upsample(np.asarray(psi.values)))
    # the lag s_j = j*dx sits in FFT order; exp(-i p s) is a forward FFT
    w = np.fft.fft(corr, axis=1) * grid.dx
    if np.max(np.abs(w.imag)) > IMAG_TOL * max(1.0, np.max(np.abs(w.real))):
        raise ArithmeticError("Wigner transform left an imaginary residue")
    return np.ascontiguousarray(np.fft.fftshift(w.real, axes=1))


def wigner(psi: WaveField) -> WignerMap:
    """Wigner function of a 1D state on the ``x`` grid and its momentum grid."""
    if psi.grid.ndim != 1:
        raise UnsupportedDimensionError("Wigner maps are 1D only; pass a 1D slice or marginal")
    warn_if_edge_density(psi.values, "in the Wigner input")
    return WignerMap(psi.grid.x, momentum_axis(psi.grid), _wigner_values(psi), metadata={"time_index": psi.time_index})


def wigner_time_integrated(trajectory: TrajectoryStore, stride: int | None = None) -> WignerMap:
    """``int_0^T w(x, p; t) dt`` by the trapezoid rule over every ``stride``-th node.

    The default stride is ``max(1, n_t // 100)``; the last node is always used.
    """
    grid = trajectory.grid
    if grid.ndim != 1:
        raise UnsupportedDimensionError("Wigner maps are 1D only")
    if stride is None:
        stride = max(1, grid.n_t // 100)
    nodes = list(range(0, grid.n_t + 1, stride))
    if nodes[-1] != grid.n_t:
        nodes.append(grid.n_t)
    times = grid.times[nodes]
    weights = np.zeros(len(nodes))
    steps = np.diff(times)
    weights[:-1] += 0.5 * steps
    weights[1:] += 0.5 * steps
    acc = np.zeros((grid.n_x, grid.n_x))
    for w, m in zip(weights, nodes):
        acc += w * _wigner_values(trajectory[m])
    meta = {"stride": stride, "nodes": len(nodes), "t_final": grid.t_final}
    return WignerMap(grid.x, momentum_axis(grid), acc, time_integrated=True, metadata=meta)


def _axis_moments(psi: WaveField, axis: int) -> dict:
    grid = psi.grid
    dens = psi.density()
    w = grid.weight
    coord = grid.x if axis == 0 else grid.y
    other = tuple(a for a in range(dens.ndim) if a != axis)
    line = dens.sum(axis=other) if other else dens
    px = line * w
    mx = float(np.sum(px * coord))
    sx = float(np.sqrt(max(np.sum(px * coord**2) - mx**2, 0.0)))
    spec = np.abs(np.fft.fftn(psi.values)) ** 2 * spectral_weight(grid)
    k = kinetic_wavenumbers(grid)
    if grid.ndim == 1:
        kk = k
    else:
        kk = np.broadcast_to(k[axis], grid.shape)
    mp = float(np.sum(spec * kk))
    sp = float(np.sqrt(max(np.sum(spec * kk**2) - mp**2, 0.0)))
    return {"mean_x": mx, "width_x": sx, "mean_p": mp, "width_p": sp}


def observables(psi: WaveField, potential=None, lam: float = 0.0, g: float = 0.0) -> dict:
    """Norm, position/momentum means and widths, and mean-field energy.

    Keys in 1D: ``mean_x, mean_p, delta_x, delta_p``; in 2D the momentum keys
    become ``px``/``py`` and ``y`` moments are added. The
    energy is ``<psi|-lap/2 + V + (g/2)|psi|^2|psi>``; it is omitted when no
    potential is given.
    """
    grid = psi.grid
    rec = {"norm": psi.norm()}
    axes = ("x",) if grid.ndim == 1 else ("x", "y")
    for i, name in enumerate(axes):
        mom = _axis_moments(psi, i)
        pname = "p" if grid.ndim == 1 else f"p{name}"
        rec[f"mean_{name}"] = mom["mean_x"]
        rec[f"mean_{pname}"] = mom["mean_p"]
        rec[f"delta_{name}"] = mom["width_x"]
        rec[f"delta_{pname}"] = mom["width_p"]
    if potential is not None:
        v = potential.on_grid(grid, lam) if hasattr(potential, "on_grid") else np.asarray(potential, dtype=float)
        terms = energy_terms(psi, v, g)
        rec.update({f"energy_{k}": val for k, val in terms.items()})
        rec["energy"] = terms["kinetic"] + terms["potential"] + terms["interaction"]
    return rec
