"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names at the bottom of the module dispatch to one flavour,
chosen by :mod:`octbec._accel` at import time. Both flavours stay importable
(``numba_impl`` / ``numpy_impl``) so tests and the benchmark can compare them.

Conventions shared by every kernel:

* grids are periodic and uniform,
* ``weight`` is the volume element (``dx`` or ``dx*dy``),
* a "phase step" with half-step ``a`` maps ``psi -> exp(-i a (V + g|psi|^2)) psi``,
* a "damping step" is the exact solution of ``dpsi/dtau = -(V + g|psi|^2) psi``
  over ``tau = a`` (the density relaxes during the step, unlike the phase step).
"""

from types import SimpleNamespace

import numpy as np
from scipy.linalg import solve_banded

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# Crank-Nicolson with periodic finite-difference Laplacian
# ---------------------------------------------------------------------------


@njit
def _cyclic_thomas_nb(diag, off, rhs, out):
    # Solves A x = rhs for the cyclic tridiagonal A with constant off-diagonal
    # ``off`` (sub, super and both corners) via the Sherman-Morrison correction.
    n = diag.shape[0]
    gam = -diag[0]
    bb = diag.copy()
    bb[0] = diag[0] - gam
    bb[n - 1] = diag[n - 1] - off * off / gam
    u = np.zeros(n, dtype=np.complex128)
    u[0] = gam
    u[n - 1] = off
    cp = np.empty(n, dtype=np.complex128)
    x = np.empty(n, dtype=np.complex128)
    z = np.empty(n, dtype=np.complex128)
    # forward sweep, two right-hand sides at once
    beta = bb[0]
    x[0] = rhs[0] / beta
    z[0] = u[0] / beta
    for i in range(1, n):
        cp[i] = off / beta
        beta = bb[i] - off * cp[i]
        x[i] = (rhs[i] - off * x[i - 1]) / beta
        z[i] = (u[i] - off * z[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i + 1] * x[i + 1]
        z[i] -= cp[i + 1] * z[i + 1]
    fact = (x[0] + off * x[n - 1] / gam) / (1.0 + z[0] + off * z[n - 1] / gam)
    for i in range(n):
        out[i] = x[i] - fact * z[i]


@njit
def _cn_step_nb(psi, vbar, dx, dt, out):
    n = psi.shape[0]
    a = 0.5 * dt
    inv = 1.0 / (dx * dx)
    rhs = np.empty(n, dtype=np.complex128)
    diag = np.empty(n, dtype=np.complex128)
    for i in range(n):
        left = psi[i - 1] if i > 0 else psi[n - 1]
        right = psi[i + 1] if i < n - 1 else psi[0]
        hpsi = (inv + vbar[i]) * psi[i] - 0.5 * inv * (left + right)
        rhs[i] = psi[i] - 1j * a * hpsi
        diag[i] = 1.0 + 1j * a * (inv + vbar[i])
    off = -1j * a * 0.5 * inv
    _cyclic_thomas_nb(diag, off, rhs, out)


@njit
def _cn_sweep_nb(psi_start, vbar, dx, dt, reverse):
    nt = vbar.shape[0]
    n = psi_start.shape[0]
    traj = np.empty((nt + 1, n), dtype=np.complex128)
    if reverse:
        traj[nt] = psi_start
        for m in range(nt - 1, -1, -1):
            _cn_step_nb(traj[m + 1], vbar[m], dx, -dt, traj[m])
    else:
        traj[0] = psi_start
        for m in range(nt):
            _cn_step_nb(traj[m], vbar[m], dx, dt, traj[m + 1])
    return traj


def _cn_step_np(psi, vbar, dx, dt):
    n = psi.shape[0]
    a = 0.5 * dt
    inv = 1.0 / (dx * dx)
    hpsi = (inv + vbar) * psi - 0.5 * inv * (np.roll(psi, 1) + np.roll(psi, -1))
    rhs = psi - 1j * a * hpsi
    diag = 1.0 + 1j * a * (inv + vbar)
    off = -1j * a * 0.5 * inv
    gam = -diag[0]
    bb = diag.astype(np.complex128)
    bb[0] -= gam
    bb[-1] -= off * off / gam
    ab = np.empty((3, n), dtype=np.complex128)
    ab[0, :] = off
    ab[1, :] = bb
    ab[2, :] = off
    u = np.zeros(n, dtype=np.complex128)
    u[0] = gam
    u[-1] = off
    sol = solve_banded((1, 1), ab, np.column_stack((rhs, u)), check_finite=False)
    x, z = sol[:, 0], sol[:, 1]
    fact = (x[0] + off * x[-1] / gam) / (1.0 + z[0] + off * z[-1] / gam)
    return x - fact * z


def _cn_sweep_np(psi_start, vbar, dx, dt, reverse):
    nt = vbar.shape[0]
    traj = np.empty((nt + 1, psi_start.shape[0]), dtype=np.complex128)
    if reverse:
        traj[nt] = psi_start
        for m in range(nt - 1, -1, -1):
            traj[m] = _cn_step_np(traj[m + 1], vbar[m], dx, -dt)
    else:
        traj[0] = psi_start
        for m in range(nt):
            traj[m + 1] = _cn_step_np(traj[m], vbar[m], dx, dt)
    return traj


# ---------------------------------------------------------------------------
# Local (position-space) factors of the split-operator scheme
# ---------------------------------------------------------------------------


@njit
def _phase_flat(flat, vf, g, a):
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        z = flat[i]
        theta = vf[i] + g * (z.real * z.real + z.imag * z.imag)
        out[i] = z * (np.cos(a * theta) - 1j * np.sin(a * theta))
    return out


def _phase_nb(psi, v, g, a):
    psi = np.ascontiguousarray(psi)
    v = np.ascontiguousarray(v, dtype=np.float64)
    return _phase_flat(psi.reshape(-1), v.reshape(-1), g, a).reshape(psi.shape)


def _phase_np(psi, v, g, a):
    if g == 0.0:
        return psi * np.exp(-1j * a * v)
    return psi * np.exp(-1j * a * (v + g * (psi.real**2 + psi.imag**2)))


@njit
def _damp_flat(flat, vf, g, a):
    # exact flow of d(psi)/d(tau) = -(v + g|psi|^2) psi over tau = a
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        z = flat[i]
        rho = z.real * z.real + z.imag * z.imag
        u = vf[i]
        if abs(u * a) > 1e-12:
            frac = -np.expm1(-2.0 * u * a) / u
        else:
            frac = 2.0 * a
        out[i] = z * np.sqrt(np.exp(-2.0 * u * a) / (1.0 + g * rho * frac))
    return out


def _damp_nb(psi, v, g, a):
    psi = np.ascontiguousarray(psi)
    v = np.ascontiguousarray(v, dtype=np.float64)
    return _damp_flat(psi.reshape(-1), v.reshape(-1), g, a).reshape(psi.shape)


def _damp_np(psi, v, g, a):
    if g == 0.0:
        return psi * np.exp(-a * v)
    rho = psi.real**2 + psi.imag**2
    small = np.abs(v * a) <= 1e-12
    safe = np.where(small, 1.0, v)
    frac = np.where(small, 2.0 * a, -np.expm1(-2.0 * v * a) / safe)
    return psi * np.sqrt(np.exp(-2.0 * v * a) / (1.0 + g * rho * frac))


@njit
def _phase_adjoint_flat(cf, pf, vf, g, a, weight, sf):
    # Real-linear adjoint of psi -> exp(-i a (v + g|psi|^2)) psi, evaluated
    # at psi_in. Accumulates d(infidelity)/dV into ``sens``.
    out = np.empty_like(cf)
    for i in range(cf.shape[0]):
        z = pf[i]
        dens = z.real * z.real + z.imag * z.imag
        theta = vf[i] + g * dens
        eta = cf[i] * (np.cos(a * theta) + 1j * np.sin(a * theta))
        im = eta.real * z.imag - eta.imag * z.real  # Im(conj(eta) * psi)
        out[i] = eta + 2.0 * a * g * im * z
        sf[i] -= a * weight * im
    return out


def _phase_adjoint_nb(chi_out, psi_in, v, g, a, weight, sens):
    # sens must be C-contiguous so the flat view aliases it
    shape = chi_out.shape
    out = _phase_adjoint_flat(
        np.ascontiguousarray(chi_out).reshape(-1),
        np.ascontiguousarray(psi_in).reshape(-1),
        np.ascontiguousarray(v, dtype=np.float64).reshape(-1),
        g, a, weight, sens.reshape(-1),
    )
    return out.reshape(shape)


def _phase_adjoint_np(chi_out, psi_in, v, g, a, weight, sens):
    dens = psi_in.real**2 + psi_in.imag**2
    eta = chi_out * np.exp(1j * a * (v + g * dens))
    im = (np.conj(eta) * psi_in).imag
    sens -= a * weight * im
    if g == 0.0:
        return eta
    return eta + 2.0 * a * g * im * psi_in


# ---------------------------------------------------------------------------
# Wigner correlation matrix
# ---------------------------------------------------------------------------


@njit
def _wigner_corr_nb(psi_up):
    # psi_up holds the field at half-grid spacing (2n samples, periodic).
    # Row i is x_i = grid point 2i; column j (FFT order) is the lag s_j = j*dx.
    n2 = psi_up.shape[0]
    n = n2 // 2
    half = n // 2
    corr = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        c = 2 * i
        for j in range(n):
            lag = j if j < half else j - n
            plus = psi_up[(c + lag) % n2]
            minus = psi_up[(c - lag) % n2]
            val = plus * np.conj(minus)
            if lag == -half:
                val = val.real + 0j
            corr[i, j] = val
    return corr


def _wigner_corr_np(psi_up):
    n2 = psi_up.shape[0]
    n = n2 // 2
    lags = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)
    centres = 2 * np.arange(n)[:, None]
    corr = psi_up[(centres + lags) % n2] * np.conj(psi_up[(centres - lags) % n2])
    if n % 2 == 0:
        corr[:, n // 2] = corr[:, n // 2].real
    return corr


numba_impl = SimpleNamespace(
    cn_sweep=_cn_sweep_nb,
    phase=_phase_nb,
    damp=_damp_nb,
    phase_adjoint=_phase_adjoint_nb,
    wigner_corr=_wigner_corr_nb,
)

numpy_impl = SimpleNamespace(
    cn_sweep=_cn_sweep_np,
    phase=_phase_np,
    damp=_damp_np,
    phase_adjoint=_phase_adjoint_np,
    wigner_corr=_wigner_corr_np,
)

_active = numba_impl if USE_NUMBA else numpy_impl

cn_sweep = _active.cn_sweep
phase = _active.phase
damp = _active.damp
phase_adjoint = _active.phase_adjoint
wigner_corr = _active.wigner_corr
