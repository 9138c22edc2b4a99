import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octbec.analysis import UnsupportedDimensionError, observables, wigner, wigner_time_integrated
from octbec.grid import Grid1D, Grid2D, WaveField, gaussian
from octbec.potentials import ShiftedHarmonic
from octbec.solver import PropagationSpec, propagate

GRID = Grid1D(-12.0, 12.0, 256, 1.0, 10)


def test_ground_state_wigner_is_minimum_uncertainty():
    w = wigner(gaussian(GRID))
    mom = w.moments()
    assert mom["x"] == pytest.approx(0.0, abs=1e-12)
    assert mom["p"] == pytest.approx(0.0, abs=1e-12)
    assert mom["dx"] * mom["dp"] == pytest.approx(0.5, rel=1e-6)
    assert w.total() == pytest.approx(2 * np.pi, rel=1e-10)
    assert w.values.max() == pytest.approx(2.0, rel=1e-6)  # 2 exp(-x^2 - p^2) at the origin


def test_wigner_translates_with_the_state():
    w = wigner(gaussian(GRID, center=3.0))
    mom = w.moments()
    assert mom["x"] == pytest.approx(3.0, abs=1e-10)
    assert mom["p"] == pytest.approx(0.0, abs=1e-10)
    ref = wigner(gaussian(GRID)).values
    shift = int(round(3.0 / GRID.dx))
    assert np.allclose(w.values, np.roll(ref, shift, axis=0), atol=1e-10)


def test_wigner_marginals():
    x = GRID.x
    psi = WaveField(GRID, np.exp(-((x - 1) ** 2) / 1.5 + 0.7j * x) + 0.5 * np.exp(-((x + 2) ** 2))).normalized()
    w = wigner(psi)
    dens = 2 * np.pi * psi.density()
    assert np.max(np.abs(w.position_marginal() - dens)) <= 1e-6 * dens.max()
    spec = np.abs(np.fft.fftshift(np.fft.fft(psi.values)) * GRID.dx) ** 2
    assert np.max(np.abs(w.momentum_marginal() - spec)) <= 1e-6 * spec.max()


def test_two_lobe_superposition_has_fringes():
    a = gaussian(GRID, center=-3.0)
    b = gaussian(GRID, center=3.0)
    w = wigner(WaveField(GRID, a.values + b.values).normalized())
    centre = w.values[np.argmin(np.abs(GRID.x))]
    signs = np.sign(centre[np.abs(centre) > 1e-6 * np.abs(centre).max()])
    assert np.count_nonzero(np.diff(signs)) >= 3
    assert w.values.min() < -0.1


def test_wigner_rejects_2d():
    grid = Grid2D(-4, 4, 16, -4, 4, 16, 1.0, 10)
    with pytest.raises(UnsupportedDimensionError):
        wigner(gaussian(grid))


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-2, 2), st.floats(0.6, 2.0), st.floats(-1.5, 1.5))
def test_global_phase_leaves_wigner_unchanged(phi, c, width, k):
    psi = gaussian(GRID, c, width, k)
    # exact up to the rounding of the phase factor itself
    assert np.allclose(wigner(psi).values, wigner(psi * np.exp(1j * phi)).values, rtol=0, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.0, 2.0), st.floats(-1.0, 1.0))
def test_real_even_state_has_momentum_parity(d, width_gap, weight):
    x = GRID.x
    vals = np.exp(-(x**2) / 2) + weight * np.exp(-((np.abs(x) - d) ** 2) / (1 + width_gap))
    w = wigner(WaveField(GRID, vals).normalized()).values
    # p runs over -n/2 .. n/2-1; the mirror of index k is n - k
    mirrored = np.roll(w[:, ::-1], 1, axis=1)
    assert np.max(np.abs(w - mirrored)) < 1e-10


def test_time_integrated_stationary_state():
    # lowest eigenvector of the periodic three-point Hamiltonian is exactly stationary under CN
    grid = Grid1D(-12.0, 12.0, 256, 2.0, 200)
    n, h = grid.n_x, grid.dx
    lap = (np.roll(np.eye(n), 1, axis=1) + np.roll(np.eye(n), -1, axis=1) - 2 * np.eye(n)) / h**2
    _, vecs = np.linalg.eigh(-0.5 * lap + np.diag(0.5 * grid.x**2))
    psi = WaveField(grid, vecs[:, 0]).normalized()
    traj = propagate(PropagationSpec(grid, ShiftedHarmonic(), initial=psi, scheme="crank_nicolson_1d"))
    acc = wigner_time_integrated(traj)
    assert acc.metadata["stride"] == 2 and acc.time_integrated
    single = wigner(psi).values
    assert np.max(np.abs(acc.values - grid.t_final * single)) < 1e-6 * grid.t_final * single.max() + 1e-6


def test_time_integrated_coherent_orbit_is_annulus():
    # released at x = 0 in a well centred at x0 = 3: a circle of radius 3 around (3, 0)
    x0 = 3.0
    grid = Grid1D(-10.0, 16.0, 256, 2 * np.pi, 400)
    fam = ShiftedHarmonic(x0)
    traj = propagate(PropagationSpec(grid, fam, np.ones(401), gaussian(grid), scheme="split_operator"))
    acc = wigner_time_integrated(traj, stride=4)
    X, P = np.meshgrid(acc.x, acc.p, indexing="ij")
    radius = np.hypot(X - x0, P)
    bins = np.arange(0.0, 6.0, acc.dp)
    mass = np.array([acc.values[(radius >= lo) & (radius < lo + acc.dp)].sum() for lo in bins])
    peak = bins[np.argmax(mass)] + 0.5 * acc.dp
    assert abs(peak - x0) <= acc.dp
    assert acc.values[np.argmin(np.abs(acc.x - x0)), np.argmin(np.abs(acc.p))] < 0.2 * acc.values.max()


def test_observables_of_ground_states():
    fam = ShiftedHarmonic(2.0)
    rec = observables(gaussian(GRID), fam, 0.0)
    assert rec["norm"] == pytest.approx(1.0, abs=1e-12)
    assert rec["energy"] == pytest.approx(0.5, abs=1e-4)
    assert rec["mean_x"] == pytest.approx(0.0, abs=1e-4)
    assert rec["delta_x"] == pytest.approx(2**-0.5, abs=1e-4)
    assert rec["delta_p"] == pytest.approx(2**-0.5, abs=1e-4)
    moved = observables(gaussian(GRID, center=2.0), fam, 1.0)
    assert moved["mean_x"] == pytest.approx(2.0, abs=1e-4)
    assert moved["energy"] == pytest.approx(0.5, abs=1e-4)


def test_plane_wave_momentum():
    k1 = 2 * np.pi * 4 / GRID.length
    rec = observables(WaveField(GRID, np.exp(1j * k1 * GRID.x)).normalized())
    assert rec["mean_p"] == pytest.approx(k1, abs=1e-10)
    assert "energy" not in rec


def test_interaction_energy():
    psi = gaussian(GRID)
    rec = observables(psi, ShiftedHarmonic(), 0.0, g=4.0)
    assert rec["energy_interaction"] == pytest.approx(0.5 * 4.0 / np.sqrt(2 * np.pi), rel=1e-10)
