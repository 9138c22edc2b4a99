"""The numba kernels and their numpy fallbacks must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from octbec import kernels

RNG = np.random.default_rng(11)
SHAPES = [(64,), (32, 16)]


def _cfield(shape):
    return RNG.standard_normal(shape) + 1j * RNG.standard_normal(shape)


@pytest.mark.parametrize("reverse", [False, True])
def test_cn_sweep(reverse):
    n_x, n_t = 48, 30
    psi = _cfield(n_x)
    vbar = RNG.random((n_t, n_x))
    a = kernels.numba_impl.cn_sweep(psi, vbar, 0.2, 0.05, reverse)
    b = kernels.numpy_impl.cn_sweep(psi, vbar, 0.2, 0.05, reverse)
    assert a.shape == (n_t + 1, n_x)
    assert np.allclose(a, b, rtol=1e-11, atol=1e-12)


@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("name", ["phase", "damp"])
def test_local_factors(shape, name):
    psi, v = _cfield(shape), RNG.random(shape)
    a = getattr(kernels.numba_impl, name)(psi, v, 3.0, 0.02)
    b = getattr(kernels.numpy_impl, name)(psi, v, 3.0, 0.02)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-13)


def test_damp_solves_the_local_imaginary_flow():
    # dpsi/dtau = -(V + g|psi|^2) psi integrated with a fine explicit scheme
    psi = np.array([0.3 + 0.4j, 1.2, 0.05j])
    v = np.array([0.5, -0.2, 2.0])
    g, a = 4.0, 0.1
    ref = psi.copy()
    n = 20000
    for _ in range(n):
        k1 = -(v + g * np.abs(ref) ** 2) * ref
        mid = ref + 0.5 * a / n * k1
        ref = ref - a / n * (v + g * np.abs(mid) ** 2) * mid
    assert np.allclose(kernels.damp(psi, v, g, a), ref, rtol=1e-7)


@pytest.mark.parametrize("shape", SHAPES)
def test_phase_adjoint(shape):
    chi, psi, v = _cfield(shape), _cfield(shape), RNG.random(shape)
    s1, s2 = np.zeros(shape), np.zeros(shape)
    a = kernels.numba_impl.phase_adjoint(chi, psi, v, 2.0, 0.03, 0.1, s1)
    b = kernels.numpy_impl.phase_adjoint(chi, psi, v, 2.0, 0.03, 0.1, s2)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-13)
    assert np.allclose(s1, s2, rtol=1e-12, atol=1e-13)


def test_wigner_corr():
    up = _cfield(80)
    assert np.allclose(kernels.numba_impl.wigner_corr(up), kernels.numpy_impl.wigner_corr(up), atol=1e-14)


def test_env_flag_selects_numpy_backend():
    code = "import octbec; print(octbec.backend_name())"
    env = dict(os.environ, OCTBEC_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
