"""Compare the numba and pure-numpy kernels on representative problem sizes.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. The first
numba call (compilation or cache load) is timed separately and excluded from
the per-call figures. Both flavours are also checked to agree.
"""

import argparse
import time

import numpy as np

from octbec import kernels


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n_x=500, n_t=500, n_2d=(256, 64)):
    rng = np.random.default_rng(0)
    x = np.linspace(-10, 15, n_x, endpoint=False)
    dx = x[1] - x[0]
    psi = np.exp(-0.5 * x**2).astype(np.complex128)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * dx)
    vbar = np.ascontiguousarray(0.5 * (x[None, :] - 5.0 * np.linspace(0, 1, n_t)[:, None]) ** 2)
    field = rng.standard_normal(n_2d) + 1j * rng.standard_normal(n_2d)
    v2 = rng.random(n_2d)
    chi = rng.standard_normal(n_2d) + 1j * rng.standard_normal(n_2d)
    up = np.exp(-0.5 * np.linspace(-10, 15, 2 * n_x, endpoint=False) ** 2).astype(np.complex128)

    def adjoint(impl):
        sens = np.zeros(n_2d)
        return impl.phase_adjoint(chi, field, v2, 20.0, 0.01, 0.01, sens), sens

    return {
        f"cn_sweep {n_t}x{n_x}": lambda impl: impl.cn_sweep(psi, vbar, dx, 0.018, False),
        f"phase {n_2d[0]}x{n_2d[1]}": lambda impl: impl.phase(field, v2, 20.0, 0.01),
        f"damp {n_2d[0]}x{n_2d[1]}": lambda impl: impl.damp(field, v2, 20.0, 0.01),
        f"phase_adjoint {n_2d[0]}x{n_2d[1]}": adjoint,
        f"wigner_corr {n_x}": lambda impl: impl.wigner_corr(up),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    print(f"{'kernel':28s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speed-up':>9s} {'first numba call [ms]':>22s}")
    for name, fn in cases().items():
        t0 = time.perf_counter()
        ref_nb = fn(kernels.numba_impl)
        first = time.perf_counter() - t0
        ref_np = fn(kernels.numpy_impl)
        a = ref_nb[0] if isinstance(ref_nb, tuple) else ref_nb
        b = ref_np[0] if isinstance(ref_np, tuple) else ref_np
        if not np.allclose(a, b, rtol=1e-9, atol=1e-11):
            raise SystemExit(f"{name}: numba and numpy kernels disagree")
        t_np = _time(lambda: fn(kernels.numpy_impl), args.repeat)
        t_nb = _time(lambda: fn(kernels.numba_impl), args.repeat)
        print(f"{name:28s} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:9.1f} {1e3 * first:22.1f}")


if __name__ == "__main__":
    main()
