"""Time the compiled GRU recurrence against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Shapes follow the 1/8-scale and full-width trunks at batch 8 over 4 s of
50 Hz frames. Both backends are first checked to agree.
"""

import argparse
import timeit

import numpy as np

from sinv.neural import kernels

SHAPES = [  # (T, B, H)
    (200, 8, 16),
    (200, 8, 64),
    (200, 8, 256),
    (200, 8, 512),
]


def make_inputs(T, B, H, dtype, seed=0):
    rng = np.random.default_rng(seed)
    gx = rng.standard_normal((T, B, 3 * H)).astype(dtype)
    U = (rng.standard_normal((H, 3 * H)) / np.sqrt(H)).astype(dtype)
    dhs = rng.standard_normal((T, B, H)).astype(dtype)
    return gx, U, dhs


def bench(backend, gx, U, dhs, repeat):
    fwd = kernels.gru_forward(gx, U, backend)
    t_f = min(timeit.repeat(lambda: kernels.gru_forward(gx, U, backend), number=1, repeat=repeat))
    t_b = min(timeit.repeat(lambda: kernels.gru_backward(dhs, *fwd, U, backend), number=1, repeat=repeat))
    return fwd, t_f, t_b


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    args = ap.parse_args()
    if kernels._gru_ext is None:
        raise SystemExit("compiled extension unavailable (unset SINV_PURE_PYTHON or rebuild)")
    dtype = np.dtype(args.dtype)
    tol = 1e-4 if dtype == np.float32 else 1e-10
    print(f"{'T':>4} {'B':>3} {'H':>4}  {'fwd py':>9} {'fwd cy':>9} {'x':>5}  {'bwd py':>9} {'bwd cy':>9} {'x':>5}")
    for T, B, H in SHAPES:
        gx, U, dhs = make_inputs(T, B, H, dtype)
        fp, pf, pb = bench("python", gx, U, dhs, args.repeat)
        fc, cf, cb = bench("cython", gx, U, dhs, args.repeat)
        np.testing.assert_allclose(fc[0], fp[0], atol=tol)
        print(f"{T:4d} {B:3d} {H:4d}  {pf * 1e3:7.2f}ms {cf * 1e3:7.2f}ms {pf / cf:5.1f}"
              f"  {pb * 1e3:7.2f}ms {cb * 1e3:7.2f}ms {pb / cb:5.1f}")


if __name__ == "__main__":
    main()
