"""Times the compiled convolution kernels against the numpy im2col + BLAS
fallback on training-relevant shapes, and verifies the two backends agree.

Run:  python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from i2v import backend

# (label, n, cin, h, w, cout, k, dilation)
SHAPES = [
    ("bsn mask 3x3", 4, 3, 40, 40, 16, 3, 1),
    ("bsn dilated d2", 4, 16, 40, 40, 16, 3, 2),
    ("bsn dilated d3", 4, 16, 40, 40, 16, 3, 3),
    ("bsn merge 1x1", 4, 32, 40, 40, 16, 1, 1),
    ("ne body 3x3", 4, 32, 40, 40, 32, 3, 1),
    ("ne body 128px", 1, 32, 128, 128, 32, 3, 1),
]


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(repeat):
    if not backend.HAS_COMPILED:
        print("compiled backend unavailable; nothing to compare")
        return
    rng = np.random.default_rng(0)
    header = f"{'shape':<16} {'op':<10} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, n, cin, h, w, cout, k, dil in SHAPES:
        pad = dil * (k // 2)
        xp = rng.standard_normal((n, cin, h + 2 * pad, w + 2 * pad)).astype(np.float32)
        wt = rng.standard_normal((cout, cin, k, k)).astype(np.float32)
        ho = h + 2 * pad - dil * (k - 1)
        gy = rng.standard_normal((n, cout, ho, ho)).astype(np.float32)

        backend.use("python")
        ref_f = backend.conv2d_forward(xp, wt, 1, dil)
        ref_gx = backend.conv2d_backward_input(gy, wt, 1, dil, xp.shape[2], xp.shape[3])
        ref_gw = backend.conv2d_backward_weight(gy, xp, 1, dil, k, k)
        # float32 summation order differs between backends, so agreement is
        # approximate; exact-math equivalence is covered by the test suite
        # against a quadruple-loop oracle in float64
        backend.use("compiled")
        tol = dict(rtol=5e-3, atol=1e-4 * max(1.0, float(np.abs(ref_gw).max())))
        np.testing.assert_allclose(backend.conv2d_forward(xp, wt, 1, dil), ref_f, rtol=5e-3, atol=1e-3)
        np.testing.assert_allclose(
            backend.conv2d_backward_input(gy, wt, 1, dil, xp.shape[2], xp.shape[3]), ref_gx, rtol=5e-3, atol=1e-3
        )
        np.testing.assert_allclose(backend.conv2d_backward_weight(gy, xp, 1, dil, k, k), ref_gw, **tol)

        for op, call in (
            ("forward", lambda: backend.conv2d_forward(xp, wt, 1, dil)),
            ("bwd_input", lambda: backend.conv2d_backward_input(gy, wt, 1, dil, xp.shape[2], xp.shape[3])),
            ("bwd_weight", lambda: backend.conv2d_backward_weight(gy, xp, 1, dil, k, k)),
        ):
            backend.use("python")
            t_py = _time(call, repeat)
            backend.use("compiled")
            t_cy = _time(call, repeat)
            print(f"{label:<16} {op:<10} {t_py * 1e3:>10.3f} {t_cy * 1e3:>12.3f} {t_py / t_cy:>8.2f}x")
    backend.use("auto")
    print(f"\nagreement checks passed; auto backend resolves to {backend.active_name()!r}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    bench(ap.parse_args().repeat)
