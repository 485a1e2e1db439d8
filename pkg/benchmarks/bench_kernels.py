"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 10 14 18 20] [--repeat 5]

Prints median wall time per call and the speedup; also checks the two
backends agree to 1e-12 relative.
"""
import argparse
import timeit

import numpy as np

from spinsim import _fallback

try:
    from spinsim import _kernels
except ImportError:
    _kernels = None


def _case(n, rng):
    j = rng.normal(size=(n, n))
    j = np.ascontiguousarray(np.triu(j, 1) + np.triu(j, 1).T)
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return j, v / np.linalg.norm(v)


def _time(fn, repeat):
    fn()
    return float(np.median(timeit.repeat(fn, number=1, repeat=repeat)))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 14, 18, 20])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; nothing to compare")
        return 1
    rng = np.random.default_rng(1)
    print(f"{'N':>3} {'kernel':<15} {'numpy [ms]':>11} {'cython [ms]':>12} {'speedup':>8}")
    for n in args.sizes:
        j, v = _case(n, rng)
        out = np.empty_like(v)
        diag = _kernels.ising_diagonal(j, n)
        ref = _fallback.ising_diagonal(j, n)
        assert np.allclose(diag, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
        a = _kernels.apply_tfim(diag, 0.7, v, np.empty_like(v), n)
        b = _fallback.apply_tfim(diag, 0.7, v, np.empty_like(v), n)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max())
        cases = {
            "ising_diagonal": (lambda: _fallback.ising_diagonal(j, n), lambda: _kernels.ising_diagonal(j, n)),
            "apply_tfim": (
                lambda: _fallback.apply_tfim(diag, 0.7, v, out, n),
                lambda: _kernels.apply_tfim(diag, 0.7, v, out, n),
            ),
            "apply_field": (lambda: _fallback.apply_field(v, out, n), lambda: _kernels.apply_field(v, out, n)),
        }
        for name, (py, cy) in cases.items():
            tp, tc = _time(py, args.repeat), _time(cy, args.repeat)
            print(f"{n:>3} {name:<15} {tp * 1e3:>11.3f} {tc * 1e3:>12.3f} {tp / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
