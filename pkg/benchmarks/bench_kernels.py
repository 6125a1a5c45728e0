"""Time the compiled and numpy kernels on the same Gaussian blocks.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--rows 4096]
"""

import argparse
import timeit

import numpy as np

from gchain._backend import BACKENDS, get_backend

CASES = [
    # (kernel, dim, number of points / matrix size)
    ("max_affine", 2, 8),
    ("max_affine", 8, 64),
    ("max_affine", 32, 512),
    ("quad_form", 8, 8),
    ("quad_form", 64, 64),
]


def make_args(kernel, dim, size, rows, rng):
    gamma = rng.standard_normal((rows, dim))
    out = np.empty(rows)
    if kernel == "max_affine":
        points = rng.standard_normal((size, dim))
        return gamma, points, np.zeros(size), out
    a = rng.standard_normal((dim, dim))
    return gamma, a @ a.T, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rows", type=int, default=4096, help="Gaussian samples per call")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    names = sorted(BACKENDS)
    print(f"backends: {', '.join(names)}; rows per call: {args.rows}")
    print(f"{'kernel':<11}{'dim':>5}{'size':>6}" + "".join(f"{n + ' ms':>12}" for n in names) + f"{'speedup':>10}")
    for kernel, dim, size in CASES:
        call_args = make_args(kernel, dim, size, args.rows, rng)
        times = {}
        results = {}
        for name in names:
            fn = getattr(get_backend(name), kernel)
            fn(*call_args)
            results[name] = call_args[-1].copy()
            best = min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat))
            times[name] = best * 1e3
        if len(names) > 1 and not np.array_equal(results["cython"], results["python"]):
            raise SystemExit(f"{kernel} dim={dim} size={size}: backends disagree")
        speed = f"{times['python'] / times['cython']:.1f}x" if "cython" in times else "-"
        print(f"{kernel:<11}{dim:>5}{size:>6}" + "".join(f"{times[n]:>12.3f}" for n in names) + f"{speed:>10}")


if __name__ == "__main__":
    main()
