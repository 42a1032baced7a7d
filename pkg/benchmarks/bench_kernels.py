"""Time the compiled kernels against the numpy fallback on estimator-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 8]
"""
import argparse
import timeit

import numpy as np

from spde import kernels


def cases(batch: int):
    rng = np.random.default_rng(0)
    K, P = 64, 128
    rho = 1.0 / (1.0 + 2.0**-13 * (np.pi * np.arange(1, K + 1)) ** 2)
    inputs = rng.standard_normal((8192, batch, K)) * 2.0**-6.5
    fine = rng.standard_normal((8192, batch, P))
    coarse = rng.standard_normal((16, batch, P))
    return {
        "forward_recursion S=8192 K=64": lambda m: m.forward_recursion(rho, inputs),
        "backward_recursion S=8192 K=64": lambda m: m.backward_recursion(rho, inputs),
        "interval_power_sums q=2 p=2": lambda m: m.interval_power_sums(fine, coarse, 2.0, 2.0, 1 / 129),
        "interval_power_sums q=4 p=2": lambda m: m.interval_power_sums(fine, coarse, 4.0, 2.0, 1 / 129),
        "interval_power_sums q=3.5 p=3": lambda m: m.interval_power_sums(fine, coarse, 3.5, 3.0, 1 / 129),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=8)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}")
    names = sorted(backends)
    print(f"{'kernel':<34}" + "".join(f"{n + ' [ms]':>16}" for n in names) + f"{'speedup':>10}")
    for label, fn in cases(args.batch).items():
        best = {}
        for n in names:
            fn(backends[n])
            best[n] = min(timeit.repeat(lambda: fn(backends[n]), number=1, repeat=args.repeat)) * 1e3
        speed = f"{best['python'] / best['cython']:>9.1f}x" if len(best) == 2 else ""
        print(f"{label:<34}" + "".join(f"{best[n]:>16.2f}" for n in names) + speed)


if __name__ == "__main__":
    main()
