"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Sizes cover one objective evaluation of a 30-day window (300 cases) and a
large batch. Requires the compiled extension to be built.
"""
import argparse
import timeit

import numpy as np

from windemos import _core


def cases(n, rng):
    mu = rng.uniform(0.5, 10, n)
    sigma = rng.uniform(0.3, 4, n)
    xi = np.full(n, 0.1)
    x = rng.gamma(3.0, 2.0, n)
    members = rng.gamma(3.0, 2.0, (n, 11))
    return mu, sigma, xi, x, members


def workloads(impl, data):
    mu, sigma, xi, x, members = data
    return {
        "crps_tgev": lambda: impl.crps_tgev(mu, sigma, xi, x),
        "crps_gev": lambda: impl.crps_gev(mu, sigma, xi, x),
        "crps_tn": lambda: impl.crps_tn(mu, sigma, x),
        "crps_ln": lambda: impl.crps_ln(np.log(mu), sigma / 4, x),
        "tgev_mean": lambda: impl.tgev_mean(mu, sigma, xi),
        "crps_ensemble": lambda: impl.crps_ensemble(members, x),
    }


def best_time(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = _core.backends()
    if "cython" not in impls:
        raise SystemExit("compiled extension not available; build with pip install -e . --no-build-isolation")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<15}{'n':>8}{'cython us':>12}{'python us':>12}{'speedup':>9}")
    for n in (300, 30000):
        data = cases(n, rng)
        fast, slow = workloads(impls["cython"], data), workloads(impls["python"], data)
        for name in fast:
            tc, tp = best_time(fast[name], args.repeat), best_time(slow[name], args.repeat)
            print(f"{name:<15}{n:>8}{tc * 1e6:>12.1f}{tp * 1e6:>12.1f}{tp / tc:>9.1f}")


if __name__ == "__main__":
    main()
