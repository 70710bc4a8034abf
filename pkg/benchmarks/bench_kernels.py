"""Compare the compiled and pure-Python integration kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each case is integrated with the continuous-QR system on both backends;
the table reports the best wall time of ``N`` repeats, the speedup and the
largest state difference between the backends.
"""

import argparse
import os
import time

import numpy as np

from tipscope import builtin_system, compiled_available, integrate_with_qr

CASES = [
    ("unique_linear", 0.06, None),
    ("bistable_linear_2d", 0.049, None),
    ("bistable_logistic_2d", 0.378, None),
    ("resource_consumer", -0.002, (0.0, 100.0)),
]


def timed(system, t_span, backend, repeat):
    os.environ["TIPSCOPE_BACKEND"] = backend
    best, traj = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = integrate_with_qr(system, t_span=t_span)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not compiled_available():
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'case':<24}{'compiled s':>12}{'python s':>12}{'speedup':>10}{'max |dx|':>12}")
    try:
        for name, rate, span in CASES:
            system = builtin_system(name, rate)
            tc, a = timed(system, span, "compiled", args.repeat)
            tp, b = timed(system, span, "python", 1)
            m = min(len(a), len(b))
            diff = float(np.max(np.abs(a.states[:m] - b.states[:m])))
            print(f"{name:<24}{tc:>12.4f}{tp:>12.3f}{tp / tc:>10.0f}{diff:>12.2e}")
    finally:
        os.environ.pop("TIPSCOPE_BACKEND", None)


if __name__ == "__main__":
    main()
