"""Compare the compiled and pure-Python kernels.

Times second-order integration of both benchmark models and one full
identification, once per backend, and checks that the results agree.

    python bench/bench_backends.py [--repeat 3] [--samples 501]
"""
import argparse
import time

import numpy as np

from tensorsysid import (DecisionVector, NATIVE_AVAILABLE, SensitivityOrder, generate_synthetic,
                         integrate, newton_solve, silverbox_scenario, twotank_scenario)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--samples", type=int, default=501)
    args = ap.parse_args()
    if not NATIVE_AVAILABLE:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    cases = [("twotank", twotank_scenario(n_samples=args.samples)),
             ("silverbox", silverbox_scenario(n_samples=args.samples))]
    print(f"{'case':34s} {'native [s]':>11s} {'python [s]':>11s} {'speedup':>8s} {'max diff':>9s}")
    for name, sc in cases:
        ds = generate_synthetic(sc)
        sig = ds.input_signal()

        def run(backend, sc=sc, ds=ds, sig=sig):
            return integrate(sc.model, sc.x0, sc.p, sig, ds.times, SensitivityOrder.SECOND,
                             backend=backend).data

        tn, a = best_of(lambda: run("native"), args.repeat)
        tp, b = best_of(lambda: run("python"), args.repeat)
        diff = float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))
        print(f"{name + ' integrate (2nd order)':34s} {tn:11.4f} {tp:11.4f} {tp / tn:8.1f} {diff:9.1e}")

        guess = DecisionVector(sc.x0, np.asarray(sc.p) * 1.1,
                               free_x0=[False, name == "silverbox"])

        def solve(backend, sc=sc, ds=ds, guess=guess):
            return newton_solve(sc.model, ds, guess, backend=backend).estimate.values

        tn, a = best_of(lambda: solve("native"), 1)
        tp, b = best_of(lambda: solve("python"), 1)
        diff = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
        print(f"{name + ' newton_solve':34s} {tn:11.4f} {tp:11.4f} {tp / tn:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
