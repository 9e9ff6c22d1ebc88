"""Compiled vs pure-numpy kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Times ``RankOneStepper.advance`` (ETD4 and ETD2) on the linear flow of the
fast model and the double Bregman sum, for each grid size, on both backends.
"""

import argparse
import timeit

import numpy as np

from hoclab import kernels
from hoclab.core import Measure, canonical
from hoclab.dynamics import _linear_stepper

SIZES = (128, 512, 2048)


def bench_advance(n, scheme, nsteps, repeat):
    model = canonical("F", n)
    stepper = _linear_stepper(model, 0.01 if scheme == "etd4" else 0.5, scheme)
    y0 = Measure.uniform(model.grid).to_vector()

    def run():
        stepper.advance(y0.copy(), nsteps, renorm=True)
    return min(timeit.repeat(run, number=1, repeat=repeat)) / nsteps


def bench_bregman(n, repeat):
    rng = np.random.default_rng(0)
    f = rng.uniform(0.2, 2.0, n)
    q = rng.uniform(0.0, 1.0, n)
    args = (f, f * np.log(f), np.log(f) + 1.0, q)
    return min(timeit.repeat(lambda: kernels.bregman_sum(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()
    try:
        kernels.use_backend("cython")
        backends = ("cython", "python")
    except ImportError:
        print("compiled extension not built; timing the numpy fallback only")
        backends = ("python",)

    print(f"{'kernel':<10}{'n':>6}" + "".join(f"{b:>14}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    rows = [("etd4", n, lambda n=n: bench_advance(n, "etd4", args.steps, args.repeat)) for n in SIZES]
    rows += [("etd2", n, lambda n=n: bench_advance(n, "etd2", args.steps, args.repeat)) for n in SIZES]
    rows += [("bregman", n, lambda n=n: bench_bregman(n, args.repeat)) for n in SIZES]
    for name, n, fn in rows:
        times = []
        for b in backends:
            kernels.use_backend(b)
            times.append(fn())
        unit = "s/step" if name != "bregman" else "s/call"
        cells = "".join(f"{t:>14.3e}" for t in times)
        speed = f"{times[1] / times[0]:>9.1f}x" if len(times) == 2 else ""
        print(f"{name:<10}{n:>6}{cells}{speed}   ({unit})")


if __name__ == "__main__":
    main()
