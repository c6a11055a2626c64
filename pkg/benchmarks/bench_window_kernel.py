"""Time the window assembly of U with the numba kernel and the numpy fallback.

    python3 benchmarks/bench_window_kernel.py [--radius 5] [--repeat 3]

Both backends must produce identical triplets; the script exits non-zero if
they differ.  Setting QTMHALT_DISABLE_NUMBA=1 hides the numba backend, in
which case only the fallback is timed.
"""
import argparse
import sys
import time

import numpy as np

from qtmhalt.analysis import _kernels
from qtmhalt.machines import load_bundled


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--machine", default="two_phase")
    ap.add_argument("--radius", type=int, nargs="+", default=[3, 4, 5])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    spec = load_bundled(args.machine)
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    if "numba" in backends:
        t0 = time.perf_counter()
        _kernels.window_triplets(spec, 1, "numba")
        print(f"numba compile+first call: {time.perf_counter() - t0:.2f} s")
    print(f"{'radius':>6} {'columns':>9} " + " ".join(f"{b + ' [s]':>12}" for b in backends) + "  speedup")
    for W in args.radius:
        n = 2 * spec.state_count * (2 * W + 1) * spec.alphabet_size ** (2 * W + 1)
        results = {}
        for b in backends:
            results[b] = best_of(lambda: _kernels.window_triplets(spec, W, b), args.repeat)
        if len(backends) == 2:
            a, c = results["numpy"][1], results["numba"][1]
            if not all(np.array_equal(x, y) for x, y in zip(a, c)):
                print(f"radius {W}: backends disagree", file=sys.stderr)
                return 1
        speed = results["numpy"][0] / results["numba"][0] if len(backends) == 2 else float("nan")
        print(f"{W:>6} {n:>9} " + " ".join(f"{results[b][0]:>12.4f}" for b in backends) + f"  {speed:7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
