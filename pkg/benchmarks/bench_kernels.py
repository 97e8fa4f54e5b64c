"""Time the numba and numpy implementations of each hot kernel on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

The first numba call (compilation) is excluded; each timing is the best of
``--repeat`` runs. Outputs of the two paths are checked for agreement.
"""

import argparse
import csv
import sys
import time

import numpy as np

from flowmanifold import data, kernels
from flowmanifold.metrics import floral_segments


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    # exact atomic velocity: 4096 queries against 2048 atoms in D=4
    x = rng.standard_normal((4096, 4))
    t = rng.uniform(0, 0.99, 4096)
    atoms = rng.standard_normal((2048, 4))
    log_w = np.full(2048, -np.log(2048))
    yield "atom_softmax_mean", (x, t, atoms, log_w), kernels.atom_softmax_mean_nb, kernels.atom_softmax_mean_np

    # floral distance: 2048 points against 5 x 1000-point polylines
    spec = data.FloralSpec()
    a, b, _ = floral_segments(spec, 1000)
    pts = data.sample_floral(spec, 2048, rng)
    yield "segment_min_dist", (pts, a, b), kernels.segment_min_dist_nb, kernels.segment_min_dist_np

    # sliced W1: 128 projections of 2048 vs 1536 points
    A = np.sort(rng.standard_normal((128, 2048)), axis=1)
    B = np.sort(rng.standard_normal((128, 1536)), axis=1)
    yield "w1_sorted_rows", (A, B), kernels.w1_sorted_rows_nb, kernels.w1_sorted_rows_np


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    args = p.parse_args(argv)

    rows = []
    for name, inputs, nb, npy in cases(np.random.default_rng(args.seed)):
        nb(*inputs)  # compile
        t_nb, out_nb = best_of(lambda: nb(*inputs), args.repeat)
        t_np, out_np = best_of(lambda: npy(*inputs), args.repeat)
        err = float(np.max(np.abs(out_nb - out_np)))
        rows.append([name, t_nb, t_np, t_np / t_nb, err])
        print(f"{name:20s} numba {t_nb * 1e3:9.2f} ms  numpy {t_np * 1e3:9.2f} ms  "
              f"speedup {t_np / t_nb:6.2f}x  max|diff| {err:.2e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "numba_s", "numpy_s", "speedup", "max_abs_diff"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
