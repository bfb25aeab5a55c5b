"""Compare the numba and pure-numpy kernel paths.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times the chord top-k search on boundaries of growing ellipse masks and the
pair-cosine scoring of a synthetic all-pairs set, checking that both paths
return identical results.  The first numba call of each kernel is warmed up
outside the timing.
"""

import argparse
import time

import numpy as np

from earsym import _accel, geometry, kernels
from earsym.synth import SynthConfig, ellipse_mask, gen_subjects


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def run_both(fn, repeat):
    out = {}
    for name, flag in (("numba", True), ("numpy", False)):
        _accel.USE_NUMBA = flag
        fn()  # warm-up (compilation, caches)
        out[name] = best_of(fn, repeat)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    saved = _accel.USE_NUMBA

    print(f"{'kernel':<28}{'size':>12}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    for side in (80, 160, 320, 640):
        mask = ellipse_mask((side, side), 0.45 * side, 0.25 * side, 20.0)
        rows, cols = geometry.boundary_coords(mask)
        res = run_both(lambda: kernels.top_chords(rows, cols, geometry.DEFAULT_K), args.repeat)
        for a, b in zip(res["numba"][1], res["numpy"][1]):
            assert np.array_equal(a, b)
        tj, tn = res["numba"][0], res["numpy"][0]
        print(f"{'top_chords (k=50)':<28}{f'B={rows.size}':>12}{tj:>12.4f}{tn:>12.4f}{tn / tj:>9.1f}x")

    for n_subjects in (50, 200):
        _, store = gen_subjects(SynthConfig(n_subjects=n_subjects, imgs_per_side=10, dim=64))
        a, b = np.triu_indices(len(store), 1)
        x = store.vectors
        res = run_both(lambda: kernels.pair_cosines(x, a, b), args.repeat)
        assert np.max(np.abs(res["numba"][1] - res["numpy"][1])) <= 1e-12
        tj, tn = res["numba"][0], res["numpy"][0]
        print(f"{'pair_cosines (dim=64)':<28}{f'P={a.size}':>12}{tj:>12.4f}{tn:>12.4f}{tn / tj:>9.1f}x")

    _accel.USE_NUMBA = saved


if __name__ == "__main__":
    main()
