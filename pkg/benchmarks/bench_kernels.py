"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from pedintent import _kernels
from pedintent.sim import ScenarioConfig, generate_scenario, render_stereo_pair
from pedintent.stereo import block_match
from pedintent.track.assignment import hungarian_solve


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_block_match(repeat):
    sc = generate_scenario(ScenarioConfig(n_pedestrians=8, seed=3))
    pair = render_stereo_pair(sc, 150)
    left, right = pair.left[100:260, 160:480], pair.right[100:260, 160:480]
    results = {}
    maps = {}
    for name in ("python", "cython"):
        maps[name] = block_match(left, right, 9, 48, backend=name).values
        results[name] = best_of(lambda: block_match(left, right, 9, 48, backend=name), repeat)
    assert np.array_equal(maps["python"], maps["cython"])
    return "block_match 320x160, 48 disparities", results


def bench_hungarian(repeat):
    rng = np.random.default_rng(0)
    mats = []
    for _ in range(200):
        n, m = rng.integers(5, 30, size=2)
        c = rng.uniform(0, 10, size=(n, m))
        c[rng.random((n, m)) < 0.3] = np.inf
        mats.append(c)
    results = {}
    for name in ("python", "cython"):
        results[name] = best_of(lambda: [hungarian_solve(c, backend=name) for c in mats], repeat)
    for c in mats:
        assert hungarian_solve(c, backend="python").total == hungarian_solve(c, backend="cython").total
    return "hungarian 200 matrices up to 30x30", results


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    try:
        _kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'kernel':40s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for bench in (bench_block_match, bench_hungarian):
        label, r = bench(args.repeat)
        print(f"{label:40s} {r['python']:11.4f} {r['cython']:11.4f} {r['python'] / r['cython']:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
