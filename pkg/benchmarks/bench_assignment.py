"""Compare the compiled and pure-Python Hungarian kernels.

    python benchmarks/bench_assignment.py --sizes 8 32 64 128 --repeats 20
"""
import argparse
import statistics
import time

import numpy as np

from tokenmixup import _kernels
from tokenmixup.assignment import hungarian_match


def time_backend(backend: str, c: np.ndarray, repeats: int) -> float:
    hungarian_match(c, backend)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        hungarian_match(c, backend)
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1000.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 32, 64, 128])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = sorted(_kernels.BACKENDS)
    if "cython" not in backends:
        print("compiled kernel not built; only the Python fallback is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'b':>5} {'easy':>5} " + " ".join(f"{name + ' ms':>12}" for name in backends) + "   speedup")
    for b in args.sizes:
        c = rng.random((b // 2, b))
        plans = {name: hungarian_match(c, name) for name in backends}
        assert len({p.sigma for p in plans.values()}) == 1, "backends disagree"
        ms = {name: time_backend(name, c, args.repeats) for name in backends}
        speed = f"{ms['python'] / ms['cython']:8.1f}x" if "cython" in ms else "       -"
        print(f"{b:>5} {b // 2:>5} " + " ".join(f"{ms[name]:12.3f}" for name in backends) + f"  {speed}")


if __name__ == "__main__":
    main()
