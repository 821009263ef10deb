"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--events N] [--repeat R]

Prints one row per kernel with the best-of-R wall time for each backend and
the speedup. Outputs of the two backends are checked for equality first.
"""
import argparse
import timeit

import numpy as np

from evlstm import _backend
from evlstm.simulator import DotSceneConfig, NoiseConfig, inject_shot_noise, simulate_dot


def workload(n_events: int):
    stream = simulate_dot(DotSceneConfig(frequency=1.6, duration=2_000_000))
    rate = max(n_events - len(stream), 0) / (64 * 64 * 2.0)
    stream = inject_shot_noise(stream, NoiseConfig(rate=rate, duration=2_000_000, seed=0))
    t, x, y = (np.ascontiguousarray(a) for a in (stream.t, stream.x, stream.y))
    pix = np.ascontiguousarray(y * 64 + x)
    return {
        "memory_filter": lambda k: k.memory_filter(t, x, y, 64, 64, 1, 1, 8000.0, 1.1, False, True),
        "baseline_filter": lambda k: k.baseline_filter(t, x, y, 64, 64, 1, 1, 5000),
        "lif_spike_count": lambda k: k.lif_spike_count(t, pix, 64 * 64, 1.0, 2.0, 20000.0),
    }, len(stream)


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(u, v) for u, v in zip(a, b))
    return np.asarray(a).tobytes() == np.asarray(b).tobytes()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=50_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        cy = _backend.get_kernels("cython")
    except ImportError:
        raise SystemExit("compiled kernels not built; run pip install --no-build-isolation -e .")
    py = _backend.get_kernels("python")
    jobs, n = workload(args.events)
    print(f"{n} events, best of {args.repeat}")
    print(f"{'kernel':<16} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for name, job in jobs.items():
        if not same(job(py), job(cy)):
            raise SystemExit(f"{name}: backends disagree")
        tp = min(timeit.repeat(lambda: job(py), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(lambda: job(cy), number=1, repeat=args.repeat))
        print(f"{name:<16} {tp:>10.4f} {tc:>10.4f} {tp / tc:>7.1f}x")


if __name__ == "__main__":
    main()
