"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 7] [--attacks 200]

Kernel timings call both backends in-process on identical batches (the 8
systems of one attack stage).  Full-attack timings run a fresh interpreter
per backend so ``TWOFISH_SPA_NO_NUMBA`` is honoured exactly as in real use.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from twofish_spa._tables import HW8
from twofish_spa.attack import MASK_ORDER
from twofish_spa.kernels import get_backend
from twofish_spa.schedule import Q_TABLES

ATTACK_SNIPPET = """
import sys, time
import numpy as np
from twofish_spa import kernels
from twofish_spa.attack import attack_noisy, warmup
from twofish_spa.schedule import SecretKey
from twofish_spa.tracesim import NoiseModel, simulate_trace
warmup()
n, tau, bits = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3])
rng = np.random.default_rng(0)
traces = [simulate_trace(SecretKey.random(rng, bits), NoiseModel(1.0, s)) for s in range(n)]
t0 = time.perf_counter()
for t in traces:
    attack_noisy(t, tau)
print(kernels.BACKEND, (time.perf_counter() - t0) / n)
"""


def _batch(rng, S=8):
    known = rng.integers(0, 256, (S, 20), dtype=np.uint8)
    m = rng.integers(0, 256, S, dtype=np.uint8)
    rhs = HW8[known ^ m[:, None]].astype(np.int64)
    rhs[:, :3] = np.clip(rhs[:, :3] + 1, 0, 8)
    hw = rng.integers(0, 9, (S, 20)).astype(np.int64)
    q_next = np.ascontiguousarray(Q_TABLES[np.arange(S) % 4, 1])
    return known, m, rhs, hw, q_next


def bench_kernels(repeat):
    known, m, rhs, hw, q_next = _batch(np.random.default_rng(1))
    rhs_f = rhs.astype(np.float64)
    rows = []
    for name in ("numba", "numpy"):
        try:
            mod = get_backend(name)
        except ImportError:
            print(f"{name}: not installed, skipped")
            continue
        calls = {
            "exact_search": lambda: mod.exact_search(known, rhs),
            "lms_solve": lambda: mod.lms_solve(known, rhs_f, 1e-9),
            "objective_scan t=3": lambda: mod.objective_scan(m, MASK_ORDER.prefix(3), known, rhs, hw, q_next),
            "objective_scan t=8": lambda: mod.objective_scan(m, MASK_ORDER.prefix(8), known, rhs, hw, q_next),
        }
        for label, fn in calls.items():
            fn()
            n = 200
            best = min(timeit.repeat(fn, number=n, repeat=repeat)) / n
            rows.append((label, name, best))
    print(f"{'kernel (8 systems)':<22}{'backend':<9}{'us/call':>10}")
    for label, name, t in sorted(rows):
        print(f"{label:<22}{name:<9}{1e6 * t:10.1f}")


def bench_attacks(n, taus, bits):
    print(f"\nattack_noisy, {bits}-bit, sigma=1.0, mean over {n} traces")
    print(f"{'tau':<5}{'backend':<9}{'ms/attack':>10}")
    for tau in taus:
        for flag in ("", "1"):
            env = dict(os.environ, TWOFISH_SPA_NO_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", ATTACK_SNIPPET, str(n), str(tau), str(bits)],
                                 env=env, capture_output=True, text=True, check=True).stdout.split()
            print(f"{tau:<5}{out[0]:<9}{1e3 * float(out[1]):10.3f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--attacks", type=int, default=200)
    parser.add_argument("--key-bits", type=int, default=128, choices=(128, 192, 256))
    args = parser.parse_args()
    bench_kernels(args.repeat)
    bench_attacks(args.attacks, (0, 3, 8), args.key_bits)


if __name__ == "__main__":
    main()
