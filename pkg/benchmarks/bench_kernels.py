"""Compare the compiled kernels with the NumPy fallback.

Each kernel runs on identical inputs under both backends; outputs are checked
for agreement before timing. End-to-end timings run in subprocesses with
``SRDE_PURE_PYTHON`` set, exactly as a user would switch backends.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from srdelab.kernels import DIFF_POLYNOMIAL, DRIFT_POWER, available_backends


def _cases(rng):
    B, M = 256, 255
    u = rng.normal(0, 50, (B, M))
    dw = rng.normal(0, 1e-2, (B, M))
    sup = np.exp(np.cumsum(rng.normal(0, 0.3, 5000)))
    t = np.arange(5000) * 1e-3
    x0 = rng.normal(0, 1, (512, 3))
    dB = rng.normal(0, 0.03, (512, 256, 3))

    def drift(k):
        v = u.copy()
        k.drift_flow(v, 3.0, 1.0, 1e-4)
        return v

    def noise(k):
        return k.noise_term(u, dw, np.empty_like(u), 1.5, 1.0, DIFF_POLYNOMIAL)

    def tamed(k):
        return k.tamed_bracket(u, dw, np.empty_like(u), 3.0, 1.0, 1.5, 1.0, 1e-4,
                               DRIFT_POWER, DIFF_POLYNOMIAL)

    def ladder(k):
        return k.ladder_scan(sup, t, 1.0, False, 0, float("nan"))[3]

    def sde(k):
        x = x0.copy()
        act = np.ones(512, dtype=np.uint8)
        k.sde_advance(x, dB, act, np.full(512, 256, dtype=np.int64), np.zeros(512, dtype=np.int8),
                      0, 3.0, 1.5, 1.0, 1.0, 1e-3, 1e3, True, np.empty((512, 0, 3)))
        return x

    return {"drift_flow (256x255)": drift, "noise_term (256x255)": noise,
            "tamed_bracket (256x255)": tamed, "ladder_scan (5000 samples)": ladder,
            "sde_advance (512x256x3)": sde}


_E2E = {
    "simulate_spde N=64, 1e4 steps": (
        "import math; from srdelab.spectral import dirichlet_interval_basis, white_noise;"
        "from srdelab.model import ModelSpec; from srdelab.spde import *;"
        "b = dirichlet_interval_basis(math.pi, 64);"
        "simulate_batch(sine_initial(b, 5.0), ModelSpec(gamma=1.5), white_noise(), b,"
        " SolverConfig(dt=1e-4, horizon=1.0), list(range(20)))"),
    "run_sde_trials 1e4 trials, 1e3 steps": (
        "from srdelab.sde import SdeConfig, run_sde_trials;"
        "run_sde_trials(SdeConfig(dimension=2), 10000, 0)"),
}


def _agree(a, b):
    # sde_advance iterates a nonlinear map, so roundoff differences grow with the step count
    if isinstance(a, list):
        return a == b
    return np.allclose(a, b, rtol=1e-9, atol=1e-12, equal_nan=True)


def bench_kernels(repeat):
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the fallback is available")
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<30}" + "".join(f"{n:>12}" for n in backends) + f"{'speedup':>10}")
    for name, fn in cases.items():
        outs = [fn(k) for k in backends.values()]
        if len(outs) == 2 and not _agree(*outs):
            raise SystemExit(f"backends disagree on {name}")
        times = [min(timeit.repeat(lambda k=k: fn(k), number=3, repeat=repeat)) / 3
                 for k in backends.values()]
        ratio = times[0] / times[-1]
        print(f"{name:<30}" + "".join(f"{1e3 * t:>10.2f}ms" for t in times) + f"{ratio:>9.1f}x")


def bench_end_to_end():
    print(f"\n{'end to end':<40}{'python':>10}{'compiled':>10}")
    for name, code in _E2E.items():
        row = []
        for pure in ("1", "0"):
            env = dict(os.environ, SRDE_PURE_PYTHON=pure)
            timer = f"import time; t = time.perf_counter(); {code}; print(time.perf_counter() - t)"
            out = subprocess.run([sys.executable, "-c", timer], env=env, check=True,
                                 capture_output=True, text=True).stdout
            row.append(float(out.split()[-1]))
        print(f"{name:<40}{row[0]:>9.2f}s{row[1]:>9.2f}s")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--skip-end-to-end", action="store_true")
    args = p.parse_args(argv)
    bench_kernels(args.repeat)
    if not args.skip_end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
