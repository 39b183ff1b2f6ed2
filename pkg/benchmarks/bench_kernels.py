"""Compare the compiled and NumPy kernel backends.

    python3 benchmarks/bench_kernels.py [--steps 2000] [--runs 5]

Reports per-step kernel time for every algorithm on the default spectrum
network (20 nodes, 50 bands, 100 frequencies) and the wall time of a short
end-to-end experiment per backend.
"""
import argparse
import time

import numpy as np

from damdc import kernels
from damdc.algorithms import AlgorithmConfig
from damdc.config import load_preset
from damdc.engine import NetworkFilter, Operators, cross_correlation
from damdc.harness import ROLE_NOISE, build_setup, node_rng, run_experiment, spectrum_measurements


def kernel_times(steps):
    cfg = load_preset("fig3-msd")
    setup = build_setup(cfg)
    rngs = [node_rng(0, 0, k, ROLE_NOISE) for k in range(setup.n_nodes)]
    H = cross_correlation(setup.regressors, spectrum_measurements(setup, cfg, rngs, 0, steps))
    algo = AlgorithmConfig().with_support(setup.omega0 != 0)
    out = {}
    for backend in sorted(kernels.AVAILABLE):
        for kind in ("standard", "rza", "l0", "damdc"):
            ops = Operators(setup.combiner, setup.n_taps)
            ops.set_static_regressors(setup.regressors)
            filt = NetworkFilter(kind, algo, ops, project=True, backend=backend)
            t0 = time.perf_counter()
            for h in H:
                filt.step(h)
            out[backend, kind] = (time.perf_counter() - t0) / steps
    return out


def experiment_times(runs):
    cfg = load_preset("fig3-msd").replace(n_runs=runs)
    out = {}
    for backend in sorted(kernels.AVAILABLE):
        t0 = time.perf_counter()
        run_experiment(cfg, backend=backend)
        out[backend] = time.perf_counter() - t0
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--runs", type=int, default=5)
    args = ap.parse_args()
    if "cython" not in kernels.AVAILABLE:
        print("compiled kernels not built; only the NumPy backend is timed")

    times = kernel_times(args.steps)
    print(f"per-step kernel time ({args.steps} steps)")
    print(f"{'algorithm':10s}" + "".join(f"{b:>14s}" for b in sorted(kernels.AVAILABLE)) + "     speedup")
    for kind in ("standard", "rza", "l0", "damdc"):
        row = [times[b, kind] for b in sorted(kernels.AVAILABLE)]
        speed = times["python", kind] / times["cython", kind] if "cython" in kernels.AVAILABLE else np.nan
        print(f"{kind:10s}" + "".join(f"{t * 1e6:11.1f} us" for t in row) + f"{speed:11.2f}x")

    wall = experiment_times(args.runs)
    print(f"\nfig3-msd preset, {args.runs} runs x 1000 iterations")
    for b, t in wall.items():
        print(f"  {b:8s} {t:6.2f} s")


if __name__ == "__main__":
    main()
