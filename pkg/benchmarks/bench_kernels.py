"""Time the compiled kernels against the numpy/LAPACK fallback.

    python3 benchmarks/bench_kernels.py [--points 2049] [--steps 20000] [--particles 20000]

Runs the same Crank-Nicolson sweep and the same RK4 ensemble through each
available backend and prints wall times, speedups, and how far the results
differ (RK4 positions should match bit for bit).
"""

import argparse
import time

import numpy as np

from pilotbox._kernels import BACKENDS
from pilotbox.evolve import EvolutionPlan, beat_period, evolve
from pilotbox.traject import VelocityTable, run_ensemble
from pilotbox.well import Grid1D, WellSpec, superpose


def timed(fn, repeat):
    best, result = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2049)
    ap.add_argument("--steps", type=int, default=20000, help="Crank-Nicolson steps over one beat period")
    ap.add_argument("--stride", type=int, default=10)
    ap.add_argument("--particles", type=int, default=20000)
    ap.add_argument("--threads", type=int, default=1, help="threads for the compiled RK4 loop")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    spec, grid = WellSpec(), Grid1D(args.points)
    tau = beat_period(spec, 1, 2)
    psi0 = superpose([(1, 1), (1, 2)], spec, grid)
    plan = EvolutionPlan(tau / args.steps, args.steps, args.stride)
    backends = sorted(BACKENDS)
    print(f"backends: {backends}; grid {args.points}, {args.steps} CN steps, {args.particles} particles")

    cn = {}
    for name in backends:
        cn[name] = timed(lambda: evolve(psi0, plan, name), args.repeat)
    table = VelocityTable.from_frames(cn[backends[0]][1])

    rk = {}
    for name in backends:
        rk[name] = timed(
            lambda: run_ensemble(psi0, table, args.particles, 1, table.times[1] - table.times[0],
                                 record_stride=None, backend=name, threads=args.threads),
            args.repeat,
        )

    for label, runs in (("crank_nicolson", cn), ("rk4_ensemble", rk)):
        base = runs["python"][0]
        for name in backends:
            t = runs[name][0]
            print(f"{label:>15s}  {name:>8s}  {t:8.3f} s  x{base / t:5.2f} vs python")

    if "compiled" in BACKENDS:
        dpsi = np.max(np.abs(cn["compiled"][1].values - cn["python"][1].values))
        same = rk["compiled"][1].positions.tobytes() == rk["python"][1].positions.tobytes()
        print(f"max |psi_compiled - psi_python| = {dpsi:.2e}; RK4 positions bit-identical: {same}")


if __name__ == "__main__":
    main()
