"""Optimize the same guess in the Sobolev and Lebesgue geometries and compare the optima.

    python3 scripts/compare_lifts.py --q 4 --B 500 --T 1e-4 --dt 4e-6 --N 32
"""
import argparse

import numpy as np

from lpsopt.diagnostics import lq_series
from lpsopt.forward import SolverConfig, integrate
from lpsopt.manifold import optimize, problem_setup, random_guess
from lpsopt.spectral import WavenumberGrid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--q", type=float, default=4.0, help="q > 3 compares Problems 1/2, q = 3 Problems 3/4")
    ap.add_argument("--B", type=float, default=500.0)
    ap.add_argument("--T", type=float, default=1e-4)
    ap.add_argument("--dt", type=float, default=4e-6)
    ap.add_argument("--N", type=int, default=32)
    ap.add_argument("--n-max", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pair = (1, 2) if args.q > 3 else (3, 4)
    grid = WavenumberGrid(args.N)
    solver = SolverConfig(dt=args.dt, T=args.T, N=args.N)
    print("problem,space,iterations,reason,objective,max_lq_over_B")
    for problem in pair:
        m, spec = problem_setup(problem, args.q, args.B, args.T)
        guess = random_guess(grid, m, args.seed)
        rep = optimize(guess, m, spec, solver, eps=1e-4, n_max=args.n_max)
        peak = float(np.max(lq_series(integrate(rep.optimum, solver), m.q))) / args.B
        print(f"{problem},{m.space},{len(rep.history) - 1},{rep.reason},{rep.objective:.10e},{peak:.6f}")


if __name__ == "__main__":
    main()
