"""Finite-difference check of the adjoint gradient over a range of step sizes.

    python3 scripts/kappa_test.py --problem 1 --q 4 --T 5e-4 --dt 2.5e-6
"""
import argparse

import numpy as np

from lpsopt.adjoint import solve_adjoint
from lpsopt.diagnostics import objective
from lpsopt.forward import SolverConfig, integrate
from lpsopt.manifold import problem_setup
from lpsopt.spectral import WavenumberGrid, inner_l2, norm_lq, random_solenoidal


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", type=int, default=1)
    ap.add_argument("--q", type=float, default=4.0)
    ap.add_argument("--T", type=float, default=5e-4)
    ap.add_argument("--dt", type=float, default=2.5e-6)
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--norm", type=float, default=20.0, help="L2 norm of the base point")
    ap.add_argument("--directions", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    grid = WavenumberGrid(args.N)
    rng = np.random.default_rng(args.seed)
    _, spec = problem_setup(args.problem, args.q, 1.0, args.T)
    cfg = SolverConfig(dt=args.dt, T=args.T, N=args.N)
    u0 = random_solenoidal(grid, rng)
    u0 = u0 * (args.norm / norm_lq(u0, 2))
    g = solve_adjoint(integrate(u0, cfg), spec)
    print("direction,eps,fd,adjoint,kappa_minus_1")
    for d in range(args.directions):
        up = random_solenoidal(grid, rng)
        up = up * (1.0 / norm_lq(up, 2))
        pred = inner_l2(g, up)
        for f in 10.0 ** -np.arange(1, 9):
            eps = f * args.norm
            fd = (objective(integrate(u0 + up * eps, cfg), spec)
                  - objective(integrate(u0 - up * eps, cfg), spec)) / (2 * eps)
            print(f"{d},{eps:.3e},{fd:.12e},{pred:.12e},{fd / pred - 1:.3e}")


if __name__ == "__main__":
    main()
