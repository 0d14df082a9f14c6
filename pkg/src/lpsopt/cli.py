"""Command-line entry point: ``lpsopt <subcommand> ...``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
divergence, 4 file I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import solve_adjoint
from .diagnostics import ObjectiveSpec, bound_curves, energy_balance_defect, objective, summarize
from .fieldio import FieldFileError, read_field, write_field
from .forward import DivergedError, SolverConfig, integrate
from .lift import DEFAULT_ELL, SobolevLift, lebesgue_gradient, sobolev_gradient
from .manifold import ManifoldSpec, project_tangent
from .runner import (
    ConfigError,
    RunConfig,
    fmt,
    load_config,
    optimize_to_dir,
    resume,
    run_sweep,
    validate_config,
    write_csv,
    write_json,
    write_timeseries,
)
from .spectral import divergence_residual, norm_lq

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
INDEX = "index.json"

log = logging.getLogger("lpsopt")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


# ------------------------------------------------------------- trajectories


def _solver_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--dt", type=float, required=required)
    p.add_argument("--T", type=float, required=required)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--N", type=int, help="lattice size (must match the initial field)")


def _load_trajectory(args):
    """Recompute a trajectory from ``--traj DIR`` or from ``--init`` plus solver flags."""
    if getattr(args, "traj", None):
        root = Path(args.traj)
        idx = json.loads((root / INDEX).read_text())
        u0, _ = read_field(root / idx["init"])
        cfg = SolverConfig(**idx["solver"])
        return integrate(u0, cfg)
    if not args.init or args.dt is None or args.T is None:
        raise ConfigError("give --traj DIR, or --init FILE with --dt and --T")
    u0, _ = read_field(args.init)
    if args.N is not None and args.N != u0.grid.N:
        raise ConfigError(f"--N {args.N} does not match field lattice N={u0.grid.N}")
    return integrate(u0, SolverConfig(dt=args.dt, T=args.T, N=u0.grid.N, nu=args.nu))


def cmd_forward(args) -> int:
    traj = _load_trajectory(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "u0.lpsf", traj.initial, 0.0)
    n = traj.n_steps
    steps = set(range(0, n + 1, args.save_every)) if args.save_every else set()
    steps |= {0, n}
    fields = []
    for i in sorted(steps):
        name = f"u_{i:06d}.lpsf"
        write_field(out / name, traj.state(i), float(traj.times[i]))
        fields.append({"step": i, "t": float(traj.times[i]), "file": name})
    ts, _ = summarize(traj, args.q_list, traj.config.nu)
    channels = ["K", "E"] + [f"Lq{q:g}" for q in args.q_list]
    write_csv(out / "timeseries.csv", ["t"] + channels,
              ([ts.times[k]] + [ts[c][k] for c in channels] for k in range(len(ts.times))))
    write_json(out / INDEX, {
        "version": __version__,
        "solver": traj.config.to_dict(),
        "init": "u0.lpsf",
        "fields": fields,
        "timeseries": "timeseries.csv",
        "q_list": list(args.q_list),
        "max_tail_fraction": float(np.max(traj.tail_fraction)),
    })
    return EXIT_OK


def _objective_spec(args, T: float) -> ObjectiveSpec:
    return ObjectiveSpec(args.objective, T, 3.0 if args.objective == "psi" else args.q)


def cmd_gradient(args) -> int:
    traj = _load_trajectory(args)
    spec = _objective_spec(args, traj.T)
    g = solve_adjoint(traj, spec)
    write_field(args.out, g, 0.0)
    _emit({"objective": objective(traj, spec), "gradient_l2_sq": norm_lq(g, 2) ** 2,
           "divergence_residual": divergence_residual(g), "out": str(args.out)})
    return EXIT_OK


def cmd_lift(args) -> int:
    gL2, _ = read_field(args.grad)
    info: dict = {"space": args.space}
    if args.space == "sobolev":
        lift = SobolevLift(args.s, args.ell, args.symbol) if args.s is not None else SobolevLift.for_q(
            args.q, args.ell, args.symbol)
        g = sobolev_gradient(gL2, lift)
        info["s"] = lift.s
    else:
        sol = lebesgue_gradient(gL2, args.q, tol=args.tol)
        g = sol.g
        info.update(mu=sol.mu, iterations=sol.iterations, converged=sol.converged, residuals=sol.residuals)
    if args.base:
        base, _ = read_field(args.base)
        m = ManifoldSpec(args.space, args.q, norm_lq(base, args.q), args.ell, args.symbol)
        g = project_tangent(g, base, m)
        info["projected"] = True
    write_field(args.out, g, 0.0)
    _emit(info)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    traj = _load_trajectory(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ts, summary = summarize(traj, args.q_list, traj.config.nu)
    write_timeseries(out / "timeseries.csv", ts)
    defect = energy_balance_defect(traj, traj.config.nu)
    d = summary.to_dict()
    d["energy_balance_defect"] = float(np.max(defect)) if defect.size else 0.0
    d["max_tail_fraction"] = float(np.max(traj.tail_fraction))
    write_json(out / "summary.json", d)
    e_range = _positive_range(ts["E"])
    for q in args.q_list:
        bc = bound_curves(q, traj.config.nu, lq_range=_positive_range(ts[f"Lq{q:g}"]), e_range=e_range)
        names = sorted(bc.curves)
        cols = [c for name in names for c in (f"{name}_x", f"{name}_y")]
        n = len(bc.curves[names[0]][0])
        write_csv(out / f"bounds_q{q:g}.csv", cols,
                  ([bc.curves[name][a][k] for name in names for a in (0, 1)] for k in range(n)))
    _emit(d)
    return EXIT_OK


def _positive_range(values) -> tuple[float, float]:
    v = np.asarray(values)
    v = v[v > 0]
    if v.size == 0:
        return (1.0, 10.0)
    lo, hi = float(v.min()), float(v.max())
    return (lo, hi) if hi > lo else (lo, 10 * lo)


# ------------------------------------------------------------ optimization


def _config_from_args(args) -> RunConfig:
    over = {
        "problem": args.problem, "q": args.q, "B": args.B, "T": args.T, "N": args.N, "dt": args.dt,
        "nu": args.nu, "ell": args.ell, "symbol": args.symbol, "eps": args.eps, "n_max": args.n_max,
        "max_evals": args.max_evals, "seed": args.seed, "output": args.out,
        "workers": getattr(args, "workers", None),
    }
    if args.config:
        return load_config(args.config, **over)
    return RunConfig.from_dict({k: v for k, v in over.items() if v is not None})


def _validated(cfg: RunConfig) -> RunConfig:
    rep = validate_config(cfg)
    for w in rep.warnings:
        log.warning(w)
    if not rep.ok:
        raise ConfigError("; ".join(rep.errors))
    return cfg


def cmd_optimize(args) -> int:
    cfg = _validated(_config_from_args(args))
    guess, seed = None, None
    if args.guess and args.guess.startswith("random:"):
        seed = int(args.guess.split(":", 1)[1])
    elif args.guess:
        guess = read_field(args.guess)[0]
    report = optimize_to_dir(cfg, cfg.B[0], cfg.T[0], Path(cfg.output), guess=guess, seed=seed)
    _emit({"objective": report.objective, "reason": report.reason,
           "iterations": len(report.history) - 1, "out": cfg.output})
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _validated(_config_from_args(args))
    man = run_sweep(cfg)
    failed = [k for k, c in man.cells.items() if c.status != "completed"]
    _emit({"root": man.root, "cells": len(man.cells), "failed": failed})
    return EXIT_OK


def cmd_validate(args) -> int:
    rep = validate_config(_config_from_args(args))
    _emit({"ok": rep.ok, "errors": rep.errors, "warnings": rep.warnings,
           "derived": {k: fmt(v) for k, v in rep.derived.items()}})
    return EXIT_OK if rep.ok else EXIT_VALIDATION


def cmd_resume(args) -> int:
    cfg = load_config(args.config) if args.config else None
    man = resume(args.manifest, cfg)
    failed = [k for k, c in man.cells.items() if c.status != "completed"]
    _emit({"root": man.root, "cells": len(man.cells), "failed": failed})
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration; flags below override it")
    p.add_argument("--problem", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--q", type=float)
    p.add_argument("--B", type=_floats, help="comma-separated constraint levels")
    p.add_argument("--T", type=_floats, help="comma-separated time windows")
    p.add_argument("--N", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--ell", type=float)
    p.add_argument("--symbol", choices=("printed", "laplacian"))
    p.add_argument("--eps", type=float)
    p.add_argument("--n-max", "--nmax", dest="n_max", type=int)
    p.add_argument("--max-evals", dest="max_evals", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpsopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="integrate from an initial field")
    p.add_argument("--init", required=True)
    _solver_args(p)
    p.add_argument("--q-list", type=_floats, default=[3.0, 4.0, 5.0, 9.0])
    p.add_argument("--save-every", type=int, default=0, help="also write every k-th state (0: ends only)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forward, traj=None)

    p = sub.add_parser("gradient", help="L2 gradient of an objective by the adjoint method")
    p.add_argument("--traj", help="directory written by 'forward'")
    p.add_argument("--init")
    _solver_args(p, required=False)
    p.add_argument("--objective", choices=("phi", "psi"), required=True)
    p.add_argument("--q", type=float, default=4.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gradient)

    p = sub.add_parser("lift", help="Sobolev or Lebesgue gradient from an L2 gradient")
    p.add_argument("--grad", required=True)
    p.add_argument("--space", choices=("sobolev", "lebesgue"), required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--s", type=float, help="Sobolev index (default: derived from q)")
    p.add_argument("--ell", type=float, default=DEFAULT_ELL)
    p.add_argument("--symbol", choices=("printed", "laplacian"), default="printed")
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--base", help="project onto the tangent space at this field")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("optimize", help="maximize one (problem, q, B, T) objective")
    _config_args(p)
    p.add_argument("--guess", help="starting field file, or random:<seed> (default: random:<config seed>)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("diagnose", help="regularity diagnostics of a trajectory")
    p.add_argument("--traj")
    p.add_argument("--init")
    _solver_args(p, required=False)
    p.add_argument("--q-list", type=_floats, default=[3.0, 4.0, 5.0, 9.0])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sweep", help="optimize over a (B, T) grid")
    _config_args(p)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a run configuration")
    _config_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("resume", help="re-run missing or failed sweep cells")
    p.add_argument("--manifest", required=True, help="sweep directory or its manifest.json")
    p.add_argument("--config", help="fail unless this config matches the recorded one")
    p.set_defaults(func=cmd_resume)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DivergedError as exc:
        log.error("numerical divergence: %s", exc)
        return EXIT_DIVERGED
    except (FieldFileError, OSError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ConfigError, ValueError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
