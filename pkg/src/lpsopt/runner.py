"""Configured sweeps over (B, T) grids with persisted, resumable results.

Output layout of a sweep rooted at ``out``::

    out/config.yaml            resolved configuration
    out/manifest.json          cell status, file hashes, config hash
    out/branch.csv             max over T of the objective for every B
    out/fit.json               power-law fit of the branch against B^p
    out/cells/b{i}_t{j}/       optimum.lpsf, iterations.csv, timeseries.csv, summary.json
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .diagnostics import TimeSeries, fit_power_law, summarize
from .fieldio import read_field, write_field
from .forward import SolverConfig, integrate, max_velocity
from .lift import DEFAULT_ELL
from .manifold import ManifoldSpec, optimize, problem_setup, random_guess, rescaled_guess
from .spectral import WavenumberGrid

log = logging.getLogger(__name__)

WORKERS_ENV = "LPSOPT_WORKERS"


class ConfigError(ValueError):
    pass


class ConfigMismatchError(ConfigError):
    pass


def fmt(x) -> str:
    """17 significant digits for floats, plain ``str`` otherwise."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ------------------------------------------------------------------ config


@dataclass
class RunConfig:
    """Sweep definition; loaded from YAML with the same field names."""

    problem: int
    q: float
    B: list[float]
    T: list[float]
    N: int = 16
    dt: float = 1e-4
    nu: float = 1.0
    ell: float = DEFAULT_ELL
    symbol: str = "printed"
    eps: float = 1e-6
    n_max: int = 100
    max_evals: int = 25
    seed: int = 0
    k0: float = 2.0
    warm_start: str = "T"
    q_list: list[float] = field(default_factory=lambda: [3.0, 4.0, 5.0, 9.0])
    output: str = "runs/sweep"
    workers: int = field(default_factory=lambda: int(os.environ.get(WORKERS_ENV, "1")))

    def __post_init__(self):
        if isinstance(self.B, (int, float)):
            self.B = [self.B]
        if isinstance(self.T, (int, float)):
            self.T = [self.T]
        self.B = [float(b) for b in self.B]
        self.T = [float(t) for t in self.T]
        self.q = float(self.q)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"problem", "q", "B", "T"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "RunConfig":
        data = yaml.safe_load(Path(path).read_text())
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    def with_overrides(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig.from_dict(d)

    def solver(self, T: float) -> SolverConfig:
        return SolverConfig(dt=self.dt, T=T, N=self.N, nu=self.nu)

    def setup(self, B: float, T: float):
        return problem_setup(self.problem, self.q, B, T, self.ell, self.symbol)

    def hash(self) -> str:
        """Hash of everything that affects results (output location and pool size excluded)."""
        d = self.to_dict()
        d.pop("output")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    derived: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_config(cfg: RunConfig) -> ValidationReport:
    rep = ValidationReport()
    e = rep.errors
    if cfg.problem not in (1, 2, 3, 4):
        e.append(f"problem must be 1-4, got {cfg.problem}")
    elif cfg.problem in (1, 2) and not cfg.q > 3:
        e.append(f"problem {cfg.problem} requires q > 3, got q = {cfg.q:g}")
    elif cfg.problem in (3, 4) and cfg.q != 3:
        e.append(f"problem {cfg.problem} is defined for q = 3 only, got q = {cfg.q:g}")
    if not cfg.B or any(not (b > 0 and math.isfinite(b)) for b in cfg.B):
        e.append("B values must be positive and finite")
    if not cfg.T or any(not (t > 0 and math.isfinite(t)) for t in cfg.T):
        e.append("T values must be positive and finite")
    if not cfg.dt > 0:
        e.append("dt must be positive")
    elif cfg.T and min(cfg.T) < cfg.dt:
        e.append("every T must be at least dt")
    if not cfg.nu > 0:
        e.append("nu must be positive")
    if cfg.N < 4 or cfg.N % 2:
        e.append(f"N must be an even integer >= 4, got {cfg.N}")
    if not (cfg.ell > 0 and math.isfinite(cfg.ell)):
        e.append("ell must be positive and finite")
    if cfg.symbol not in ("printed", "laplacian"):
        e.append(f"symbol must be 'printed' or 'laplacian', got {cfg.symbol!r}")
    if cfg.warm_start not in ("T", "none"):
        e.append(f"warm_start must be 'T' or 'none', got {cfg.warm_start!r}")
    if cfg.n_max < 1 or cfg.max_evals < 2:
        e.append("n_max must be >= 1 and max_evals >= 2")
    if cfg.workers < 1:
        e.append("workers must be >= 1")
    if rep.errors:
        return rep
    rep.derived["q"] = cfg.q
    rep.derived["p"] = 3.0 if cfg.problem in (3, 4) else 2 * cfg.q / (cfg.q - 3)
    if cfg.problem in (1, 3):
        rep.derived["s"] = 0.5 if cfg.q == 3 else 1.5 - 3.0 / cfg.q
    grid = WavenumberGrid(cfg.N)
    for i, B in enumerate(cfg.B):
        m, _ = cfg.setup(B, cfg.T[0])
        u = random_guess(grid, m, _cell_seed(cfg.seed, i), cfg.k0)
        cfl = max_velocity(u.coeffs, grid) * cfg.dt * cfg.N
        if cfl > 0.5:
            rep.warnings.append(f"B={B:g}: CFL advisory max|u| dt N = {cfl:.3f} exceeds 0.5")
    return rep


def load_config(path: str | Path, **overrides) -> RunConfig:
    """Read a YAML config and apply non-``None`` overrides."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


def _cell_seed(seed: int, b_index: int) -> int:
    return int(np.random.SeedSequence([seed, b_index]).generate_state(1)[0])


# ---------------------------------------------------------------- manifest


@dataclass
class CellRecord:
    key: str
    B: float
    T: float
    status: str = "pending"
    objective: float = float("nan")
    reason: str = ""
    files: dict[str, str] = field(default_factory=dict)
    error: str = ""


@dataclass
class RunManifest:
    root: str
    config_hash: str
    code_version: str
    cells: dict[str, CellRecord] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)

    @property
    def path(self) -> Path:
        return Path(self.root) / "manifest.json"

    def save(self) -> None:
        d = {
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "cells": {k: asdict(c) for k, c in self.cells.items()},
            "outputs": self.outputs,
        }
        write_json(self.path, d)

    @classmethod
    def load(cls, root: str | Path) -> "RunManifest":
        root = Path(root)
        if root.is_file():
            root = root.parent
        d = json.loads((root / "manifest.json").read_text())
        cells = {k: CellRecord(**c) for k, c in d["cells"].items()}
        return cls(str(root), d["config_hash"], d["code_version"], cells, d.get("outputs", {}))

    def complete(self) -> bool:
        return all(c.status == "completed" for c in self.cells.values())

    def verify_cell(self, key: str) -> bool:
        c = self.cells[key]
        if c.status != "completed":
            return False
        root = Path(self.root)
        return all((root / f).exists() and sha256(root / f) == h for f, h in c.files.items())


def cell_key(i: int, j: int) -> str:
    return f"b{i}_t{j}"


# ------------------------------------------------------------------- cells


CELL_FILES = ("optimum.lpsf", "iterations.csv", "timeseries.csv", "summary.json")
ITERATION_COLUMNS = ("n", "objective", "tau", "relative_change", "constraint_drift", "tangency",
                     "gradient_norm", "direction_norm", "evaluations", "stalled", "lift_residual")


def optimize_to_dir(cfg: RunConfig, B: float, T: float, out: Path, guess=None, seed: int | None = None):
    """Optimize at one ``(B, T)``, diagnose the optimum's trajectory and write the cell files.

    Starts from ``guess`` (rescaled onto the manifold) when given, otherwise
    from a random field drawn with ``seed``.  Returns the optimization report.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    m, spec = cfg.setup(B, T)
    solver = cfg.solver(T)
    if guess is not None:
        u0 = rescaled_guess(guess, m)
    else:
        u0 = random_guess(WavenumberGrid(cfg.N), m, cfg.seed if seed is None else seed, cfg.k0)
    report = optimize(u0, m, spec, solver, eps=cfg.eps, n_max=cfg.n_max, max_evals=cfg.max_evals)
    u = report.optimum
    write_field(out / "optimum.lpsf", u, 0.0)
    write_csv(out / "iterations.csv", list(ITERATION_COLUMNS),
              ([getattr(h, c) for c in ITERATION_COLUMNS] for h in report.history))
    ts, summary = summarize(integrate(u, solver), cfg.q_list, cfg.nu)
    write_timeseries(out / "timeseries.csv", ts)
    summ = summary.to_dict()
    summ.update({"objective": report.objective, "reason": report.reason, "B": B, "T": T,
                 "problem": cfg.problem, "q": m.q, "iterations": len(report.history) - 1})
    write_json(out / "summary.json", summ)
    return report


def run_cell(cfg: RunConfig, i: int, j: int, root: Path, warm=None):
    """Optimize cell ``(i, j)`` of the sweep grid; returns (record, optimum)."""
    B, T = cfg.B[i], cfg.T[j]
    key = cell_key(i, j)
    cdir = root / "cells" / key
    report = optimize_to_dir(cfg, B, T, cdir, guess=warm, seed=_cell_seed(cfg.seed, i))
    files = {f"cells/{key}/{n}": sha256(cdir / n) for n in CELL_FILES}
    rec = CellRecord(key, B, T, "completed", report.objective, report.reason, files)
    return rec, report.optimum


def write_timeseries(path: Path, ts: TimeSeries) -> None:
    names = list(ts.channels)
    rows = (
        [ts.times[k]] + [ts.channels[n][k] for n in names]
        for k in range(len(ts.times))
    )
    write_csv(path, ["t"] + names, rows)


def _objective_power(cfg: RunConfig) -> float:
    return 3.0 if cfg.problem in (3, 4) else 2 * cfg.q / (cfg.q - 3)


def write_branch(cfg: RunConfig, man: RunManifest) -> None:
    root = Path(man.root)
    p = _objective_power(cfg)
    rows = []
    for i, B in enumerate(cfg.B):
        done = [(man.cells[cell_key(i, j)].objective, T) for j, T in enumerate(cfg.T)
                if man.cells[cell_key(i, j)].status == "completed"]
        if done:
            best, Tbest = max(done)
            rows.append((B, B**p, Tbest, best))
    write_csv(root / "branch.csv", ["B", "B_p", "T_argmax", "max_objective"], rows)
    man.outputs["branch.csv"] = sha256(root / "branch.csv")
    if len(rows) >= 2 and all(r[3] > 0 for r in rows):
        fit = fit_power_law([r[1] for r in rows], [r[3] for r in rows])
        write_json(root / "fit.json", {"prefactor": fit.prefactor, "exponent": fit.exponent,
                                       "residual": fit.residual, "p": p})
        man.outputs["fit.json"] = sha256(root / "fit.json")


def _run_row(cfg: RunConfig, i: int, root: Path, todo: set[str]) -> list[CellRecord]:
    """Cells of one ``B`` in ascending ``T``, each warm-started from the previous optimum."""
    out = []
    warm = None
    for j, T in enumerate(cfg.T):
        key = cell_key(i, j)
        if key not in todo:
            opt = root / "cells" / key / "optimum.lpsf"
            warm = read_field(opt)[0] if cfg.warm_start == "T" and opt.exists() else None
            continue
        try:
            rec, u = run_cell(cfg, i, j, root, warm if cfg.warm_start == "T" else None)
            warm = u
        except Exception as exc:  # record and continue with the next cell
            log.error("cell %s failed: %s", key, exc)
            msg = "".join(traceback.format_exception_only(type(exc), exc)).strip()
            rec = CellRecord(key, cfg.B[i], T, "failed", error=msg)
            warm = None
        out.append(rec)
    return out


def _execute(cfg: RunConfig, man: RunManifest, todo: set[str]) -> RunManifest:
    root = Path(man.root)
    rows = [i for i in range(len(cfg.B)) if any(cell_key(i, j) in todo for j in range(len(cfg.T)))]

    def record(recs):
        for rec in recs:
            man.cells[rec.key] = rec
        man.save()

    if cfg.workers > 1 and len(rows) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(rows))) as pool:
            futures = [pool.submit(_run_row, cfg, i, root, todo) for i in rows]
            for fut in futures:
                record(fut.result())
    else:
        for i in rows:
            record(_run_row(cfg, i, root, todo))
    write_branch(cfg, man)
    man.save()
    return man


def run_sweep(cfg: RunConfig, root: str | Path | None = None) -> RunManifest:
    """Optimize every (B, T) cell, warm-starting along ascending T within each B."""
    rep = validate_config(cfg)
    if not rep.ok:
        raise ConfigError("; ".join(rep.errors))
    for w in rep.warnings:
        log.warning(w)
    root = Path(root or cfg.output)
    root.mkdir(parents=True, exist_ok=True)
    order = np.argsort(cfg.T, kind="stable")
    cfg = cfg.with_overrides(T=[cfg.T[k] for k in order])
    cfg.to_yaml(root / "config.yaml")
    man = RunManifest(str(root), cfg.hash(), __version__)
    for i, B in enumerate(cfg.B):
        for j, T in enumerate(cfg.T):
            man.cells[cell_key(i, j)] = CellRecord(cell_key(i, j), B, T)
    man.save()
    return _execute(cfg, man, set(man.cells))


def resume(root: str | Path, cfg: RunConfig | None = None) -> RunManifest:
    """Re-run only the cells that are missing, failed, or whose files no longer match."""
    man = RunManifest.load(root)
    stored = load_config(Path(man.root) / "config.yaml", workers=cfg.workers if cfg else None)
    if cfg is not None:
        order = np.argsort(cfg.T, kind="stable")
        cfg = cfg.with_overrides(T=[cfg.T[k] for k in order])
        if cfg.hash() != man.config_hash:
            raise ConfigMismatchError("configuration differs from the one recorded in the manifest")
    if stored.hash() != man.config_hash:
        raise ConfigMismatchError("stored config.yaml does not match the manifest hash")
    todo = {k for k in man.cells if not man.verify_cell(k)}
    if not todo:
        return man
    return _execute(stored, man, todo)
