"""Objectives, regularity time series, a priori bound curves and power-law fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralField, enstrophy, kinetic_energy, norm_lq


class UnsupportedBoundError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveSpec:
    """``phi``: time-averaged ``||u||_q^p`` with ``p = 2q/(q-3)``; ``psi``: ``||u(T)||_3^3``."""

    kind: str
    T: float
    q: float = 3.0

    def __post_init__(self):
        if self.kind not in ("phi", "psi"):
            raise ValueError(f"objective kind must be 'phi' or 'psi', got {self.kind!r}")
        if self.kind == "phi" and not self.q > 3:
            raise ValueError("phi requires q > 3")
        if self.kind == "psi" and self.q != 3:
            raise ValueError("psi is defined for q = 3 only")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def p(self) -> float:
        if self.kind == "psi":
            return 3.0
        return 2 * self.q / (self.q - 3)


# ------------------------------------------------------------------ objectives


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros(len(times))
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def lq_series(traj, q: float) -> np.ndarray:
    return np.array([norm_lq(u, q) for u in traj.states()])


def objective_phi(traj, q: float) -> float:
    if not q > 3:
        raise ValueError("phi requires q > 3")
    p = 2 * q / (q - 3)
    vals = lq_series(traj, q) ** p
    return float(np.dot(trapezoid_weights(traj.times), vals) / traj.T)


def objective_psi(traj) -> float:
    return norm_lq(traj.final, 3) ** 3


def objective(traj, spec: ObjectiveSpec) -> float:
    if spec.kind == "phi":
        return objective_phi(traj, spec.q)
    return objective_psi(traj)


def reynolds(u0: SpectralField, nu: float = 1.0) -> float:
    """Taylor-scale Reynolds number on the unit-volume box."""
    E = enstrophy(u0)
    if E <= 0:
        raise ZeroDivisionError("Reynolds number undefined for zero enstrophy")
    return math.sqrt(10.0 / 3.0) * kinetic_energy(u0) / (nu * math.sqrt(E))


# ----------------------------------------------------------------- time series


@dataclass
class TimeSeries:
    times: np.ndarray
    channels: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for name, v in self.channels.items():
            if len(v) != len(self.times):
                raise ValueError(f"channel {name!r} length does not match times")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def __setitem__(self, name: str, values) -> None:
        values = np.asarray(values, dtype=float)
        if len(values) != len(self.times):
            raise ValueError(f"channel {name!r} length does not match times")
        self.channels[name] = values


def regularity_series(traj, q_list=(3, 4, 5, 9)) -> TimeSeries:
    states = list(traj.states())
    ts = TimeSeries(np.asarray(traj.times))
    ts["K"] = [kinetic_energy(u) for u in states]
    ts["E"] = [enstrophy(u) for u in states]
    for q in q_list:
        ts[f"Lq{q:g}"] = [norm_lq(u, q) for u in states]
    return ts


def growth_rate_series(ts: TimeSeries, channel: str) -> TimeSeries:
    """Centred differences in the interior, one-sided at the ends."""
    if len(ts.times) < 3:
        raise ValueError("growth rate needs at least 3 samples")
    d = np.gradient(ts[channel], ts.times, edge_order=1)
    out = TimeSeries(ts.times.copy())
    out[f"d{channel}/dt"] = d
    return out


def delta_e(values) -> tuple[float, float]:
    """Enstrophy rise after the (earliest) global minimum, and that minimum."""
    e = np.asarray(values, dtype=float)
    if e.size == 0:
        raise ValueError("empty series")
    i = int(np.argmin(e))
    e_min = float(e[i])
    return float(np.max(e[i:]) - e_min), e_min


# --------------------------------------------------------------- a priori bounds


def enstrophy_rate_prefactor(nu: float = 1.0) -> float:
    return 27.0 / (8 * math.pi**4 * nu**3)


def enstrophy_blowup_time(E0: float, nu: float = 1.0) -> float:
    return 4 * math.pi**4 * nu**3 / (27 * E0**2)


def enstrophy_envelope(t, E0: float, nu: float = 1.0):
    """Upper bound on E(t) from integrating dE/dt <= C E^3; ``inf`` past the blow-up time."""
    t = np.asarray(t, dtype=float)
    arg = 1.0 - 27.0 / (4 * math.pi**4 * nu**3) * E0**2 * t
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(arg > 0, E0 / np.sqrt(np.where(arg > 0, arg, 1.0)), np.inf)


def lq_upper_exponent(q: float) -> float:
    if not q > 3:
        raise UnsupportedBoundError("no rate bound of the form C||u||_q^a is available for q <= 3")
    return 3 * (q - 1) / (q - 3)


def lq_lower_exponent(q: float) -> float:
    """Largest growth exponent that still rules out finite-time blow-up."""
    if q < 2:
        raise UnsupportedBoundError("bound requires q >= 2")
    if q <= 6:
        return (7 * q - 6) / (3 * (q - 2)) if q > 2 else math.inf
    return (2 * q - 3) / (q - 3)


def lq_blowup_time(norm0: float, q: float, C: float = 1.0) -> float:
    p = 2 * q / (q - 3)
    return 1.0 / (p * C * norm0**p)


@dataclass
class BoundCurves:
    q: float
    nu: float
    enstrophy_prefactor: float
    enstrophy_exponent: float
    enstrophy_dashed_exponent: float
    lq_lower: float
    lq_upper: float | None
    curves: dict[str, tuple[np.ndarray, np.ndarray]]


def bound_curves(q: float, nu: float = 1.0, lq_range=(1.0, 1e3), e_range=(1.0, 1e4), n: int = 64,
                 require_upper: bool = False) -> BoundCurves:
    """Reference curves for the phase planes ``(Y, dY/dt)`` with ``Y = ||u||_q`` or ``E``.

    The enstrophy bound carries its exact constant; L^q lines use unit prefactors.
    ``require_upper`` raises for q <= 3, where no upper rate bound exists.
    """
    if require_upper:
        lq_upper_exponent(q)
    upper = lq_upper_exponent(q) if q > 3 else None
    lower = lq_lower_exponent(q)
    C = enstrophy_rate_prefactor(nu)
    y = np.geomspace(*lq_range, n)
    e = np.geomspace(*e_range, n)
    curves = {
        "enstrophy_bound": (e, C * e**3),
        "enstrophy_E2": (e, e**2),
        "lq_lower": (y, y**lower),
    }
    if upper is not None:
        curves["lq_upper"] = (y, y**upper)
    return BoundCurves(q, nu, C, 3.0, 2.0, lower, upper, curves)


# ------------------------------------------------------------------- power laws


@dataclass(frozen=True)
class PowerLawFit:
    prefactor: float
    exponent: float
    residual: float

    def __call__(self, x):
        return self.prefactor * np.asarray(x, dtype=float) ** self.exponent


def fit_power_law(xs, ys) -> PowerLawFit:
    """Least-squares fit of ``y = C x^gamma`` in log-log coordinates."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 2 or len(x) != len(y):
        raise ValueError("need at least two (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit requires positive data")
    A = np.column_stack([np.ones_like(x), np.log(x)])
    coef, res, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    r = float(np.sqrt(res[0])) if res.size else float(np.linalg.norm(A @ coef - np.log(y)))
    return PowerLawFit(float(np.exp(coef[0])), float(coef[1]), r)


# ------------------------------------------------------- trajectory checks


def energy_balance_defect(traj, nu: float = 1.0) -> np.ndarray:
    """Per-step defect of ``dK/dt = -2 nu E`` in trapezoid form, relative to ``K(0)``."""
    states = list(traj.states())
    K = np.array([kinetic_energy(u) for u in states])
    E = np.array([enstrophy(u) for u in states])
    dt = np.diff(traj.times)
    defect = (K[1:] - K[:-1]) + nu * dt * (E[1:] + E[:-1])
    return np.abs(defect) / K[0] if K[0] > 0 else np.abs(defect)


def enstrophy_bound_ratio(ts: TimeSeries, nu: float = 1.0) -> float:
    """Largest ``(dE/dt) / (C E^3)`` over interior samples; at most 1 for a resolved flow."""
    rate = growth_rate_series(ts, "E")["dE/dt"][1:-1]
    E = ts["E"][1:-1]
    bound = enstrophy_rate_prefactor(nu) * E**3
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(bound > 0, rate / bound, -np.inf)
    return float(np.max(r)) if r.size else -np.inf


def phase_plane(ts: TimeSeries) -> TimeSeries:
    """Adds ``d<channel>/dt`` for every channel (one-sided at the ends)."""
    out = TimeSeries(ts.times.copy(), dict(ts.channels))
    for name in list(ts.channels):
        out[f"d{name}/dt"] = growth_rate_series(ts, name)[f"d{name}/dt"]
    return out


@dataclass
class TrajectorySummary:
    reynolds: float
    delta_e: float
    e_min: float
    phi: dict[str, float]
    psi: float
    max_lq: dict[str, float]
    bound_ratio: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def summarize(traj, q_list=(3, 4, 5, 9), nu: float = 1.0) -> tuple[TimeSeries, TrajectorySummary]:
    """Phase-plane series and scalar diagnostics of a trajectory."""
    ts = phase_plane(regularity_series(traj, q_list))
    dE, e_min = delta_e(ts["E"])
    w = trapezoid_weights(traj.times) / traj.T
    phi = {}
    for q in q_list:
        if q > 3:
            phi[f"{q:g}"] = float(np.dot(w, ts[f"Lq{q:g}"] ** (2 * q / (q - 3))))
    try:
        re = reynolds(traj.initial, nu)
    except ZeroDivisionError:
        re = float("nan")
    summary = TrajectorySummary(
        reynolds=re,
        delta_e=dE,
        e_min=e_min,
        phi=phi,
        psi=objective_psi(traj),
        max_lq={f"{q:g}": float(np.max(ts[f"Lq{q:g}"])) for q in q_list},
        bound_ratio=enstrophy_bound_ratio(ts, nu) if len(ts.times) >= 3 else float("nan"),
    )
    return ts, summary
