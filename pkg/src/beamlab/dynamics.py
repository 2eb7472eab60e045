"""Implicit-midpoint time stepping with an exact discrete energy balance, and
power-law fits of energy traces."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .discretization import (
    LAGRANGE_FIELDS,
    SemiDiscreteSystem,
    StateVector,
    energy,
    interpolate,
)


class StepError(RuntimeError):
    def __init__(self, msg: str, residual: float | None = None):
        super().__init__(msg if residual is None else f"{msg} (residual {residual:.3e})")
        self.residual = residual


class FitError(ValueError):
    pass


class _MidpointSolver:
    """Factorization of M + dt/2 D + dt^2/4 K.

    Eliminating q+ from (I - dt/2 A) U+ = (I + dt/2 A) U leaves an SPD
    system for p+, so one Cholesky factor per (system, dt) suffices.
    """

    def __init__(self, sys: SemiDiscreteSystem, dt: float):
        self.sys = sys
        self.dt = dt
        h = 0.5 * dt
        lhs = sys.M + h * sys.D + h * h * sys.K
        try:
            self.factor = sla.cho_factor(lhs, lower=True)
        except np.linalg.LinAlgError as exc:
            raise StepError(f"midpoint matrix not positive definite at dt={dt}") from exc

    def step(self, q: np.ndarray, p: np.ndarray):
        sys, h = self.sys, 0.5 * self.dt
        Kq = sys.K @ q
        rhs = sys.M @ p - h * (sys.D @ p) - h * h * (sys.K @ p) - 2 * h * Kq
        p_new = sla.cho_solve(self.factor, rhs)
        q_new = q + h * (p + p_new)
        return q_new, p_new

    def residual(self, q, p, q_new, p_new) -> float:
        """Relative residual of the midpoint equations in their M-scaled form."""
        sys, dt = self.sys, self.dt
        qm, pm = 0.5 * (q + q_new), 0.5 * (p + p_new)
        r1 = q_new - q - dt * pm
        r2 = sys.M @ (p_new - p) + dt * (sys.K @ qm + sys.D @ pm)
        scale = np.linalg.norm(sys.M @ p) + dt * np.linalg.norm(sys.K @ q) + np.linalg.norm(q) + 1e-300
        return float((np.linalg.norm(r1) + np.linalg.norm(r2)) / scale)


_SOLVERS: dict = {}


def _solver(sys: SemiDiscreteSystem, dt: float) -> _MidpointSolver:
    key = (id(sys), float(dt))
    cached = _SOLVERS.get(key)
    if cached is None or cached.sys is not sys:
        if len(_SOLVERS) > 16:
            _SOLVERS.clear()
        cached = _SOLVERS[key] = _MidpointSolver(sys, dt)
    return cached


def step_implicit_midpoint(sys: SemiDiscreteSystem, U: StateVector, dt: float) -> StateVector:
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive, got {dt!r}")
    sys.check_state(U)
    solver = _solver(sys, dt)
    q_new, p_new = solver.step(U.q, U.p)
    res = solver.residual(U.q, U.p, q_new, p_new)
    if not np.isfinite(res) or res > 1e-8:
        raise StepError("implicit midpoint solve failed", res)
    return StateVector(q_new, p_new)


@dataclass
class EnergyTrace:
    times: np.ndarray
    energies: np.ndarray
    dissipation_integral: np.ndarray

    @property
    def balance_residual(self) -> float:
        """|E(0) - E(T) - int D| relative to E(0)."""
        drop = self.energies[0] - self.energies[-1]
        return abs(drop - self.dissipation_integral[-1]) / self.energies[0]

    @property
    def drift(self) -> float:
        return abs(self.energies[-1] / self.energies[0] - 1.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "energy", "cumulative_dissipation"])
        for t, e, d in zip(self.times, self.energies, self.dissipation_integral):
            w.writerow([f"{t:.17g}", f"{e:.17g}", f"{d:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EnergyTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        col = lambda k: np.array([float(r[k]) for r in rows])
        return cls(col("t"), col("energy"), col("cumulative_dissipation"))


def simulate(sys: SemiDiscreteSystem, U0: StateVector, dt: float, t_final: float) -> EnergyTrace:
    """Integrate from ``U0`` with fixed step ``dt`` up to ``t_final``.

    The step count is ``round(t_final / dt)``; energies are recorded at every
    step and the dissipation integral uses the midpoint states, so the
    discrete balance is exact up to solver roundoff.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive, got {dt!r}")
    if not t_final >= dt:
        raise ValueError(f"t_final must be >= dt, got t_final={t_final!r}, dt={dt!r}")
    sys.check_state(U0)
    n_steps = max(1, int(round(t_final / dt)))
    solver = _solver(sys, dt)
    energies = np.empty(n_steps + 1)
    diss = np.empty(n_steps + 1)
    q, p = U0.q.astype(float), U0.p.astype(float)
    energies[0] = energy(sys, U0)
    diss[0] = 0.0
    acc = 0.0
    for k in range(n_steps):
        q_new, p_new = solver.step(q, p)
        if k == 0:
            res = solver.residual(q, p, q_new, p_new)
            if not np.isfinite(res) or res > 1e-8:
                raise StepError("implicit midpoint solve failed", res)
        pm = 0.5 * (p + p_new)
        acc += dt * float(pm @ (sys.D @ pm))
        q, p = q_new, p_new
        energies[k + 1] = 0.5 * float(p @ (sys.M @ p) + q @ (sys.K @ q))
        diss[k + 1] = acc
        if not math.isfinite(energies[k + 1]):
            raise StepError(f"non-finite energy at step {k + 1}")
    times = dt * np.arange(n_steps + 1)
    return EnergyTrace(times, energies, diss)


def final_state(sys: SemiDiscreteSystem, U0: StateVector, dt: float, n_steps: int) -> StateVector:
    solver = _solver(sys, dt)
    q, p = U0.q.astype(float), U0.p.astype(float)
    for _ in range(n_steps):
        q, p = solver.step(q, p)
    return StateVector(q, p)


@dataclass(frozen=True)
class DecayFit:
    window: tuple[float, float]
    alpha: float
    c: float
    r2: float
    n_samples: int

    def to_dict(self) -> dict:
        return {"window": list(self.window), "alpha": self.alpha, "c": self.c,
                "r2": self.r2, "n_samples": self.n_samples}


def default_window(t_final: float) -> tuple[float, float]:
    return 0.05 * t_final, 0.6 * t_final


def fit_decay(trace: EnergyTrace, window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares fit of ``E(t) ~ c * t**(-alpha)`` on a log-log scale."""
    if window is None:
        window = default_window(trace.times[-1])
    t_lo, t_hi = map(float, window)
    if not (0 < t_lo < t_hi):
        raise FitError(f"window must satisfy 0 < t_lo < t_hi, got {window}")
    sel = (trace.times >= t_lo) & (trace.times <= t_hi)
    t, e = trace.times[sel], trace.energies[sel]
    if t.size < 10:
        raise FitError(f"window {window} holds {t.size} samples, need at least 10")
    if np.any(e <= 0):
        raise FitError("energies in the fit window must be positive")
    x, y = np.log(t), np.log(e)
    slope, intercept = np.polyfit(x, y, 1)
    yhat = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - yhat) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit((t_lo, t_hi), float(-slope), float(math.exp(intercept)), r2, int(t.size))


def random_initial(sys: SemiDiscreteSystem, seed: int, smoothness: int = 3) -> StateVector:
    """Random combination of the ``smoothness`` lowest modes in every field.

    Longitudinal/shear fields use ``sin(k pi x / L)``; the clamped transverse
    field uses ``sin(pi x / L) sin(k pi x / L)``, which has zero value and
    slope at both ends. Coefficients are N(0, 1) / k, positions and
    velocities drawn independently.
    """
    if not (isinstance(smoothness, (int, np.integer)) and smoothness >= 1):
        raise ValueError(f"smoothness must be an integer >= 1, got {smoothness!r}")
    rng = np.random.default_rng(seed)
    L = sys.mesh.L
    ks = np.arange(1, smoothness + 1)

    def draw() -> dict:
        out = {}
        for f in LAGRANGE_FIELDS:
            cf = rng.standard_normal(smoothness) / ks
            out[f] = (lambda x, cf=cf: np.sin(np.outer(np.asarray(x), ks) * np.pi / L) @ cf)
        cw = rng.standard_normal(smoothness) / ks

        def w(x, cw=cw):
            x = np.asarray(x)
            return np.sin(np.pi * x / L) * (np.sin(np.outer(x, ks) * np.pi / L) @ cw)

        def w_x(x, cw=cw):
            x = np.asarray(x)
            s = np.sin(np.outer(x, ks) * np.pi / L) @ cw
            ds = (np.cos(np.outer(x, ks) * np.pi / L) * (ks * np.pi / L)) @ cw
            return (np.pi / L) * np.cos(np.pi * x / L) * s + np.sin(np.pi * x / L) * ds

        out["w"], out["w_x"] = w, w_x
        return out

    return interpolate(sys, draw(), draw())


def mode_state(sys: SemiDiscreteSystem, mode) -> StateVector:
    """Real initial state of a closed-form mode at t = 0 (positions only)."""
    return interpolate(sys, mode.functions())

