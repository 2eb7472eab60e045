"""Spectrum of the discrete generator, closed-form mode residuals and
resolvent-norm sweeps along the imaginary axis.

All norms are energy norms. With E_gram = R^T R the generator is carried to
``S = R A R^-1`` (see ``SemiDiscreteSystem.energy_similar_generator``), whose
Euclidean operator norms equal energy-norm operator norms of A.
"""

from __future__ import annotations

import math
import os
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .discretization import SemiDiscreteSystem, StateVector, apply_generator, interpolate
from .model import ClosedFormMode

DENSE_CAP = 4000
TOL_AXIS = 1e-8
SVD_FALLBACK_DIM = 1500
# a shift is numerically singular once sigma_min drops to this multiple of eps * ||S||
POLE_EPS_FACTOR = 64.0

SWEEP_CAVEAT = (
    "Exponents are fitted on a finite-dimensional truncation: they support "
    "ordering and finiteness statements only, not the asymptotic decay order."
)


class SpectralError(RuntimeError):
    pass


class SizeError(SpectralError):
    pass


class SolverError(SpectralError):
    pass


class PoleError(SpectralError):
    def __init__(self, lam: float, nearest: complex, sigma_min: float | None = None):
        self.lam = lam
        self.nearest = nearest
        self.sigma_min = sigma_min
        super().__init__(
            f"shift i*{lam!r} is numerically singular; nearest eigenvalue "
            f"{nearest.real!r}{nearest.imag:+}j"
        )


class DegenerateModeError(ValueError):
    pass


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    spectral_abscissa: float
    imaginary_axis_eigs: np.ndarray
    tol_axis: float
    tol_axis_abs: float
    config: dict = field(default_factory=dict)
    damping: dict = field(default_factory=dict)

    @property
    def max_modulus(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def nearest(self, z: complex) -> complex:
        return complex(self.eigenvalues[np.argmin(np.abs(self.eigenvalues - z))])

    def to_csv(self) -> str:
        lines = ["re,im"]
        lines += [f"{repr(float(z.real))},{repr(float(z.imag))}" for z in self.eigenvalues]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        axis = self.imaginary_axis_eigs
        return {
            "n_eigenvalues": int(self.eigenvalues.size),
            "spectral_abscissa": self.spectral_abscissa,
            "max_modulus": self.max_modulus,
            "tol_axis": self.tol_axis,
            "tol_axis_abs": self.tol_axis_abs,
            "n_imaginary_axis": int(axis.size),
            "imaginary_axis_eigs": [[float(z.real), float(z.imag)] for z in axis],
            "config": self.config,
            "damping": self.damping,
        }


def _sort_conjugate_pairs(ev: np.ndarray) -> np.ndarray:
    """Order by imaginary part magnitude, then sign, with exact conjugate
    pairing enforced (the generator is real)."""
    upper = ev[ev.imag > 0]
    real = ev[ev.imag == 0].real
    order = np.lexsort((upper.real, upper.imag))
    upper = upper[order]
    paired = np.empty(2 * upper.size, dtype=complex)
    paired[0::2] = upper
    paired[1::2] = upper.conj()
    return np.concatenate([np.sort(real).astype(complex), paired])


def full_spectrum(sys: SemiDiscreteSystem, tol_axis: float = TOL_AXIS, method: str = "energy",
                  cap: int = DENSE_CAP) -> SpectrumReport:
    """All eigenvalues of the discrete generator.

    ``method="energy"`` (default) diagonalizes the energy-similar generator,
    which is a skew matrix plus a symmetric damping block, so undamped
    spectra come out on the axis to roundoff. ``method="pencil"`` solves the
    generalized problem [[0, I], [-K, -D]] x = lam [[I, 0], [0, M]] x.
    """
    n = sys.n_state
    if n > cap:
        raise SizeError(f"state dimension {n} exceeds dense cap {cap}; use fewer elements")
    try:
        if method == "energy":
            ev = sla.eigvals(sys.energy_similar_generator)
        elif method == "pencil":
            nq = sys.n_q
            A = np.zeros((n, n))
            A[:nq, nq:] = np.eye(nq)
            A[nq:, :nq] = -sys.K
            A[nq:, nq:] = -sys.D
            B = sla.block_diag(np.eye(nq), sys.M)
            ev = sla.eigvals(A, B)
        else:
            raise ValueError(f"unknown method {method!r}")
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise SolverError("eigensolver returned non-finite eigenvalues")
    ev = _sort_conjugate_pairs(ev)
    tol_abs = tol_axis * float(np.max(np.abs(ev)))
    axis = ev[np.abs(ev.real) < tol_abs]
    return SpectrumReport(
        eigenvalues=ev,
        spectral_abscissa=float(np.max(ev.real)),
        imaginary_axis_eigs=axis,
        tol_axis=tol_axis,
        tol_axis_abs=tol_abs,
        config=sys.config.to_dict(),
        damping=sys.damping.to_dict(),
    )


def mode_residual(sys: SemiDiscreteSystem, mode: ClosedFormMode) -> float:
    """Relative energy-norm residual of ``(i lam - A_h)`` on the interpolated mode.

    With positions ``q`` the complex state is ``x + i y`` where ``x = (q, 0)``
    and ``y = (0, lam q)``; the residual is formed from the real pair
    ``A x + lam y`` and ``A y - lam x``.
    """
    if not math.isclose(mode.L, sys.mesh.L, rel_tol=1e-14):
        raise ValueError(f"mode length {mode.L} does not match mesh length {sys.mesh.L}")
    q = interpolate(sys, mode.functions()).q
    lam = mode.lam
    zero = np.zeros_like(q)
    x = StateVector(q, zero)
    y = StateVector(zero, lam * q)
    norm2 = lambda U: float(U.q @ (sys.K @ U.q) + U.p @ (sys.M @ U.p))
    den = norm2(x) + norm2(y)
    amp = max(abs(v) for v in mode.field_profiles.values())
    if np.max(np.abs(q), initial=0.0) <= 1e-12 * amp:
        raise DegenerateModeError(f"{mode.theorem} n={mode.n} interpolates to the zero state")
    rx = apply_generator(sys, x) + lam * y
    ry = apply_generator(sys, y) - lam * x
    return math.sqrt((norm2(rx) + norm2(ry)) / den)


class _ShiftedOperator:
    """Complex Schur form ``S = Z T Z^H``; ``sigma_min(i lam - S)`` equals
    ``sigma_min(i lam - T)`` and each inverse application costs two
    triangular solves."""

    def __init__(self, sys: SemiDiscreteSystem):
        S = sys.energy_similar_generator
        self.S = S
        self.norm = float(np.linalg.norm(S, 2))
        try:
            self.T, _ = sla.schur(S.astype(complex), output="complex")
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"Schur decomposition failed: {exc}") from exc
        self.eigenvalues = np.diag(self.T).copy()
        self.pole_tol = POLE_EPS_FACTOR * np.finfo(float).eps * self.norm

    def nearest(self, z: complex) -> complex:
        return complex(self.eigenvalues[np.argmin(np.abs(self.eigenvalues - z))])

    def sigma_min_iterative(self, lam: float) -> float:
        n = self.T.shape[0]
        B = -self.T
        B[np.diag_indices(n)] += 1j * lam
        if np.min(np.abs(np.diag(B))) == 0.0:
            return 0.0

        def matvec(v):
            w = sla.solve_triangular(B, v, trans="C", check_finite=False)
            return sla.solve_triangular(B, w, check_finite=False)

        op = LinearOperator((n, n), matvec=matvec, dtype=complex)
        v0 = np.ones(n, dtype=complex) / math.sqrt(n)
        mu = eigsh(op, k=1, which="LM", tol=1e-12, v0=v0, return_eigenvectors=False)
        mu = float(np.max(mu.real))
        if not math.isfinite(mu) or mu <= 0:
            return 0.0
        return 1.0 / math.sqrt(mu)

    def sigma_min_dense(self, lam: float) -> float:
        n = self.S.shape[0]
        B = 1j * lam * np.eye(n) - self.S
        return float(sla.svdvals(B)[-1])

    def sigma_min(self, lam: float, method: str = "auto") -> float:
        if method == "svd":
            return self.sigma_min_dense(lam)
        try:
            return self.sigma_min_iterative(lam)
        except ArpackNoConvergence:
            if method == "auto" and self.S.shape[0] < SVD_FALLBACK_DIM:
                return self.sigma_min_dense(lam)
            raise SolverError(f"inverse iteration did not converge at lambda={lam!r}")


_SHIFT_CACHE: "weakref.WeakKeyDictionary[SemiDiscreteSystem, _ShiftedOperator]" = (
    weakref.WeakKeyDictionary()
)


def _shifted(sys: SemiDiscreteSystem) -> _ShiftedOperator:
    op = _SHIFT_CACHE.get(sys)
    if op is None:
        if sys.n_state > DENSE_CAP:
            raise SizeError(f"state dimension {sys.n_state} exceeds dense cap {DENSE_CAP}")
        op = _SHIFT_CACHE[sys] = _ShiftedOperator(sys)
    return op


def resolvent_norm(sys: SemiDiscreteSystem, lam: float, method: str = "auto") -> float:
    """Energy-norm ``||(i lam - A_h)^-1||`` as ``1 / sigma_min(i lam - S)``.

    Raises :class:`PoleError` (with the nearest eigenvalue) when the shift
    is singular to working precision.
    """
    op = _shifted(sys)
    smin = op.sigma_min(float(lam), method)
    if not smin > op.pole_tol:
        raise PoleError(float(lam), op.nearest(1j * lam), smin)
    return 1.0 / smin


@dataclass
class ResolventSweep:
    lambdas: np.ndarray
    norms: np.ndarray
    envelope: np.ndarray
    resonance: np.ndarray
    band: tuple[float, float]
    fitted_exponent: float
    intercept: float
    r2: float
    pointwise_exponent: float
    pointwise_r2: float
    spacing: str
    n_points: int
    pole_tol: float
    config: dict = field(default_factory=dict)
    damping: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["lambda,norm"]
        lines += [f"{repr(float(l))},{repr(float(r))}" for l, r in zip(self.lambdas, self.norms)]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "lambda_min": float(self.lambdas[0]),
            "lambda_max": float(self.lambdas[-1]),
            "spacing": self.spacing,
            "n_points": self.n_points,
            "n_evaluated": int(self.lambdas.size),
            "n_resonance_points": int(np.count_nonzero(self.resonance)),
            "band": list(self.band),
            "fitted_exponent": self.fitted_exponent,
            "intercept": self.intercept,
            "r2": self.r2,
            "pointwise_exponent": self.pointwise_exponent,
            "pointwise_r2": self.pointwise_r2,
            "max_norm": float(np.max(self.norms)),
            "pole_tol": self.pole_tol,
            "caveat": SWEEP_CAVEAT,
            "config": self.config,
            "damping": self.damping,
        }


def _loglog_fit(x: np.ndarray, y: np.ndarray):
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum((ly - (slope * lx + intercept)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def _n_workers(n_tasks: int) -> int:
    raw = os.environ.get("BEAMLAB_THREADS", "")
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        cap = 1
    return max(1, min(cap, n_tasks))


def resolvent_sweep(sys: SemiDiscreteSystem, lambda_min: float, lambda_max: float,
                    n_points: int = 64, spacing: str = "log", resonances: bool = True,
                    method: str = "auto") -> ResolventSweep:
    """Resolvent norms along ``i [lambda_min, lambda_max]`` and their growth exponent.

    The grid is ``n_points`` linear or log spaced shifts, refined (when
    ``resonances``) with the imaginary parts of all discrete eigenvalues in
    the range, where the norm peaks. The growth exponent is the log-log
    slope of the running supremum ``sup_{lambda_min <= s <= lambda} ||R(i s)||``
    over the central band ``[2 lambda_min, lambda_max / 2]``; the plain
    pointwise slope is reported alongside.
    """
    if not (0 < lambda_min < lambda_max):
        raise ValueError(f"need 0 < lambda_min < lambda_max, got {lambda_min!r}, {lambda_max!r}")
    if not (isinstance(n_points, (int, np.integer)) and n_points >= 8):
        raise ValueError(f"n_points must be an integer >= 8, got {n_points!r}")
    if spacing == "log":
        grid = np.geomspace(lambda_min, lambda_max, n_points)
    elif spacing == "linear":
        grid = np.linspace(lambda_min, lambda_max, n_points)
    else:
        raise ValueError(f"spacing must be 'linear' or 'log', got {spacing!r}")
    op = _shifted(sys)
    is_res = np.zeros(grid.size, dtype=bool)
    if resonances:
        im = op.eigenvalues.imag
        extra = np.unique(im[(im > lambda_min) & (im < lambda_max)])
        grid = np.concatenate([grid, extra])
        is_res = np.concatenate([is_res, np.ones(extra.size, dtype=bool)])
        order = np.argsort(grid, kind="stable")
        grid, is_res = grid[order], is_res[order]

    def one(lam):
        return op.sigma_min(float(lam), method)

    workers = _n_workers(grid.size)
    if workers == 1:
        smins = [one(l) for l in grid]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            smins = list(pool.map(one, grid))
    smins = np.asarray(smins)
    for lam, s in zip(grid, smins):
        if not s > op.pole_tol:
            raise PoleError(float(lam), op.nearest(1j * lam), float(s))
    norms = 1.0 / smins
    envelope = np.maximum.accumulate(norms)
    band = (2.0 * lambda_min, lambda_max / 2.0)
    sel = (grid >= band[0]) & (grid <= band[1])
    if np.count_nonzero(sel) < 3:
        raise ValueError(f"fit band {band} holds fewer than 3 grid points")
    slope, intercept, r2 = _loglog_fit(grid[sel], envelope[sel])
    pslope, _, pr2 = _loglog_fit(grid[sel], norms[sel])
    return ResolventSweep(
        lambdas=grid, norms=norms, envelope=envelope, resonance=is_res, band=band,
        fitted_exponent=slope, intercept=intercept, r2=r2,
        pointwise_exponent=pslope, pointwise_r2=pr2,
        spacing=spacing, n_points=int(n_points), pole_tol=op.pole_tol,
        config=sys.config.to_dict(), damping=sys.damping.to_dict(),
    )
