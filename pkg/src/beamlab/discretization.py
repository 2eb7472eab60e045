"""Conforming finite element semi-discretization of the damped sandwich beam.

Longitudinal displacements and shear angles (u1, y1, u3, y3) use continuous
quadratic Lagrange elements with Dirichlet ends; the transverse displacement
w uses cubic Hermite elements with clamped ends. Boundary DOFs are
eliminated, so M and K are SPD on the free space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping

import numpy as np
import scipy.linalg as sla

from .model import BeamConfig, ConfigError, DampingPattern, POSITION_FIELDS

GAUSS_POINTS = 4
_GX, _GW = np.polynomial.legendre.leggauss(GAUSS_POINTS)
# reference element [0, 1]
GAUSS_XI = 0.5 * (_GX + 1.0)
GAUSS_W = 0.5 * _GW

LAGRANGE_FIELDS = ("u1", "y1", "u3", "y3")


@dataclass(frozen=True)
class Mesh1D:
    L: float
    n_elements: int
    nodes: np.ndarray

    @property
    def spacing(self) -> float:
        return self.L / self.n_elements


def build_mesh(L: float, n_elements: int) -> Mesh1D:
    if not (isinstance(n_elements, (int, np.integer)) and n_elements >= 2):
        raise ConfigError(f"mesh.n_elements must be an integer >= 2, got {n_elements!r}")
    if not (math.isfinite(L) and L > 0):
        raise ConfigError(f"mesh.L must be positive, got {L!r}")
    nodes = np.linspace(0.0, L, n_elements + 1)
    nodes.setflags(write=False)
    return Mesh1D(float(L), int(n_elements), nodes)


def lagrange_basis(xi):
    """Quadratic Lagrange shape functions on [0, 1] (nodes 0, 1/2, 1) and
    their xi-derivatives; arrays of shape (3, len(xi))."""
    xi = np.asarray(xi, dtype=float)
    N = np.array([2 * (xi - 0.5) * (xi - 1), -4 * xi * (xi - 1), 2 * xi * (xi - 0.5)])
    dN = np.array([4 * xi - 3, 4 - 8 * xi, 4 * xi - 1])
    return N, dN


def hermite_basis(xi, h: float):
    """Cubic Hermite shape functions (value/slope at both ends) with their
    first and second x-derivatives on an element of length ``h``."""
    xi = np.asarray(xi, dtype=float)
    H = np.array([
        1 - 3 * xi**2 + 2 * xi**3,
        h * (xi - 2 * xi**2 + xi**3),
        3 * xi**2 - 2 * xi**3,
        h * (-(xi**2) + xi**3),
    ])
    dH = np.array([
        -6 * xi + 6 * xi**2,
        h * (1 - 4 * xi + 3 * xi**2),
        6 * xi - 6 * xi**2,
        h * (-2 * xi + 3 * xi**2),
    ]) / h
    d2H = np.array([
        -6 + 12 * xi,
        h * (-4 + 6 * xi),
        6 - 12 * xi,
        h * (-2 + 6 * xi),
    ]) / h**2
    return H, dH, d2H


@dataclass(frozen=True)
class DofLayout:
    n_elements: int
    offsets: dict
    counts: dict

    @classmethod
    def for_mesh(cls, mesh: Mesh1D) -> "DofLayout":
        n = mesh.n_elements
        counts = {f: 2 * n - 1 for f in LAGRANGE_FIELDS}
        counts["w"] = 2 * (n - 1)
        offsets, pos = {}, 0
        for f in POSITION_FIELDS:
            offsets[f] = pos
            pos += counts[f]
        return cls(n, offsets, counts)

    @property
    def n_q(self) -> int:
        return sum(self.counts.values())

    @property
    def n_state(self) -> int:
        return 2 * self.n_q

    def block(self, name: str) -> slice:
        return slice(self.offsets[name], self.offsets[name] + self.counts[name])

    def element_dofs(self, e: int) -> dict:
        """Global position-DOF indices of element ``e`` per field; -1 marks an
        eliminated boundary DOF."""
        n = self.n_elements
        out = {}
        for f in LAGRANGE_FIELDS:
            g = np.array([2 * e, 2 * e + 1, 2 * e + 2]) - 1
            g = np.where((g < 0) | (g >= 2 * n - 1), -1, g + self.offsets[f])
            out[f] = g
        herm = []
        for node in (e, e + 1):
            if node == 0 or node == n:
                herm += [-1, -1]
            else:
                base = self.offsets["w"] + 2 * (node - 1)
                herm += [base, base + 1]
        out["w"] = np.array(herm)
        return out


@dataclass
class StateVector:
    """Position block ``q`` (u1, y1, w, u3, y3) and velocity block ``p``
    (v1, z1, psi, v3, z3) in the free FEM coefficients."""

    q: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, layout: DofLayout, dtype=float) -> "StateVector":
        return cls(np.zeros(layout.n_q, dtype=dtype), np.zeros(layout.n_q, dtype=dtype))

    @classmethod
    def from_array(cls, x: np.ndarray) -> "StateVector":
        x = np.asarray(x)
        if x.ndim != 1 or x.size % 2:
            raise ValueError(f"state array must be 1-D with even length, got shape {x.shape}")
        n = x.size // 2
        return cls(x[:n].copy(), x[n:].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    def __add__(self, other):
        return StateVector(self.q + other.q, self.p + other.p)

    def __sub__(self, other):
        return StateVector(self.q - other.q, self.p - other.p)

    def __mul__(self, s):
        return StateVector(s * self.q, s * self.p)

    __rmul__ = __mul__


def _strain_rows(config: BeamConfig, h: float, xi: np.ndarray):
    """Per quadrature point, the map from the 16 local DOFs
    (u1[3], y1[3], w[4], u3[3], y3[3]) to the 8 energy strains, and their weights."""
    top, bot = config.top, config.bottom
    N, dN = lagrange_basis(xi)
    dN = dN / h
    H, dH, d2H = hermite_basis(xi, h)
    nq = xi.size
    B = np.zeros((nq, 8, 16))
    su1, sy1, sw, su3, sy3 = slice(0, 3), slice(3, 6), slice(6, 10), slice(10, 13), slice(13, 16)
    B[:, 0, su1] = dN.T                          # u1_x
    B[:, 1, su3] = dN.T                          # u3_x
    B[:, 2, sw] = d2H.T                          # w_xx
    B[:, 3, sy1] = dN.T                          # y1_x
    B[:, 4, sy3] = dN.T                          # y3_x
    B[:, 5, sw] = dH.T                           # w_x + y1
    B[:, 5, sy1] = N.T
    B[:, 6, sw] = dH.T                           # w_x + y3
    B[:, 6, sy3] = N.T
    B[:, 7, su1] = -N.T                          # tau
    B[:, 7, su3] = N.T
    B[:, 7, sw] = config.h2 * dH.T
    B[:, 7, sy1] = -0.5 * top.h * N.T
    B[:, 7, sy3] = -0.5 * bot.h * N.T
    weights = np.array([
        top.E * top.h, bot.E * bot.h, config.EI_total, top.E * top.I, bot.E * bot.I,
        top.G * top.h, bot.G * bot.h, 1.0,
    ])
    return B, weights


def _scatter(target: np.ndarray, idx: np.ndarray, local: np.ndarray) -> None:
    keep = idx >= 0
    ii = idx[keep]
    target[np.ix_(ii, ii)] += local[np.ix_(keep, keep)]


def _unit_masses(mesh: Mesh1D):
    """Unweighted L2 mass matrices of the free Lagrange and Hermite spaces."""
    h = mesh.spacing
    n = mesh.n_elements
    N, _ = lagrange_basis(GAUSS_XI)
    H, _, _ = hermite_basis(GAUSS_XI, h)
    mL_loc = h * (N * GAUSS_W) @ N.T
    mH_loc = h * (H * GAUSS_W) @ H.T
    mL = np.zeros((2 * n - 1, 2 * n - 1))
    mH = np.zeros((2 * (n - 1), 2 * (n - 1)))
    for e in range(n):
        g = np.array([2 * e, 2 * e + 1, 2 * e + 2]) - 1
        g[(g < 0) | (g >= 2 * n - 1)] = -1
        _scatter(mL, g, mL_loc)
        gh = []
        for node in (e, e + 1):
            gh += [-1, -1] if node in (0, n) else [2 * (node - 1), 2 * (node - 1) + 1]
        _scatter(mH, np.array(gh), mH_loc)
    return mL, mH


class SemiDiscreteSystem:
    """Assembled mass ``M``, stiffness ``K`` and damping ``D`` forms.

    Immutable after construction; derived operators (mass factorization,
    dense generator, energy-similarity transform) are computed lazily and
    cached.
    """

    def __init__(self, config: BeamConfig, damping: DampingPattern, mesh: Mesh1D,
                 M: np.ndarray, K: np.ndarray, D: np.ndarray, layout: DofLayout):
        self.config = config
        self.damping = damping
        self.mesh = mesh
        self.layout = layout
        for mat in (M, K, D):
            mat.setflags(write=False)
        self.M, self.K, self.D = M, K, D
        self._mass_factor = sla.cho_factor(M, lower=True)

    @property
    def n_q(self) -> int:
        return self.layout.n_q

    @property
    def n_state(self) -> int:
        return self.layout.n_state

    @cached_property
    def E_gram(self) -> np.ndarray:
        G = sla.block_diag(self.K, self.M)
        G.setflags(write=False)
        return G

    def mass_solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._mass_factor, rhs)

    @cached_property
    def generator_matrix(self) -> np.ndarray:
        """Dense first-order generator [[0, I], [-M^-1 K, -M^-1 D]]."""
        n = self.n_q
        A = np.zeros((2 * n, 2 * n))
        A[:n, n:] = np.eye(n)
        A[n:, :n] = -self.mass_solve(self.K)
        A[n:, n:] = -self.mass_solve(self.D)
        A.setflags(write=False)
        return A

    @cached_property
    def _chol_K(self) -> np.ndarray:
        return np.linalg.cholesky(self.K)

    @cached_property
    def _chol_M(self) -> np.ndarray:
        return np.linalg.cholesky(self.M)

    def energy_factor(self, U: np.ndarray) -> np.ndarray:
        """Apply R with E_gram = R^T R; ``U`` may carry several columns."""
        n = self.n_q
        return np.concatenate([self._chol_K.T @ U[:n], self._chol_M.T @ U[n:]])

    def energy_factor_inv(self, V: np.ndarray) -> np.ndarray:
        n = self.n_q
        return np.concatenate([
            sla.solve_triangular(self._chol_K, V[:n], lower=True, trans="T"),
            sla.solve_triangular(self._chol_M, V[n:], lower=True, trans="T"),
        ])

    @cached_property
    def energy_similar_generator(self) -> np.ndarray:
        """R A R^-1 = [[0, C], [-C^T, -Dt]]: skew part plus a symmetric
        negative semidefinite damping block; Euclidean norms of this matrix
        are energy norms of the generator."""
        n = self.n_q
        Lk, Lm = self._chol_K, self._chol_M
        C = sla.solve_triangular(Lm, Lk, lower=True).T
        X = sla.solve_triangular(Lm, self.D, lower=True)
        Dt = sla.solve_triangular(Lm, X.T, lower=True)
        Dt = 0.5 * (Dt + Dt.T)
        S = np.zeros((2 * n, 2 * n))
        S[:n, n:] = C
        S[n:, :n] = -C.T
        S[n:, n:] = -Dt
        S.setflags(write=False)
        return S

    def check_state(self, U: StateVector) -> None:
        if U.q.shape != (self.n_q,) or U.p.shape != (self.n_q,):
            raise ValueError(
                f"state blocks must have length {self.n_q}, got {U.q.shape} and {U.p.shape}"
            )


def assemble(config: BeamConfig, damping: DampingPattern, mesh: Mesh1D) -> SemiDiscreteSystem:
    if not math.isclose(mesh.L, config.L, rel_tol=1e-14):
        raise ConfigError(f"mesh length {mesh.L} does not match beam length {config.L}")
    layout = DofLayout.for_mesh(mesh)
    h = mesh.spacing
    B, weights = _strain_rows(config, h, GAUSS_XI)
    k_loc = h * np.einsum("q,qsi,s,qsj->ij", GAUSS_W, B, weights, B)
    n_q = layout.n_q
    K = np.zeros((n_q, n_q))
    for e in range(mesh.n_elements):
        dofs = layout.element_dofs(e)
        idx = np.concatenate([dofs[f] for f in POSITION_FIELDS])
        _scatter(K, idx, k_loc)
    K = 0.5 * (K + K.T)

    mL, mH = _unit_masses(mesh)
    top, bot = config.top, config.bottom
    mass_w = {"u1": top.rho * top.h, "y1": top.rho * top.I, "w": config.rho_h,
              "u3": bot.rho * bot.h, "y3": bot.rho * bot.I}
    damp_w = dict(zip(POSITION_FIELDS, damping.as_tuple()))
    M = np.zeros((n_q, n_q))
    D = np.zeros((n_q, n_q))
    for f in POSITION_FIELDS:
        s = layout.block(f)
        base = mH if f == "w" else mL
        M[s, s] = mass_w[f] * base
        D[s, s] = damp_w[f] * base
    return SemiDiscreteSystem(config, damping, mesh, M, K, D, layout)


def apply_generator(sys: SemiDiscreteSystem, U: StateVector) -> StateVector:
    sys.check_state(U)
    return StateVector(U.p.copy(), -sys.mass_solve(sys.K @ U.q + sys.D @ U.p))


def energy(sys: SemiDiscreteSystem, U: StateVector) -> float:
    sys.check_state(U)
    kin = np.vdot(U.p, sys.M @ U.p).real
    pot = np.vdot(U.q, sys.K @ U.q).real
    return 0.5 * (kin + pot)


def energy_inner(sys: SemiDiscreteSystem, U: StateVector, V: StateVector) -> complex:
    """<U, V> in the energy Gram (conjugate-linear in V)."""
    return np.vdot(V.q, sys.K @ U.q) + np.vdot(V.p, sys.M @ U.p)


def dissipation_rate(sys: SemiDiscreteSystem, U: StateVector) -> float:
    sys.check_state(U)
    return np.vdot(U.p, sys.D @ U.p).real


def _derivative(f: Callable, x: np.ndarray, step: float) -> np.ndarray:
    return (f(x - 2 * step) - 8 * f(x - step) + 8 * f(x + step) - f(x + 2 * step)) / (12 * step)


def interpolate(sys: SemiDiscreteSystem, fields: Mapping[str, Callable],
                velocities: Mapping[str, Callable] | None = None) -> StateVector:
    """Nodal interpolation of closed-form fields.

    ``fields`` maps position names ("u1", "y1", "w", "u3", "y3") to callables;
    "w_x" may supply the slope of w for the Hermite DOFs (otherwise a
    fourth-order difference is used). ``velocities`` uses the same keys.
    Missing entries are zero.
    """
    layout = sys.layout
    n = sys.mesh.n_elements
    h = sys.mesh.spacing
    lag_pts = np.linspace(0.0, sys.mesh.L, 2 * n + 1)[1:-1]
    herm_pts = sys.mesh.nodes[1:-1]

    def fill(funcs: Mapping[str, Callable] | None) -> np.ndarray:
        out = np.zeros(layout.n_q)
        if not funcs:
            return out
        for f in LAGRANGE_FIELDS:
            if f in funcs:
                out[layout.block(f)] = funcs[f](lag_pts)
        if "w" in funcs:
            blk = np.empty(2 * (n - 1))
            blk[0::2] = funcs["w"](herm_pts)
            if "w_x" in funcs:
                blk[1::2] = funcs["w_x"](herm_pts)
            else:
                blk[1::2] = _derivative(funcs["w"], herm_pts, 1e-3 * h)
            out[layout.block("w")] = blk
        return out

    return StateVector(fill(fields), fill(velocities))


def evaluate_fields(sys: SemiDiscreteSystem, q: np.ndarray, x: np.ndarray) -> dict:
    """Evaluate the FEM position fields (and needed derivatives) at points ``x``.

    Returns a dict with keys u1, u1_x, y1, y1_x, w, w_x, w_xx, u3, u3_x, y3, y3_x.
    """
    mesh, layout = sys.mesh, sys.layout
    h, n = mesh.spacing, mesh.n_elements
    x = np.asarray(x, dtype=float)
    e = np.clip(np.floor(x / h).astype(int), 0, n - 1)
    xi = x / h - e
    N, dN = lagrange_basis(xi)
    H, dH, d2H = hermite_basis(xi, h)
    out = {}
    for f in LAGRANGE_FIELDS:
        full = np.zeros(2 * n + 1)
        full[1:-1] = q[layout.block(f)]
        loc = full[np.stack([2 * e, 2 * e + 1, 2 * e + 2])]
        out[f] = np.sum(N * loc, axis=0)
        out[f + "_x"] = np.sum(dN * loc, axis=0) / h
    full = np.zeros(2 * (n + 1))
    full[2:-2] = q[layout.block("w")]
    loc = full[np.stack([2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3])]
    out["w"] = np.sum(H * loc, axis=0)
    out["w_x"] = np.sum(dH * loc, axis=0)
    out["w_xx"] = np.sum(d2H * loc, axis=0)
    return out
