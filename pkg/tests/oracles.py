"""Independent reference computations used by the tests.

Nothing here touches the assembled matrices or the package's shape
functions: FEM coefficient vectors are turned into piecewise polynomials by
scipy (per-element Vandermonde fits for the quadratic fields,
CubicHermiteSpline for the transverse field) and integrated with an 8-point
Gauss rule.
"""

import numpy as np
from scipy.interpolate import CubicHermiteSpline

ORDER = ("u1", "y1", "w", "u3", "y3")


def split_blocks(q, n_el):
    nl, nh = 2 * n_el - 1, 2 * (n_el - 1)
    out, pos = {}, 0
    for f in ORDER:
        size = nh if f == "w" else nl
        out[f] = q[pos:pos + size]
        pos += size
    return out


class PiecewiseQuadratic:
    def __init__(self, L, n_el, interior):
        self.L, self.n = L, n_el
        self.h = L / n_el
        vals = np.concatenate([[0.0], interior, [0.0]])
        self.coef = []
        for e in range(n_el):
            x = e * self.h + np.array([0.0, 0.5, 1.0]) * self.h
            V = np.vander(x, 3)
            self.coef.append(np.linalg.solve(V, vals[2 * e:2 * e + 3]))
        self.coef = np.array(self.coef)

    def __call__(self, x, e, deriv=0):
        c = self.coef[e]
        p = np.poly1d(c)
        return np.polyder(p, deriv)(x) if deriv else p(x)


def hermite(L, n_el, interior):
    nodes = np.linspace(0, L, n_el + 1)
    vals = np.concatenate([[0.0], interior[0::2], [0.0]])
    slopes = np.concatenate([[0.0], interior[1::2], [0.0]])
    return CubicHermiteSpline(nodes, vals, slopes)


def _points(L, n_el, k=8):
    gx, gw = np.polynomial.legendre.leggauss(k)
    h = L / n_el
    for e in range(n_el):
        yield e, e * h + 0.5 * h * (gx + 1), 0.5 * h * gw


def field_integrals(cfg, n_el, q, p):
    """Dictionary of the squared-L2 integrals entering the energy."""
    L = cfg.L
    qb, pb = split_blocks(q, n_el), split_blocks(p, n_el)
    lag = {f: PiecewiseQuadratic(L, n_el, qb[f]) for f in ORDER if f != "w"}
    lagv = {f: PiecewiseQuadratic(L, n_el, pb[f]) for f in ORDER if f != "w"}
    w, wv = hermite(L, n_el, qb["w"]), hermite(L, n_el, pb["w"])
    wx, wxx = w.derivative(1), w.derivative(2)
    t, b = cfg.top, cfg.bottom
    acc = {k: 0.0 for k in ("v1", "z1", "psi", "v3", "z3", "u1x", "y1x", "u3x", "y3x",
                            "wxx", "shear1", "shear3", "tau")}
    for e, x, wt in _points(L, n_el):
        u1, y1, u3, y3 = (lag[f](x, e) for f in ("u1", "y1", "u3", "y3"))
        tau = -u1 + u3 + cfg.h2 * wx(x) - 0.5 * t.h * y1 - 0.5 * b.h * y3
        terms = {
            "v1": lagv["u1"](x, e), "z1": lagv["y1"](x, e), "psi": wv(x),
            "v3": lagv["u3"](x, e), "z3": lagv["y3"](x, e),
            "u1x": lag["u1"](x, e, 1), "y1x": lag["y1"](x, e, 1),
            "u3x": lag["u3"](x, e, 1), "y3x": lag["y3"](x, e, 1),
            "wxx": wxx(x), "shear1": wx(x) + y1, "shear3": wx(x) + y3, "tau": tau,
        }
        for k, v in terms.items():
            acc[k] += float(np.sum(wt * v ** 2))
    return acc


def energy_by_quadrature(cfg, n_el, q, p):
    I = field_integrals(cfg, n_el, q, p)
    t, b = cfg.top, cfg.bottom
    return 0.5 * (
        t.rho * t.h * I["v1"] + t.E * t.h * I["u1x"]
        + b.rho * b.h * I["v3"] + b.E * b.h * I["u3x"]
        + cfg.rho_h * I["psi"] + cfg.EI_total * I["wxx"]
        + t.rho * t.I * I["z1"] + t.E * t.I * I["y1x"]
        + b.rho * b.I * I["z3"] + b.E * b.I * I["y3x"]
        + t.G * t.h * I["shear1"] + I["tau"] + b.G * b.h * I["shear3"]
    )


def dissipation_by_quadrature(cfg, damping, n_el, p):
    I = field_integrals(cfg, n_el, np.zeros_like(p), p)
    return (damping.a * I["v1"] + damping.b * I["z1"] + damping.c * I["psi"]
            + damping.d * I["v3"] + damping.e * I["z3"])


def sine_energy_exact(cfg, n, amp_u1=1.0, amp_u3=1.0):
    """Potential energy of u1 = amp_u1 sin(k x), u3 = amp_u3 sin(k x), rest zero,
    by exact sine integrals (int_0^L sin^2 = int_0^L cos^2 = L/2)."""
    k = n * np.pi / cfg.L
    half = cfg.L / 2
    t, b = cfg.top, cfg.bottom
    grad = t.E * t.h * amp_u1 ** 2 * k ** 2 * half + b.E * b.h * amp_u3 ** 2 * k ** 2 * half
    tau = (amp_u3 - amp_u1) ** 2 * half
    return 0.5 * (grad + tau)
