import math

import numpy as np
import pytest

from beamlab.discretization import (
    DofLayout,
    StateVector,
    apply_generator,
    assemble,
    build_mesh,
    dissipation_rate,
    energy,
    energy_inner,
    evaluate_fields,
    interpolate,
)
from beamlab.model import BeamConfig, ConfigError, DampingPattern, closed_form_mode

import oracles
from helpers import random_config, random_two_damper

SYM = BeamConfig.symmetric()


def _system(cfg=SYM, damping=DampingPattern(), n=8):
    return assemble(cfg, damping, build_mesh(cfg.L, n))


def _random_state(sys, rng):
    return StateVector(rng.standard_normal(sys.n_q), rng.standard_normal(sys.n_q))


def test_build_mesh_examples():
    assert np.array_equal(build_mesh(1.0, 2).nodes, [0.0, 0.5, 1.0])
    assert build_mesh(math.pi, 4).spacing == pytest.approx(math.pi / 4, rel=1e-15)
    with pytest.raises(ConfigError):
        build_mesh(1.0, 1)


def test_mesh_endpoints_exact():
    m = build_mesh(math.pi, 7)
    assert m.nodes[0] == 0.0 and m.nodes[-1] == math.pi
    assert np.allclose(np.diff(m.nodes), math.pi / 7, rtol=1e-14)


def test_layout_partitions_positions():
    lay = DofLayout.for_mesh(build_mesh(1.0, 5))
    covered = np.zeros(lay.n_q, dtype=int)
    for f in ("u1", "y1", "w", "u3", "y3"):
        covered[lay.block(f)] += 1
    assert np.all(covered == 1)
    assert lay.n_q == 4 * 9 + 8 and lay.n_state == 2 * lay.n_q


def test_assemble_rejects_mismatched_mesh():
    with pytest.raises(ConfigError):
        assemble(SYM, DampingPattern(), build_mesh(1.0, 4))


def test_zero_damping_gives_zero_D():
    assert not np.any(_system().D)


@pytest.mark.parametrize("seed", range(10))
def test_forms_symmetric_and_definite(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng)
    sys = _system(cfg, random_two_damper(rng), n=int(rng.integers(3, 12)))
    for mat in (sys.M, sys.K, sys.E_gram, sys.D):
        assert np.max(np.abs(mat - mat.T)) <= 1e-13 * np.linalg.norm(mat, 2)
    assert np.linalg.eigvalsh(sys.M).min() > 0
    assert np.linalg.eigvalsh(sys.K).min() > 0
    assert np.linalg.eigvalsh(sys.D).min() > -1e-14 * np.linalg.norm(sys.D, 2)


def test_D_nonzero_iff_damped():
    for k in "abcde":
        assert np.any(_system(damping=DampingPattern(**{k: 0.5})).D)


def _swap_perm(sys):
    """Signed permutation (u1, y1, w, u3, y3) -> (u3, -y3, -w, u1, -y1)."""
    lay, n = sys.layout, sys.n_q
    P = np.zeros((n, n))
    for dst, src, sign in [("u1", "u3", 1), ("y1", "y3", -1), ("w", "w", -1),
                           ("u3", "u1", 1), ("y3", "y1", -1)]:
        d, s = lay.block(dst), lay.block(src)
        P[d, s] = sign * np.eye(d.stop - d.start)
    return P


def test_mirror_permutation_leaves_forms_invariant():
    sys = _system(SYM.with_layers(top={"E": 1.7}, bottom={"E": 1.7}), n=6)
    P = _swap_perm(sys)
    assert np.allclose(P @ sys.M @ P.T, sys.M, rtol=0, atol=1e-14 * np.abs(sys.M).max())
    assert np.allclose(P @ sys.K @ P.T, sys.K, rtol=0, atol=1e-14 * np.abs(sys.K).max())


@pytest.mark.parametrize("coeffs", [dict(a=1.0, b=0.5), dict(a=0.3, c=2.0), dict(b=1.1, e=0.4),
                                    dict(c=0.7, e=1.3)])
def test_layer_swap_equivariance(coeffs):
    cfg = BeamConfig.symmetric(E=1.4, G=0.8, I=0.6, h=0.9, rho=1.2)
    d = DampingPattern(**coeffs)
    a, b = _system(cfg, d, 6), _system(cfg, d.swapped(), 6)
    P = _swap_perm(a)
    PP = np.block([[P, np.zeros_like(P)], [np.zeros_like(P), P]])
    A, B = a.generator_matrix, b.generator_matrix
    assert np.max(np.abs(PP @ A @ PP.T - B)) <= 1e-13 * np.max(np.abs(B))


def test_generator_structure():
    sys = _system(damping=DampingPattern(a=1, c=2))
    rng = np.random.default_rng(0)
    zero = StateVector.zeros(sys.layout)
    out = apply_generator(sys, zero)
    assert not np.any(out.q) and not np.any(out.p)
    U = StateVector(rng.standard_normal(sys.n_q), np.zeros(sys.n_q))
    assert not np.any(apply_generator(sys, U).q)
    with pytest.raises(ValueError):
        apply_generator(sys, StateVector(np.zeros(3), np.zeros(3)))


def test_dissipation_identity_random():
    rng = np.random.default_rng(11)
    for _ in range(100):
        cfg = random_config(rng)
        sys = _system(cfg, random_two_damper(rng), n=int(rng.integers(2, 9)))
        U = _random_state(sys, rng)
        pair = energy_inner(sys, apply_generator(sys, U), U).real
        diss = dissipation_rate(sys, U)
        assert abs(pair + diss) <= 1e-10 * abs(diss)


def test_dissipation_examples():
    rng = np.random.default_rng(3)
    sys = _system()
    assert dissipation_rate(sys, _random_state(sys, rng)) == 0
    sys = _system(damping=DampingPattern(b=1, e=2))
    U = StateVector(rng.standard_normal(sys.n_q), np.zeros(sys.n_q))
    assert dissipation_rate(sys, U) == 0


@pytest.mark.parametrize("seed", range(5))
def test_energy_matches_quadrature_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    cfg = random_config(rng)
    n = int(rng.integers(2, 10))
    sys = _system(cfg, n=n)
    U = _random_state(sys, rng)
    ref = oracles.energy_by_quadrature(cfg, n, U.q, U.p)
    assert energy(sys, U) == pytest.approx(ref, rel=1e-12)
    pot = oracles.energy_by_quadrature(cfg, n, U.q, np.zeros_like(U.p))
    assert 0.5 * U.q @ sys.K @ U.q == pytest.approx(pot, rel=1e-12)


def test_dissipation_matches_quadrature_oracle():
    rng = np.random.default_rng(7)
    cfg = random_config(rng)
    d = DampingPattern(*rng.uniform(0.1, 2, 5))
    sys = _system(cfg, d, 6)
    p = rng.standard_normal(sys.n_q)
    ref = oracles.dissipation_by_quadrature(cfg, d, 6, p)
    assert dissipation_rate(sys, StateVector(np.zeros_like(p), p)) == pytest.approx(ref, rel=1e-12)


def test_energy_examples():
    cfg = SYM.with_layers(top={"rho": 2.0})
    sys = _system(cfg, n=5)
    assert energy(sys, StateVector.zeros(sys.layout)) == 0
    p = np.zeros(sys.n_q)
    p[sys.layout.block("u1")] = 1.0
    U = StateVector(np.zeros(sys.n_q), p)
    ref = 0.5 * 2 * oracles.field_integrals(cfg, 5, np.zeros_like(p), p)["v1"]
    assert energy(sys, U) == pytest.approx(ref, rel=1e-12)
    rng = np.random.default_rng(0)
    V = _random_state(sys, rng)
    assert energy(sys, V * 2.0) == pytest.approx(4 * energy(sys, V), rel=1e-14)


def test_nonsingular_generator():
    rng = np.random.default_rng(5)
    for i in range(20):
        cfg = random_config(rng)
        d = DampingPattern() if i % 4 == 0 else random_two_damper(rng)
        sys = _system(cfg, d, int(rng.integers(2, 8)))
        F = rng.standard_normal(sys.n_state)
        U = np.linalg.solve(sys.generator_matrix, F)
        res = sys.generator_matrix @ U - F
        assert np.linalg.norm(res) / np.linalg.norm(F) < 1e-10


def test_interpolate_zero_and_nodal():
    sys = _system(n=6)
    U = interpolate(sys, {})
    assert not np.any(U.q) and not np.any(U.p)
    L = SYM.L
    U = interpolate(sys, {"u1": lambda x: np.sin(np.pi * x / L)})
    x = np.linspace(0, L, 13)[1:-1]
    assert np.max(np.abs(U.q[sys.layout.block("u1")] - np.sin(np.pi * x / L))) < 1e-14
    others = np.delete(U.q, np.arange(sys.n_q)[sys.layout.block("u1")])
    assert not np.any(others)


def test_interpolate_hermite_slopes():
    sys = _system(n=4)
    L = SYM.L
    f = lambda x: np.sin(x) ** 2
    fx = lambda x: np.sin(2 * x)
    exact = interpolate(sys, {"w": f, "w_x": fx}).q
    approx = interpolate(sys, {"w": f}).q
    assert np.max(np.abs(exact - approx)) < 1e-9
    ev = evaluate_fields(sys, exact, sys.mesh.nodes)
    assert np.allclose(ev["w"], f(sys.mesh.nodes), atol=1e-14)
    assert np.allclose(ev["w_x"], fx(sys.mesh.nodes), atol=1e-14)


def test_modal_energy_converges_to_exact_integral():
    mode = closed_form_mode("T2.4", 2, SYM)
    exact = oracles.sine_energy_exact(SYM, 2)
    errs = []
    for n in (8, 16, 32):
        sys = _system(n=n)
        errs.append(abs(energy(sys, interpolate(sys, mode.functions())) - exact) / exact)
    assert errs[-1] < 1e-3
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_evaluate_fields_matches_oracle_polynomials():
    rng = np.random.default_rng(2)
    sys = _system(n=5)
    q = rng.standard_normal(sys.n_q)
    x = rng.uniform(0, SYM.L, 40)
    ev = evaluate_fields(sys, q, x)
    blocks = oracles.split_blocks(q, 5)
    w = oracles.hermite(SYM.L, 5, blocks["w"])
    assert np.allclose(ev["w"], w(x), atol=1e-12)
    assert np.allclose(ev["w_xx"], w.derivative(2)(x), atol=1e-10)
    pq = oracles.PiecewiseQuadratic(SYM.L, 5, blocks["y3"])
    e = np.minimum((x / pq.h).astype(int), 4)
    assert np.allclose(ev["y3"], [pq(xi, ei) for xi, ei in zip(x, e)], atol=1e-12)
