import numpy as np
import pytest
import scipy.sparse as sp

from projop import hestenes as hs
from projop.aww1d import Bp
from projop.bell import make_bell
from projop.geometry import FlowAtlas, level_set, flow_points, build_flow_grid
from projop.latitudinal import aww_operator, aww_manifold_apply, level_grid, latitudinal_matrices
from projop.lifting import (LiftError, lift_local, lift_global, rebase, apply_lifted, circle_base_ops,
                            strip_projection, critical_patch, BaseOp, arc_cover, lift_matrix,
                            strip_family, critical_patch_matrix)
from projop.verify import check_family, estimate_norm
from projop.family import ProjectionFamily

P_TEST = 1.5


@pytest.fixture(scope="module")
def base(sphere_pair):
    S, M = sphere_pair
    at = FlowAtlas(S, M, 1.0, (0.3, 1.7))
    curve = level_set(S, M, 1.0)
    ops, fam = circle_base_ops(curve, 0, at, [0.5, 2.5, 4.5], 0.3, p=P_TEST)
    return S, M, at, curve, ops


def f_test(S):
    return lambda P: np.exp(S.embed(P)[:, 0]) + S.embed(P)[:, 1] ** 2


def arc_samples(S, M, op, levels, s=np.linspace(0.3, 2.7, 8)):
    X = op.point(s)
    return np.vstack([flow_points(S, M, X, 1.0, t) for t in levels])


def test_multiplication_lift_is_multiplication(base):
    S, M, at, curve, _ = base
    L0 = curve.components[0].length
    phi = lambda s: 1 + 0.5 * np.cos(2 * np.pi * s / L0)
    H = hs.HOp((hs.multiplication(phi, hs.OpenSet(lambda s: np.ones(len(s), bool), (0.0,), (L0,))),))
    Pi = lift_global(lift_local(BaseOp(H, curve, 0, at), at, P_TEST))
    f = f_test(S)
    s = np.linspace(0.1, 6.0, 7)
    Y = np.vstack([flow_points(S, M, BaseOp(H, curve, 0, at).point(s), 1.0, t) for t in (0.6, 1.4)])
    assert np.allclose(apply_lifted(Pi, f, Y), np.tile(phi(s), 2) * f(Y), atol=1e-8)


def test_idempotent_and_sum(base):
    S, M, at, _, ops = base
    f = f_test(S)
    Pi = lift_global(lift_local(ops[0], at, P_TEST))
    Y = arc_samples(S, M, ops[0], (0.7, 1.3))
    a = apply_lifted(Pi, f, Y)
    assert np.abs(apply_lifted(Pi, lambda P: apply_lifted(Pi, f, P), Y) - a).max() < 1e-5
    tot = sum(apply_lifted(lift_global(lift_local(o, at, P_TEST)), f, Y) for o in ops)
    assert np.abs(tot - f(Y)).max() < 1e-8
    assert np.all(apply_lifted(Pi, lambda P: np.zeros(len(P)), Y) == 0)


def test_commutes_with_aww(base):
    S, M, at, _, ops = base
    f = f_test(S)
    Pi = lift_global(lift_local(ops[0], at, P_TEST))
    E = aww_operator(S, M, 1.2, 0.1, p=P_TEST)
    Y = arc_samples(S, M, ops[0], (1.13, 1.18, 1.21, 1.27))
    a = apply_lifted(Pi, lambda P: aww_manifold_apply(E, f, P), Y)
    b = aww_manifold_apply(E, lambda P: apply_lifted(Pi, f, P), Y)
    assert np.abs(a).max() > 0.1 and np.abs(a - b).max() < 1e-5


def test_base_independence(base):
    S, M, at, _, ops = base
    f = f_test(S)
    Pi = lift_global(lift_local(ops[1], at, P_TEST))
    Y = arc_samples(S, M, ops[1], (0.8, 1.25), s=np.linspace(2.6, 4.4, 6))
    assert np.abs(apply_lifted(rebase(Pi, 1.3), f, Y) - apply_lifted(Pi, f, Y)).max() < 1e-5


def test_localization_precondition(base):
    S, M, at, curve, ops = base
    with pytest.raises(LiftError):
        lift_local(ops[0], at, P_TEST, J_tilde=hs.interval(3.0, 6.0))
    lift_local(ops[0], at, P_TEST, J_tilde=hs.interval(0.0, 3.0))


def test_strip_and_patch_pointwise(base):
    from projop.latitudinal import latitudinal_projection, apply_latitude
    S, M, at, _, ops = base
    f = f_test(S)
    Q = latitudinal_projection(0.6, 1.4, 0.1, P_TEST, S, M)
    lifts = [lift_global(lift_local(o, at, P_TEST)) for o in ops]
    Y = arc_samples(S, M, ops[0], (0.55, 0.65, 1.0, 1.45))
    strips = [strip_projection(L, Q, samples=Y[:6], f=f) for L in lifts[1:]]
    patch = critical_patch(Q, strips)
    tot = apply_lifted(patch, f, Y) + sum(apply_lifted(s, f, Y) for s in strips)
    assert np.abs(tot - apply_latitude(Q, f, Y)).max() < 1e-12
    with pytest.raises(LiftError):
        critical_patch(Q, [])


# discrete route -------------------------------------------------------------

@pytest.fixture(scope="module")
def strip_setup(sphere_pair):
    S, M = sphere_pair
    cuts = (0.05, 0.5, 1.1, 1.7, 1.95)
    lg = level_grid(0.0, 2.0, cuts, 0.02, 128)
    fg = build_flow_grid(S, M, lg.levels, lg.dt, 192)
    return fg, lg


def test_arc_cover_edge_cases():
    cov = arc_cover(np.arange(10), [], 1, 2.0)
    assert (cov.mats[0] != sp.identity(10)).nnz == 0
    with pytest.raises(LiftError):
        arc_cover(np.arange(10), [2.5], 1, 2.0)


def test_lift_of_diagonal_is_diagonal(strip_setup):
    fg, lg = strip_setup
    L = fg.shape[1]
    P0 = sp.diags(np.linspace(0, 1, L))
    Lm = lift_matrix(fg, lg.strip_levels(2), np.arange(L), P0, P_TEST)
    assert (Lm - sp.diags(Lm.diagonal())).nnz == 0


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_three_arc_strip(strip_setup, p):
    fg, lg = strip_setup
    Q, _ = latitudinal_matrices(fg, lg, make_bell(0.02), p)
    L = fg.shape[1]
    cov = arc_cover(np.arange(L), [10.5, 74.5, 138.5], 2, p)
    mats, masks, names, defects = strip_family(fg, lg, 2, Q[2], [cov], p)
    assert len(mats) == 3 and max(defects) < 1e-12
    g = fg.quadrature()
    fam = ProjectionFamily(mats, masks, ["strip"] * 3, "sphere", p, names)
    rep = check_family(fam, g, {"sum": 1e-5, "exterior": 1e-6}, relative_to=Q[2], riesz_probes=32)
    assert rep.passed, rep.to_json()
    for P in mats:
        assert estimate_norm(P, g, p, n_probes=16) <= Bp(p) * 1.0 * 1.05 * (1 if p == 2 else 1.3)


def test_discrete_patch(strip_setup):
    fg, lg = strip_setup
    p = 2.0
    Q, _ = latitudinal_matrices(fg, lg, make_bell(0.02), p)
    L = fg.shape[1]
    cov = arc_cover(np.arange(L), [10.5, 74.5, 138.5], 2, p)
    mats, masks, names, _ = strip_family(fg, lg, 2, Q[2], [cov], p)
    patch = critical_patch_matrix(Q[2], mats[1:])
    assert abs(patch - mats[0]).max() < 1e-12
    for m in mats[1:]:
        assert abs(patch @ m).max() < 1e-4 and abs(m @ patch).max() < 1e-4
    with pytest.raises(LiftError):
        critical_patch_matrix(Q[2], [])
