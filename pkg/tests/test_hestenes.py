import numpy as np
import pytest
from hypothesis import given, strategies as st

from projop import hestenes as hs
from projop.aww1d import AwwLineOp, aww_line_hop
from projop.bell import make_bell, eval_bell
from projop.verify import line_grid, assemble_matrix, random_probes

bump = lambda a, b: (lambda t: np.where((t > a) & (t < b), np.sin(np.pi * (t - a) / (b - a)) ** 2, 0.0))


def test_multiplication_apply():
    H = hs.HOp((hs.multiplication(lambda t: np.ones(len(t)), hs.interval(0, 1)),))
    x = np.array([-0.5, 0.25, 0.5, 1.5])
    assert np.allclose(H(lambda t: t ** 2, x), [0.0, 0.0625, 0.25, 0.0])


def test_zero_phi():
    H = hs.HOp((hs.multiplication(lambda t: np.zeros(len(t)), hs.interval(-1, 1)),))
    assert np.all(H(np.cos, np.linspace(-2, 2, 9)) == 0)


def test_reflection_term_hand_value():
    b = make_bell(0.1)
    H = aww_line_hop(AwwLineOp(b, 0.3))
    t = np.array([0.27])
    s, sm = eval_bell(b, 0.27 - 0.3), eval_bell(b, 0.3 - 0.27)
    expect = s * s * 0.27 + s * sm * (0.6 - 0.27)
    assert H(lambda x: x, t)[0] == pytest.approx(float(expect), abs=1e-15)


def test_compose_zero_and_products():
    a = hs.multiplication(np.cos, hs.interval(-2, 2))
    b = hs.multiplication(np.sin, hs.interval(-1, 3))
    H = hs.compose(hs.HOp((a,)), hs.HOp((b,)))
    x = np.linspace(-3, 4, 41)
    f = np.exp
    expect = np.where((x > -1) & (x < 2), np.cos(x) * np.sin(x) * np.exp(x), 0.0)
    assert np.allclose(H(f, x), expect, atol=1e-15)
    assert len(hs.compose(hs.HOp((a,)), hs.zero()).terms) == 0


def test_compose_matrix_consistency():
    g = line_grid(-1.0, 2.0, 3000)
    b = make_bell(0.15)
    H1 = aww_line_hop(AwwLineOp(b, 0.4))
    H2 = aww_line_hop(AwwLineOp(b, 0.85))
    A = assemble_matrix(hs.compose(H1, H2), g).toarray()
    B = (assemble_matrix(H1, g) @ assemble_matrix(H2, g)).toarray()
    assert np.abs(A - B).max() < 1e-8


def test_adjoint_multiplication_is_self():
    t = hs.multiplication(np.cos, hs.interval(0, 1))
    H = hs.adjoint(hs.HOp((t,)))
    x = np.linspace(-1, 2, 31)
    assert np.allclose(H(np.exp, x), hs.HOp((t,))(np.exp, x))


def test_adjoint_inner_product():
    g = line_grid(-1.0, 2.0, 3000)
    b = make_bell(0.15)
    H = aww_line_hop(AwwLineOp(b, 0.5))
    F = random_probes(g, 2, seed=3)
    f, h = F[:, 0], F[:, 1]
    A = assemble_matrix(H, g)
    Aa = assemble_matrix(hs.adjoint(H), g)
    lhs = g.weights @ ((A @ f) * h)
    rhs = g.weights @ (f * (Aa @ h))
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_adjoint_reflection_swaps_phi():
    b = make_bell(0.2)
    fold = aww_line_hop(AwwLineOp(b, 0.0)).terms[1]
    adj = hs.adjoint_term(fold)
    y = np.linspace(-0.19, 0.19, 11)
    assert np.allclose(adj.phi(y), fold.phi(-y), atol=1e-15)


def test_localization_sets():
    phi = bump(0.2, 0.6)
    H = hs.HOp((hs.multiplication(phi, hs.interval(0.2, 0.6)),))
    L = hs.localization_set(H, 401)
    assert L.K1.min() > 0.2 and L.K1.max() < 0.6
    assert np.allclose(np.sort(L.K1.ravel()), np.sort(L.K2.ravel()))
    assert hs.localization_set(hs.zero()).is_empty()


def test_aww_nonidentity_part_localized():
    b = make_bell(0.1)
    fold = aww_line_hop(AwwLineOp(b, 0.5)).terms[1]
    L = hs.localization_set(hs.HOp((fold,)), 801)
    assert L.K.min() >= 0.4 and L.K.max() <= 0.6


def test_is_localized_on():
    H = hs.HOp((hs.multiplication(bump(0.2, 0.6), hs.interval(0.2, 0.6)),))
    assert hs.is_localized_on(H, hs.interval(-np.inf, np.inf))
    assert hs.is_localized_on(H, hs.interval(0.1, 0.7))
    assert not hs.is_localized_on(H, hs.interval(1.0, 2.0))


def test_commuting_pair_localized_on_intersection():
    H1 = hs.HOp((hs.multiplication(bump(0.0, 1.0), hs.interval(0.0, 1.0)),))
    H2 = hs.HOp((hs.multiplication(bump(0.5, 1.5), hs.interval(0.5, 1.5)),))
    C = hs.compose(H1, H2)
    assert hs.is_localized_on(C, hs.interval(0.45, 1.05), sample_density=801)
    assert not hs.is_localized_on(C, hs.interval(0.7, 1.05), sample_density=801)


def test_to_json_roundtrip():
    import json
    H = aww_line_hop(AwwLineOp(make_bell(0.1), 0.0))
    d = json.loads(json.dumps(hs.to_json(H)))
    assert d["dim"] == 1 and len(d["terms"]) == 2


def test_unbounded_localization_raises():
    H = aww_line_hop(AwwLineOp(make_bell(0.1), 0.0))
    with pytest.raises(ValueError):
        hs.localization_set(H)


@given(st.floats(-5, 5), st.floats(0.1, 2.0))
def test_phi_vanishes_outside_V(c, w):
    V = hs.interval(c - w, c + w)
    H = hs.HOp((hs.multiplication(np.cos, V),))
    x = np.array([c - w - 1e-9, c + w + 1e-9, c - 3 * w, c + 3 * w])
    assert np.all(H(np.exp, x) == 0)


@given(st.floats(-1, 1))
def test_fold_involution(theta):
    fold = aww_line_hop(AwwLineOp(make_bell(0.1), theta)).terms[1]
    x = np.linspace(theta - 0.09, theta + 0.09, 7)
    assert np.allclose(fold.Phi_inv(fold.Phi(x)), x, atol=1e-10)
