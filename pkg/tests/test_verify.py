import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from projop import hestenes as hs
from projop.family import ProjectionFamily
from projop.verify import (quadrature_grid, line_grid, circle_grid, assemble_matrix, check_family,
                           estimate_norm, random_probes, riesz_ratios, tau, weighted)


def reflection(phi=lambda t: np.ones(len(t))):
    neg = lambda t: -t
    one = lambda t: np.ones(len(t))
    V = hs.interval(-1, 1)
    return hs.SimpleHOp(phi, neg, V, neg, one, V)


@pytest.mark.parametrize("space,res", [("sphere", (24, 48)), ("torus", (24, 48))])
@given(a=st.integers(0, 3), b=st.integers(0, 3 - 0))
def test_surface_quadrature_polynomials(space, res, a, b):
    from projop.geometry import make_surface
    S = make_surface(space)
    g = quadrature_grid(space, res)
    X = S.embed(g.nodes)
    if a + b > 3:
        return
    val = g.integrate(X[:, 0] ** a * X[:, 2] ** b)
    # reference from a much finer grid
    g2 = quadrature_grid(space, (96, 192))
    X2 = S.embed(g2.nodes)
    assert abs(val - g2.integrate(X2[:, 0] ** a * X2[:, 2] ** b)) < 1e-10


def test_sphere_area_and_moments():
    g = quadrature_grid("sphere", (16, 32))
    assert abs(g.weights.sum() - 4 * np.pi) < 1e-12


def test_line_and_circle_quadrature():
    g = line_grid(0, 1, 200)
    assert abs(g.integrate(g.nodes) - 0.5) < 1e-12
    c = circle_grid(64, 2 * np.pi)
    assert abs(c.integrate(np.cos(c.nodes) ** 2) - np.pi) < 1e-12
    with pytest.raises(ValueError):
        quadrature_grid("sphere", (2, 8))


def test_assembly_basic():
    g = line_grid(-1, 1, 100)
    I = assemble_matrix(hs.HOp((hs.multiplication(lambda t: np.ones(len(t)), hs.whole()),)), g)
    assert (I != sp.identity(100)).nnz == 0
    assert assemble_matrix(hs.zero(), g).nnz == 0
    D = assemble_matrix(hs.HOp((hs.multiplication(lambda t: t ** 2, hs.whole()),)), g)
    assert np.allclose(D.toarray(), np.diag(g.nodes ** 2))
    with pytest.raises(ValueError):
        assemble_matrix(sp.identity(5), g)


def test_composition_and_adjoint():
    g = line_grid(-1, 1, 120)
    A = hs.HOp((reflection(lambda t: 1 + t), hs.multiplication(np.cos, hs.interval(-0.5, 0.9))))
    B = hs.HOp((reflection(np.exp),))
    MA, MB = assemble_matrix(A, g), assemble_matrix(B, g)
    MC = assemble_matrix(hs.compose(A, B), g)
    assert abs(MC - MA @ MB).max() < 1e-8
    Mt = assemble_matrix(hs.adjoint(A), g)
    W = sp.diags(g.weights)
    assert abs(W @ Mt - (W @ MA).T).max() < 1e-8


def test_interpolated_targets():
    g = line_grid(0, 1, 400)
    shift = hs.HOp((hs.SimpleHOp(lambda t: np.ones(len(t)), lambda t: t * 0.5,
                                 hs.interval(0, 1)),))
    M = assemble_matrix(shift, g)
    f = np.sin(3 * g.nodes)
    r = M @ f - np.sin(1.5 * g.nodes)
    assert np.abs(r[1:]).max() < 1e-4
    assert (M @ f)[0] == 0  # target left of the first node: zero extension


def test_identity_family_passes():
    g = quadrature_grid("sphere", (16, 32))
    fam = ProjectionFamily([sp.identity(g.n, format="csr")], [np.ones(g.n, bool)],
                           ["all"], "sphere", 2.0)
    rep = check_family(fam, g, riesz_bounds=(1.0, 1.0), riesz_probes=32)
    assert rep.passed
    assert np.allclose(rep.riesz, (1.0, 1.0), atol=1e-12)
    assert rep.overlap == 1


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0, np.inf])
def test_estimate_norm_identity(p):
    g = circle_grid(64)
    I = sp.identity(64, format="csr")
    assert abs(estimate_norm(I, g, p, n_probes=16) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        estimate_norm(I, g, p, n_probes=8)


def test_estimate_norm_is_attained_lower_bound():
    g = circle_grid(32)
    rng = np.random.default_rng(0)
    A = rng.normal(size=(32, 32))
    for p in (1.0, 2.0, np.inf):
        true = np.linalg.norm(weighted(A, g, p).toarray(), {1.0: 1, 2.0: 2, np.inf: np.inf}[p])
        est = estimate_norm(A, g, p, n_probes=16)
        assert est <= true * (1 + 1e-9) and est >= 0.999 * true


def test_random_probes_determinism():
    g = quadrature_grid("torus", (16, 16))
    assert np.array_equal(random_probes(g, 4, 3), random_probes(g, 4, 3))
    assert not np.array_equal(random_probes(g, 4, 3), random_probes(g, 4, 4))


def _pair_family(g, corrupt=0.0):
    n = g.n
    mask = np.arange(n) < n // 2
    P = sp.diags(mask.astype(float) + corrupt * (np.arange(n) == 0)).tocsr()
    return ProjectionFamily([P, sp.diags((~mask).astype(float)).tocsr()], [mask, ~mask],
                            ["a", "b"], "circle", 2.0)


def test_report_determinism_and_failure():
    g = circle_grid(64)
    r1 = check_family(_pair_family(g), g, riesz_probes=32).to_json()
    r2 = check_family(_pair_family(g), g, riesz_probes=32).to_json()
    assert r1 == r2 and json.loads(r1)["passed"]
    bad = check_family(_pair_family(g, 0.05), g, riesz_probes=32)
    assert not bad.passed
    assert not bad.get("idempotence")["passed"]


def test_riesz_ratios_matches_report():
    g = circle_grid(64)
    fam = _pair_family(g)
    F = random_probes(g, 8, 5)
    r = riesz_ratios(fam, g, F)
    assert np.allclose(r, 1.0, atol=1e-12)


def test_tau():
    assert tau(1e-9) == 1e-10
    assert tau(0.1) == pytest.approx(0.1)
