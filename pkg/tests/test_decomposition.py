import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp

from projop.decomposition import (choose_cut_levels, plan_arcs, build_decomposition, verify_decomposition,
                                  coarsen, transfer_weight, transfer_diffeo, Diffeo, ResolutionError,
                                  support_diameter, support_polygons)
from projop.verify import check_family, random_probes, riesz_ratios


@pytest.fixture(scope="module")
def sphere_report(sphere_dec):
    return verify_decomposition(sphere_dec, riesz_probes=64)


def reweighted(grid, w):
    return dataclasses.replace(grid, weights=np.asarray(w, float), meta={})


# planning -------------------------------------------------------------------

def test_sphere_plan(sphere_pair):
    S, M = sphere_pair
    plan = choose_cut_levels(S, M, 0.8)
    c = np.asarray(plan.cuts)
    assert np.all(np.diff(c) > 2 * plan.delta)
    assert lo_hi_inside(plan)
    assert max(plan.displacement) < plan.budget * plan.eps
    assert [b.kind for b in plan.brackets] == ["cap", "cap"]
    assert plan.strip_bracket(0).kind == "cap" and plan.strip_bracket(len(c)).kind == "cap"
    assert plan.strip_bracket(2) is None
    d = plan.to_dict()
    assert d["cuts"] == [float(x) for x in plan.cuts]


def lo_hi_inside(plan):
    lo, hi = plan.range
    return lo < plan.cuts[0] - plan.delta and plan.cuts[-1] + plan.delta < hi


def test_smaller_eps_gives_more_cuts(sphere_pair):
    S, M = sphere_pair
    a = choose_cut_levels(S, M, 0.8)
    b = choose_cut_levels(S, M, 0.5)
    assert len(b.cuts) > len(a.cuts)
    with pytest.raises(ValueError):
        choose_cut_levels(S, M, 0.0)


def test_torus_plan_brackets(torus_pair):
    S, M = torus_pair
    plan = choose_cut_levels(S, M, 1.0)
    kinds = [b.kind for b in plan.brackets]
    assert kinds.count("saddle") == 2 and kinds.count("cap") == 2
    for b in plan.brackets:
        if b.kind == "saddle":
            lo, hi = b.cuts
            assert lo < b.value < hi and b.zone.r == pytest.approx(1.0 / 8)
            assert hi - lo > 2 * plan.delta


def test_plan_arcs_cases():
    s = np.linspace(0, 10, 100, endpoint=False)
    assert plan_arcs(s, 10.0, 11.0) == ([], ["all"])
    cuts, labels = plan_arcs(s, 10.0, 3.0)
    assert len(cuts) >= 4 and all(c % 1 == 0.5 for c in cuts)
    assert all(l.startswith("arc") for l in labels)
    core = np.zeros(100, bool)
    core[40:46] = True
    cuts, labels = plan_arcs(s, 10.0, 3.0, core=core)
    assert labels.count("U0") == 1
    j = labels.index("U0")
    assert cuts[j] < 40 and cuts[(j + 1) % len(cuts)] > 45
    assert plan_arcs(s, 10.0, 3.0, core=np.ones(100, bool)) == ([], ["U0"])
    allowed = np.zeros(100, bool)
    with pytest.raises(ResolutionError):
        plan_arcs(s, 10.0, 3.0, core=core, allowed=allowed)
    with pytest.raises(ResolutionError):
        plan_arcs(np.arange(6.0), 6.0, 0.5)


# family ---------------------------------------------------------------------

def test_sphere_family_structure(sphere_dec, sphere_report):
    fam = sphere_dec.family
    assert len(fam) >= 5
    assert fam.count("critical-patch") == 2
    assert len(set(fam.names)) == len(fam)
    assert sphere_report.passed, sphere_report.to_json()
    assert sphere_report.overlap <= 2 * (sphere_dec.info["circle_overlap"] + 1)
    assert sphere_report.get("diameter")["value"] < 3 * 0.8


def test_sphere_p15_family(sphere_dec_small):
    rep = verify_decomposition(sphere_dec_small, riesz_probes=32)
    assert rep.passed, rep.to_json()
    lo, hi = rep.riesz
    assert 2 ** (1 / 1.5 - 1) * 0.95 <= lo <= hi <= 2 ** (1 / 1.5) * 1.0245 * 1.05


def test_support_diameter_oracle(sphere_pair):
    S, _ = sphere_pair
    P = np.array([[0.3, 0.0], [np.pi - 0.3, 0.0], [np.pi / 2, 1.0]])
    assert support_diameter(S, P) == pytest.approx(np.pi - 0.6, rel=1e-3)


def test_polygons_cover_supports(sphere_dec):
    polys = support_polygons(sphere_dec, raster=(48, 96))
    assert len(polys) == len(sphere_dec.family)
    assert all(len(p) >= 1 for p in polys)


def test_negative_fixtures_fail(sphere_pair):
    S, M = sphere_pair
    for kw in ({"corrupt_cut": 2}, {"shift": (2, 0.005)}):
        dec = build_decomposition(S, M, 0.8, n_levels=128, n_traj=128, **kw)
        assert not verify_decomposition(dec, riesz_probes=32, diameters=False).passed
    with pytest.raises(IndexError):
        build_decomposition(S, M, 0.8, n_levels=128, n_traj=64, corrupt_cut=99)


# coarsening and transfers ---------------------------------------------------

def test_coarsen(sphere_dec):
    fam, fg = sphere_dec.family, sphere_dec.grid
    g = sphere_dec.quadrature()
    n = fg.n
    whole = coarsen(fam, [np.ones(n, bool)])
    assert len(whole) == 1 and abs(whole.operators[0] - sp.identity(n)).max() < 1e-12
    same = coarsen(fam, list(fam.supports))
    assert len(same) == len(fam)
    z = fg.surface.embed(fg.nodes)[:, 2]
    theta = np.arccos(np.clip(z, -1, 1))
    hemi = [theta > np.pi / 2 - 0.6, theta < np.pi / 2 + 0.6]
    two = coarsen(fam, hemi)
    assert len(two) == 2
    assert check_family(two, g, {"idempotence": 1e-4, "annihilation": 1e-4, "sum": 1e-4,
                                 "symmetry": 1e-4, "eigen": 1e-4}, riesz_probes=32).passed
    with pytest.raises(ValueError):
        coarsen(fam, [theta < 0.1])


@pytest.mark.parametrize("p", [2.0, 1.5])
def test_transfer_weight(sphere_dec, sphere_dec_small, p):
    dec = sphere_dec if p == 2 else sphere_dec_small
    fam, g = dec.family, dec.quadrature()
    same = transfer_weight(fam, g.weights, g.weights)
    assert all(abs(a - b).max() == 0 for a, b in zip(same.operators, fam.operators))
    z = dec.grid.surface.embed(dec.grid.nodes)[:, 2]
    wt = g.weights * (1 + 0.5 * z ** 2 + 0.3 * z)
    new = transfer_weight(fam, g.weights, wt)
    g2 = reweighted(g, wt)
    tol = {"idempotence": 1e-4, "annihilation": 1e-4, "sum": 1e-4, "symmetry": 1e-4, "eigen": 1e-4}
    rep = check_family(new, g2, tol, riesz_probes=16)
    assert rep.passed, rep.to_json()
    F = random_probes(g, 8, 11)
    r0 = riesz_ratios(fam, g, F)
    r1 = riesz_ratios(new, g2, F * ((g.weights / wt) ** (1 / p))[:, None])
    assert np.abs(r1 - r0).max() < 1e-10
    with pytest.raises(ValueError):
        transfer_weight(fam, g.weights, -wt)


def test_transfer_diffeo(sphere_dec):
    fam, g = sphere_dec.family, sphere_dec.quadrature()
    ident = Diffeo(lambda X: X, lambda X: np.ones(len(X)))
    f1, g1 = transfer_diffeo(fam, g, ident)
    assert np.array_equal(g1.weights, g.weights)
    dil = Diffeo(lambda X: X, lambda X: np.full(len(X), 4.0))  # sphere of radius 2
    f2, g2 = transfer_diffeo(fam, g, dil)
    assert g2.meta["nu"].sum() == pytest.approx(16 * np.pi, rel=1e-6)
    assert np.allclose(g2.meta["omega_N"] * g2.meta["nu"], g2.weights)
    F = random_probes(g, 8, 4)
    assert np.abs(riesz_ratios(f2, g2, F) - riesz_ratios(fam, g, F)).max() < 1e-10
    with pytest.raises(ValueError):
        transfer_diffeo(fam, g, Diffeo(lambda X: X, lambda X: np.zeros(len(X))))
