import numpy as np
import pytest
from hypothesis import given, strategies as st

from projop.bell import make_bell, eval_bell, verify_bell, derivative_bounds, smooth_step


def test_value_at_zero():
    assert float(eval_bell(make_bell(0.1), 0.0)) == pytest.approx(np.sqrt(0.5), abs=1e-15)


@pytest.mark.parametrize("profile", ["smooth", "sine"])
def test_identity_range_support(profile):
    r = verify_bell(make_bell(0.05, profile))
    assert r["max_identity_defect"] < 1e-14
    assert r["max_range_violation"] == 0.0
    assert r["max_support_violation"] == 0.0


@pytest.mark.parametrize("profile", ["constant", "corrupted"])
def test_fake_profiles_fail(profile):
    r = verify_bell(make_bell(0.05, profile))
    assert max(r.values()) > 0.1


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
def test_bad_delta(bad):
    with pytest.raises(ValueError):
        make_bell(bad)


def test_unknown_profile():
    with pytest.raises(ValueError):
        make_bell(0.1, "square")


def test_outside_transition():
    b = make_bell(0.2)
    t = np.linspace(0.2, 3, 50)
    assert np.all(eval_bell(b, t) == 1.0)
    assert np.all(eval_bell(b, -t) == 0.0)


def test_derivatives_finite_and_scale():
    # derivatives scale like delta^-k
    d1 = derivative_bounds(make_bell(0.1), max_order=2)
    d2 = derivative_bounds(make_bell(0.2), max_order=2)
    assert all(np.isfinite(d1))
    assert d1[0] / d2[0] == pytest.approx(2.0, rel=1e-3)
    assert d1[1] / d2[1] == pytest.approx(4.0, rel=1e-2)


@given(st.floats(1e-3, 10.0), st.floats(-20.0, 20.0))
def test_quadratic_identity_property(delta, t):
    b = make_bell(delta)
    assert eval_bell(b, t) ** 2 + eval_bell(b, -t) ** 2 == pytest.approx(1.0, abs=1e-14)


@given(st.floats(0.0, 1.0))
def test_step_symmetry(u):
    assert smooth_step(u) + smooth_step(1 - u) == pytest.approx(1.0, abs=1e-15)


@given(st.floats(1e-2, 1.0), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_monotone(delta, ts):
    a, b = sorted(ts)
    bell = make_bell(delta)
    assert eval_bell(bell, a) <= eval_bell(bell, b) + 1e-15
