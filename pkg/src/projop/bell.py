"""Smooth bell (rising cutoff) functions.

A bell ``s`` with half-width ``delta`` satisfies ``s(t)**2 + s(-t)**2 = 1``,
vanishes for ``t <= -delta`` and equals one for ``t >= delta``.

>>> b = make_bell(0.1)
>>> float(eval_bell(b, 0.0))
0.7071067811865476
"""
from dataclasses import dataclass
from math import comb

import numpy as np

PROFILES = ("smooth", "sine", "constant", "corrupted")


@dataclass(frozen=True)
class BellFunction:
    """Immutable bell with transition half-width ``delta``."""
    delta: float
    profile: str = "smooth"
    n_check: int = 10001

    def __call__(self, t):
        return eval_bell(self, t)


def _theta(u):
    out = np.zeros_like(u)
    pos = u > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / u[pos])
    return out


def smooth_step(u):
    """C-infinity step on [0, 1] with ``h(u) + h(1 - u) = 1``."""
    u = np.asarray(u, dtype=float)
    a = _theta(u)
    b = _theta(1.0 - u)
    return a / (a + b)


def make_bell(delta, profile="smooth"):
    """Build a bell function.

    Parameters
    ----------
    delta : float
        Half-width of the transition zone, must be positive.
    profile : str
        ``"smooth"`` (default, C-infinity), ``"sine"`` (iterated sine,
        finite smoothness, used for cross-testing), ``"constant"`` (fake
        profile ``s = sqrt(2)/2`` that violates the support condition) or
        ``"corrupted"`` (a step without the sine, breaks the identity).
    """
    if not np.isfinite(delta) or delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    return BellFunction(float(delta), profile)


def eval_bell(b, t):
    """Evaluate the bell at ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    d = b.delta
    if b.profile == "constant":
        return np.full_like(t, np.sqrt(0.5))[()]
    u = np.clip((t + d) / (2 * d), 0.0, 1.0)
    if b.profile == "smooth":
        out = np.sin(0.5 * np.pi * smooth_step(u))
    elif b.profile == "sine":
        x = 2 * u - 1
        for _ in range(3):
            x = np.sin(0.5 * np.pi * x)
        out = np.sin(0.25 * np.pi * (1 + x))
    else:
        out = smooth_step(u)
    return out[()]


def verify_bell(b, n_grid=10001):
    """Check the quadratic identity, range and support on [-2 delta, 2 delta].

    Returns
    -------
    dict
        ``max_identity_defect``, ``max_range_violation`` and
        ``max_support_violation``.
    """
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    t = np.linspace(-2 * b.delta, 2 * b.delta, n_grid)
    s = np.asarray(eval_bell(b, t))
    sm = np.asarray(eval_bell(b, -t))
    defect = np.abs(s**2 + sm**2 - 1)
    rng = np.maximum(np.maximum(-s, s - 1), 0.0)
    lo = t <= -b.delta
    hi = t >= b.delta
    supp = np.concatenate([np.abs(s[lo]), np.abs(1 - s[hi]), [0.0]])
    return {
        "max_identity_defect": float(defect.max()),
        "max_range_violation": float(rng.max()),
        "max_support_violation": float(supp.max()),
    }


def derivative_bounds(b, max_order=4, step=1e-4, n_grid=2001):
    """Central finite-difference derivative sup-norms on [-delta, delta].

    Returns a list with the bound for orders 1..max_order.
    """
    t = np.linspace(-b.delta, b.delta, n_grid)
    out = []
    for k in range(1, max_order + 1):
        # k-th central difference
        acc = np.zeros_like(t)
        for j in range(k + 1):
            c = (-1) ** j * comb(k, j)
            acc += c * np.asarray(eval_bell(b, t + (k / 2 - j) * step))
        out.append(float(np.abs(acc / step**k).max()))
    return out

