"""AWW projections on the line and the circle, and the constants ``B_p``."""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .bell import BellFunction, eval_bell
from .family import ProjectionFamily
from . import hestenes as hs


@dataclass(frozen=True)
class AwwLineOp:
    """Folding projection across ``theta``; polarity is +1 or -1."""
    bell: BellFunction
    theta: float
    polarity: int = 1

    @property
    def delta(self):
        return self.bell.delta


def aww_line_apply(op, h, t):
    """``E h(t) = s^2(t-th) h(t) +- s(t-th) s(th-t) h(2 th - t)``."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    a = np.asarray(eval_bell(op.bell, t - op.theta))
    b = np.asarray(eval_bell(op.bell, op.theta - t))
    out = a * a * h(t)
    fold = np.abs(t - op.theta) < op.delta
    if fold.any():
        out[fold] += op.polarity * a[fold] * b[fold] * h(2 * op.theta - t[fold])
    return out[0] if scalar else out


def reflect_about(theta):
    return lambda t, c=theta: 2 * c - t


@dataclass(frozen=True)
class PartitionSpec:
    """Increasing cut-offs with a shared transition half-width.

    ``topology`` is ``"line"`` or ``"circle"``; circles have period
    ``period`` and the cut-offs must lie in ``[0, period)``.
    """
    thetas: tuple
    delta: float
    topology: str = "line"
    period: float = 1.0

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=float)
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if np.any(np.diff(th) <= 2 * self.delta):
            raise ValueError("consecutive cut-offs must be more than 2*delta apart")
        if self.topology == "circle":
            if len(th) < 2:
                raise ValueError("a circle partition needs at least 2 cut-offs")
            if th[0] < 0 or th[-1] >= self.period:
                raise ValueError("circle cut-offs must lie in [0, period)")
            if self.period + th[0] - th[-1] <= 2 * self.delta:
                raise ValueError("wrapped spacing violates the 2*delta condition")
        elif self.topology != "line":
            raise ValueError(f"unknown topology {self.topology!r}")

    def extended(self):
        th = list(map(float, self.thetas))
        if self.topology == "circle":
            th.append(self.period + th[0])
        return th


def _unwrap(spec, j, t):
    """Representative of ``t`` in the window ``(th_j - d, period + th_j - d]``."""
    th = spec.extended()[j]
    lo = th - spec.delta
    return lo + spec.period - np.mod(lo + spec.period - t, spec.period)


def q_interval_apply(spec, j, h, t, bell=None):
    """Piecewise evaluation of ``Q_j = E_{th_j} - E_{th_{j+1}}``.

    For the line, ``j = -1`` and ``j = len(thetas) - 1`` give the two tails
    ``I - E_{th_0}`` and ``E_{th_last}``.
    """
    bell = bell or BellFunction(spec.delta)
    th = spec.extended()
    nseg = len(th) - 1
    if not -1 <= j <= nseg or (spec.topology == "circle" and not 0 <= j < nseg):
        raise IndexError(f"segment index {j} out of range")
    t = np.asarray(t, dtype=float)
    d = spec.delta
    if spec.topology == "circle":
        hh = lambda x: h(np.mod(x, spec.period))
        tau = _unwrap(spec, j, t)
    else:
        hh = h
        tau = t
    lo = th[j] if j >= 0 else -np.inf
    hi = th[j + 1] if j + 1 < len(th) else np.inf
    out = np.zeros_like(tau)
    left = (tau > lo - d) & (tau < lo + d)
    mid = (tau >= lo + d) & (tau <= hi - d)
    right = (tau > hi - d) & (tau < hi + d)
    if left.any():
        out[left] = aww_line_apply(AwwLineOp(bell, lo), hh, tau[left])
    out[mid] = hh(tau[mid])
    if right.any():
        x = tau[right]
        out[right] = hh(x) - aww_line_apply(AwwLineOp(bell, hi), hh, x)
    return out[()]


# ---------------------------------------------------------------------------
# norms of the 2x2 blocks

def _pp(p):
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1)


def norm_A(xi, p, polarity=1):
    """ell^p -> ell^p norm of ``[[xi, +-r], [+-r, 1-xi]]``, ``r = sqrt(xi(1-xi))``.

    Closed forms at p in {1, 2, inf}; otherwise the explicit rank-one
    expression with the convention ``0**negative = inf`` handled at the ends.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    xi = float(xi)
    if not 0 <= xi <= 1:
        raise ValueError("xi must lie in [0, 1]")
    r = np.sqrt(xi * (1 - xi))
    if p == 2:
        return 1.0
    if p == 1 or np.isinf(p):
        return max(xi + r, 1 - xi + r)
    if xi in (0.0, 1.0):
        return 1.0
    q = xi / (1 - xi)
    return ((xi ** (p / 2) + (1 - xi) ** (p / 2)) ** (1 / p)
            * (q ** (p / (2 - 2 * p)) + 1) ** (-1 / p)
            * (np.sqrt(1 - xi) * q ** (1 / (2 - 2 * p)) + np.sqrt(xi)))


def norm_A_rank_one(xi, p):
    """Independent route: ``A = u u^T`` so the norm is ``|u|_p |u|_p'``."""
    u = np.array([np.sqrt(xi), np.sqrt(1 - xi)])
    return float(np.linalg.norm(u, p) * np.linalg.norm(u, _pp(p)))


def norm_A_sampled(xi, p, polarity=1, n=20001):
    """Brute force: maximise ``|A x|_p`` over unit vectors on a fine angle grid."""
    r = np.sqrt(xi * (1 - xi))
    A = np.array([[xi, polarity * r], [polarity * r, 1 - xi]])
    ang = np.linspace(0, np.pi, n)
    X = np.stack([np.cos(ang), np.sin(ang)])
    X = X / np.linalg.norm(X, p, axis=0)
    return float(np.linalg.norm(A @ X, p, axis=0).max())


def Bp(p, n_scan=4097):
    """``sup_xi ||A_xi||_{p->p}``: uniform scan then golden-section refinement."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 2:
        return 1.0
    f = lambda x: -norm_A(min(max(x, 0.0), 1.0), p)
    xs = np.linspace(0, 1, n_scan)
    vals = np.array([-f(x) for x in xs])
    k = int(np.argmax(vals))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, n_scan - 1)]
    res = minimize_scalar(f, bracket=(a, xs[k], b) if 0 < k < n_scan - 1 else None,
                          bounds=None, method="golden", tol=1e-12)
    return float(max(vals[k], -res.fun))


def riesz_envelope(p):
    """``(2^{1/p - 1}, 2^{1/p} B_p)``."""
    ip = 0.0 if np.isinf(p) else 1.0 / p
    return 2.0 ** (ip - 1), 2.0 ** ip * Bp(p)


# ---------------------------------------------------------------------------
# Hestenes-operator form of the families

def aww_line_hop(op):
    """E as a two-term operator (the multiplication term has unbounded support)."""
    b, c, d = op.bell, op.theta, op.delta
    mult = hs.multiplication(lambda t: np.asarray(eval_bell(b, t - c)) ** 2,
                             hs.interval(c - d, np.inf),
                             {"name": "bell_sq", "theta": c, "delta": d})
    refl = _fold_term(b, c, op.polarity, hs.interval(c - d, c + d))
    return hs.HOp((mult, refl), 1)


def _fold_term(b, c, sign, V, unwrap=None, period=None):
    d = b.delta
    if unwrap is None:
        phi = lambda t: sign * np.asarray(eval_bell(b, t - c)) * np.asarray(eval_bell(b, c - t))
        Phi = lambda t: 2 * c - t
    else:
        phi = lambda t: sign * np.asarray(eval_bell(b, unwrap(t) - c)) * np.asarray(eval_bell(b, c - unwrap(t)))
        Phi = lambda t: np.mod(2 * c - unwrap(t), period)
    one = lambda t: np.ones(len(t))
    return hs.SimpleHOp(phi, Phi, V, Phi, one, V,
                        {"name": "fold", "theta": float(c), "delta": d, "sign": sign})


def _segment_hop(spec, bell, j):
    th = spec.extended()
    d = spec.delta
    lo = th[j] if j >= 0 else -np.inf
    hi = th[j + 1] if j + 1 < len(th) else np.inf
    if spec.topology == "circle":
        P = spec.period
        unwrap = lambda t, j=j: _unwrap(spec, j, t)
        V = arc(lo - d, hi + d, P)
        Vl, Vr = arc(lo - d, lo + d, P), arc(hi - d, hi + d, P)
    else:
        unwrap = None
        V = hs.interval(lo - d, hi + d)
        Vl, Vr = hs.interval(lo - d, lo + d), hs.interval(hi - d, hi + d)

    def phi(t):
        x = unwrap(t) if unwrap else t
        a = np.asarray(eval_bell(bell, x - lo)) if np.isfinite(lo) else np.ones_like(x)
        c = np.asarray(eval_bell(bell, hi - x)) if np.isfinite(hi) else np.ones_like(x)
        return a * a * c * c

    terms = [hs.multiplication(phi, V, {"name": "bell_window", "lo": lo, "hi": hi, "delta": d})]
    P = spec.period if spec.topology == "circle" else None
    if np.isfinite(lo):
        terms.append(_fold_term(bell, lo, 1, Vl, unwrap, P))
    if np.isfinite(hi):
        terms.append(_fold_term(bell, hi, -1, Vr, unwrap, P))
    return hs.HOp(tuple(terms), 1), V


def arc(a, b, period=1.0):
    """Open arc ``(a, b)`` of the circle ``R / period Z`` (``b - a < period``)."""
    def pred_open(t):
        x = np.mod(np.asarray(t) - a, period)
        return (x > 0) & (x < b - a)
    return hs.OpenSet(pred_open, (0.0,), (float(period),), f"arc({a:g},{b:g})")


def line_decomposition(spec, bell=None, p=2.0):
    """Family ``{I - E_{th_0}, Q_{th_j, th_{j+1}}, E_{th_last}}`` on the line."""
    if spec.topology != "line":
        raise ValueError("line_decomposition needs a line partition")
    bell = bell or BellFunction(spec.delta)
    ops, sup, names = [], [], []
    for j in range(-1, len(spec.thetas)):
        H, V = _segment_hop(spec, bell, j)
        ops.append(H)
        sup.append(V)
        names.append(f"Q{j + 1}")
    kinds = ["tail"] + ["interval"] * (len(ops) - 2) + ["tail"]
    return ProjectionFamily(ops, sup, kinds, "line", p, names,
                            meta={"thetas": list(spec.thetas), "delta": spec.delta})


def circle_decomposition(spec, bell=None, p=2.0):
    """Family ``{Q_j}`` of arc projections on ``R / period Z``."""
    if spec.topology != "circle":
        raise ValueError("circle_decomposition needs a circle partition")
    bell = bell or BellFunction(spec.delta)
    ops, sup = [], []
    for j in range(len(spec.thetas)):
        H, V = _segment_hop(spec, bell, j)
        ops.append(H)
        sup.append(V)
    return ProjectionFamily(ops, sup, ["arc"] * len(ops), "circle", p,
                            [f"Q{j}" for j in range(len(ops))],
                            meta={"thetas": list(spec.thetas), "delta": spec.delta,
                                  "period": spec.period})
