"""Manifold folding operators across level sets and latitudinal projections.

Two routes are provided: pointwise evaluation through flow coordinates
(``aww_manifold_apply``), and sparse matrices on a flow-coordinate node grid
where the reflection ``t -> 2*theta - t`` maps nodes onto nodes.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bell import eval_bell, make_bell
from .family import ProjectionFamily
from .geometry import (FlowAtlas, RegularityError, _pts, flow_points)


@dataclass(frozen=True)
class LatitudeOp:
    """``kind="E"``: cut-off ``cuts[0]``; ``kind="Q"``: ``E_{cuts[0]} - E_{cuts[1]}``.

    ``None`` as a cut-off encodes the conventions ``E = I`` (bottom) and
    ``E = 0`` (top).
    """
    kind: str
    cuts: tuple
    delta: float
    bell: object
    p: float
    atlases: tuple


def _check_regular(morse, theta, delta):
    for c in morse.critical:
        if theta - delta <= c.value <= theta + delta:
            raise RegularityError(f"critical value {c.value} inside transition of {theta}")


def aww_operator(surface, morse, theta, delta, p=2.0, bell=None):
    bell = bell if bell is not None else make_bell(delta)
    _check_regular(morse, theta, delta)
    atlas = FlowAtlas(surface, morse, theta, (theta - delta, theta + delta))
    return LatitudeOp("E", (theta,), delta, bell, p, (atlas,))


def _ratio(atlas, t_src, t_dst, x, p):
    if np.isinf(p):
        return 1.0
    return (atlas.psi(t_dst, x) / atlas.psi(t_src, x)) ** (1.0 / p)


def aww_manifold_apply(E, f, Y):
    """Evaluate ``E f`` at points ``Y``; ``f`` maps (N, 2) points to values."""
    single = np.asarray(Y).ndim == 1
    Y = _pts(Y)
    atlas = E.atlases[0]
    th, d = E.cuts[0], E.delta
    t = atlas.morse.m(Y)
    out = np.zeros(len(Y))
    up = t >= th + d
    if up.any():
        out[up] = f(Y[up])
    for i in np.nonzero(np.abs(t - th) < d)[0]:
        y = Y[i:i + 1]
        ti = float(t[i])
        x = flow_points(atlas.surface, atlas.morse, y, ti, th) if ti != th else y
        tr = 2 * th - ti
        yr = flow_points(atlas.surface, atlas.morse, x, th, tr) if tr != th else x
        a = eval_bell(E.bell, ti - th)
        b = eval_bell(E.bell, th - ti)
        r = _ratio(atlas, ti, tr, x, E.p)
        out[i] = a * a * f(y)[0] + a * b * float(np.squeeze(r)) * f(yr)[0]
    return out[0] if single else out


def latitudinal_projection(theta1, theta2, delta, p, surface, morse, bell=None):
    """``Q = E_theta1 - E_theta2`` with the bottom/top conventions for ``None``."""
    if theta1 is not None and theta2 is not None and not theta1 + delta < theta2 - delta:
        raise ValueError("transition intervals overlap")
    bell = bell if bell is not None else make_bell(delta)
    ats = []
    for th in (theta1, theta2):
        if th is None:
            ats.append(None)
        else:
            ats.append(aww_operator(surface, morse, th, delta, p, bell).atlases[0])
    return LatitudeOp("Q", (theta1, theta2), delta, bell, p, tuple(ats))


def apply_latitude(Q, f, Y):
    Y = _pts(Y)
    if Q.kind == "E":
        return aww_manifold_apply(Q, f, Y)
    out = np.zeros(len(Y))
    for sign, th, at in ((1.0, Q.cuts[0], Q.atlases[0]), (-1.0, Q.cuts[1], Q.atlases[1])):
        if th is None:
            if sign > 0:
                out += f(Y)
            continue
        E = LatitudeOp("E", (th,), Q.delta, Q.bell, Q.p, (at,))
        out += sign * aww_manifold_apply(E, f, Y)
    return out


# ---------------------------------------------------------------------------
# discrete route

@dataclass
class LevelGrid:
    """Level nodes with Gauss-Legendre blocks; zones are reflection symmetric."""
    levels: np.ndarray
    dt: np.ndarray
    cuts: tuple
    delta: float
    zones: list
    partner: np.ndarray

    def strip_levels(self, i):
        """Boolean mask of levels in the support of strip ``i`` (0..len(cuts))."""
        lo = -np.inf if i == 0 else self.cuts[i - 1] - self.delta
        hi = np.inf if i == len(self.cuts) else self.cuts[i] + self.delta
        return (self.levels > lo) & (self.levels < hi)


def _gl(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def level_grid(lo, hi, cuts, delta, n_levels, n_zone=16, min_gap=2):
    """Levels on ``(lo, hi)`` with ``n_zone`` symmetric nodes in every transition zone."""
    cuts = tuple(float(c) for c in cuts)
    if n_zone % 2:
        raise ValueError("n_zone must be even")
    edges = [lo]
    for c in cuts:
        edges += [c - delta, c + delta]
    edges.append(hi)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("transition zones overlap or leave the range")
    gaps = [(edges[2 * i], edges[2 * i + 1]) for i in range(len(cuts) + 1)]
    left = n_levels - n_zone * len(cuts)
    if left < min_gap * len(gaps):
        raise ValueError("n_levels too small for the number of cut-offs")
    lens = np.array([b - a for a, b in gaps])
    alloc = np.maximum(min_gap, np.floor(left * lens / lens.sum()).astype(int))
    while alloc.sum() > left:
        alloc[np.argmax(alloc)] -= 1
    while alloc.sum() < left:
        alloc[np.argmax(lens / alloc)] += 1
    lv, w, zones = [], [], []
    pos = 0
    for i, (a, b) in enumerate(gaps):
        x, ww = _gl(int(alloc[i]), a, b)
        lv.append(x)
        w.append(ww)
        pos += len(x)
        if i < len(cuts):
            x, ww = _gl(n_zone, cuts[i] - delta, cuts[i] + delta)
            lv.append(x)
            w.append(ww)
            zones.append(pos + np.arange(n_zone))
            pos += n_zone
    levels = np.concatenate(lv)
    partner = np.full(len(levels), -1)
    for z in zones:
        partner[z] = z[::-1]
    return LevelGrid(levels, np.concatenate(w), cuts, float(delta), zones, partner)


def aww_matrix(fg, lg, i, bell, p, shift=0.0):
    """Sparse matrix of ``E_{cuts[i]}`` on the node grid ``fg``.

    A nonzero ``shift`` centres the bell at ``cut + shift`` while keeping the
    reflection pairs of the zone (used only as a negative control).
    """
    K, L = fg.shape
    th = lg.cuts[i]
    t = lg.levels
    w = fg.weights.reshape(K, L)
    rows, cols, vals = [], [], []
    above = np.nonzero(t >= th + lg.delta)[0]
    idx = (above[:, None] * L + np.arange(L)).ravel()
    rows.append(idx)
    cols.append(idx)
    vals.append(np.ones(len(idx)))
    for k in lg.zones[i]:
        kp = lg.partner[k]
        a = float(eval_bell(bell, t[k] - th - shift))
        b = float(eval_bell(bell, th + shift - t[k]))
        r = np.ones(L) if np.isinf(p) else (w[kp] / w[k]) ** (1.0 / p)
        base = k * L + np.arange(L)
        rows += [base, base]
        cols += [base, kp * L + np.arange(L)]
        vals += [np.full(L, a * a), a * b * r]
    n = K * L
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def latitudinal_matrices(fg, lg, bell, p):
    """``Q_i = E_{i} - E_{i+1}`` for every strip, with ``E`` bottom = I and top = 0."""
    n = fg.n
    E = [sp.identity(n, format="csr")]
    E += [aww_matrix(fg, lg, i, bell, p) for i in range(len(lg.cuts))]
    E.append(sp.csr_matrix((n, n)))
    return [(E[i] - E[i + 1]).tocsr() for i in range(len(E) - 1)], E


def strip_mask(fg, lg, i):
    return np.repeat(lg.strip_levels(i), fg.shape[1])


def latitudinal_family(fg, lg, p, bell=None):
    """Family of latitudinal projections on a node grid."""
    bell = bell if bell is not None else make_bell(lg.delta)
    Q, _ = latitudinal_matrices(fg, lg, bell, p)
    masks = [strip_mask(fg, lg, i) for i in range(len(Q))]
    kinds = ["cap"] + ["strip"] * (len(Q) - 2) + ["cap"]
    return ProjectionFamily(Q, masks, kinds, fg.surface.name, p,
                            names=[f"Q{i}" for i in range(len(Q))],
                            meta={"cuts": list(lg.cuts), "delta": lg.delta})
