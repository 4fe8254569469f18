"""Lifting level-set projections to strips, and the critical-patch residual.

Pointwise route: operators act on callables through flow coordinates.
Discrete route: on a flow node grid a base circle operator ``P0`` acts on the
trajectory index at every level, conjugated by the node weights, so that in
weighted variables the lift is ``I (levels) x P0`` and commutes exactly with
the latitudinal matrices.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import hestenes as hs
from .aww1d import PartitionSpec, circle_decomposition
from .bell import make_bell
from .geometry import (_pts, flow_points, level_set, locate_on_level, project_to_level)
from .latitudinal import apply_latitude
from .verify import assemble_matrix, circle_grid


class LiftError(ValueError):
    pass


# ---------------------------------------------------------------------------
# pointwise route

@dataclass(eq=False)
class BaseOp:
    """Operator on functions over one component of a base level curve.

    ``hop`` acts on the arclength coordinate of ``curve.components[comp]``
    (period = its length).  Functions are callables on points of the level.
    """
    hop: object
    curve: object
    comp: int
    atlas: object

    def arclength(self, X):
        c, s = locate_on_level(self.atlas.surface, self.curve, X)
        return c, s

    def point(self, s):
        C = self.curve.components[self.comp]
        return project_to_level(self.atlas.surface, self.atlas.morse, C.point_at(s), self.atlas.theta)

    def apply(self, g, X):
        X = _pts(X)
        c, s = self.arclength(X)
        out = np.zeros(len(X))
        on = c == self.comp
        for t in self.hop.terms:
            ins = on & t.V.contains(s)
            if not ins.any():
                continue
            phi = np.asarray(t.phi(s[ins]), float)
            out[ins] += phi * g(self.point(t.Phi(s[ins])))
        return out


@dataclass(eq=False)
class RebasedOp:
    """``P~ f(x) = P_s(f o F_{theta,s})(F_{s,theta} x)`` on the level ``s``."""
    lifted: object
    s: float

    def apply(self, g, X):
        L = self.lifted
        at = L.atlas
        X = _pts(X)
        x = flow_points(at.surface, at.morse, X, self.s, at.theta)
        gg = lambda Y: g(flow_points(at.surface, at.morse, Y, at.theta, self.s))
        return L.slice_apply(self.s, gg, x)


@dataclass(eq=False)
class LiftedOp:
    """Lifted operator; ``kind`` in {local, global, strip, critical-patch}."""
    base: object
    atlas: object
    p: float
    kind: str = "local"
    strip: tuple = None
    Q: object = None
    others: tuple = ()
    meta: dict = field(default_factory=dict)

    def _w(self, t, x):
        # (psi(t, .) / psi(theta, .))^{1/p}
        if np.isinf(self.p) or t == self.atlas.theta:
            return np.ones(len(_pts(x)))
        return (self.atlas.psi(t, x) / self.atlas.psi(self.atlas.theta, x)) ** (1.0 / self.p)

    def slice_apply(self, t, g, X):
        """``P_t g`` at base points ``X`` (weight-conjugated slice operator)."""
        X = _pts(X)
        gw = lambda Y: g(Y) * self._w(t, Y)
        return self.base.apply(gw, X) / self._w(t, X)


def lift_local(P, atlas, p, J_tilde=None, sample_density=401):
    """Local lift of a base operator; ``Pi(h)(t, x)`` with ``h(t, X)``.

    ``J_tilde`` (an ``OpenSet`` in arclength) is the set the base operator
    must be localized on.
    """
    if J_tilde is not None and isinstance(P, BaseOp):
        if not hs.is_localized_on(P.hop, J_tilde, sample_density=sample_density):
            raise LiftError("base operator is not localized on the admissible level set")
    return LiftedOp(P, atlas, p, "local")


def apply_local(Pi, h, t, X):
    return Pi.slice_apply(t, lambda Y: h(t, Y), X)


def lift_global(Pi):
    return LiftedOp(Pi.base, Pi.atlas, Pi.p, "global", meta=dict(Pi.meta))


def rebase(Pi, s):
    """Lift of the same operator expressed on the base level ``s``."""
    from .geometry import FlowAtlas
    at = Pi.atlas
    new = FlowAtlas(at.surface, at.morse, s, at.interval, at.zone, at.exclude, at.fd_step)
    return LiftedOp(RebasedOp(Pi, s), new, Pi.p, Pi.kind, Pi.strip, Pi.Q, Pi.others, dict(Pi.meta))


def apply_lifted(L, f, Y):
    """Evaluate a global, strip or critical-patch operator at points ``Y``."""
    Y = _pts(Y)
    if L.kind == "strip":
        inner = LiftedOp(L.base, L.atlas, L.p, "global")
        return apply_lifted(inner, lambda P: apply_latitude(L.Q, f, P), Y)
    if L.kind == "critical-patch":
        out = apply_latitude(L.Q, f, Y)
        for o in L.others:
            out = out - apply_lifted(o, f, Y)
        return out
    at = L.atlas
    t = at.morse.m(Y)
    a, b = at.interval
    out = np.zeros(len(Y))
    for i in np.nonzero((t > a) & (t < b))[0]:
        ti = float(t[i])
        x = flow_points(at.surface, at.morse, Y[i:i + 1], ti, at.theta) if ti != at.theta else Y[i:i + 1]
        h = lambda X, ti=ti: f(flow_points(at.surface, at.morse, X, at.theta, ti)) if ti != at.theta else f(X)
        out[i] = L.slice_apply(ti, h, x)[0]
    return out


def strip_projection(PiM, Q, samples=None, f=None, tol=1e-5):
    """``P_O(U) = Pi^M o Q``; optionally checks ``Pi^M Q = Q Pi^M`` on samples."""
    S = LiftedOp(PiM.base, PiM.atlas, PiM.p, "strip", Q=Q, meta=dict(PiM.meta))
    if samples is not None:
        a = apply_lifted(S, f, samples)
        b = apply_latitude(Q, lambda P: apply_lifted(PiM, f, P), samples)
        S.meta["commutation_defect"] = float(np.max(np.abs(a - b)))
        if S.meta["commutation_defect"] > tol:
            raise LiftError(f"commutation defect {S.meta['commutation_defect']:.3g} above {tol}")
    return S


def critical_patch(Q, others):
    """Residual ``Q - sum(others)`` localized near the critical point."""
    if not others:
        raise LiftError("cover without the distinguished critical set")
    o = others[0]
    return LiftedOp(None, o.atlas, o.p, "critical-patch", Q=Q, others=tuple(others))


def circle_base_ops(curve, comp, atlas, thetas, delta, p=2.0, bell=None):
    """Base operators on a level component from a circle decomposition in arclength."""
    C = curve.components[comp]
    spec = PartitionSpec(sorted(thetas), delta, topology="circle", period=C.length)
    fam = circle_decomposition(spec, bell if bell is not None else make_bell(delta), p)
    return [BaseOp(P, curve, comp, atlas) for P in fam.operators], fam


# ---------------------------------------------------------------------------
# discrete route

@dataclass
class ArcCover:
    """Circle decomposition of one level component in trajectory-index units.

    ``traj`` lists trajectory indices in circular order; ``cuts`` are
    half-integer positions; ``mats`` are the ``n x n`` arc projections and
    ``support`` their boolean supports on the ordered trajectories.
    """
    comp: int
    traj: np.ndarray
    cuts: tuple
    delta: int
    mats: list
    support: list
    labels: list


def arc_cover(traj, cuts, delta, p, comp=0, labels=None, bell_profile="smooth"):
    """Build the index-circle decomposition; no cuts means the identity."""
    traj = np.asarray(traj)
    n = len(traj)
    if len(cuts) == 0:
        mats = [sp.identity(n, format="csr")]
        sup = [np.ones(n, bool)]
        return ArcCover(comp, traj, (), delta, mats, sup, labels or ["all"])
    if len(cuts) == 1:
        raise LiftError("a circle cover needs zero or at least two cut-offs")
    spec = PartitionSpec(sorted(float(c) for c in cuts), float(delta), topology="circle", period=float(n))
    fam = circle_decomposition(spec, make_bell(float(delta), bell_profile), p)
    g = circle_grid(n, period=float(n))
    mats = [assemble_matrix(P, g, interpolate=False) for P in fam.operators]
    sup = []
    for M in mats:
        A = abs(M)
        sup.append(np.asarray((A.sum(axis=0) > 0)).ravel() | np.asarray(A.sum(axis=1) > 0).ravel())
    labels = labels or [f"arc{j}" for j in range(len(mats))]
    return ArcCover(comp, traj, tuple(sorted(cuts)), delta, mats, sup, labels)


def lift_matrix(fg, level_mask, traj, P0, p):
    """``D^{-1} (I x P0) D`` on the levels in ``level_mask``; ``D = diag(w^{1/p})``."""
    K, L = fg.shape
    w = fg.weights.reshape(K, L)
    P0 = sp.coo_matrix(P0)
    rows, cols, vals = [], [], []
    for k in np.nonzero(level_mask)[0]:
        a = traj[P0.row]
        b = traj[P0.col]
        r = 1.0 if np.isinf(p) else (w[k, b] / w[k, a]) ** (1.0 / p)
        rows.append(k * L + a)
        cols.append(k * L + b)
        vals.append(P0.data * r)
    n = K * L
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def strip_projection_matrix(Q, Lm):
    """``Q L`` together with the commutation defect ``max |QL - LQ|``."""
    A = (Q @ Lm).tocsr()
    B = (Lm @ Q).tocsr()
    D = A - B
    return A, (float(np.abs(D.data).max()) if D.nnz else 0.0)


def critical_patch_matrix(Q, others):
    if not len(others):
        raise LiftError("cover without the distinguished critical set")
    out = Q.copy()
    for o in others:
        out = out - o
    out = out.tocsr()
    out.eliminate_zeros()
    return out


def strip_family(fg, lg, i, Q, covers, p, mask_levels=None):
    """Lift every arc of every component cover; returns (mats, masks, names, defects)."""
    K, L = fg.shape
    lev = lg.strip_levels(i) if mask_levels is None else mask_levels
    mats, masks, names, defects = [], [], [], []
    for cov in covers:
        for M0, sup, lab in zip(cov.mats, cov.support, cov.labels):
            Lm = lift_matrix(fg, lev, cov.traj, M0, p)
            P, d = strip_projection_matrix(Q, Lm)
            mask = np.zeros((K, L), bool)
            mask[np.ix_(lev, cov.traj[sup])] = True
            mats.append(P)
            masks.append(mask.ravel())
            names.append(f"S{i}.c{cov.comp}.{lab}")
            defects.append(d)
    return mats, masks, names, defects
