"""Parametric surfaces, Morse functions, level sets and normalized gradient flows.

Points are chart coordinates of shape ``(N, 2)``; a single point may be passed
as shape ``(2,)``.  Periodic parameters are kept unwrapped along trajectories.
"""
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import map_coordinates
from scipy.sparse.csgraph import dijkstra
from skimage.measure import find_contours

from ._kd import PeriodicTree


class GeometryError(ValueError):
    pass


class NearCriticalError(GeometryError):
    pass


class CriticalProximityError(GeometryError):
    pass


class RegularityError(GeometryError):
    pass


class IntegrationError(GeometryError):
    pass


def _pts(P):
    P = np.asarray(P, dtype=float)
    return P[None, :] if P.ndim == 1 else P


def _back(P, out):
    return out[0] if np.asarray(P).ndim == 1 else out


# ---------------------------------------------------------------------------
# surfaces

@dataclass(eq=False)
class Surface:
    """Parametric surface on a parameter rectangle.

    ``metric_fn`` returns the first fundamental form, shape ``(N, 2, 2)``;
    when omitted it is obtained from the embedding by central differences.
    ``distance_fn(z, P)`` is an optional closed-form geodesic distance.
    """
    name: str
    box: tuple
    periodic: tuple
    embedding: object
    metric_fn: object = None
    distance_fn: object = None
    chart_fn: object = None
    params: dict = field(default_factory=dict)
    geodesic_resolution: tuple = (512, 256)

    def embed(self, P):
        return _back(P, self.embedding(_pts(P)))

    def metric(self, P):
        P = _pts(P)
        if self.metric_fn is not None:
            return self.metric_fn(P)
        h = 1e-6
        d = []
        for a in range(2):
            e = np.zeros(2)
            e[a] = h
            d.append((self.embedding(P + e) - self.embedding(P - e)) / (2 * h))
        G = np.empty((len(P), 2, 2))
        for a in range(2):
            for b in range(2):
                G[:, a, b] = np.sum(d[a] * d[b], axis=1)
        return G

    def area_element(self, P):
        G = self.metric(P)
        return np.sqrt(np.abs(G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0]))

    def periods(self):
        return np.array([(b - a) if p else 0.0 for (a, b), p in zip(self.box, self.periodic)])

    def wrap(self, P):
        P = np.array(_pts(P), dtype=float)
        for k, ((a, b), per) in enumerate(zip(self.box, self.periodic)):
            if per:
                P[:, k] = a + np.mod(P[:, k] - a, b - a)
        return P

    def local_chart(self, z, ab):
        """Map small offsets ``ab`` (N, 2) near ``z`` to parameters."""
        if self.chart_fn is not None:
            return self.chart_fn(np.asarray(z, float), _pts(ab))
        G = self.metric(np.asarray(z, float))[0]
        return np.asarray(z, float) + _pts(ab) / np.sqrt(np.diag(G))

    def length(self, P):
        """Metric length of the polyline ``P`` (M, 2)."""
        P = _pts(P)
        d = np.diff(P, axis=0)
        mid = 0.5 * (P[1:] + P[:-1])
        G = self.metric(mid)
        return float(np.sum(np.sqrt(np.einsum("ni,nij,nj->n", d, G, d))))

    # geodesic distances -----------------------------------------------------
    @cached_property
    def _graph(self):
        n0, n1 = self.geodesic_resolution
        (a0, b0), (a1, b1) = self.box
        g0 = np.linspace(a0, b0, n0, endpoint=not self.periodic[0])
        g1 = np.linspace(a1, b1, n1, endpoint=not self.periodic[1])
        U, V = np.meshgrid(g0, g1, indexing="ij")
        P = np.stack([U.ravel(), V.ravel()], axis=1)
        idx = np.arange(n0 * n1).reshape(n0, n1)
        rows, cols, vals = [], [], []
        h = np.array([g0[1] - g0[0], g1[1] - g1[0]])
        for di, dj in [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]:
            I, J = np.meshgrid(np.arange(n0), np.arange(n1), indexing="ij")
            I2, J2 = I + di, J + dj
            ok = np.ones_like(I, dtype=bool)
            if self.periodic[0]:
                I2 = I2 % n0
            else:
                ok &= (I2 >= 0) & (I2 < n0)
            if self.periodic[1]:
                J2 = J2 % n1
            else:
                ok &= (J2 >= 0) & (J2 < n1)
            a = idx[I[ok], J[ok]]
            b = idx[I2[ok], J2[ok]]
            d = np.array([di, dj]) * h
            mid = P[a] + 0.5 * d
            G = self.metric(mid)
            w = np.sqrt(np.einsum("i,nij,j->n", d, G, d))
            rows.append(a)
            cols.append(b)
            vals.append(w)
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n0 * n1, n0 * n1)).tocsr()
        return A, P, (g0, g1), h

    def _field(self, z):
        A, P, (g0, g1), h = self._graph
        z = self.wrap(np.asarray(z, float))[0]
        i = int(np.round((z[0] - g0[0]) / h[0])) % len(g0)
        j = int(np.round((z[1] - g1[0]) / h[1])) % len(g1)
        src = i * len(g1) + j
        D = dijkstra(A, directed=False, indices=src)
        off = z - P[src]
        corr = float(np.sqrt(off @ self.metric(z)[0] @ off))
        return D.reshape(len(g0), len(g1)) + corr

    def distance(self, z, P):
        """Geodesic distance from ``z`` to each point of ``P``.

        Closed form when available, otherwise Dijkstra on the parameter grid
        (neighbours up to knight moves, metric edge lengths) interpolated
        bilinearly.
        """
        if self.distance_fn is not None:
            return _back(P, self.distance_fn(np.asarray(z, float), _pts(P)))
        key = tuple(np.round(self.wrap(np.asarray(z, float))[0], 12))
        cache = self.__dict__.setdefault("_dist_cache", {})
        if key not in cache:
            cache[key] = self._field(z)
        F = cache[key]
        _, _, (g0, g1), h = self._graph
        Q = self.wrap(P)
        ci = (Q[:, 0] - g0[0]) / h[0]
        cj = (Q[:, 1] - g1[0]) / h[1]
        mode = "grid-wrap" if all(self.periodic) else "nearest"
        out = map_coordinates(F, [ci, cj], order=1, mode=mode)
        return _back(P, out)


def _sphere_embed(P):
    th, ph = P[:, 0], P[:, 1]
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)


def _sphere_metric(P):
    G = np.zeros((len(P), 2, 2))
    G[:, 0, 0] = 1.0
    G[:, 1, 1] = np.sin(P[:, 0]) ** 2
    return G


def _sphere_distance(z, P):
    a = _sphere_embed(_pts(z))[0]
    return np.arccos(np.clip(_sphere_embed(P) @ a, -1.0, 1.0))


def _sphere_chart(z, ab):
    r = np.hypot(ab[:, 0], ab[:, 1])
    ang = np.arctan2(ab[:, 1], ab[:, 0])
    if z[0] < 1e-12:
        return np.stack([r, ang], axis=1)
    if abs(z[0] - np.pi) < 1e-12:
        return np.stack([np.pi - r, ang], axis=1)
    return z + ab / np.array([1.0, np.sin(z[0])])


def sphere():
    """Unit sphere in (polar angle, azimuth)."""
    return Surface("sphere", ((0.0, np.pi), (0.0, 2 * np.pi)), (False, True),
                   _sphere_embed, _sphere_metric, _sphere_distance, _sphere_chart)


def torus(R=2.0, r=1.0, resolution=(512, 256)):
    """Torus with horizontal symmetry axis; ``v`` runs around the tube."""
    def embed(P):
        u, v = P[:, 0], P[:, 1]
        rho = R + r * np.cos(v)
        return np.stack([rho * np.cos(u), r * np.sin(v), rho * np.sin(u)], axis=1)

    def metric(P):
        G = np.zeros((len(P), 2, 2))
        G[:, 0, 0] = (R + r * np.cos(P[:, 1])) ** 2
        G[:, 1, 1] = r * r
        return G

    return Surface("torus", ((-np.pi, np.pi), (-0.5 * np.pi, 1.5 * np.pi)), (True, True),
                   embed, metric, params={"R": R, "r": r}, geodesic_resolution=resolution)


def custom_surface(name, embedding, box, periodic, **kw):
    """Surface from an arbitrary embedding; metric by finite differences."""
    return Surface(name, tuple(map(tuple, box)), tuple(periodic), embedding, **kw)


def make_surface(name, **kw):
    if name == "sphere":
        return sphere()
    if name == "torus":
        return torus(**kw)
    raise GeometryError(f"unknown surface {name!r}")


# ---------------------------------------------------------------------------
# Morse data

@dataclass(frozen=True)
class CriticalPoint:
    point: tuple
    value: float
    index: int


@dataclass(eq=False)
class MorseData:
    """Morse function with chart differential and critical-point inventory."""
    name: str
    m: object
    dm: object
    critical: tuple
    params: dict = field(default_factory=dict)

    def __call__(self, P):
        return _back(P, self.m(_pts(P)))

    @property
    def values(self):
        return np.array(sorted(c.value for c in self.critical))

    @property
    def range(self):
        v = self.values
        return float(v[0]), float(v[-1])

    def critical_sorted(self):
        return sorted(self.critical, key=lambda c: c.value)


def sphere_morse():
    """Height plus one on the unit sphere: minimum 0 at the south pole, maximum 2."""
    m = lambda P: 1.0 + np.cos(P[:, 0])
    dm = lambda P: np.stack([-np.sin(P[:, 0]), np.zeros(len(P))], axis=1)
    crit = (CriticalPoint((np.pi, 0.0), 0.0, 0), CriticalPoint((0.0, 0.0), 2.0, 2))
    return MorseData("height", m, dm, crit)


def torus_morse(R=2.0, r=1.0, offset=None):
    """Height plus offset on the horizontal torus: four critical values."""
    off = R + r if offset is None else offset

    def m(P):
        return (R + r * np.cos(P[:, 1])) * np.sin(P[:, 0]) + off

    def dm(P):
        u, v = P[:, 0], P[:, 1]
        return np.stack([(R + r * np.cos(v)) * np.cos(u), -r * np.sin(v) * np.sin(u)], axis=1)

    h = np.pi / 2
    crit = (CriticalPoint((-h, 0.0), off - R - r, 0),
            CriticalPoint((-h, np.pi), off - R + r, 1),
            CriticalPoint((h, np.pi), off + R - r, 1),
            CriticalPoint((h, 0.0), off + R + r, 2))
    return MorseData("height", m, dm, crit, {"offset": off})


def make_morse(surface, name="height"):
    if name != "height":
        raise GeometryError(f"unknown Morse function {name!r}")
    if surface.name == "sphere":
        return sphere_morse()
    if surface.name == "torus":
        return torus_morse(surface.params["R"], surface.params["r"])
    raise GeometryError(f"no built-in Morse function for {surface.name!r}")


def gradient(surface, morse, P):
    """Chart components of grad m and its squared length."""
    P = _pts(P)
    d = morse.dm(P)
    G = surface.metric(P)
    g = np.linalg.solve(G, d[:, :, None])[:, :, 0]
    return g, np.sum(g * d, axis=1)


def normalized_gradient(surface, morse, P, threshold=1e-8):
    """Renormalized gradient ``grad m / |grad m|^2`` (so that ``dm(X) = 1``)."""
    g, n2 = gradient(surface, morse, P)
    if np.any(n2 < threshold ** 2):
        raise NearCriticalError("gradient vanishes: point is near a critical point")
    return _back(P, g / n2[:, None])


def hessian_at(surface, morse, cp, h=1e-3):
    """Hessian of ``m`` in the local chart of ``cp`` (central differences)."""
    z = np.asarray(cp.point, float)
    f = lambda a, b: morse.m(surface.local_chart(z, np.array([[a, b]])))[0]
    H = np.empty((2, 2))
    f0 = f(0, 0)
    H[0, 0] = (f(h, 0) - 2 * f0 + f(-h, 0)) / h**2
    H[1, 1] = (f(0, h) - 2 * f0 + f(0, -h)) / h**2
    H[0, 1] = H[1, 0] = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h)
    return H


def validate_morse(surface, morse, n=64, exclude=0.05, tol=1e-6):
    """Check the Morse data; returns a dict of measured quantities."""
    out = {"hessian_min_singular": [], "index": [], "value_defect": []}
    for c in morse.critical:
        H = hessian_at(surface, morse, c)
        out["hessian_min_singular"].append(float(np.linalg.svd(H, compute_uv=False).min()))
        out["index"].append(int(np.sum(np.linalg.eigvalsh(H) < 0)))
        out["value_defect"].append(float(abs(morse(np.asarray(c.point)) - c.value)))
    vals = [c.value for c in morse.critical]
    out["distinct_values"] = len(set(np.round(vals, 12))) == len(vals)
    (a0, b0), (a1, b1) = surface.box
    U, V = np.meshgrid(np.linspace(a0, b0, n), np.linspace(a1, b1, n), indexing="ij")
    P = np.stack([U.ravel(), V.ravel()], axis=1)
    far = np.ones(len(P), bool)
    for c in morse.critical:
        far &= surface.distance(np.asarray(c.point), P) > exclude
    _, n2 = gradient(surface, morse, P[far])
    out["min_gradient_away"] = float(np.sqrt(n2.min()))
    out["ok"] = (min(out["hessian_min_singular"]) > tol and out["distinct_values"]
                 and out["min_gradient_away"] > tol
                 and all(i == c.index for i, c in zip(out["index"], morse.critical)))
    return out


# ---------------------------------------------------------------------------
# flows

def project_to_level(surface, morse, P, t, tol=1e-10, max_iter=30):
    """Newton projection along grad m onto ``m = t``."""
    P = np.array(_pts(P), dtype=float)
    t = np.broadcast_to(np.asarray(t, float), (len(P),))
    for _ in range(max_iter):
        r = t - morse.m(P)
        if np.all(np.abs(r) < tol):
            return P
        g, n2 = gradient(surface, morse, P)
        P = P + (r / n2)[:, None] * g
    if np.any(np.abs(t - morse.m(P)) >= tol):
        raise IntegrationError("level projection did not converge")
    return P


def _speed(surface, morse, P, X):
    G = surface.metric(P)
    return np.sqrt(np.einsum("ni,nij,nj->n", X, G, X))


def flow_points(surface, morse, P, t0, t1, step=0.01, max_disp=0.01, tol=1e-10,
                exclude=None, max_substeps=4096, record=None):
    """Integrate ``eta' = X(eta)`` from level ``t0`` to level ``t1``.

    RK4 with ``ceil(|t1-t0|/step)`` equal steps; a step whose spatial
    displacement would exceed ``max_disp`` is split into equal substeps.
    After every step points are projected back onto the exact level.
    ``exclude`` is a list of ``(center, radius)`` balls the trajectories
    must not enter.
    """
    single = np.asarray(P).ndim == 1
    X0 = _pts(P).copy()
    if X0.size == 0:
        return X0
    t0 = float(t0)
    t1 = float(t1)
    if t0 == t1:
        return X0[0] if single else X0
    n = int(math.ceil(abs(t1 - t0) / step - 1e-12))
    h = (t1 - t0) / n
    x = X0
    t = t0
    X = lambda Q: normalized_gradient(surface, morse, Q)
    for k in range(n):
        v = X(x)
        sp_ = _speed(surface, morse, x, v).max()
        nsub = max(1, int(math.ceil(sp_ * abs(h) / max_disp)))
        if nsub > max_substeps:
            raise IntegrationError("step-size underflow near a critical point")
        hs = h / nsub
        for _ in range(nsub):
            k1 = X(x)
            k2 = X(x + 0.5 * hs * k1)
            k3 = X(x + 0.5 * hs * k2)
            k4 = X(x + hs * k3)
            x = x + hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (k + 1) * h if k < n - 1 else t1
        x = project_to_level(surface, morse, x, t, tol)
        if exclude:
            for c, rad in exclude:
                if np.any(surface.distance(c, x) < rad):
                    raise CriticalProximityError("trajectory entered an excluded zone")
        if record is not None:
            record.append((t, x.copy()))
    return x[0] if single else x


@dataclass(eq=False)
class FlowAtlas:
    """Flow maps from the base level ``theta`` and the weight ``psi``.

    ``interval`` is the admissible range of target levels; ``zone`` holds
    the critical-zone data when the interval contains a critical value.
    """
    surface: Surface
    morse: MorseData
    theta: float
    interval: tuple
    zone: object = None
    exclude: tuple = ()
    fd_step: float = 1e-5

    def _check(self, t):
        a, b = self.interval
        t = np.asarray(t, float)
        if np.any(t < a) or np.any(t > b):
            raise GeometryError(f"level {t} outside atlas interval {self.interval}")

    def flow(self, x, t, t_from=None):
        """``F_{theta,t}(x)`` (or ``F_{t_from,t}`` when given)."""
        self._check(t)
        s = self.theta if t_from is None else t_from
        return flow_points(self.surface, self.morse, x, s, t, exclude=list(self.exclude) or None)

    def tangent(self, x):
        """Unit tangent of the level curve through ``x`` (chart components)."""
        P = _pts(x)
        g, _ = gradient(self.surface, self.morse, P)
        G = self.surface.metric(P)
        # rotate grad by 90 degrees with respect to the metric
        det = np.sqrt(G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] ** 2)
        lo = np.einsum("nij,nj->ni", G, g)
        T = np.stack([-lo[:, 1], lo[:, 0]], axis=1) / det[:, None]
        T /= _speed(self.surface, self.morse, P, T)[:, None]
        return T

    def psi(self, t, x, mode="fd"):
        """Jacobian weight of ``(t, arclength) -> F_theta(t, x)``.

        ``mode="fd"`` uses central differences along the base level with
        step ``fd_step``; ``mode="variational"`` integrates the linearized
        flow for the arclength tangent.
        """
        self._check(t)
        P = _pts(x)
        T = self.tangent(P)
        surf, mo = self.surface, self.morse
        if mode == "fd":
            h = self.fd_step
            xp = project_to_level(surf, mo, P + h * T, self.theta)
            xm = project_to_level(surf, mo, P - h * T, self.theta)
            both = np.concatenate([P, xp, xm])
            Y = flow_points(surf, mo, both, self.theta, t) if t != self.theta else both
            n = len(P)
            y, yp, ym = Y[:n], Y[n:2 * n], Y[2 * n:]
            b = (yp - ym) / (2 * h)
        elif mode == "variational":
            y, b = _variational(surf, mo, P, T, self.theta, t)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        v = normalized_gradient(surf, mo, y)
        out = surf.area_element(y) * np.abs(v[:, 0] * b[:, 1] - v[:, 1] * b[:, 0])
        if np.any(out <= 0) or not np.all(np.isfinite(out)):
            raise GeometryError("degenerate Jacobian: difference points collided")
        return _back(x, out)


def _variational(surf, mo, P, T, t0, t1, step=0.01, eps=1e-6):
    X = lambda Q: normalized_gradient(surf, mo, Q)
    DX = lambda Q, B: (X(Q + eps * B) - X(Q - eps * B)) / (2 * eps)
    if t0 == t1:
        return P.copy(), T.copy()
    n = int(math.ceil(abs(t1 - t0) / step))
    h = (t1 - t0) / n
    x, b = P.copy(), T.copy()
    for _ in range(n):
        nsub = max(1, int(math.ceil(_speed(surf, mo, x, X(x)).max() * abs(h) / 0.01)))
        hs = h / nsub
        for _ in range(nsub):
            k1, l1 = X(x), DX(x, b)
            k2, l2 = X(x + 0.5 * hs * k1), DX(x + 0.5 * hs * k1, b + 0.5 * hs * l1)
            k3, l3 = X(x + 0.5 * hs * k2), DX(x + 0.5 * hs * k2, b + 0.5 * hs * l2)
            k4, l4 = X(x + hs * k3), DX(x + hs * k3, b + hs * l3)
            x = x + hs / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            b = b + hs / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
    return x, b


def flow(atlas, x, t):
    return atlas.flow(x, t)


def psi_weight(atlas, t, x, mode="fd"):
    return atlas.psi(t, x, mode)


# ---------------------------------------------------------------------------
# level sets

@dataclass(eq=False)
class LevelComponent:
    """Closed polyline on a level set; ``shift`` closes it in the chart."""
    points: np.ndarray
    shift: np.ndarray
    s: np.ndarray
    length: float

    def closed(self):
        return np.vstack([self.points, self.points[:1] + self.shift])

    def point_at(self, s):
        s = np.mod(np.asarray(s, float), self.length)
        C = self.closed()
        S = np.append(self.s, self.length)
        k = np.clip(np.searchsorted(S, s, side="right") - 1, 0, len(S) - 2)
        lam = (s - S[k]) / (S[k + 1] - S[k])
        return C[k] + lam[..., None] * (C[k + 1] - C[k])

    def closure_gap(self, surface):
        """Chart gap of the closing segment, measured with the metric."""
        C = self.closed()
        return surface.length(C[-2:])


@dataclass(eq=False)
class LevelCurve:
    t: float
    components: list

    @property
    def length(self):
        return sum(c.length for c in self.components)

    def nodes(self):
        return np.vstack([c.points for c in self.components])


def _stitch(pieces, periods, tol):
    """Join open polylines whose endpoints agree modulo the periods."""
    def same(a, b):
        d = a - b
        for k, T in enumerate(periods):
            if T:
                d[k] -= T * np.round(d[k] / T)
        return np.all(np.abs(d) < tol)

    closed, open_ = [], []
    for q in pieces:
        if len(q) > 2 and same(q[0], q[-1]) and np.allclose(q[0], q[-1], atol=tol):
            closed.append((q[:-1], np.zeros(2)))
        else:
            open_.append(q)
    while open_:
        chain = open_.pop(0)
        for _ in range(len(open_) + 2):
            if same(chain[-1], chain[0]) and len(chain) > 2:
                break
            hit = None
            for i, q in enumerate(open_):
                if same(chain[-1], q[0]):
                    hit = (i, q)
                    break
                if same(chain[-1], q[-1]):
                    hit = (i, q[::-1])
                    break
            if hit is None:
                raise RegularityError("level set piece does not close")
            i, q = hit
            open_.pop(i)
            chain = np.vstack([chain, q[1:] + (chain[-1] - q[0])])
        else:
            raise RegularityError("level set piece does not close")
        shift = chain[-1] - chain[0]
        closed.append((chain[:-1], np.round(shift, 9)))
    return closed


def level_set(surface, morse, t, resolution=(256, 256), level_tol=1e-6):
    """Contour ``m = t`` on the parameter grid and project nodes onto the level."""
    lo, hi = morse.range
    if not (lo < t < hi):
        raise RegularityError(f"level {t} is empty or extremal")
    for c in morse.critical:
        if abs(t - c.value) < level_tol:
            raise RegularityError(f"level {t} is within tolerance of a critical value")
    (a0, b0), (a1, b1) = surface.box
    n0, n1 = resolution
    # periodic axes get an irrational offset so seams avoid symmetric lines
    off = [0.3183098861837907 if p else 0.0 for p in surface.periodic]
    g0 = np.linspace(a0, b0, n0 + 1) + off[0] * (b0 - a0) / n0
    g1 = np.linspace(a1, b1, n1 + 1) + off[1] * (b1 - a1) / n1
    U, V = np.meshgrid(g0, g1, indexing="ij")
    M = morse.m(np.stack([U.ravel(), V.ravel()], axis=1)).reshape(U.shape)
    raw = find_contours(M, t)
    h = np.array([g0[1] - g0[0], g1[1] - g1[0]])
    org = np.array([g0[0], g1[0]])
    pieces = [org + c * h for c in raw if len(c) >= 2]
    periods = [(b0 - a0) if surface.periodic[0] else 0.0, (b1 - a1) if surface.periodic[1] else 0.0]
    comps = []
    for pts, shift in _stitch(pieces, periods, 1e-7 * h.max() + 1e-12):
        pts = project_to_level(surface, morse, pts, t)
        C = np.vstack([pts, pts[:1] + shift])
        keep = np.ones(len(C), bool)
        keep[1:] = np.any(np.abs(np.diff(C, axis=0)) > 1e-12, axis=1)
        C = C[keep]
        pts = C[:-1]
        d = np.diff(C, axis=0)
        G = surface.metric(0.5 * (C[1:] + C[:-1]))
        seg = np.sqrt(np.einsum("ni,nij,nj->n", d, G, d))
        s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
        comps.append(LevelComponent(pts, shift, s, float(seg.sum())))
    if not comps:
        raise RegularityError(f"level {t} has no components")
    comps.sort(key=lambda c: (round(float(np.mean(c.points[:, 0])), 6), round(float(np.mean(c.points[:, 1])), 6)))
    return LevelCurve(float(t), comps)


def locate_on_level(surface, curve, P):
    """Component index and arclength position of points lying on ``curve``."""
    P = _pts(P)
    per = surface.periods()
    V = np.vstack([c.points for c in curve.components])
    owner = np.concatenate([np.full(len(c.points), i) for i, c in enumerate(curve.components)])
    sidx = np.concatenate([np.arange(len(c.points)) for c in curve.components])
    tree = PeriodicTree(V, [T if T else None for T in per])
    _, j = tree.query(P)
    comp = owner[j]
    s = np.empty(len(P))
    for ci, c in enumerate(curve.components):
        sel = np.nonzero(comp == ci)[0]
        if len(sel) == 0:
            continue
        k = sidx[j[sel]]
        n = len(c.points)
        C = c.closed()
        S = np.append(c.s, c.length)
        q = c.points[k] + _align(P[sel] - c.points[k], per)
        best = np.full(len(sel), np.inf)
        pos = c.s[k].copy()
        for kk, off in ((np.mod(k - 1, n), -1), (k, 0)):
            A, B = C[kk], C[kk + 1]
            # the previous segment of vertex 0 sits one shift behind
            if off:
                wrap = (k == 0)
                A = A - np.where(wrap[:, None], c.shift, 0.0)
                B = B - np.where(wrap[:, None], c.shift, 0.0)
            d = B - A
            lam = np.clip(np.sum((q - A) * d, axis=1) / np.sum(d * d, axis=1), 0.0, 1.0)
            dist = np.sum((q - A - lam[:, None] * d) ** 2, axis=1)
            better = dist < best
            best[better] = dist[better]
            pos[better] = (S[kk] + lam * (S[kk + 1] - S[kk]))[better]
        s[sel] = np.mod(pos, c.length)
    return comp, s


def _align(d, per):
    d = np.array(d, dtype=float)
    for k, T in enumerate(per):
        if T:
            d[:, k] -= T * np.round(d[:, k] / T)
    return d


# ---------------------------------------------------------------------------
# critical zones

@dataclass
class CriticalZone:
    point: np.ndarray
    value: float
    r: float
    delta_z: float
    deltas: tuple
    V_radius: float
    U_radius: float


def _annulus_samples(surface, z, r_in, r_out, n=241):
    G = surface.metric(np.asarray(z, float))[0]
    scale = 1.0 / np.sqrt(np.diag(G))
    a = np.linspace(-1.6 * r_out, 1.6 * r_out, n)
    A, B = np.meshgrid(a, a, indexing="ij")
    P = surface.local_chart(np.asarray(z, float), np.stack([A.ravel(), B.ravel()], axis=1))
    d = surface.distance(np.asarray(z, float), P)
    sel = (d >= r_in) & (d <= r_out)
    return P[sel]


def transition_time_bound(surface, morse, z, r, n=241):
    """``r / c`` with ``c`` the sampled sup of ``|X|`` on the annulus r <= d <= 2r, inflated 5%."""
    z = np.asarray(getattr(z, "point", z), float)
    P = _annulus_samples(surface, z, r, 2 * r, n)
    if len(P) == 0:
        raise GeometryError("annulus contains no samples")
    for c in morse.critical:
        cz = np.asarray(c.point, float)
        if np.allclose(cz, z):
            continue
        dz = surface.distance(z, cz[None])[0]
        if r <= dz <= 2 * r:
            raise GeometryError("annulus contains another critical point")
    X = normalized_gradient(surface, morse, P)
    c = 1.05 * float(_speed(surface, morse, P, X).max())
    return r / c


def critical_zone(surface, morse, cp, U_radius, min_r=None):
    """Safe zone around a critical point: radius ``r`` with ``B(z,8r)`` in ``U_z``.

    Returns the transition bounds of the three dyadic annuli and
    ``delta_z = min / 3``, capped so the window avoids other critical values.
    """
    r = U_radius / 8.0
    if min_r is None:
        _, _, _, h = surface._graph if surface.distance_fn is None else (None, None, None, np.array([1e-3, 1e-3]))
        min_r = 2 * float(np.max(h))
    if r < min_r:
        raise GeometryError("neighbourhood too small for the geodesic resolution")
    z = np.asarray(cp.point, float)
    deltas = tuple(transition_time_bound(surface, morse, z, 2 ** (i - 1) * r) for i in (1, 2, 3))
    dz = min(deltas) / 3.0
    others = [abs(c.value - cp.value) for c in morse.critical if c is not cp]
    if others:
        dz = min(dz, 0.5 * min(others))
    return CriticalZone(z, cp.value, r, dz, deltas, 4 * r, U_radius)


def tilde_level(surface, morse, zone, theta0, t, n_nodes=2048, resolution=(256, 256)):
    """Flow image at level ``t`` of ``J_theta0`` minus the closed ball ``B(z, 2r)``.

    Returns ``(start_points, image_points)``; node count is preserved.
    """
    curve = level_set(surface, morse, theta0, resolution)
    L = curve.length
    pts = []
    for c in curve.components:
        k = max(8, int(round(n_nodes * c.length / L)))
        pts.append(c.point_at((np.arange(k) + 0.5) * c.length / k))
    X0 = project_to_level(surface, morse, np.vstack(pts), theta0)
    keep = surface.distance(zone.point, X0) > 2 * zone.r
    X0 = X0[keep]
    if t == theta0:
        return X0, X0.copy()
    return X0, flow_points(surface, morse, X0, theta0, t)


def zone_audit(surface, morse, zone, theta0, t, n_nodes=2048, resolution=(256, 256),
               core_fraction=0.25):
    """Sampled check of the critical-zone guarantees on the level ``t``.

    ``J~_t`` is the flow image of ``J_theta0`` minus ``B(z, 2r)``.  A node
    ``y`` of ``J_t`` lies outside ``J~_t`` when its backward flow to
    ``theta0`` lands in ``B(z, 2r)``; outside ``F(J_theta0 \\ V_z)`` when it
    lands in ``V_z``.  Nodes closer than ``core_fraction * r`` to ``z`` are
    not flowed (they satisfy both containments trivially).  Returns counts
    of samples and violations.
    """
    z, r = zone.point, zone.r
    _, img = tilde_level(surface, morse, zone, theta0, t, n_nodes, resolution)
    d_img = surface.distance(z, img)
    curve = level_set(surface, morse, t, resolution)
    Y = []
    for c in curve.components:
        k = max(8, int(round(n_nodes * c.length / curve.length)))
        Y.append(c.point_at((np.arange(k) + 0.5) * c.length / k))
    Y = project_to_level(surface, morse, np.vstack(Y), t)
    dY = surface.distance(z, Y)
    far = dY >= core_fraction * r
    back = np.full((len(Y), 2), np.nan)
    back[far] = flow_points(surface, morse, Y[far], t, theta0) if far.any() else back[far]
    d_back = np.zeros(len(Y))
    d_back[far] = surface.distance(z, back[far])
    outside_tilde = (~far) | (d_back <= 2 * r)
    outside_F = (~far) | (d_back < zone.V_radius)
    return {
        "theta0": float(theta0), "t": float(t),
        "n_tilde": int(len(img)), "separation_violations": int(np.sum(d_img <= r)),
        "n_level": int(len(Y)),
        "containment_violations": int(np.sum(outside_tilde & (dY >= 4 * r))),
        "U_violations": int(np.sum(outside_F & (dY >= zone.U_radius))),
        "n_outside_tilde": int(outside_tilde.sum()), "n_outside_F": int(outside_F.sum()),
    }


# ---------------------------------------------------------------------------
# stretching

@dataclass(frozen=True)
class Reparam:
    """Increasing reparameterization ``q`` with derivative ``dq``."""
    q: object
    dq: object
    q_inv: object = None

    def inverse(self, s, lo=-1e3, hi=1e3):
        if self.q_inv is not None:
            return self.q_inv(s)
        from scipy.optimize import brentq
        s = np.atleast_1d(np.asarray(s, float))
        out = np.array([brentq(lambda x: self.q(x) - v, lo, hi, xtol=1e-15) for v in s])
        return out if out.size > 1 else float(out[0])


def stretch_morse(morse, rep, check_range=None, n=2001):
    """Morse function ``q o m`` with relabelled critical values."""
    lo, hi = check_range if check_range is not None else morse.range
    x = np.linspace(lo, hi, n)
    if abs(float(rep.q(0.0))) > 1e-12:
        raise ValueError("reparameterization must satisfy q(0) = 0")
    if np.any(np.asarray(rep.dq(x)) <= 0):
        raise ValueError("reparameterization must be strictly increasing")
    m = lambda P: rep.q(morse.m(P))
    dm = lambda P: np.asarray(rep.dq(morse.m(P)))[:, None] * morse.dm(P)
    crit = tuple(CriticalPoint(c.point, float(rep.q(c.value)), c.index) for c in morse.critical)
    return MorseData(morse.name + "-stretched", m, dm, crit, dict(morse.params))


# ---------------------------------------------------------------------------
# flow-coordinate node grids

def separatrix_points(surface, morse, t, eps=1e-3):
    """Points of the level ``t`` lying on trajectories that end in a saddle."""
    out = []
    for c in morse.critical:
        if c.index != 1:
            continue
        H = hessian_at(surface, morse, c)
        lam, vec = np.linalg.eigh(H)
        # ascending directions reach higher levels, descending ones lower levels
        v = vec[:, 1] if t > c.value else vec[:, 0]
        for sgn in (1.0, -1.0):
            x = surface.local_chart(np.asarray(c.point, float), (sgn * eps * v)[None])
            t0 = float(morse.m(x)[0])
            try:
                out.append(flow_points(surface, morse, x, t0, t)[0])
            except GeometryError:
                continue
    return np.array(out).reshape(-1, 2)


@dataclass(eq=False)
class FlowGrid:
    """Nodes ``(level k, trajectory l)`` on global gradient trajectories.

    ``psi[k, l]`` is the area density of the map (level, seed arclength)
    -> surface, so ``weights = psi * dt[:, None] * sigma[None, :]`` is a
    quadrature for the Riemannian measure.
    """
    surface: Surface
    morse: MorseData
    levels: np.ndarray
    dt: np.ndarray
    points: np.ndarray
    psi: np.ndarray
    sigma: np.ndarray
    seed_level: float
    seed_comp: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.points.shape[:2]

    @property
    def n(self):
        K, L = self.shape
        return K * L

    @property
    def weights(self):
        return (self.psi * self.dt[:, None] * self.sigma[None, :]).ravel()

    @property
    def nodes(self):
        return self.points.reshape(-1, 2)

    def index(self, k, l):
        return np.asarray(k) * self.shape[1] + np.asarray(l)

    def quadrature(self):
        from .verify import QuadratureGrid
        s = self.surface
        per = tuple((b - a) if p else None for (a, b), p in zip(s.box, s.periodic))
        K, L = self.shape
        h = max((s.box[0][1] - s.box[0][0]) / K, (s.box[1][1] - s.box[1][0]) / L)
        return QuadratureGrid(s.wrap(self.nodes), self.weights, s.name, (K, L), h, s.box, per,
                              {"flow_grid": True})

    def order_at(self, k, resolution=(256, 256)):
        """Component and arclength position of every trajectory at level ``k``."""
        curve = level_set(self.surface, self.morse, float(self.levels[k]), resolution)
        comp, s = locate_on_level(self.surface, curve, self.points[k])
        return curve, comp, s


def build_flow_grid(surface, morse, levels, dt, n_traj, seed_level=None, fd_step=1e-5,
                    resolution=(256, 256), step=0.01, max_disp=0.01):
    """Integrate ``n_traj`` trajectories through the given levels.

    Seeds are equally spaced in arclength on each component of the seed
    level (count proportional to length), phased half a spacing away from
    separatrices.  Difference twins at ``+-fd_step`` give the density.
    """
    levels = np.asarray(levels, float)
    if np.any(np.diff(levels) <= 0):
        raise ValueError("levels must be strictly increasing")
    lo, hi = morse.range
    ts = 0.5 * (lo + hi) if seed_level is None else float(seed_level)
    curve = level_set(surface, morse, ts, resolution)
    sep = separatrix_points(surface, morse, ts)
    if len(sep):
        sc, ss = locate_on_level(surface, curve, sep)
    L_tot = curve.length
    counts = [max(4, int(round(n_traj * c.length / L_tot))) for c in curve.components]
    counts[int(np.argmax(counts))] += n_traj - sum(counts)
    seeds, twins_p, twins_m, sig, comp = [], [], [], [], []
    for ci, (c, n) in enumerate(zip(curve.components, counts)):
        h = c.length / n
        phase = 0.5 * h
        if len(sep) and np.any(sc == ci):
            phase = float(ss[sc == ci][0]) + 0.5 * h
        s = phase + h * np.arange(n)
        for arr, off in ((seeds, 0.0), (twins_p, fd_step), (twins_m, -fd_step)):
            arr.append(project_to_level(surface, morse, c.point_at(s + off), ts))
        sig.append(np.full(n, h))
        comp.append(np.full(n, ci))
    X = np.vstack(seeds + twins_p + twins_m)
    L = sum(counts)
    K = len(levels)
    pts = np.empty((K, 3 * L, 2))
    above = np.nonzero(levels >= ts)[0]
    below = np.nonzero(levels < ts)[0][::-1]
    for order in (above, below):
        x, t = X, ts
        for k in order:
            x = flow_points(surface, morse, x, t, levels[k], step=step, max_disp=max_disp)
            t = levels[k]
            pts[k] = x
    P, Pp, Pm = pts[:, :L], pts[:, L:2 * L], pts[:, 2 * L:]
    b = (Pp - Pm) / (2 * fd_step)
    flat = P.reshape(-1, 2)
    v = normalized_gradient(surface, morse, flat)
    bb = b.reshape(-1, 2)
    psi = surface.area_element(flat) * np.abs(v[:, 0] * bb[:, 1] - v[:, 1] * bb[:, 0])
    return FlowGrid(surface, morse, levels, np.asarray(dt, float), P, psi.reshape(K, L),
                    np.concatenate(sig), ts, np.concatenate(comp),
                    {"fd_step": fd_step, "counts": counts})


def strip_integral(atlas, f, a, b, n_t=32, n_s=256, resolution=(256, 256)):
    """``int_a^b int_{J_theta} f(F_theta(t, x)) psi(t, x) ds dt`` by GL x trapezoid.

    ``f`` may return shape ``(N, k)``; the result is then a length-``k`` array.
    """
    curve = level_set(atlas.surface, atlas.morse, atlas.theta, resolution)
    xs, ws = [], []
    for c in curve.components:
        n = max(16, int(round(n_s * c.length / curve.length)))
        s = (np.arange(n) + 0.5) * c.length / n
        xs.append(project_to_level(atlas.surface, atlas.morse, c.point_at(s), atlas.theta))
        ws.append(np.full(n, c.length / n))
    x = np.vstack(xs)
    w = np.concatenate(ws)
    tg, wg = np.polynomial.legendre.leggauss(n_t)
    tg = 0.5 * (b - a) * tg + 0.5 * (a + b)
    wg = 0.5 * (b - a) * wg
    total = 0.0
    for t, wt in zip(tg, wg):
        y = flow_points(atlas.surface, atlas.morse, x, atlas.theta, t) if t != atlas.theta else x
        total = total + wt * ((w * atlas.psi(t, x)) @ f(y))
    return float(total) if np.ndim(total) == 0 else np.asarray(total)
