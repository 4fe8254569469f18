"""Hestenes operators: finite sums of ``f -> phi * (f o Phi)`` terms.

Points are numpy arrays of shape ``(N,)`` in one dimension and ``(N, d)``
otherwise; every callable (weights, maps, test functions) follows the same
convention.
"""
from dataclasses import dataclass, field, replace
import itertools

import numpy as np
from scipy.spatial import cKDTree


class CapabilityError(RuntimeError):
    pass


def _as2d(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _user(x, dim):
    return x[:, 0] if dim == 1 else x


@dataclass(frozen=True)
class OpenSet:
    """Open set given by a predicate and an axis-aligned bounding box."""
    predicate: object
    lo: tuple
    hi: tuple
    name: str = "set"

    @property
    def dim(self):
        return len(self.lo)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.predicate(x), dtype=bool)

    def bounded(self):
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    def __and__(self, other):
        lo = tuple(np.maximum(self.lo, other.lo))
        hi = tuple(np.minimum(self.hi, other.hi))
        return OpenSet(lambda x, a=self, b=other: a.contains(x) & b.contains(x),
                       lo, hi, f"({self.name}&{other.name})")

    def __or__(self, other):
        lo = tuple(np.minimum(self.lo, other.lo))
        hi = tuple(np.maximum(self.hi, other.hi))
        return OpenSet(lambda x, a=self, b=other: a.contains(x) | b.contains(x),
                       lo, hi, f"({self.name}|{other.name})")


def interval(a, b, name=None):
    """Open interval ``(a, b)`` on the line (ends may be infinite)."""
    return OpenSet(lambda x: (x > a) & (x < b), (float(a),), (float(b),),
                   name or f"({a:g},{b:g})")


def whole(dim=1):
    lo = (-np.inf,) * dim
    hi = (np.inf,) * dim
    return OpenSet(lambda x: np.ones(len(x), dtype=bool), lo, hi, "whole")


def empty(dim=1):
    return OpenSet(lambda x: np.zeros(len(x), dtype=bool), (0.0,) * dim, (0.0,) * dim, "empty")


@dataclass(frozen=True)
class SimpleHOp:
    """One term ``phi(x) f(Phi(x))`` on ``V`` (zero outside ``V``).

    ``Phi_inv`` and ``jac_inv`` (``|det D Phi^{-1}|``) are optional; they are
    needed for adjoints.  ``image`` describes ``Phi(V)`` when known.
    """
    phi: object
    Phi: object
    V: OpenSet
    Phi_inv: object = None
    jac_inv: object = None
    image: OpenSet = None
    desc: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.V.dim

    def __call__(self, f, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(len(x))
        inside = self.V.contains(x)
        if inside.any():
            xi = x[inside]
            out[inside] = self.phi(xi) * f(self.Phi(xi))
        return out


def identity_map(x):
    return x


def multiplication(phi, V, desc=None):
    """Term ``f -> phi f`` on ``V``."""
    one = lambda y: np.ones(len(y))
    return SimpleHOp(phi, identity_map, V, identity_map, one, V,
                     desc or {"name": "mult"})


@dataclass(frozen=True)
class HOp:
    """Finite sum of simple terms; the empty sum is the zero operator."""
    terms: tuple = ()
    dim: int = 1

    def __call__(self, f, x):
        return apply(self, f, x)

    def __add__(self, other):
        return HOp(tuple(self.terms) + tuple(other.terms), self.dim)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        terms = tuple(replace(t, phi=lambda x, p=t.phi: c * p(x),
                              desc={"scale": c, "of": t.desc}) for t in self.terms)
        return HOp(terms, self.dim)


def zero(dim=1):
    return HOp((), dim)


def apply(H, f, x):
    """Evaluate ``H f`` at the points ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(len(x))
    for t in H.terms:
        out += t(f, x)
    return out


def _compose_terms(a, b):
    dim = a.dim

    def phi(x, a=a, b=b):
        return a.phi(x) * b.phi(a.Phi(x))

    def Phi(x, a=a, b=b):
        return b.Phi(a.Phi(x))

    V = OpenSet(lambda x, a=a, b=b: a.V.contains(x) & _safe_contains(b.V, a, x),
                a.V.lo, a.V.hi, f"{a.V.name}*{b.V.name}")
    Phi_inv = jac_inv = None
    if a.Phi_inv is not None and b.Phi_inv is not None:
        Phi_inv = lambda y, a=a, b=b: a.Phi_inv(b.Phi_inv(y))
    if a.jac_inv is not None and b.jac_inv is not None and b.Phi_inv is not None:
        jac_inv = lambda y, a=a, b=b: a.jac_inv(b.Phi_inv(y)) * b.jac_inv(y)
    return SimpleHOp(phi, Phi, V, Phi_inv, jac_inv, None,
                     {"compose": [a.desc, b.desc]})


def _safe_contains(V, a, x):
    if len(x) == 0:
        return np.zeros(0, dtype=bool)
    return V.contains(a.Phi(x))


def compose(H1, H2):
    """Operator ``H1 o H2`` (apply ``H2`` first), as a term list."""
    terms = tuple(_compose_terms(a, b) for a, b in itertools.product(H1.terms, H2.terms))
    return HOp(terms, H1.dim)


def _image_set(t, n=33):
    if t.image is not None:
        return t.image
    if not t.V.bounded():
        raise CapabilityError("image of an unbounded domain needs an explicit descriptor")
    pts = _box_samples(t.V.lo, t.V.hi, n)
    pts = pts[t.V.contains(_user(pts, t.dim))]
    if len(pts) == 0:
        return empty(t.dim)
    img = _as2d(t.Phi(_user(pts, t.dim)))
    pad = (np.asarray(t.V.hi) - np.asarray(t.V.lo)) / (n - 1)
    lo = tuple(img.min(axis=0) - pad)
    hi = tuple(img.max(axis=0) + pad)
    return OpenSet(lambda y, t=t: t.V.contains(t.Phi_inv(y)), lo, hi, f"Phi({t.V.name})")


def adjoint_term(t):
    if t.Phi_inv is None or t.jac_inv is None:
        raise CapabilityError("adjoint needs Phi_inv and jac_inv")

    def phi(y, t=t):
        return t.phi(t.Phi_inv(y)) * t.jac_inv(y)

    image = _image_set(t)
    V = OpenSet(lambda y, t=t: t.V.contains(t.Phi_inv(y)), image.lo, image.hi,
                f"Phi({t.V.name})")
    jac = lambda x, t=t: 1.0 / t.jac_inv(t.Phi(x))
    return SimpleHOp(phi, t.Phi_inv, V, t.Phi, jac, t.V, {"adjoint": t.desc})


def adjoint(H):
    """L2 adjoint with respect to the Lebesgue measure of the chart."""
    return HOp(tuple(adjoint_term(t) for t in H.terms), H.dim)


def restrict(H, U):
    """Restrict every term's domain to ``V & U`` (output multiplied by 1_U)."""
    return HOp(tuple(replace(t, V=t.V & U) for t in H.terms), H.dim)


def _box_samples(lo, hi, n):
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class LocalizationSet:
    """Sampled localizing set; membership tests use the inflation radius."""
    K1: np.ndarray
    K2: np.ndarray
    spacing: float

    @property
    def K(self):
        return np.concatenate([self.K1, self.K2])

    def is_empty(self):
        return len(self.K1) == 0 and len(self.K2) == 0

    def bbox(self):
        K = self.K
        if len(K) == 0:
            return None
        return K.min(axis=0) - self.spacing, K.max(axis=0) + self.spacing

    def contains(self, x, which="K"):
        pts = {"K": self.K, "K1": self.K1, "K2": self.K2}[which]
        x = _as2d(x)
        if len(pts) == 0:
            return np.zeros(len(x), dtype=bool)
        d, _ = cKDTree(pts).query(x, p=np.inf)
        return d <= self.spacing * (1 + 1e-9)


def localization_set(H, sample_density=201, tol=1e-12):
    """Estimate ``K1`` (output side) and ``K2`` (input side) by sampling.

    Each term's bounding box is sampled on a uniform grid; points where
    ``|phi| > tol`` form ``K1`` and their images form ``K2``.
    """
    K1, K2, h = [], [], 0.0
    for t in H.terms:
        if not t.V.bounded():
            raise ValueError(f"unbounded support in term {t.desc}")
        pts = _box_samples(t.V.lo, t.V.hi, sample_density)
        span = np.asarray(t.V.hi) - np.asarray(t.V.lo)
        h = max(h, float(np.max(span)) / (sample_density - 1))
        u = _user(pts, t.dim)
        inside = t.V.contains(u)
        if not inside.any():
            continue
        u = u[inside]
        live = np.abs(t.phi(u)) > tol
        if not live.any():
            continue
        K1.append(_as2d(u[live]))
        K2.append(_as2d(t.Phi(u[live])))
    dim = H.dim
    cat = lambda L: np.concatenate(L) if L else np.zeros((0, dim))
    return LocalizationSet(cat(K1), cat(K2), h)


def is_localized_on(H, U, tol=1e-12, sample_density=201):
    """True when the sampled localizing set, with its inflation, lies in ``U``."""
    if all(np.isinf(U.lo)) and all(np.isinf(U.hi)):
        return True
    L = localization_set(H, sample_density, tol)
    K = L.K
    if len(K) == 0:
        return True
    dim = K.shape[1]
    probes = [K]
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = L.spacing
        probes += [K + e, K - e]
    P = np.concatenate(probes)
    return bool(U.contains(_user(P, dim)).all())


def to_json(H):
    """JSON-serializable description of the term list."""
    return {"dim": H.dim, "terms": [t.desc for t in H.terms]}
