"""Quadrature grids, operator-matrix assembly and the family check suite."""
from dataclasses import dataclass, field
import json

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import hestenes as hs
from ._kd import PeriodicTree


def tau(h):
    """Resolution-linked tolerance for flow or quadrature mediated checks."""
    return max(1e-10, 10.0 * h * h)


CLOSED_FORM_TOL = 1e-12


@dataclass
class QuadratureGrid:
    """Nodes in chart coordinates with positive weights.

    ``period`` gives the period per coordinate (``None`` for non periodic
    axes); ``box`` is the parameter box used to scale random probes.
    """
    nodes: np.ndarray
    weights: np.ndarray
    space: str
    resolution: tuple
    h: float
    box: tuple
    period: tuple = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.weights)

    @property
    def dim(self):
        return 1 if self.nodes.ndim == 1 else self.nodes.shape[1]

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def norm(self, f, p):
        f = np.abs(f)
        if np.isinf(p):
            return float(f.max(axis=0)) if f.ndim == 1 else f.max(axis=0)
        return (self.weights @ f**p) ** (1.0 / p)


def _gl(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x - x[::-1])  # exact symmetry about the midpoint
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def line_grid(a, b, n):
    """Uniform midpoint rule on ``[a, b]``."""
    h = (b - a) / n
    x = a + h * (np.arange(n) + 0.5)
    return QuadratureGrid(x, np.full(n, h), "line", (n,), h, ((a, b),), (None,))


def circle_grid(n, period=1.0, offset=0.0):
    """Uniform trapezoid rule on ``R / period Z``."""
    h = period / n
    x = np.mod(offset + h * np.arange(n), period)
    return QuadratureGrid(x, np.full(n, h), "circle", (n,), h, ((0.0, period),), (period,))


def quadrature_grid(space, resolution, **kw):
    """Build a grid for ``"line"``, ``"circle"`` or a parametric surface.

    Surfaces use Gauss-Legendre nodes along non periodic parameters and the
    trapezoid rule along periodic ones, weighted by the area element.
    """
    if isinstance(space, str) and space == "line":
        a, b = kw.get("interval", (-1.0, 1.0))
        return line_grid(a, b, int(resolution))
    if isinstance(space, str) and space == "circle":
        g = circle_grid(int(resolution), kw.get("period", 1.0))
        return g
    from .geometry import make_surface
    surf = make_surface(space) if isinstance(space, str) else space
    n0, n1 = resolution
    if min(n0, n1) < 4:
        raise ValueError("surface resolution must be at least 4 per axis")
    axes = []
    for (a, b), per, n in zip(surf.box, surf.periodic, (n0, n1)):
        if per:
            h = (b - a) / n
            axes.append((a + h * np.arange(n), np.full(n, h)))
        else:
            axes.append(_gl(n, a, b))
    U, V = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
    W = np.outer(axes[0][1], axes[1][1])
    nodes = np.stack([U.ravel(), V.ravel()], axis=1)
    w = W.ravel() * surf.area_element(nodes)
    per = tuple((b - a) if p else None for (a, b), p in zip(surf.box, surf.periodic))
    h = max((b - a) / n for (a, b), n in zip(surf.box, (n0, n1)))
    return QuadratureGrid(nodes, w, surf.name, (n0, n1), h, surf.box, per,
                          {"surface": surf.name})


# ---------------------------------------------------------------------------
# assembly

def _node_lookup(grid, targets):
    """Indices of grid nodes hit by ``targets`` and the hit distances."""
    cache = grid.meta.setdefault("_tree", [])
    if not cache:
        cache.append(PeriodicTree(grid.nodes, grid.period))
    d, idx = cache[0].query(targets)
    return idx, d


def assemble_matrix(op, grid, hit_tol=1e-8, interpolate=True):
    """Matrix of ``op`` acting on nodal values.

    Column ``j`` is the operator applied to the indicator of node ``j``;
    inputs are sampled at the nearest node, which is exact whenever the
    term maps nodes onto nodes (within ``hit_tol`` times the spacing).
    On 1-D grids other targets are linearly interpolated.
    Sparse matrices pass through unchanged.
    """
    if sp.issparse(op):
        if op.shape != (grid.n, grid.n):
            raise ValueError("matrix shape does not match the grid")
        return sp.csr_matrix(op)
    if isinstance(op, np.ndarray):
        return sp.csr_matrix(op)
    rows, cols, vals = [], [], []
    x = grid.nodes
    for k, t in enumerate(op.terms):
        inside = t.V.contains(x)
        if not inside.any():
            continue
        i = np.nonzero(inside)[0]
        xi = x[i]
        phi = np.asarray(t.phi(xi), dtype=float)
        live = phi != 0
        i, xi, phi = i[live], xi[live], phi[live]
        if len(i) == 0:
            continue
        y = t.Phi(xi)
        j, d = _node_lookup(grid, y)
        bad = d > hit_tol * grid.h
        if bad.any():
            if grid.dim != 1 or not interpolate:
                raise ValueError(f"term {k} maps node {int(i[bad][0])} off the grid "
                                 f"(distance {float(d[bad].max()):.3g})")
            # off-node targets: linear interpolation between neighbours
            ii, jj, vv = _interp_1d(grid, i[bad], np.asarray(y)[bad], phi[bad])
            rows.append(ii)
            cols.append(jj)
            vals.append(vv)
            i, j, phi = i[~bad], j[~bad], phi[~bad]
        rows.append(i)
        cols.append(j)
        vals.append(phi)
    if not rows:
        return sp.csr_matrix((grid.n, grid.n))
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(grid.n, grid.n))
    return M.tocsr()


def _interp_1d(grid, rows, y, phi):
    x = grid.nodes
    order = np.argsort(x)
    xs = x[order]
    per = grid.period[0] if grid.period else None
    if per is not None:
        y = np.mod(y, per)
        xs = np.concatenate([xs, [xs[0] + per]])
        order = np.concatenate([order, order[:1]])
    k = np.clip(np.searchsorted(xs, y) - 1, 0, len(xs) - 2)
    lam = (y - xs[k]) / (xs[k + 1] - xs[k])
    out = (y < xs[0]) | (y > xs[-1])  # outside the window: zero extension
    lam = np.clip(lam, 0.0, 1.0)
    w0 = np.where(out, 0.0, phi * (1 - lam))
    w1 = np.where(out, 0.0, phi * lam)
    return (np.concatenate([rows, rows]), np.concatenate([order[k], order[k + 1]]),
            np.concatenate([w0, w1]))


def weighted(M, grid, p):
    """``D M D^{-1}`` with ``D = diag(w^{1/p})``: the ell^p picture of ``M``."""
    if np.isinf(p):
        return sp.csr_matrix(M)
    d = grid.weights ** (1.0 / p)
    return sp.diags(d) @ sp.csr_matrix(M) @ sp.diags(1.0 / d)


def _maxabs(M):
    M = sp.csr_matrix(M)
    return float(np.abs(M.data).max()) if M.nnz else 0.0


# ---------------------------------------------------------------------------
# probes

def _basis(grid, degree):
    """Per-axis cosine/sine tables, shape (dim, 2*(degree+1), N)."""
    X = hs._as2d(grid.nodes)
    out = []
    ks = np.arange(degree + 1)[:, None]
    for a in range(X.shape[1]):
        lo, hi = grid.box[a]
        per = grid.period[a] if grid.period else None
        L = (hi - lo) if per else 2 * (hi - lo)
        arg = 2 * np.pi * ks * (X[:, a] - lo)[None, :] / L
        out.append(np.vstack([np.cos(arg), np.sin(arg)]))
    return out


def random_probes(grid, n, seed=0, degree=12):
    """Random smooth probes: truncated Fourier series in the chart coordinates.

    Each probe is a constant plus ``2*degree`` separable terms
    ``prod_a cos(2 pi k_a x_a / L_a + phase_a)`` with amplitudes decaying
    like ``(1 + |k|)^(-3/2)``.
    """
    rng = np.random.default_rng(seed)
    B = _basis(grid, degree)
    dim = len(B)
    nb = degree + 1
    out = np.empty((B[0].shape[1], n))
    for c in range(n):
        coef = np.zeros((2 * nb,) * dim)
        for _ in range(2 * degree):
            k = rng.integers(0, degree + 1, size=dim)
            amp = rng.normal() / (1.0 + np.sum(k)) ** 1.5
            ph = rng.uniform(0, 2 * np.pi, size=dim)
            vecs = []
            for a in range(dim):
                v = np.zeros(2 * nb)
                v[k[a]] = np.cos(ph[a])
                v[nb + k[a]] = -np.sin(ph[a])
                vecs.append(v)
            coef += amp * (vecs[0] if dim == 1 else np.outer(vecs[0], vecs[1]))
        const = 0.1 * rng.normal()
        if dim == 1:
            out[:, c] = coef @ B[0] + const
        else:
            out[:, c] = np.einsum("in,in->n", B[0], coef @ B[1]) + const
    return out


# ---------------------------------------------------------------------------
# norms

def estimate_norm(op, grid, p, n_probes=64, seed=0, iters=60):
    """Lower estimate of the ``L^p(grid)`` operator norm.

    Maximum of the ratio over random smooth probes, refined by the exact
    induced norm at p in {1, inf}, power iteration at p = 2 and the
    Higham p-norm power method otherwise.  Every candidate is attained by
    an explicit vector, so the estimate is a lower bound.
    """
    if n_probes < 16:
        raise ValueError("n_probes must be at least 16")
    M = assemble_matrix(op, grid)
    F = random_probes(grid, n_probes, seed)
    num = grid.norm(M @ F, p)
    den = grid.norm(F, p)
    best = float(np.max(num / den))
    A = weighted(M, grid, p)
    if np.isinf(p):
        best = max(best, float(np.abs(A).sum(axis=1).max()))
    elif p == 1:
        best = max(best, float(np.abs(A).sum(axis=0).max()))
    elif p == 2:
        x = np.random.default_rng(seed).normal(size=grid.n)
        for _ in range(iters):
            y = A.T @ (A @ x)
            ny = np.linalg.norm(y)
            if ny == 0:
                break
            x = y / ny
        best = max(best, float(np.linalg.norm(A @ x) / np.linalg.norm(x)))
    else:
        best = max(best, _higham(A, p, seed, iters))
    return best


def _higham(A, p, seed, iters):
    q = p / (p - 1)
    dual = lambda v, r: np.sign(v) * np.abs(v) ** (r - 1)
    x = np.random.default_rng(seed).normal(size=A.shape[1])
    x /= np.linalg.norm(x, p)
    best = 0.0
    for _ in range(iters):
        y = A @ x
        ny = np.linalg.norm(y, p)
        if ny == 0:
            break
        best = max(best, ny)
        z = A.T @ dual(y, p)
        x = dual(z, q)
        nx = np.linalg.norm(x, p)
        if nx == 0:
            break
        x /= nx
    return float(best)


# ---------------------------------------------------------------------------
# check suite

@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)
    riesz: tuple = (None, None)
    overlap: int = None
    eigen_histogram: dict = None
    tolerance_policy: str = ""

    def add(self, name, value, tol, passed=None, **extra):
        value = float(value)
        if passed is None:
            passed = bool(value <= tol)
        entry = {"name": name, "value": value, "tol": float(tol), "passed": bool(passed)}
        entry.update(extra)
        self.checks.append(entry)
        return entry

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    def get(self, name):
        for c in self.checks:
            if c["name"] == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {"passed": self.passed, "checks": self.checks,
                "riesz": list(self.riesz), "overlap": self.overlap,
                "eigen_histogram": self.eigen_histogram,
                "tolerance_policy": self.tolerance_policy}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


DEFAULT_TOLS = {"idempotence": None, "annihilation": None, "sum": None,
                "exterior": 1e-6, "symmetry": None, "eigen": None,
                "riesz_slack": 0.05, "overlap": None}


def support_mask(support, grid):
    if isinstance(support, np.ndarray) and support.dtype == bool:
        return support
    return np.asarray(support.contains(grid.nodes), dtype=bool)


def _eigs_blockwise(S, max_block=4000):
    """Eigenvalues of ``S`` via the connected components of its sparsity graph.

    Blocks of equal size are stacked and solved in one batched call.
    """
    S = sp.coo_matrix(S)
    keep = S.data != 0
    r, c, v = S.row[keep], S.col[keep], S.data[keep]
    active = np.unique(np.concatenate([r, c]))
    if len(active) == 0:
        return np.zeros(0), 0
    pos = np.full(S.shape[0], -1)
    pos[active] = np.arange(len(active))
    r, c = pos[r], pos[c]
    n = len(active)
    pat = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n)).tocsr()
    ncomp, labels = connected_components(pat, directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    if sizes.max() > max_block:
        raise ValueError(f"block of size {sizes.max()} too large for dense eigensolve")
    order = np.argsort(labels, kind="stable")
    local = np.empty(n, int)
    start = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    local[order] = np.arange(n) - start[labels[order]]
    eig = []
    for size in np.unique(sizes):
        comps = np.nonzero(sizes == size)[0]
        slot = np.full(ncomp, -1)
        slot[comps] = np.arange(len(comps))
        sel = slot[labels[r]] >= 0
        stack = np.zeros((len(comps), size, size))
        np.add.at(stack, (slot[labels[r[sel]]], local[r[sel]], local[c[sel]]), v[sel])
        eig.append(np.linalg.eigvals(stack).ravel())
    return np.concatenate(eig), int(sizes.max())


RIESZ_CHUNK = 32


def riesz_ratios(family, grid, F):
    """Per-probe ratio ``(sum_U ||P_U f||_p^p)^{1/p} / ||f||_p`` (max at p = inf)."""
    p = family.p
    mats = [assemble_matrix(P, grid) for P in family.operators]
    acc = np.zeros(F.shape[1])
    for M in mats:
        if np.isinf(p):
            acc = np.maximum(acc, grid.norm(M @ F, p))
        else:
            acc += grid.norm(M @ F, p) ** p
    nF = grid.norm(F, p)
    return acc / nF if np.isinf(p) else acc ** (1.0 / p) / nF


def check_family(family, grid, tolerances=None, n_probes=32, riesz_probes=256, seed=0,
                 riesz_bounds=None, overlap_bound=None, closed_form=False,
                 relative_to=None):
    """Run the decomposition-of-identity checks and return a report.

    ``relative_to`` is an optional parent operator: the family must then sum
    to it instead of the identity (strip families).
    """
    p = family.p
    tol = dict(DEFAULT_TOLS)
    base = CLOSED_FORM_TOL if closed_form else tau(grid.h)
    for k, v in tol.items():
        if v is None and k not in ("overlap",):
            tol[k] = base
    if tolerances:
        tol.update({k: v for k, v in tolerances.items() if v is not None})
    rep = VerificationReport(tolerance_policy=(
        f"closed-form {CLOSED_FORM_TOL:g}" if closed_form else
        f"tau(h)=max(1e-10,10h^2) with h={grid.h:.4g} -> {tau(grid.h):.3g}"))
    mats = [assemble_matrix(P, grid) for P in family.operators]
    W = [weighted(M, grid, p) for M in mats]
    n = grid.n
    F = random_probes(grid, n_probes, seed)
    nF = grid.norm(F, p)

    # idempotence
    worst = 0.0
    for M, A in zip(mats, W):
        scale = max(1.0, _maxabs(A))
        ent = _maxabs(A @ A - A) / scale
        PF = M @ F
        pr = np.max(grid.norm(M @ PF - PF, p) / nF)
        worst = max(worst, ent, pr)
    rep.add("idempotence", worst, tol["idempotence"])

    # mutual annihilation, only for pairs whose column and row sets meet
    worst = 0.0
    masks = [support_mask(s, grid) for s in family.supports]
    if len(W) > 1:
        cols = sp.vstack([sp.csr_matrix((np.abs(A).sum(axis=0) > 0).astype(float)) for A in W])
        rows = sp.vstack([sp.csr_matrix((np.abs(A).sum(axis=1).T > 0).astype(float)) for A in W])
        meet = (cols @ rows.T).tocoo()
        for i, j in zip(meet.row, meet.col):
            if i != j:
                worst = max(worst, _maxabs(W[i] @ W[j]))
    rep.add("annihilation", worst, tol["annihilation"])

    # sum to identity (or to the parent)
    total = sum(mats) if mats else sp.csr_matrix((n, n))
    target = F if relative_to is None else assemble_matrix(relative_to, grid) @ F
    err = np.max(grid.norm(total @ F - target, p) / nF)
    rep.add("sum", err, tol["sum"])

    # localization: relative exterior p-mass
    worst = 0.0
    for M, mask in zip(mats, masks):
        PF = M @ F
        ext = PF[~mask]
        if np.isinf(p):
            num = np.abs(ext).max(axis=0) if len(ext) else np.zeros(F.shape[1])
            den = np.abs(PF).max(axis=0)
        else:
            w = grid.weights[~mask]
            num = w @ np.abs(ext) ** p
            den = grid.weights @ np.abs(PF) ** p
        ok = den > 0
        if ok.any():
            worst = max(worst, float(np.max(num[ok] / den[ok])))
        elif len(ext) and np.abs(ext).max() > 0:
            worst = np.inf
    rep.add("exterior", worst, tol["exterior"])

    # Riesz constants from many probes, in chunks to bound memory
    ratio = []
    for c0 in range(0, riesz_probes, RIESZ_CHUNK):
        m = min(RIESZ_CHUNK, riesz_probes - c0)
        R = random_probes(grid, m, seed + 1 + c0)
        nR = grid.norm(R, p)
        acc = np.zeros(m)
        for M in mats:
            if np.isinf(p):
                acc = np.maximum(acc, grid.norm(M @ R, p))
            else:
                acc += grid.norm(M @ R, p) ** p
        ratio.append(acc / nR if np.isinf(p) else acc ** (1.0 / p) / nR)
    ratio = np.concatenate(ratio)
    lo, hi = float(ratio.min()), float(ratio.max())
    rep.riesz = (lo, hi)
    if riesz_bounds is not None:
        a, b = riesz_bounds
        s = tol["riesz_slack"]
        rep.add("riesz_lower", max(0.0, a * (1 - s) - lo), 0.0, lo >= a * (1 - s),
                measured=lo, bound=a)
        rep.add("riesz_upper", max(0.0, hi - b * (1 + s)), 0.0, hi <= b * (1 + s),
                measured=hi, bound=b)

    # overlap count
    counts = np.sum(np.stack(masks), axis=0) if masks else np.zeros(n)
    N = int(counts.max()) if len(counts) else 0
    rep.overlap = N
    if overlap_bound is not None:
        rep.add("overlap", N, overlap_bound, N <= overlap_bound)

    # orthogonality at p = 2
    if p == 2:
        sym = 0.0
        eigdev = 0.0
        hist = {"zero": 0, "one": 0, "other": 0}
        for A in W:
            scale = max(1.0, _maxabs(A))
            sym = max(sym, _maxabs(A - A.T) / scale)
            ev, _ = _eigs_blockwise(A)
            d0 = np.abs(ev)
            d1 = np.abs(ev - 1)
            dev = np.minimum(d0, d1)
            if len(dev):
                eigdev = max(eigdev, float(dev.max()))
            hist["one"] += int(np.sum(d1 <= tol["eigen"]))
            hist["zero"] += int(np.sum((d0 <= tol["eigen"]) & (d1 > tol["eigen"])))
            hist["other"] += int(np.sum(dev > tol["eigen"]))
        rep.add("symmetry", sym, tol["symmetry"])
        rep.add("eigenvalues", eigdev, tol["eigen"])
        rep.eigen_histogram = hist
    return rep
