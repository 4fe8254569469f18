"""End-to-end decompositions of the identity on surfaces, coarsening and transfers."""
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp

from .bell import make_bell
from .family import ProjectionFamily
from .geometry import build_flow_grid, critical_zone
from .latitudinal import aww_matrix, latitudinal_matrices as _lat_mats, level_grid, strip_mask
from .lifting import arc_cover, critical_patch_matrix, strip_family
from . import verify as vf

__all__ = ["ProjectionFamily", "CutPlan", "Bracket", "ResolutionError", "choose_cut_levels",
           "plan_arcs", "build_decomposition", "Decomposition", "verify_decomposition",
           "coarsen", "transfer_weight", "transfer_diffeo", "Diffeo", "DECOMPOSITION_TOLS",
           "support_diameter", "support_polygons"]


class ResolutionError(ValueError):
    pass


@dataclass
class Bracket:
    kind: str          # "cap" or "saddle"
    point: tuple
    value: float
    cuts: tuple        # cut-offs bracketing the critical value
    zone: object = None


@dataclass
class CutPlan:
    cuts: list
    delta: float
    eps: float
    range: tuple
    brackets: list
    displacement: list = field(default_factory=list)
    budget: float = 0.9

    def strip_bracket(self, i):
        """Critical bracket whose value lies inside strip ``i``, if any."""
        lo = -np.inf if i == 0 else self.cuts[i - 1]
        hi = np.inf if i == len(self.cuts) else self.cuts[i]
        for b in self.brackets:
            if lo < b.value < hi:
                return b
        return None

    def to_dict(self):
        return {"cuts": [float(c) for c in self.cuts], "delta": float(self.delta),
                "eps": float(self.eps), "range": list(map(float, self.range)),
                "brackets": [{"kind": b.kind, "point": list(map(float, b.point)),
                              "value": float(b.value), "cuts": list(map(float, b.cuts)),
                              "r": None if b.zone is None else float(b.zone.r),
                              "delta_z": None if b.zone is None else float(b.zone.delta_z)}
                             for b in self.brackets],
                "displacement": [float(d) for d in self.displacement]}


def _path_length(surface, pts):
    """Cumulative metric path length along each trajectory, shape (K, L)."""
    d = np.diff(pts, axis=0)
    mid = 0.5 * (pts[1:] + pts[:-1])
    G = surface.metric(mid.reshape(-1, 2)).reshape(mid.shape[:2] + (2, 2))
    seg = np.sqrt(np.einsum("kli,klij,klj->kl", d, G, d))
    return np.vstack([np.zeros((1, pts.shape[1])), np.cumsum(seg, axis=0)])


def choose_cut_levels(surface, morse, eps, n_plan=192, plan_step=0.01, budget=0.9,
                      cap_fraction=(0.6, 0.3), delta_fraction=0.4):
    """Cut-off levels with a shared transition half-width.

    Caps around extrema fit in ``B(z, eps/2)``; saddles are bracketed at
    ``t_z -+ delta_z/2``; regular gaps are filled greedily so that every
    trajectory travels less than ``budget * eps`` across each strip.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    lo, hi = morse.range
    n = int(math.ceil((hi - lo) / plan_step))
    lv = np.linspace(lo, hi, n + 1)[1:-1]
    fg = build_flow_grid(surface, morse, lv, np.full(len(lv), plan_step), n_plan)
    C = _path_length(surface, fg.points)

    def disp(a, b):
        ia = np.interp(a, lv, np.arange(len(lv)))
        ib = np.interp(b, lv, np.arange(len(lv)))
        ca = _row_interp(C, ia)
        cb = _row_interp(C, ib)
        return float(np.max(np.abs(cb - ca)))

    brackets, deltas = [], []
    for cp in morse.critical_sorted():
        z = np.asarray(cp.point, float)
        if cp.index in (0, 2):
            sgn = 1.0 if cp.index == 0 else -1.0
            rad = np.array([surface.distance(z, fg.points[k]).max() for k in range(len(lv))])
            off = sgn * (lv - cp.value)
            ok = (off > 0) & (rad < 0.98 * eps / 2)
            near = off > 0
            # keep only the run of admissible levels adjacent to the extremum
            order = np.argsort(off[near])
            okn = ok[near][order]
            if not okn[0]:
                raise ResolutionError("eps too small for the planning resolution near an extremum")
            stop = np.argmin(okn) if not okn.all() else len(okn)
            c_max = off[near][order][stop - 1]
            theta = cp.value + sgn * cap_fraction[0] * c_max
            brackets.append(Bracket("cap", tuple(cp.point), cp.value, (theta,)))
            deltas.append(cap_fraction[1] * c_max)
        else:
            zone = critical_zone(surface, morse, cp, eps)
            th = (cp.value - 0.5 * zone.delta_z, cp.value + 0.5 * zone.delta_z)
            brackets.append(Bracket("saddle", tuple(cp.point), cp.value, th, zone))
            deltas.append(delta_fraction * zone.delta_z)
    delta = float(min(deltas))
    anchors = sorted(c for b in brackets for c in b.cuts)
    inside = {(b.cuts[0], b.cuts[1]) for b in brackets if b.kind == "saddle"}
    B = budget * eps
    cuts = [anchors[0]]
    for a, b in zip(anchors[:-1], anchors[1:]):
        if (a, b) in inside:
            cuts.append(b)
            continue
        cur = a
        while True:
            if disp(cur - delta, b + delta) < B:
                break
            cand = lv[(lv > cur + 4 * delta) & (lv < b - 4 * delta)]
            good = [c for c in cand if disp(cur - delta, c + delta) < B]
            if not good:
                raise ResolutionError("cannot certify the displacement budget at this resolution")
            cur = float(max(good))
            cuts.append(cur)
        if b - cuts[-1] < 4 * delta and len(cuts) >= 2:
            cuts[-1] = 0.5 * (cuts[-2] + b)
        cuts.append(b)
    cuts = sorted({float(c) for c in cuts})
    plan = CutPlan(cuts, delta, float(eps), (lo, hi), brackets, budget=budget)
    ext = [lo] + cuts + [hi]
    for a, b in zip(ext[:-1], ext[1:]):
        plan.displacement.append(disp(max(lo, a - delta), min(hi, b + delta)))
    return plan


def _row_interp(C, x):
    i = int(np.clip(np.floor(x), 0, len(C) - 2))
    lam = x - i
    return (1 - lam) * C[i] + lam * C[i + 1]


# ---------------------------------------------------------------------------
# arc planning on index circles

def _span(s, Lc, i0, i1):
    """Arclength from ordered trajectory ``i0`` forward to ``i1`` (circular)."""
    return float(np.mod(s[i1 % len(s)] - s[i0 % len(s)], Lc))


def _arc_spans(s, Lc, cuts, dc):
    n = len(s)
    out = []
    cs = sorted(cuts)
    for a, b in zip(cs, cs[1:] + [cs[0] + n]):
        i0 = int(math.ceil(a - dc))
        i1 = int(math.floor(b + dc))
        out.append(_span(s, Lc, i0, i1) if i1 - i0 < n else Lc)
    return out


def _subdivide(s, Lc, a, b, dc, B):
    """Interior half-integer cuts between cuts ``a < b`` keeping spans below ``B``."""
    for m in range(1, max(2, int(b - a)) + 1):
        inner = [a + (b - a) * j / m for j in range(1, m)]
        inner = [math.floor(x) + 0.5 for x in inner]
        cs = [a] + inner + [b]
        if np.any(np.diff(cs) <= 2 * dc):
            break
        ok = True
        for x, y in zip(cs[:-1], cs[1:]):
            i0, i1 = int(math.ceil(x - dc)), int(math.floor(y + dc))
            if _span(s, Lc, i0, i1) >= B:
                ok = False
                break
        if ok:
            return inner
    raise ResolutionError("arc budget cannot be met with the available trajectories")


def plan_arcs(s, Lc, budget, core=None, allowed=None, dc=2):
    """Half-integer cut positions on an ordered index circle.

    ``s``: arclength of the ordered trajectories; ``core``: trajectories that
    must lie strictly inside a distinguished arc; ``allowed``: trajectories
    such a distinguished arc may reach.  Returns ``(cuts, labels)``.
    """
    n = len(s)
    if core is None or not np.any(core):
        if Lc < budget:
            return [], ["all"]
        for m in range(2, n // (2 * dc + 2) + 1):
            cuts = sorted({math.floor(np.searchsorted(s, s[0] + j * Lc / m)) - 0.5 for j in range(m)})
            cuts = [float(np.mod(c, n)) for c in cuts]
            cuts = sorted(set(cuts))
            if len(cuts) < 2:
                continue
            spacing = np.diff(cuts + [cuts[0] + n])
            if np.any(spacing <= 2 * dc):
                continue
            if max(_arc_spans(s, Lc, cuts, dc)) < budget:
                return cuts, [f"arc{j}" for j in range(len(cuts))]
        raise ResolutionError("arc budget cannot be met with the available trajectories")
    core = np.asarray(core, bool)
    allowed = np.ones(n, bool) if allowed is None else np.asarray(allowed, bool)
    if core.all():
        return [], ["U0"]
    # circular runs of core trajectories, merged when separated by few nodes
    start = int(np.argmin(core))  # a non-core index
    idx = (start + np.arange(n)) % n
    runs, cur = [], None
    for j, i in enumerate(idx):
        if core[i]:
            cur = [j, j] if cur is None else [cur[0], j]
        elif cur is not None:
            runs.append(cur)
            cur = None
    if cur is not None:
        runs.append(cur)
    merged = [runs[0]]
    for r in runs[1:]:
        if r[0] - merged[-1][1] < 4 * dc + 3:
            merged[-1][1] = r[1]
        else:
            merged.append(r)
    if len(merged) > 1 and (merged[0][0] + n) - merged[-1][1] < 4 * dc + 3:
        raise ResolutionError("distinguished arcs wrap around the whole component")
    pairs = []
    for a, b in merged:
        ca, cb = a - dc - 0.5, b + dc + 0.5
        lo_i, hi_i = int(math.ceil(ca - dc)), int(math.floor(cb + dc))
        if not allowed[idx[np.arange(lo_i, hi_i + 1) % n]].all():
            raise ResolutionError("distinguished arc leaves the allowed neighbourhood")
        pairs.append((ca, cb))
    cuts = []
    for k, (ca, cb) in enumerate(pairs):
        na = pairs[(k + 1) % len(pairs)][0] + (n if k == len(pairs) - 1 else 0)
        cuts += [ca, cb]
        if na - cb <= 2 * dc:
            raise ResolutionError("distinguished arcs too close")
        # free stretch from cb to the next distinguished arc
        lin = np.mod(s[idx] - s[idx[0]], Lc)
        cuts += _subdivide(lin, Lc, cb, na, dc, budget)
    # back to original index positions, sorted in [0, n)
    cuts_orig = sorted(float(np.mod(c + start, n)) for c in cuts)
    core_orig = [(float(np.mod(a + start, n)), float(np.mod(b + start, n))) for a, b in merged]
    labels = []
    for j, c in enumerate(cuts_orig):
        nxt = cuts_orig[(j + 1) % len(cuts_orig)] + (n if j == len(cuts_orig) - 1 else 0)
        mid_hit = any(0 < np.mod(a - c, n) < nxt - c for a, _ in core_orig)
        labels.append("U0" if mid_hit else f"arc{j}")
    return cuts_orig, labels


# ---------------------------------------------------------------------------
# assembly

@dataclass(eq=False)
class Decomposition:
    family: ProjectionFamily
    grid: object       # FlowGrid
    levels: object     # LevelGrid
    plan: CutPlan
    latitudinal: list
    info: dict = field(default_factory=dict)

    def quadrature(self):
        if "_quad" not in self.info:
            self.info["_quad"] = self.grid.quadrature()
        return self.info["_quad"]


def build_decomposition(surface, morse, eps, p=2.0, n_levels=128, n_traj=256, n_zone=16,
                        bell_profile="smooth", corrupt_cut=None, shift=None, plan=None, dc=2,
                        inflate=1.02):
    """Smooth decomposition of the identity subordinate to sets of diameter ~eps.

    Negative-control fixtures: ``corrupt_cut = i`` replaces the bell of
    cut-off ``i`` by a non-identity profile; ``shift = (i, amount)`` moves
    the bell of cut-off ``i`` off its reflection centre.
    """
    plan = plan or choose_cut_levels(surface, morse, eps)
    lo, hi = plan.range
    lg = level_grid(lo, hi, plan.cuts, plan.delta, n_levels, n_zone)
    fg = build_flow_grid(surface, morse, lg.levels, lg.dt, n_traj)
    bell = make_bell(plan.delta, bell_profile)
    if corrupt_cut is None and shift is None:
        Q, E = _lat_mats(fg, lg, bell, p)
    else:
        Q, E = _latitudinal(fg, lg, bell, p, corrupt_cut, shift)
    K, L = fg.shape
    ops, masks, kinds, names = [], [], [], []
    info = {"commutation": [], "strips": [], "circle_overlap": 1, "patch_distance": []}
    B = plan.budget * eps
    for i in range(len(Q)):
        if i == 0 or i == len(Q) - 1:
            ops.append(Q[i])
            masks.append(strip_mask(fg, lg, i))
            kinds.append("critical-patch")
            names.append("cap-lo" if i == 0 else "cap-hi")
            info["strips"].append({"strip": i, "kind": "cap"})
            continue
        k_ref = lg.zones[i - 1][n_zone // 2]
        curve, comp, s = fg.order_at(k_ref)
        br = plan.strip_bracket(i)
        covers = []
        for c in range(len(curve.components)):
            traj = np.nonzero(comp == c)[0]
            if len(traj) == 0:
                continue
            order = np.argsort(s[traj], kind="stable")
            traj = traj[order]
            sc = s[traj]
            Lc = curve.components[c].length
            core = allowed = None
            if br is not None and br.kind == "saddle":
                d = surface.distance(np.asarray(br.point), fg.points[k_ref, traj])
                core = d * inflate <= 2 * br.zone.r
                allowed = d * inflate < 4 * br.zone.r
            for dci in (dc, 1):
                try:
                    cuts, labels = plan_arcs(sc, Lc, B, core, allowed, dci)
                    break
                except ResolutionError:
                    if dci == 1:
                        raise
            covers.append(arc_cover(traj, cuts, dci if cuts else 1, p, comp=c, labels=labels))
        for cov in covers:
            cnt = np.sum(np.stack(cov.support), axis=0)
            info["circle_overlap"] = max(info["circle_overlap"], int(cnt.max()))
        mats, mk, nm, defects = strip_family(fg, lg, i, Q[i], covers, p)
        info["commutation"] += defects
        if br is not None and br.kind == "saddle":
            is0 = [n.endswith("U0") for n in nm]
            others = [m for m, z in zip(mats, is0) if not z]
            patch = critical_patch_matrix(Q[i], others)
            pm = np.zeros(K * L, bool)
            for m, z in zip(mk, is0):
                if z:
                    pm |= m
            keep = [j for j, z in enumerate(is0) if not z]
            ops += [mats[j] for j in keep] + [patch]
            masks += [mk[j] for j in keep] + [pm]
            kinds += ["strip"] * len(keep) + ["critical-patch"]
            names += [nm[j] for j in keep] + [f"S{i}.patch"]
            dist = surface.distance(np.asarray(br.point), surface.wrap(fg.nodes[pm]))
            info["patch_distance"].append({"name": f"S{i}.patch", "max_distance": float(dist.max()),
                                           "U_radius": float(br.zone.U_radius),
                                           "V_radius": float(br.zone.V_radius)})
            info["strips"].append({"strip": i, "kind": "critical", "arcs": len(mats)})
        else:
            ops += mats
            masks += mk
            kinds += ["strip"] * len(mats)
            names += nm
            info["strips"].append({"strip": i, "kind": "regular", "arcs": len(mats)})
    fam = ProjectionFamily(ops, masks, kinds, surface.name, p, names,
                           meta={"eps": float(eps), "plan": plan.to_dict(),
                                 "grid": {"levels": int(K), "trajectories": int(L),
                                          "zone_nodes": int(n_zone)},
                                 "bell": bell_profile, "corrupt_cut": corrupt_cut,
                                 "shift": None if shift is None else list(shift)})
    return Decomposition(fam, fg, lg, plan, Q, info)


def _latitudinal(fg, lg, bell, p, corrupt_cut, shift):
    n = fg.n
    bad = make_bell(bell.delta, "corrupted")
    si, amount = shift if shift is not None else (None, 0.0)
    for j in (corrupt_cut, si):
        if j is not None and not 0 <= j < len(lg.cuts):
            raise IndexError(f"cut index {j} out of range")
    E = [sp.identity(n, format="csr")]
    E += [aww_matrix(fg, lg, j, bad if j == corrupt_cut else bell, p,
                     shift=(amount if j == si else 0.0)) for j in range(len(lg.cuts))]
    E.append(sp.csr_matrix((n, n)))
    return [(E[j] - E[j + 1]).tocsr() for j in range(len(E) - 1)], E


def support_diameter(surface, points, n_sample=400):
    """Double-sweep estimate of the geodesic diameter of a point set."""
    P = surface.wrap(points)
    if len(P) > n_sample:
        P = P[np.linspace(0, len(P) - 1, n_sample).astype(int)]
    if surface.distance_fn is not None:
        a = P[0]
        far = P[np.argmax(surface.distance(a, P))]
        return float(surface.distance(far, P).max())
    a = P[0]
    d = _fresh_distance(surface, a, P)
    far = P[np.argmax(d)]
    return float(_fresh_distance(surface, far, P).max())


def _fresh_distance(surface, z, P):
    from scipy.ndimage import map_coordinates
    F = surface._field(z)
    _, _, (g0, g1), h = surface._graph
    Q = surface.wrap(P)
    mode = "grid-wrap" if all(surface.periodic) else "nearest"
    return map_coordinates(F, [(Q[:, 0] - g0[0]) / h[0], (Q[:, 1] - g1[0]) / h[1]], order=1, mode=mode)


DECOMPOSITION_TOLS = {"idempotence": 1e-4, "annihilation": 1e-4, "sum": 1e-4,
                      "exterior": 1e-6, "symmetry": 1e-4, "eigen": 1e-4, "riesz_slack": 0.05}


def verify_decomposition(dec, tolerances=None, n_probes=32, riesz_probes=256, seed=0,
                         diameters=True):
    """Full check suite plus diameter, critical-patch and overlap checks."""
    fam, fg = dec.family, dec.grid
    grid = dec.quadrature()
    tol = dict(DECOMPOSITION_TOLS)
    tol.update(tolerances or {})
    p = fam.p
    if p == 2:
        bounds = (1.0, 1.0)
        tol["riesz_slack"] = min(tol["riesz_slack"], 1e-3)
    else:
        bounds = None
    N_circle = dec.info["circle_overlap"]
    rep = vf.check_family(fam, grid, tol, n_probes, riesz_probes, seed, riesz_bounds=bounds,
                          overlap_bound=2 * (N_circle + 1))
    rep.tolerance_policy += "; decomposition checks use the acceptance tolerances"
    cd = max(dec.info["commutation"]) if dec.info["commutation"] else 0.0
    rep.add("commutation", cd, tol["idempotence"])
    for pd in dec.info["patch_distance"]:
        rep.add(f"patch_in_U:{pd['name']}", pd["max_distance"] * 1.02, pd["U_radius"],
                pd["max_distance"] * 1.02 < pd["U_radius"])
    if diameters:
        worst = 0.0
        eps = fam.meta["eps"]
        for m in fam.supports:
            worst = max(worst, support_diameter(fg.surface, fg.nodes[m]))
        rep.add("diameter", worst * 1.02, 3 * eps, worst * 1.02 < 3 * eps)
    fam.report = rep
    fam.overlap = rep.overlap
    return rep


# ---------------------------------------------------------------------------
# coarsening and transfers

def coarsen(family, cover_masks, cover_names=None):
    """Merge fine projections by first-fit assignment into a coarser cover.

    ``cover_masks`` are boolean node masks of the target sets.
    """
    groups = {}
    bad = []
    for j, m in enumerate(family.supports):
        for w, W in enumerate(cover_masks):
            if not np.any(m & ~W):
                groups.setdefault(w, []).append(j)
                break
        else:
            bad.append(family.names[j])
    if bad:
        raise ValueError(f"supports fit no cover set: {bad}")
    ops, masks, kinds, names = [], [], [], []
    cover_names = cover_names or [f"W{w}" for w in range(len(cover_masks))]
    for w in sorted(groups):
        js = groups[w]
        M = family.operators[js[0]]
        for j in js[1:]:
            M = M + family.operators[j]
        ops.append(sp.csr_matrix(M))
        mk = np.zeros_like(family.supports[0])
        for j in js:
            mk |= family.supports[j]
        masks.append(mk)
        kinds.append("merged")
        names.append(cover_names[w])
    return ProjectionFamily(ops, masks, kinds, family.ambient, family.p, names,
                            meta=dict(family.meta, coarsened_from=len(family)))


def transfer_weight(family, omega, omega_tilde, p=None):
    """Conjugate by ``(omega_tilde / omega)^{1/p}``: projections on ``L^p(omega_tilde)``."""
    p = family.p if p is None else p
    omega = np.asarray(omega, float)
    omega_tilde = np.asarray(omega_tilde, float)
    if np.any(omega <= 0) or np.any(omega_tilde <= 0):
        raise ValueError("weights must be positive at every node")
    if np.isinf(p):
        r = np.ones_like(omega)
    else:
        r = (omega_tilde / omega) ** (1.0 / p)
    D, Di = sp.diags(r), sp.diags(1.0 / r)
    ops = [(Di @ sp.csr_matrix(P) @ D).tocsr() for P in family.operators]
    return ProjectionFamily(ops, list(family.supports), list(family.kinds), family.ambient, p,
                            list(family.names), meta=dict(family.meta, weight_transfer=True))


@dataclass
class Diffeo:
    """Node-level diffeomorphism: image nodes and Jacobian determinants."""
    forward: object
    jacobian: object


def transfer_diffeo(family, grid, F, omega=None):
    """Transport a family to the image manifold; returns ``(family, grid)``.

    ``grid.weights`` are Riemannian weights on the source and ``omega`` the
    source density (default 1).  The image weight is
    ``omega_N(F(x)) = omega(x) / |J(x)|``, so the image measure is the
    pushforward and ``Q f = P(f o F) o F^{-1}`` keeps its matrix.  The image
    grid carries the pushforward weights; its meta holds the Riemannian
    weights of the image (``nu``) and ``omega_N``.
    """
    J = np.abs(np.asarray(F.jacobian(grid.nodes), float))
    if np.any(~np.isfinite(J)) or np.any(J < 1e-14):
        raise ValueError("degenerate Jacobian")
    om = np.ones(grid.n) if omega is None else np.asarray(omega, float)
    if np.any(om <= 0):
        raise ValueError("weights must be positive at every node")
    nodes = np.asarray(F.forward(grid.nodes), float)
    nu = grid.weights * J
    g2 = vf.QuadratureGrid(nodes, grid.weights * om, grid.space + "-image", grid.resolution,
                           grid.h, grid.box, grid.period,
                           {"nu": nu, "omega_N": om / J, "source_nodes": grid.nodes})
    fam = ProjectionFamily(list(family.operators), list(family.supports), list(family.kinds),
                           family.ambient + "-image", family.p, list(family.names),
                           meta=dict(family.meta, diffeo_transfer=True))
    return fam, g2


def support_polygons(dec, raster=(96, 192)):
    """Support outlines in parameter coordinates, one list of polygons per operator.

    Supports are rasterized by nearest flow node and contoured at 1/2; a
    support covering the whole raster is the parameter rectangle itself.
    """
    from skimage.measure import find_contours
    from ._kd import PeriodicTree
    S = dec.grid.surface
    (a0, b0), (a1, b1) = S.box
    h0, h1 = (b0 - a0) / raster[0], (b1 - a1) / raster[1]
    U, V = np.meshgrid(a0 + h0 * (np.arange(raster[0]) + 0.5),
                       a1 + h1 * (np.arange(raster[1]) + 0.5), indexing="ij")
    tree = PeriodicTree(S.wrap(dec.grid.nodes), S.periods())
    _, idx = tree.query(np.stack([U.ravel(), V.ravel()], axis=1))
    rect = [[a0, a1], [b0, a1], [b0, b1], [a0, b1], [a0, a1]]
    out = []
    for m in dec.family.supports:
        R = m[idx].reshape(raster)
        if R.all():
            out.append([rect])
            continue
        pad = np.pad(R.astype(float), 1)
        polys = []
        for c in find_contours(pad, 0.5):
            u = a0 + h0 * (c[:, 0] - 0.5)
            v = a1 + h1 * (c[:, 1] - 0.5)
            polys.append(np.round(np.stack([u, v], axis=1), 6).tolist())
        out.append(polys)
    return out
