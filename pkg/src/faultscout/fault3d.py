"""The spatial pipeline: fill holes in triplet clouds, expand to boundaries, refine by curvature."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .classify import ClassifierHandle
from .core import BoxDomain, FaultSet, LabeledPoint, Params, Triplet
from .curve2d import _angle
from .fault2d import RunResult, _expand_end, expand2d, fill2d, split_components
from .curve2d import sort_triplets
from .initial import BisectionFailure, bisection, initialise, probe_pair
from .numerics import DegenerateGeometry
from .surface3d import LocalPatch, PatchIndex, build_patch, est_error_triangle, min_angle

INNER_FACTOR = 0.75


class PlaneHandle:
    """Restriction of a classifier to a plane ``origin + u*basis[0] + v*basis[1]``.

    All evaluations go through the parent cache; ``phase`` overrides the
    phase requested by the planar algorithms.
    """

    def __init__(self, parent: ClassifierHandle, origin, basis, phase: str | None = None):
        self.parent = parent
        self.origin = np.asarray(origin, dtype=float)
        self.basis = np.asarray(basis, dtype=float)
        self.phase = phase

    def lift(self, p2) -> np.ndarray:
        return self.origin + np.asarray(p2, dtype=float) @ self.basis

    def project(self, p3) -> np.ndarray:
        return (np.asarray(p3, dtype=float) - self.origin) @ self.basis.T

    def classify(self, p2, phase: str) -> int:
        return self.parent.classify(self.lift(p2), self.phase or phase)

    def lift_triplet(self, t: Triplet, origin: str) -> Triplet:
        a, b = self.lift(t.p_i), self.lift(t.p_j)
        return Triplet(a, b, 0.5 * (a + b), t.class_i, t.class_j, origin)

    def project_triplet(self, t: Triplet) -> Triplet:
        a, b = self.project(t.p_i), self.project(t.p_j)
        return Triplet(a, b, self.project(t.mid), t.class_i, t.class_j, t.origin)


def _bisect(sp, eps_b, h, phase) -> Triplet | None:
    if sp is None:
        return None
    try:
        return bisection(sp.a, sp.b, eps_b, h, phase)
    except BisectionFailure:
        return None


def _safe_patch(x, index, k_near) -> LocalPatch | None:
    try:
        return build_patch(x, None, k_near, index)
    except (DegenerateGeometry, ValueError):
        return None


def _model(patch: LocalPatch, eps_b: float):
    try:
        return patch.model(eps_b)
    except (ValueError, np.linalg.LinAlgError):
        return None


class _SeedSet:
    """Candidate starting points, deduplicated against each other and against known spots."""

    def __init__(self, radius: float, blocked=()):
        self.radius = radius
        self.items: list[tuple[np.ndarray, np.ndarray, float, Triplet]] = []
        self._pts: list[np.ndarray] = list(blocked)

    def add(self, z, n, alpha, ref, radius: float | None = None) -> None:
        r = self.radius if radius is None else radius
        for q in self._pts:
            if np.linalg.norm(q - z) <= r:
                return
        self._pts.append(z)
        self.items.append((z, n, alpha, ref))


# ----------------------------------------------------------------------- fill

def _gap_seed(p3: np.ndarray, edges: list[float], near: cKDTree) -> np.ndarray:
    """Centroid, or a point on the longest edge when the centroid hugs a vertex of a flat triangle."""
    k = int(np.argmax(edges))
    a, b = p3[k], p3[(k + 1) % 3]
    cands = [p3.mean(axis=0), 0.5 * (a + b), 0.75 * a + 0.25 * b, 0.25 * a + 0.75 * b]
    dist = [near.query(c)[0] for c in cands]
    return cands[int(np.argmax(dist))] if dist[0] < 0.5 * max(dist) else cands[0]


def _on_rim(uv: np.ndarray, frac: float) -> bool:
    """Whether the patch centre ``uv[0]`` is a hull vertex or extremal along the first axis."""
    u = uv[:, 0]
    span = u.max() - u.min()
    if span > 0 and min(u[0] - u.min(), u.max() - u[0]) <= frac * span:
        return True
    try:
        return 0 in ConvexHull(uv).vertices
    except QhullError:
        return False


def _run_seeds(seeds: _SeedSet, fs: FaultSet, params: Params, h, phase: str, failed: list) -> list[Triplet]:
    new = []
    for z, n, alpha, _ in seeds.items:
        sp, _ = probe_pair(z + alpha * n, z - alpha * n, z, fs.pair, params.k_rep, h, phase, params.rep_factor)
        t = _bisect(sp, params.eps_b, h, phase)
        if t is None:
            failed.append(z)
        else:
            new.append(t.with_origin(phase))
    return new


def fill3d(fs: FaultSet, params: Params, h: ClassifierHandle, failed: list | None = None) -> FaultSet:
    """Seed the centroids of oversized patch triangles and the outside of patch rims until stable."""
    triplets = list(fs.triplets)
    failed = [] if failed is None else failed
    if len(triplets) < 4:
        return FaultSet(fs.pair, triplets)
    for _ in range(params.max_fill3d_passes):
        index = PatchIndex(triplets)
        near = cKDTree(index.mids)
        seeds = _SeedSet(params.eps_b, blocked=failed)
        for x in triplets:
            patch = _safe_patch(x, index, params.k_near)
            if patch is None:
                continue
            mids = patch.mids
            n = patch.normal()
            for tri in patch.triangles:
                p3 = mids[tri]
                edges = [np.linalg.norm(p3[k] - p3[(k + 1) % 3]) for k in range(3)]
                dmax = max(edges)
                if dmax <= params.eps_gap or min_angle(patch.uv[tri]) < params.min_angle:
                    continue
                model = _model(patch, params.eps_b)
                e = est_error_triangle(patch.uv[tri], model) if model is not None else 0.0
                alpha = min(params.eps_safemax * dmax, max(e, params.eps_safemin * params.eps_b))
                z = _gap_seed(p3, edges, near)
                if near.query(z)[0] < 0.1 * params.eps_gap:
                    continue
                seeds.add(z, n, alpha, x)
            # rim of the patch: probably the rim of a hole or of the surface
            if _on_rim(patch.uv, params.boundary_frac):
                cog = mids.mean(axis=0)
                out = x.mid - cog
                out -= np.dot(out, n) * n
                norm = np.linalg.norm(out)
                if norm == 0:
                    continue
                z = x.mid + params.eps_gap * out / norm
                if near.query(z)[0] < 0.5 * params.eps_gap:
                    continue
                model = _model(patch, params.eps_b)
                phi = float(model.second_derivative_norm(patch.uv[:1])[0]) if model is not None else 0.0
                delta = 0.5 * phi * params.eps_gap ** 2
                alpha = min(params.eps_safemax * params.eps_gap, max(delta, params.eps_safemin * params.eps_b))
                seeds.add(z, n, alpha, x, radius=0.25 * params.eps_gap)
        if not seeds.items:
            break
        new = _run_seeds(seeds, fs, params, h, "fill", failed)
        if not new:
            break
        triplets.extend(new)
    return FaultSet(fs.pair, triplets)


# --------------------------------------------------------------------- expand

@dataclass
class BoundarySeedSets:
    inner: list[int] = field(default_factory=list)
    outer: list[int] = field(default_factory=list)
    facets: dict[tuple[int, int], list[Triplet]] = field(default_factory=dict)


def _plane_expand(x, xp, n, fs, params, h) -> list[Triplet]:
    """Run the planar expansion from ``{xp, x}`` beyond ``x`` in the plane of ``xp -> x`` and ``n``."""
    e1 = x.mid - xp.mid
    if np.linalg.norm(e1) == 0:
        return []
    e1 = e1 / np.linalg.norm(e1)
    e2 = n - np.dot(n, e1) * e1
    if np.linalg.norm(e2) < 1e-8:
        return []
    e2 = e2 / np.linalg.norm(e2)
    plane = PlaneHandle(h, x.mid, np.vstack([e1, e2]), phase="expand")
    chain = [plane.project_triplet(xp), plane.project_triplet(x)]
    out, _ = _expand_end(chain, 1.0, params, plane, fs.pair)
    return [plane.lift_triplet(t, "expand") for t in out[2:]]


def _partner(x_idx, index: PatchIndex, direction, params) -> int | None:
    """Nearest triplet ``x'`` with the step ``x -> x'`` pointing against ``direction``."""
    x = index.triplets[x_idx]
    k = min(len(index.triplets), 4 * params.k_near)
    _, idx = index.tree.query(x.mid, k=k)
    for q in np.atleast_1d(idx):
        q = int(q)
        if q == x_idx:
            continue
        step = index.triplets[q].mid - x.mid
        if _angle(-direction, step) < params.alpha_expand:
            return q
    return None


def boundary_seeds(fs: FaultSet, others: list[FaultSet], domain: BoxDomain, params: Params, index=None):
    index = index or PatchIndex(fs.triplets)
    sets = BoundarySeedSets()
    foreign = [t.mid for o in others for t in o.triplets]
    if foreign:
        ftree = cKDTree(np.array(foreign))
        d, _ = ftree.query(index.mids)
        sets.inner = [int(k) for k in np.flatnonzero(d < INNER_FACTOR * params.eps_gap)]
    inner = set(sets.inner)
    b = index.mids.max(axis=0) - index.mids.min(axis=0)
    picked = []
    for a in range(3):
        n_exp = math.ceil(max(b[(a + 1) % 3], b[(a + 2) % 3]) / params.eps_gap)
        order = np.argsort(index.mids[:, a], kind="stable")
        for side, cand in ((0, order[:n_exp]), (1, order[::-1][:n_exp])):
            bound = domain.upper[a] if side else domain.lower[a]
            n_outer = np.zeros(3)
            n_outer[a] = 1.0
            for k in cand:
                k = int(k)
                if k in inner:
                    continue
                if abs(index.mids[k, a] - bound) >= params.eps_gap:
                    patch = _safe_patch(index.triplets[k], index, params.k_near)
                    if patch is None:
                        continue
                    n = patch.normal()
                    if min(_angle(n, n_outer), _angle(-n, n_outer)) <= params.alpha_expbound:
                        continue
                picked.append((k, a, side))
    sets.outer = picked
    return sets


def _facet_plane(domain: BoxDomain, axis: int, side: int, h, phase="expand") -> PlaneHandle:
    others = [k for k in range(3) if k != axis]
    origin = np.zeros(3)
    origin[axis] = domain.upper[axis] if side else domain.lower[axis]
    basis = np.zeros((2, 3))
    basis[0, others[0]] = 1.0
    basis[1, others[1]] = 1.0
    return PlaneHandle(h, origin, basis, phase=phase)


def _facet_subproblem(
    seeds: list[Triplet], axis: int, side: int, domain: BoxDomain, fault, params: Params, h
) -> list[Triplet]:
    """Trace the fault's trace on one box facet with the planar fill and expand."""
    plane = _facet_plane(domain, axis, side, h)
    others = [k for k in range(3) if k != axis]
    fdom = BoxDomain(domain.lower[others], domain.upper[others])
    tri2 = []
    for t in seeds:
        a2, b2 = plane.project(t.p_i), plane.project(t.p_j)
        ca, cb = plane.classify(a2, "expand"), plane.classify(b2, "expand")
        if {ca, cb} != set(fault):
            continue
        try:
            t2 = bisection(LabeledPoint(a2, ca), LabeledPoint(b2, cb), params.eps_b, plane, "expand")
        except BisectionFailure:
            continue
        if all(np.linalg.norm(t2.mid - q.mid) >= params.eps_b for q in tri2):
            tri2.append(t2)
    if not tri2:
        return []
    order = sort_triplets(tri2, params.k_sort, params.beta_angle, fdom)
    fs2 = FaultSet(fault, order.apply(tri2), sorted=True)
    filled = fill2d(fs2, params, plane)
    fs2 = split_components(filled.faults, filled.unfillable)
    fs2 = expand2d(fs2, params, plane)
    return [plane.lift_triplet(t, "expand") for t in fs2.triplets]


def expand3d(
    fs: FaultSet, others: list[FaultSet], domain: BoxDomain, params: Params, h: ClassifierHandle,
    failed: list | None = None,
) -> FaultSet:
    """Grow the cloud towards junctions with other faults and towards the box facets."""
    if len(fs.triplets) < 4:
        return FaultSet(fs.pair, list(fs.triplets))
    index = PatchIndex(fs.triplets)
    sets = boundary_seeds(fs, others, domain, params, index)
    new: list[Triplet] = []
    foreign = [t for o in others for t in o.triplets]
    ftree = cKDTree(np.array([t.mid for t in foreign])) if foreign else None
    for k in sets.inner:
        x = index.triplets[k]
        patch = _safe_patch(x, index, params.k_near)
        if patch is None:
            continue
        n = patch.normal()
        _, q = ftree.query(x.mid)
        t = foreign[int(q)].mid - x.mid
        t = t - np.dot(t, n) * n
        if np.linalg.norm(t) < 1e-12:
            continue
        p = _partner(k, index, t / np.linalg.norm(t), params)
        if p is not None:
            new.extend(_plane_expand(x, index.triplets[p], n, fs, params, h))
    facet_groups: dict[tuple[int, int], list[Triplet]] = {}
    done = set()
    for k, axis, side in sets.outer:
        if (k, axis, side) in done:
            continue
        done.add((k, axis, side))
        x = index.triplets[k]
        n_outer = np.zeros(3)
        n_outer[axis] = 1.0 if side else -1.0
        bound = domain.upper[axis] if side else domain.lower[axis]
        patch = _safe_patch(x, index, params.k_near)
        if patch is None:
            continue
        n = patch.normal()
        p = _partner(k, index, n_outer, params)
        if p is None:
            continue
        grown = _plane_expand(x, index.triplets[p], n, fs, params, h)
        new.extend(grown)
        if grown:
            last = grown[-1]
            if abs(last.mid[axis] - bound) <= params.eps_gap * 0.1:
                facet_groups.setdefault((axis, side), []).append(last)
    for (axis, side), group in sorted(facet_groups.items()):
        new.extend(_facet_subproblem(group, axis, side, domain, fs.pair, params, h))
    merged = _dedup(list(fs.triplets), new, params.eps_b)
    return fill3d(FaultSet(fs.pair, merged), params, h, failed)


def _dedup(base: list[Triplet], extra: list[Triplet], radius: float) -> list[Triplet]:
    out = list(base)
    pts = [t.mid for t in out]
    tree = cKDTree(np.array(pts)) if pts else None
    added: list[np.ndarray] = []
    for t in extra:
        if tree is not None and tree.query(t.mid)[0] < radius:
            continue
        if any(np.linalg.norm(t.mid - q) < radius for q in added):
            continue
        out.append(t)
        added.append(t.mid)
    return out


# ---------------------------------------------------------------------- adapt

def adapt3d(fs: FaultSet, params: Params, h: ClassifierHandle) -> FaultSet:
    """Refine triangles whose estimated interpolation error exceeds ``eps_err``; no coarsening."""
    triplets = list(fs.triplets)
    if len(triplets) < 6:
        return FaultSet(fs.pair, triplets)
    for _ in range(params.k_adap):
        index = PatchIndex(triplets)
        kept: list[tuple[np.ndarray, float]] = []
        seeds = []
        for x in triplets:
            patch = _safe_patch(x, index, params.k_near)
            if patch is None:
                continue
            model = _model(patch, params.eps_b)
            if model is None:
                continue
            mids = patch.mids
            for tri in patch.triangles:
                uv = patch.uv[tri]
                if min_angle(uv) < params.min_angle:
                    continue
                e = est_error_triangle(uv, model)
                if e <= params.eps_err:
                    continue
                z = mids[tri].mean(axis=0)
                edges = [np.linalg.norm(mids[tri][k] - mids[tri][(k + 1) % 3]) for k in range(3)]
                radius = 0.25 * max(edges) / math.sqrt(3.0)
                if any(np.linalg.norm(z - q) < max(r, radius) for q, r in kept):
                    continue
                kept.append((z, radius))
                alpha = min(params.eps_safemax * max(edges), max(e, params.eps_safemin * params.eps_b))
                seeds.append((z, patch.normal(), alpha))
        if not seeds:
            break
        new = []
        for z, n, alpha in seeds:
            sp, _ = probe_pair(z + alpha * n, z - alpha * n, z, fs.pair, params.k_rep, h, "adapt", params.rep_factor)
            t = _bisect(sp, params.eps_b, h, "adapt")
            if t is not None:
                new.append(t.with_origin("adapt"))
        grown = _dedup(triplets, new, params.eps_b)
        if len(grown) == len(triplets):
            break
        triplets = grown
    return FaultSet(fs.pair, triplets)


# --------------------------------------------------------------------- driver

def run3d(
    domain: BoxDomain,
    h: ClassifierHandle,
    params: Params | None = None,
    n_init: int = 200,
    points: list[LabeledPoint] | None = None,
    workers: int = 1,
) -> RunResult:
    params = params or Params()
    init = initialise(domain, n_init, params, h, points=points, workers=workers)
    pairs = sorted(init)
    res = RunResult({}, h.ledger)
    failed = {p: [] for p in pairs}
    filled = {}
    for p in pairs:
        res.stages[p] = {"initialise": len(init[p])}
        filled[p] = fill3d(init[p], params, h, failed[p])
        res.stages[p]["fill"] = len(filled[p])
    expanded = {}
    for p in pairs:
        others = [filled[q] for q in pairs if q != p]
        expanded[p] = expand3d(filled[p], others, domain, params, h, failed[p])
        res.stages[p]["expand"] = len(expanded[p])
    for p in pairs:
        res.faults[p] = adapt3d(expanded[p], params, h)
        res.filled[p] = filled[p]
        res.stages[p]["adapt"] = len(res.faults[p])
    return res
