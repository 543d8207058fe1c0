"""Domain types shared by the 2D and 3D pipelines.

A fault between classes ``i < j`` is represented by a :class:`FaultSet`, an
ordered (2D) or unordered (3D) collection of :class:`Triplet` samples.  Each
triplet holds one point on either side of the fault and their midpoint.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class FaultScoutError(Exception):
    """Base class for errors raised by this package."""


class DomainError(FaultScoutError):
    """A point lies outside the computational domain."""


def as_point(p) -> np.ndarray:
    a = np.array(p, dtype=float)
    if a.ndim != 1 or a.size not in (2, 3):
        raise ValueError(f"points must have 2 or 3 coordinates, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite coordinates: {a}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class LabeledPoint:
    point: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Triplet:
    """Two points straddling a fault plus their midpoint.

    ``origin`` records which pipeline phase created the triplet; it is carried
    into the PLY export and otherwise ignored.
    """

    p_i: np.ndarray
    p_j: np.ndarray
    mid: np.ndarray
    class_i: int
    class_j: int
    origin: str = ""

    @property
    def pair(self) -> tuple[int, int]:
        return (self.class_i, self.class_j)

    @property
    def dim(self) -> int:
        return self.mid.size

    def width(self) -> float:
        return float(np.linalg.norm(self.p_i - self.p_j))

    def direction(self) -> np.ndarray:
        """Unit vector pointing from the class-i side to the class-j side."""
        d = self.p_j - self.p_i
        n = np.linalg.norm(d)
        return d / n if n > 0 else d

    def with_origin(self, origin: str) -> "Triplet":
        return replace(self, origin=origin)


def make_triplet(a: LabeledPoint, b: LabeledPoint, eps_b: float, origin: str = "") -> Triplet:
    """Build a triplet from two differently classified points at most ``2*eps_b`` apart."""
    if a.label == b.label:
        raise ValueError(f"both points carry label {a.label}")
    pa, pb = as_point(a.point), as_point(b.point)
    dist = float(np.linalg.norm(pa - pb))
    # small slack for the rounding in repeated midpoint halving
    if dist > 2.0 * eps_b * (1.0 + 1e-12):
        raise ValueError(f"points are {dist:.3g} apart, more than 2*eps_b = {2 * eps_b:.3g}")
    if a.label > b.label:
        a, b = b, a
        pa, pb = pb, pa
    mid = 0.5 * (pa + pb)
    mid.flags.writeable = False
    return Triplet(pa, pb, mid, a.label, b.label, origin)


@dataclass(frozen=True)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"degenerate box: lower={lo}, upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "BoxDomain":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def boundary_distance(self, p) -> float:
        p = np.asarray(p)
        return float(min(np.min(p - self.lower), np.min(self.upper - p)))


@dataclass(frozen=True)
class Params:
    """Algorithm tolerances and thresholds.

    The defaults reproduce the settings used for the 2D test problems.  Values
    with no published counterpart (``beta_growth``, the two expansion angles,
    ``eps_cluster`` and the startpairs escalation factor) are conservative
    choices.
    """

    eps_b: float = 0.001
    eps_gap: float = 0.05
    eps_err: float = 0.001
    eps_coarse: float = 0.0001
    eps_safemin: float = 0.95
    eps_safemax: float = 0.25
    k_near: int = 10
    k_sort: int = 5
    k_extra: int = 4
    k_rep: int = 3
    k_adap: int = 4
    beta_angle: float = math.acos(-0.9)
    beta_growth: float = 2.0
    alpha_expand: float = math.radians(45.0)
    alpha_expbound: float = math.radians(45.0)
    eps_cluster: float | None = None
    rep_factor: float = 2.0
    min_angle: float = math.radians(10.0)
    boundary_frac: float = 0.05
    max_fill_passes: int = 8
    max_fill3d_passes: int = 40

    def __post_init__(self):
        for name in ("eps_b", "eps_gap", "eps_err", "eps_coarse", "eps_safemin", "eps_safemax", "beta_growth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("k_near", "k_sort", "k_extra", "k_rep", "k_adap"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.eps_coarse < self.eps_err:
            raise ValueError("eps_coarse must be smaller than eps_err")
        if not self.eps_b < self.eps_gap:
            raise ValueError("eps_b must be much smaller than eps_gap")
        if not self.eps_safemax < 1:
            raise ValueError("eps_safemax must be below 1")
        if self.eps_cluster is not None and not self.eps_cluster > 0:
            raise ValueError("eps_cluster must be positive")

    @property
    def cluster_radius(self) -> float:
        return self.eps_cluster if self.eps_cluster is not None else self.eps_gap / 5.0

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            out[name] = getattr(self, name)
        out["eps_cluster"] = self.cluster_radius
        return out


@dataclass
class FaultSet:
    """Triplets approximating one fault ``Gamma_{i,j}``.

    ``breaks`` holds the start index of every component after the first;
    ``closed`` has one flag per component.
    """

    pair: tuple[int, int]
    triplets: list[Triplet] = field(default_factory=list)
    breaks: list[int] = field(default_factory=list)
    sorted: bool = False
    closed: list[bool] = field(default_factory=lambda: [False])

    def __post_init__(self):
        if list(self.breaks) != sorted(set(self.breaks)):
            raise ValueError("component breaks must be strictly increasing")
        if any(b <= 0 or b >= max(len(self.triplets), 1) for b in self.breaks):
            raise ValueError("component breaks must lie strictly inside the triplet range")
        if len(self.closed) != len(self.breaks) + 1:
            self.closed = list(self.closed[: len(self.breaks) + 1]) + [False] * (
                len(self.breaks) + 1 - len(self.closed)
            )

    def __len__(self) -> int:
        return len(self.triplets)

    @classmethod
    def from_components(cls, pair, components: Sequence[Sequence[Triplet]], closed=None, sorted=True):
        comps = [list(c) for c in components if len(c) > 0]
        if closed is None:
            closed = [False] * len(comps)
        triplets: list[Triplet] = []
        breaks = []
        for k, comp in enumerate(comps):
            if k > 0:
                breaks.append(len(triplets))
            triplets.extend(comp)
        return cls(tuple(pair), triplets, breaks, sorted, list(closed) if comps else [False])

    def components(self) -> list[list[Triplet]]:
        bounds = [0, *self.breaks, len(self.triplets)]
        return [self.triplets[a:b] for a, b in zip(bounds[:-1], bounds[1:])]

    def midpoints(self) -> np.ndarray:
        if not self.triplets:
            return np.zeros((0, 0))
        return np.array([t.mid for t in self.triplets])


def reconstruct_polyline(fs: FaultSet) -> list[tuple[np.ndarray, bool]]:
    """Return ``(vertices, closed)`` per component; vertices are triplet midpoints."""
    if not fs.sorted:
        raise ValueError(f"fault {fs.pair} is not sorted")
    out = []
    for comp, closed in zip(fs.components(), fs.closed):
        if comp:
            out.append((np.array([t.mid for t in comp]), bool(closed)))
    return out


# ---------------------------------------------------------------- CSV export

def csv_header(dim: int) -> list[str]:
    cols = ["fault_i", "fault_j", "component", "seq"]
    for tag in ("xi", "xj", "xm"):
        cols.extend(f"{tag}_{k + 1}" for k in range(dim))
    return cols


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_triplet_csv(path: str | Path, fs: FaultSet) -> None:
    dim = fs.triplets[0].dim if fs.triplets else 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(dim))
        for c, comp in enumerate(fs.components()):
            for s, t in enumerate(comp):
                row = [fs.pair[0], fs.pair[1], c, s]
                row += [_fmt(v) for v in t.p_i] + [_fmt(v) for v in t.p_j] + [_fmt(v) for v in t.mid]
                w.writerow(row)


def read_triplet_csv(path: str | Path, closed: Sequence[bool] | None = None) -> FaultSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    dim = (len(header) - 4) // 3
    if header != csv_header(dim):
        raise ValueError(f"{path}: unexpected header {header}")
    comps: dict[int, list[tuple[int, Triplet]]] = {}
    pair = None
    for row in body:
        fi, fj, c, s = (int(v) for v in row[:4])
        pair = (fi, fj)
        vals = np.array([float(v) for v in row[4:]])
        pi, pj, pm = (vals[k * dim:(k + 1) * dim] for k in range(3))
        comps.setdefault(c, []).append((s, Triplet(pi, pj, pm, fi, fj)))
    if pair is None:
        raise ValueError(f"{path}: no triplets")
    ordered = [[t for _, t in sorted(comps[c], key=lambda st: st[0])] for c in sorted(comps)]
    return FaultSet.from_components(pair, ordered, closed=closed)


def write_ply(path: str | Path, fs: FaultSet) -> None:
    """Point cloud of midpoints with integer ``fault_i``, ``fault_j``, ``phase`` properties."""
    phases = {"initialise": 0, "fill": 1, "expand": 2, "adapt": 3}
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(fs.triplets)}",
        "property double x",
        "property double y",
        "property double z",
        "property int fault_i",
        "property int fault_j",
        "property int phase",
        "end_header",
    ]
    for t in fs.triplets:
        xyz = " ".join(_fmt(v) for v in t.mid)
        lines.append(f"{xyz} {fs.pair[0]} {fs.pair[1]} {phases.get(t.origin, 0)}")
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------ region queries

def point_in_ring(x: float, y: float, ring: np.ndarray) -> bool:
    """Crossing-number test of ``(x, y)`` against a closed ring of vertices."""
    inside = False
    n = len(ring)
    j = n - 1
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[j]
        if (yi > y) != (yj > y):
            xc = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < xc:
                inside = not inside
        j = i
    return inside


@dataclass
class Region:
    label: int
    exterior: np.ndarray
    holes: list[np.ndarray]

    def contains(self, x: float, y: float) -> bool:
        if not point_in_ring(x, y, self.exterior):
            return False
        return not any(point_in_ring(x, y, h) for h in self.holes)


@dataclass
class Reconstruction:
    """Polygonal subdivision of a 2D domain rebuilt from fault polylines."""

    domain: BoxDomain
    faults: dict[tuple[int, int], FaultSet]
    regions: list[Region]
    default_label: int | None = None

    def lines(self) -> list[np.ndarray]:
        out = []
        for fs in self.faults.values():
            for verts, closed in reconstruct_polyline(fs):
                out.append(np.vstack([verts, verts[:1]]) if closed and len(verts) > 2 else verts)
        return out


def _extend_open(verts: np.ndarray, length: float) -> np.ndarray:
    if len(verts) < 2:
        return verts
    out = [verts]
    d0 = verts[0] - verts[1]
    d1 = verts[-1] - verts[-2]
    n0, n1 = np.linalg.norm(d0), np.linalg.norm(d1)
    head = verts[0] + length * d0 / n0 if n0 > 0 else verts[0]
    tail = verts[-1] + length * d1 / n1 if n1 > 0 else verts[-1]
    return np.vstack([head, *out, tail])


def build_reconstruction(
    domain: BoxDomain,
    faults: dict[tuple[int, int], FaultSet],
    boundary: np.ndarray | None = None,
    extend: float = 0.05,
    default_label: int | None = None,
) -> Reconstruction:
    """Polygonize fault polylines together with the domain outline.

    Open polylines are prolonged by ``extend`` at both ends so that they reach
    the domain boundary or a neighbouring fault; dangling pieces are discarded
    by the polygonizer.  Each face is labelled from the triplet sides visible
    from an interior point.
    """
    from shapely.geometry import LineString, Point, Polygon
    from shapely.ops import polygonize, unary_union
    from scipy.spatial import cKDTree

    if domain.dim != 2:
        raise ValueError("region reconstruction is only available in 2D")
    if boundary is None:
        lo, hi = domain.lower, domain.upper
        boundary = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    outline = Polygon(boundary)
    lines = [LineString(np.vstack([boundary, boundary[:1]]))]
    fault_lines = []
    for fs in faults.values():
        for verts, closed in reconstruct_polyline(fs):
            if len(verts) < 2:
                continue
            if closed and len(verts) > 2:
                ls = LineString(np.vstack([verts, verts[:1]]))
            else:
                ls = LineString(_extend_open(verts, extend))
            fault_lines.append(ls)
            lines.append(ls.intersection(outline.buffer(1e-12)))
    merged = unary_union(lines)
    faces = [f for f in polygonize(merged) if f.area > 1e-14 and outline.buffer(1e-9).contains(f.representative_point())]

    sides = []
    labels = []
    for fs in faults.values():
        for t in fs.triplets:
            sides.append(t.p_i)
            labels.append(t.class_i)
            sides.append(t.p_j)
            labels.append(t.class_j)
    blockers = unary_union(fault_lines) if fault_lines else None
    tree = cKDTree(np.array(sides)) if sides else None

    regions = []
    for face in faces:
        q = face.representative_point()
        qa = np.array([q.x, q.y])
        label = default_label
        if tree is not None:
            k = min(12, len(sides))
            _, idx = tree.query(qa, k=k)
            votes: dict[int, int] = {}
            for ii in np.atleast_1d(idx):
                seg = LineString([qa, sides[ii]])
                if blockers is not None and seg.crosses(blockers):
                    continue
                votes[labels[ii]] = votes.get(labels[ii], 0) + 1
            if votes:
                label = max(sorted(votes), key=lambda c: votes[c])
            else:
                label = labels[int(np.atleast_1d(idx)[0])]
        if label is None:
            continue
        regions.append(
            Region(int(label), np.asarray(face.exterior.coords)[:-1], [np.asarray(r.coords)[:-1] for r in face.interiors])
        )
    return Reconstruction(domain, faults, regions, default_label)


def region_query(point, rec: Reconstruction) -> int:
    """Class of the reconstructed region containing ``point``; no classifier calls."""
    p = np.asarray(point, dtype=float)
    if p.size != 2:
        raise ValueError("region queries need a 2D point")
    if not rec.domain.contains(p):
        raise DomainError(f"point {p} lies outside the domain")
    hits = [r for r in rec.regions if r.contains(p[0], p[1])]
    if hits:
        # nested faces (closed curves) are both hit; the smaller one wins
        return min(hits, key=lambda r: _ring_area(r.exterior)).label
    if not rec.regions:
        if rec.default_label is None:
            raise FaultScoutError("empty reconstruction carries no class information")
        return rec.default_label
    # on an edge or in a sliver lost to noding: nearest face
    best, best_d = None, np.inf
    for r in rec.regions:
        d = _ring_distance(p, r.exterior)
        if d < best_d:
            best, best_d = r, d
    return best.label


def _ring_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _ring_distance(p: np.ndarray, ring: np.ndarray) -> float:
    a = ring
    b = np.roll(ring, -1, axis=0)
    return float(np.min(segment_distances(p, a, b)))


def segment_distances(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from ``p`` to each segment ``a[k] -> b[k]``."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > 0, np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(p - proj, axis=1)


def polyline_distance(points: np.ndarray, polylines: Iterable[np.ndarray]) -> np.ndarray:
    """Minimum distance from each row of ``points`` to a set of polylines."""
    points = np.atleast_2d(points)
    segs_a, segs_b = [], []
    for verts in polylines:
        if len(verts) == 1:
            segs_a.append(verts)
            segs_b.append(verts)
        else:
            segs_a.append(verts[:-1])
            segs_b.append(verts[1:])
    if not segs_a:
        return np.full(len(points), np.inf)
    a = np.vstack(segs_a)
    b = np.vstack(segs_b)
    out = np.empty(len(points))
    for k, p in enumerate(points):
        out[k] = np.min(segment_distances(p, a, b))
    return out
