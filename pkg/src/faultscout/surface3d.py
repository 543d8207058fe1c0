"""Local surface patches: plane frames, projected Delaunay triangles, error estimates, normals."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import FaultSet, Triplet
from .numerics import DegenerateGeometry, PlaneFrame, RbfSurface, delaunay2d, fit_plane, rbf_fit_2d


class PatchIndex:
    """Nearest-neighbour lookup over the midpoints of a triplet collection."""

    def __init__(self, triplets: Sequence[Triplet]):
        self.triplets = list(triplets)
        self.mids = np.array([t.mid for t in self.triplets]).reshape(len(self.triplets), -1)
        self.tree = cKDTree(self.mids) if len(self.triplets) else None
        self._pos = {id(t): k for k, t in enumerate(self.triplets)}

    def neighbours(self, x: Triplet, k: int) -> list[int]:
        """Indices of the ``k`` nearest other triplets, nearest first."""
        n = len(self.triplets)
        kk = min(k + 1, n)
        _, idx = self.tree.query(x.mid, k=kk)
        idx = np.atleast_1d(idx)
        me = self._pos.get(id(x))
        out = [int(q) for q in idx if int(q) != me]
        return out[:k]


@dataclass
class LocalPatch:
    """``center`` and its nearest neighbours in the frame of their best plane."""

    center: Triplet
    members: list[Triplet]  # center first
    frame: PlaneFrame
    uv: np.ndarray
    height: np.ndarray
    triangles: np.ndarray
    _model: RbfSurface | None = None

    @property
    def mids(self) -> np.ndarray:
        return np.array([t.mid for t in self.members])

    def model(self, eps_b: float) -> RbfSurface:
        """Smoothed height field over the patch plane (computed once)."""
        if self._model is None:
            self._model = rbf_fit_2d(self.uv, self.height, eps_b)
        return self._model

    def normal(self) -> np.ndarray:
        """Frame normal oriented from the class-i side to the class-j side of the centre."""
        n = self.frame.normal
        return n if np.dot(n, self.center.p_j - self.center.p_i) >= 0 else -n


def build_patch(x: Triplet, S, k_near: int, index: PatchIndex | None = None) -> LocalPatch:
    """Patch over ``x`` and its ``k_near`` nearest triplets in ``S``."""
    if index is None:
        index = PatchIndex(S.triplets if isinstance(S, FaultSet) else S)
    nb = index.neighbours(x, k_near)
    if len(nb) < 2:
        raise DegenerateGeometry("patch needs at least three triplets")
    members = [x] + [index.triplets[q] for q in nb]
    mids = np.array([t.mid for t in members])
    frame = fit_plane(mids)
    loc = frame.to_local(mids)
    tris = delaunay2d(loc[:, :2])
    return LocalPatch(x, members, frame, loc[:, :2], loc[:, 2], tris)


def circumcircle(tri) -> tuple[np.ndarray, float]:
    a, b, c = (np.asarray(p, dtype=float) for p in tri)
    bx, by = b - a
    cx, cy = c - a
    den = 2.0 * (bx * cy - by * cx)
    if abs(den) < 1e-300:
        raise DegenerateGeometry("degenerate triangle")
    ux = (cy * (bx * bx + by * by) - by * (cx * cx + cy * cy)) / den
    uy = (bx * (cx * cx + cy * cy) - cx * (bx * bx + by * by)) / den
    centre = a + np.array([ux, uy])
    return centre, float(math.hypot(ux, uy))


def _point_triangle_distance(p, tri) -> float:
    a, b, c = tri
    v0, v1, v2 = c - a, b - a, p - a
    d00, d01, d02 = v0 @ v0, v0 @ v1, v0 @ v2
    d11, d12 = v1 @ v1, v1 @ v2
    den = d00 * d11 - d01 * d01
    u = (d11 * d02 - d01 * d12) / den
    v = (d00 * d12 - d01 * d02) / den
    if u >= 0 and v >= 0 and u + v <= 1:
        return 0.0
    best = math.inf
    for s, e in ((a, b), (b, c), (c, a)):
        t = np.clip(np.dot(p - s, e - s) / np.dot(e - s, e - s), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(p - (s + t * (e - s)))))
    return best


def min_angle(tri) -> float:
    tri = np.asarray(tri, dtype=float)
    out = math.pi
    for k in range(3):
        u = tri[(k + 1) % 3] - tri[k]
        v = tri[(k + 2) % 3] - tri[k]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            return 0.0
        out = min(out, math.acos(float(np.clip(u @ v / (nu * nv), -1.0, 1.0))))
    return out


def est_error_triangle(tri, model, eps_b: float | None = None) -> float:
    """Bound ``0.5 (R^2 - d^2) phi`` on the linear interpolation error over ``tri``.

    ``model`` provides ``second_derivative_norm(uv)``; ``phi`` is its maximum
    over the vertices and the centroid.
    """
    tri = np.asarray(tri, dtype=float)
    centre, R = circumcircle(tri)
    d = _point_triangle_distance(centre, tri)
    probes = np.vstack([tri, tri.mean(axis=0)])
    phi = float(np.max(model.second_derivative_norm(probes)))
    return 0.5 * (R * R - d * d) * phi


def estimate_normal(x: Triplet, S, k_near: int, index: PatchIndex | None = None) -> np.ndarray:
    return build_patch(x, S, k_near, index).normal()
