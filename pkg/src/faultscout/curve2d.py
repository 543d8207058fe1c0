"""Planar curve helpers: ordering, curvature, error and step estimates, extrapolation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .core import BoxDomain, Triplet
from .numerics import DegenerateGeometry, PlaneFrame, fit_plane, polyfit_regularized, rbf_fit

# slope (relative to the fitted line) beyond which a window is not treated as a graph
GRAPH_SLOPE_LIMIT = 1.0
REDUCE_MAX_STEPS = 60


# ----------------------------------------------------------------------- sort

@dataclass(frozen=True)
class SortOutcome:
    order: list[int]
    subsets: list[list[int]]
    reversed: list[bool]

    def apply(self, items: Sequence) -> list:
        return [items[k] for k in self.order]


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return math.acos(float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)))


def sort_points(
    pts: np.ndarray, k_sort: int, beta_angle: float, domain: BoxDomain | None = None
) -> SortOutcome:
    """Order points along a curve by nearest-neighbour chaining with a turn limit."""
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    if n == 0:
        return SortOutcome([], [], [])
    if domain is not None:
        bdist = np.array([domain.boundary_distance(p) for p in pts])
    else:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        bdist = np.minimum(pts - lo, hi - pts).min(axis=1)
    remaining = set(range(n))
    subsets: list[list[int]] = []
    while remaining:
        start = min(remaining, key=lambda q: (bdist[q], q))
        chain = [start]
        remaining.discard(start)
        while remaining:
            x_r = pts[chain[-1]]
            rem = np.array(sorted(remaining))
            d = np.linalg.norm(pts[rem] - x_r, axis=1)
            cand = rem[np.lexsort((rem, d))][:k_sort]
            nxt = None
            for y in cand:
                if len(chain) == 1 or _angle(x_r - pts[chain[-2]], pts[y] - x_r) < beta_angle:
                    nxt = int(y)
                    break
            if nxt is None:
                break
            chain.append(nxt)
            remaining.discard(nxt)
        subsets.append(chain)
    # combine subsets greedily by closest endpoints
    result = list(subsets[0])
    flags = [False]
    rest = list(range(1, len(subsets)))
    while rest:
        best = None
        for k in rest:
            sub = subsets[k]
            head, tail = pts[result[0]], pts[result[-1]]
            options = (
                (np.linalg.norm(tail - pts[sub[0]]), 0, k),  # append
                (np.linalg.norm(tail - pts[sub[-1]]), 1, k),  # append reversed
                (np.linalg.norm(head - pts[sub[-1]]), 2, k),  # prepend
                (np.linalg.norm(head - pts[sub[0]]), 3, k),  # prepend reversed
            )
            for opt in options:
                if best is None or opt[:2] < best[:2]:
                    best = opt
        _, how, k = best
        sub = subsets[k]
        if how == 0:
            result = result + sub
        elif how == 1:
            result = result + sub[::-1]
        elif how == 2:
            result = sub + result
        else:
            result = sub[::-1] + result
        flags.append(how in (1, 3))
        rest.remove(k)
    return SortOutcome(result, subsets, flags)


def sort_triplets(
    triplets: Sequence[Triplet], k_sort: int, beta_angle: float, domain: BoxDomain | None = None
) -> SortOutcome:
    pts = np.array([t.mid for t in triplets]).reshape(len(triplets), -1)
    return sort_points(pts, k_sort, beta_angle, domain)


# ------------------------------------------------------------------ curvature

def circle_curvature(a, b, c) -> float:
    """Inverse circumradius of three points; zero when collinear."""
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    ab, bc, ca = np.linalg.norm(b - a), np.linalg.norm(c - b), np.linalg.norm(a - c)
    if ab * bc * ca == 0:
        return 0.0
    u, v = b - a, c - a
    cross = abs(u[0] * v[1] - u[1] * v[0])
    return float(2.0 * cross / (ab * bc * ca))


@dataclass
class GraphFit:
    """RBF graph of a point window over its least-squares line."""

    frame: PlaneFrame
    s: np.ndarray
    model: object

    def point(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return self.frame.to_global(np.column_stack([s, self.model.value(s)]))


def graph_fit(points, eps_b: float) -> GraphFit | None:
    """Fit ``points`` as a graph over their best line, or ``None`` if they are no graph."""
    pts = np.asarray(points, dtype=float)
    try:
        frame = fit_plane(pts)
    except DegenerateGeometry:
        return None
    loc = frame.to_local(pts)
    s, v = loc[:, 0], loc[:, 1]
    ds = np.diff(s)
    if not (np.all(ds > 0) or np.all(ds < 0)):
        return None
    model = rbf_fit(s, v, eps_b)
    if np.max(np.abs(model.d1(s))) > GRAPH_SLOPE_LIMIT:
        return None
    return GraphFit(frame, s, model)


def est_curvature(points, eps_b: float) -> np.ndarray:
    """Curvature estimate at every point of an ordered window (length >= 3)."""
    pts = np.asarray(points, dtype=float)
    r = len(pts)
    if r < 3:
        raise ValueError("curvature needs at least three points")
    out = np.empty(r)
    out[0] = circle_curvature(*pts[:3])
    out[-1] = circle_curvature(*pts[-3:])
    if r == 3:
        out[1] = out[0]
        return out
    fit = graph_fit(pts, eps_b)
    if fit is None:
        for k in range(1, r - 1):
            out[k] = circle_curvature(pts[k - 1], pts[k], pts[k + 1])
    else:
        out[1:-1] = fit.model.curvature(fit.s[1:-1])
    return out


# -------------------------------------------------------------- error, steps

def est_error_segment(c: float, d: float) -> float:
    """Deviation of a curve of curvature ``c`` from a chord of length ``d``."""
    return 0.25 * c * d * d + c ** 3 * d ** 4 / 16.0


def max_step(c: float, eps_err: float) -> float:
    """Chord length at which :func:`est_error_segment` reaches ``eps_err``."""
    if c <= 0:
        return math.inf
    v_min = -(2.0 + math.sqrt(4.0 + 16.0 * c * eps_err))
    return 4.0 * math.sqrt(eps_err / (-c * v_min))


def step_size(c: float, eps_err: float, eps_gap: float, d_avg: float, beta_growth: float) -> float:
    return min(eps_gap, beta_growth * d_avg, max_step(c, eps_err))


def offset_alpha(delta: float, d: float, eps_b: float, safemin: float, safemax: float) -> float:
    """Half-width of a probe pair, safeguarded between ``safemin*eps_b`` and ``safemax*d``."""
    return min(safemax * d, max(delta, safemin * eps_b))


# --------------------------------------------------------------- extrapolate

@dataclass
class ExtrapolationCurve:
    """Polynomial graph over a fitted line; the parameter grows past the terminal point."""

    frame: PlaneFrame
    poly: Polynomial
    s_end: float
    end_point: np.ndarray

    def point(self, s: float) -> np.ndarray:
        return self.frame.to_global([[s, self.poly(s)]])[0]

    def tangent(self, s: float) -> np.ndarray:
        t = self.frame.tangents[0] + float(self.poly.deriv()(s)) * self.frame.normal
        return t / np.linalg.norm(t)

    def normal(self, s: float) -> np.ndarray:
        t = self.tangent(s)
        return np.array([-t[1], t[0]])

    def param_at_distance(self, length: float) -> float:
        """Parameter beyond the end whose point lies ``length`` away from the terminal point."""
        lo, hi = self.s_end, self.s_end + length
        while np.linalg.norm(self.point(hi) - self.end_point) < length and hi - self.s_end < 16 * length:
            hi = self.s_end + 2.0 * (hi - self.s_end)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.linalg.norm(self.point(mid) - self.end_point) < length:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def line_curve(point, direction) -> ExtrapolationCurve:
    """Straight extrapolation from ``point`` along ``direction``."""
    p = np.asarray(point, dtype=float)
    t = np.asarray(direction, dtype=float)
    t = t / np.linalg.norm(t)
    frame = PlaneFrame(p, t[None, :], np.array([-t[1], t[0]]))
    return ExtrapolationCurve(frame, Polynomial([0.0]), 0.0, p)


def extrapolate_curve(points, eps_b: float) -> ExtrapolationCurve:
    """Regularised polynomial through ordered ``points``; extrapolates past the last one."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        raise ValueError("extrapolation needs at least two points")
    frame = fit_plane(pts)
    loc = frame.to_local(pts)
    if loc[-1, 0] < loc[0, 0]:
        frame = PlaneFrame(frame.origin, -frame.tangents, -frame.normal)
        loc = frame.to_local(pts)
    s, v = loc[:, 0], loc[:, 1]
    if len(np.unique(s)) != len(s):
        raise ValueError("coincident abscissae")
    poly = polyfit_regularized(s, v, len(pts) - 1, eps_b)
    return ExtrapolationCurve(frame, poly, float(s[-1]), pts[-1].copy())


def reduce_step(
    curve: ExtrapolationCurve,
    s1: float,
    s0: float,
    probe: Callable[[float], tuple[bool, object]],
    eps_b: float,
):
    """Bisect on the curve parameter for the last valid pair before the curve leaves the fault.

    ``probe(s)`` returns ``(exceeded, pair_or_None)``.  Returns ``(s, pair)``;
    ``pair`` is ``None`` when no valid pair was found (boundary termination).
    """
    exceeded, pair = probe(s0)
    if not exceeded and pair is not None:
        return s0, pair
    lo, hi = s1, s0
    best = (None, None)
    for _ in range(REDUCE_MAX_STEPS):
        if np.linalg.norm(curve.point(hi) - curve.point(lo)) < eps_b:
            break
        mid = 0.5 * (lo + hi)
        exceeded, pair = probe(mid)
        if exceeded:
            hi = mid
        else:
            lo = mid
            if pair is not None:
                best = (mid, pair)
    return best
