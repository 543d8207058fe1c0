"""Decision regions over weight simplices: TOPSIS rule, simplex embedding, robustness radius."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classify import OUTSIDE, ClassifierHandle
from .core import BoxDomain, FaultScoutError

SIMPLEX_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-9
POLYGON_SIDES = 256

# Car purchase scores (rows BEV, ICE, HEV) and the car users' weights before normalisation
CAR_CRITERIA = ("Ecological", "Economic", "Social", "Comfort", "Other")
CAR_ALTERNATIVES = ("BEV", "ICE", "HEV")
CAR_SCORES = (
    (0.5025, 0.2792, 0.6250, 0.1497, 0.1342),
    (0.1256, 0.4167, 0.1250, 0.4300, 0.6710),
    (0.3719, 0.3042, 0.2500, 0.4202, 0.1948),
)
CAR_WEIGHTS = (2.0, 7.0, 0.1, 8.0, 0.0)
CAR_VARIABLE = (0, 1, 3)


class McdaError(FaultScoutError):
    """Invalid performance matrix, weights or embedding."""


@dataclass(frozen=True)
class PerformanceMatrix:
    """Alternatives x criteria scores; ``benefit[k]`` is False for cost criteria."""

    scores: np.ndarray
    alternatives: tuple[str, ...] = ()
    criteria: tuple[str, ...] = ()
    benefit: tuple[bool, ...] = ()

    def __post_init__(self):
        s = np.array(self.scores, dtype=float)
        if s.ndim != 2 or s.shape[0] < 2:
            raise McdaError("need a matrix with at least two alternatives")
        if not np.all(np.isfinite(s)):
            raise McdaError("scores must be finite")
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)
        n_alt, n_crit = s.shape
        if not self.alternatives:
            object.__setattr__(self, "alternatives", tuple(f"A{k + 1}" for k in range(n_alt)))
        if not self.criteria:
            object.__setattr__(self, "criteria", tuple(f"C{k + 1}" for k in range(n_crit)))
        if not self.benefit:
            object.__setattr__(self, "benefit", (True,) * n_crit)
        if len(self.alternatives) != n_alt or len(self.criteria) != n_crit or len(self.benefit) != n_crit:
            raise McdaError("names and orientations must match the matrix shape")

    @property
    def n_criteria(self) -> int:
        return self.scores.shape[1]

    @classmethod
    def cars(cls) -> "PerformanceMatrix":
        return cls(np.array(CAR_SCORES), CAR_ALTERNATIVES, CAR_CRITERIA)


def load_performance_matrix(path: str | Path) -> PerformanceMatrix:
    """CSV: header of criterion names, optional ``benefit|cost`` row, then one row per alternative."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 3:
        raise McdaError(f"{path}: too few rows")
    criteria = tuple(c.strip() for c in rows[0][1:])
    body = rows[1:]
    benefit = ()
    if {c.strip().lower() for c in body[0][1:]} <= {"benefit", "cost"}:
        benefit = tuple(c.strip().lower() == "benefit" for c in body[0][1:])
        body = body[1:]
    try:
        scores = np.array([[float(c) for c in r[1:]] for r in body])
    except ValueError as exc:
        raise McdaError(f"{path}: non-numeric score") from exc
    if scores.ndim != 2 or scores.shape[1] != len(criteria):
        raise McdaError(f"{path}: ragged rows")
    return PerformanceMatrix(scores, tuple(r[0].strip() for r in body), criteria, benefit)


def closeness(P: PerformanceMatrix, w) -> np.ndarray:
    """TOPSIS closeness coefficient of every alternative."""
    w = np.asarray(w, dtype=float)
    if w.shape != (P.n_criteria,):
        raise McdaError("weight vector length must match the criteria")
    if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise McdaError("weights must be nonnegative and sum to one")
    norms = np.linalg.norm(P.scores, axis=0)
    if np.any(norms == 0):
        raise McdaError("criterion column with zero norm")
    v = P.scores / norms * w
    ben = np.array(P.benefit)
    ideal = np.where(ben, v.max(axis=0), v.min(axis=0))
    anti = np.where(ben, v.min(axis=0), v.max(axis=0))
    d_plus = np.linalg.norm(v - ideal, axis=1)
    d_minus = np.linalg.norm(v - anti, axis=1)
    den = d_plus + d_minus
    return np.divide(d_minus, den, out=np.zeros_like(den), where=den > 0)


def topsis_decide(P: PerformanceMatrix, w) -> int:
    """Zero-based index of the winning alternative; ties go to the lowest index."""
    return int(np.argmax(closeness(P, w)))


def _basis(m: int) -> np.ndarray:
    """Orthonormal ``m x (m-1)`` basis of the sum-zero hyperplane.

    Reversed Helmert columns with the last one negated; for ``m = 3`` the
    columns are ``(1,1,-2)/sqrt(6)`` and ``(-1,1,0)/sqrt(2)``.
    """
    cols = []
    for k in range(m - 1, 0, -1):
        h = np.zeros(m)
        h[:k] = 1.0
        h[k] = -float(k)
        cols.append(h / math.sqrt(k * (k + 1)))
    cols[-1] = -cols[-1]
    return np.column_stack(cols)


@dataclass(frozen=True)
class SimplexEmbedding:
    """Isometry between the downscaled variable-weight simplex and ``R^(m-1)``."""

    n_criteria: int
    variable: tuple[int, ...]
    fixed: np.ndarray  # full-length vector, zero at variable entries

    def __post_init__(self):
        f = np.array(self.fixed, dtype=float)
        f.flags.writeable = False
        object.__setattr__(self, "fixed", f)
        if len(set(self.variable)) != len(self.variable) or len(self.variable) < 2:
            raise McdaError("need at least two distinct variable criteria")
        if f.shape != (self.n_criteria,) or np.any(f[list(self.variable)] != 0) or np.any(f < 0):
            raise McdaError("fixed weights must be nonnegative and zero at variable criteria")
        if not self.c_f > 0:
            raise McdaError("fixed weights leave no mass for the variable ones")

    @property
    def m(self) -> int:
        return len(self.variable)

    @property
    def c_f(self) -> float:
        return float(1.0 - self.fixed.sum())

    @property
    def basis(self) -> np.ndarray:
        return _basis(self.m)

    def embed(self, w_v) -> np.ndarray:
        """Variable weights (length ``m``, summing to ``c_f``) to ``R^(m-1)``."""
        w_v = np.asarray(w_v, dtype=float)
        return self.basis.T @ (w_v - self.c_f / self.m)

    def invert(self, y) -> np.ndarray:
        return self.c_f / self.m + self.basis @ np.asarray(y, dtype=float)

    def full_weights(self, y) -> np.ndarray:
        w = self.fixed.copy()
        w[list(self.variable)] = self.invert(y)
        return w

    def contains(self, y, tol: float = SIMPLEX_TOL) -> bool:
        return bool(np.all(self.invert(y) >= -tol))

    def vertices(self) -> np.ndarray:
        return np.array([self.embed(self.c_f * e) for e in np.eye(self.m)])

    def bounding_box(self, margin: float = 0.0) -> BoxDomain:
        v = self.vertices()
        return BoxDomain(v.min(axis=0) - margin, v.max(axis=0) + margin)


def embed_simplex(m: int, fixed_weights, variable: Sequence[int] | None = None) -> SimplexEmbedding:
    """Embedding for ``m`` variable criteria; the rest carry ``fixed_weights`` (full-length, normalised)."""
    f = np.asarray(fixed_weights, dtype=float)
    if variable is None:
        variable = tuple(int(k) for k in np.flatnonzero(f == 0)[:m])
    variable = tuple(int(k) for k in variable)
    if len(variable) != m:
        raise McdaError(f"expected {m} variable criteria, got {len(variable)}")
    f = f.copy()
    f[list(variable)] = 0.0
    return SimplexEmbedding(len(f), variable, f)


def car_embedding() -> tuple[PerformanceMatrix, SimplexEmbedding, np.ndarray]:
    """Car matrix, its embedding for Ecological/Economic/Comfort, and the embedded user weights."""
    w = np.array(CAR_WEIGHTS) / sum(CAR_WEIGHTS)
    emb = embed_simplex(3, w, CAR_VARIABLE)
    return PerformanceMatrix.cars(), emb, emb.embed(w[list(CAR_VARIABLE)])


@dataclass(frozen=True)
class McdaClassifier:
    """Winner (one-based) of the full weight vector behind a point; :data:`OUTSIDE` off the simplex."""

    matrix: PerformanceMatrix
    embedding: SimplexEmbedding

    def __call__(self, y) -> int:
        if not self.embedding.contains(y):
            return OUTSIDE
        w = self.embedding.full_weights(y)
        w = np.maximum(w, 0.0)
        w /= w.sum()
        return topsis_decide(self.matrix, w) + 1


def mcda_classifier(P: PerformanceMatrix, embedding: SimplexEmbedding) -> McdaClassifier:
    return McdaClassifier(P, embedding)


def mcda_handle(P: PerformanceMatrix, embedding: SimplexEmbedding, margin: float = 0.0) -> ClassifierHandle:
    """Classifier handle over the simplex bounding box; points off the simplex count as outside."""
    return ClassifierHandle(
        mcda_classifier(P, embedding),
        embedding.bounding_box(margin),
        labels=range(1, len(P.alternatives) + 1),
        outside_label=OUTSIDE,
        admissible=embedding.contains,
    )


def robustness_radius(polylines: Sequence, center, region=None, tol: float = 1e-6) -> float:
    """Largest radius of a 256-gon around ``center`` that meets none of ``polylines``.

    ``region`` (an exterior ring) optionally confirms that ``center`` lies inside;
    otherwise, or when ``center`` touches a polyline, the radius is zero.
    """
    from shapely.geometry import LineString, MultiLineString, Point, Polygon

    c = np.asarray(center, dtype=float)
    lines = [np.asarray(p, dtype=float) for p in polylines if len(p) >= 2]
    if not lines:
        raise McdaError("no boundary polylines")
    geom = MultiLineString([LineString(p) for p in lines])
    if region is not None and not Polygon(np.asarray(region)).contains(Point(c)):
        return 0.0
    if geom.distance(Point(c)) == 0.0:
        return 0.0
    ang = 2.0 * math.pi * np.arange(POLYGON_SIDES) / POLYGON_SIDES
    ring = np.column_stack([np.cos(ang), np.sin(ang)])

    def hits(r: float) -> bool:
        return Polygon(c + r * ring).intersects(geom)

    lo = 0.0
    hi = max(float(np.max(np.linalg.norm(p - c, axis=1))) for p in lines)
    if not hits(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if hits(mid):
            hi = mid
        else:
            lo = mid
    return lo
