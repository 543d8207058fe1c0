"""Small numerical kernels: regularised fits, plane fits, Delaunay, SVD.

The curve and surface fits penalise second derivatives and choose the
Tikhonov weight by Morozov's discrepancy principle: the largest weight whose
maximal residual stays below the known data uncertainty.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.spatial import Delaunay, QhullError


class DegenerateGeometry(ValueError):
    """Input points do not span the required dimension."""


LAMBDA_RANGE = (1e-14, 1e6)
MOROZOV_ITERS = 60
# extrapolating fits aim at half the noise level; still within the factor-2 discrepancy band
POLY_RESIDUAL_FRACTION = 0.5


def _solve_penalised(B: np.ndarray, P: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    A = np.vstack([B, np.sqrt(lam) * P])
    b = np.concatenate([rhs, np.zeros(P.shape[0])])
    return np.linalg.lstsq(A, b, rcond=None)[0]


def morozov(
    B: np.ndarray, P: np.ndarray, rhs: np.ndarray, target: float
) -> tuple[np.ndarray, float, float]:
    """Largest weight in ``LAMBDA_RANGE`` whose max residual is at most ``target``.

    Returns ``(coefficients, weight, max residual)``.  The residual grows
    monotonically with the weight, so bisection on ``log(weight)`` applies.
    If even the smallest weight misses the target, it is used anyway.
    """
    # scale the penalty so that unit weight balances data and smoothness
    pn = np.linalg.norm(P)
    if pn > 0:
        P = P * (np.linalg.norm(B) / pn)

    def fit(lam):
        coef = _solve_penalised(B, P, rhs, lam)
        return coef, float(np.max(np.abs(B @ coef - rhs))) if len(rhs) else 0.0

    lo, hi = np.log(LAMBDA_RANGE[0]), np.log(LAMBDA_RANGE[1])
    coef_hi, res_hi = fit(np.exp(hi))
    if res_hi <= target:
        return coef_hi, float(np.exp(hi)), res_hi
    coef_lo, res_lo = fit(np.exp(lo))
    if res_lo > target:
        return coef_lo, float(np.exp(lo)), res_lo
    for _ in range(MOROZOV_ITERS):
        mid = 0.5 * (lo + hi)
        coef, res = fit(np.exp(mid))
        if res <= target:
            lo, coef_lo, res_lo = mid, coef, res
        else:
            hi = mid
        if hi - lo < 1e-3 or res_lo > 0.95 * target:
            break
    return coef_lo, float(np.exp(lo)), res_lo


# --------------------------------------------------------------- 1D RBF fit

def _gauss(r2, eps):
    return np.exp(-(eps * eps) * r2)


@dataclass
class RbfModel:
    """Gaussian RBF plus quadratic trend in one variable.

    The trend is expressed in ``s - offset``.  Only the RBF part is
    penalised, so any quadratic is reproduced without smoothing.
    """

    centers: np.ndarray
    coef: np.ndarray  # RBF weights
    trend: np.ndarray  # (a0, a1, a2)
    offset: float
    shape: float
    weight: float
    residual: float

    def _diff(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return s[:, None] - self.centers[None, :]

    def value(self, s):
        d = self._diff(s)
        t = np.atleast_1d(np.asarray(s, dtype=float)) - self.offset
        out = self.trend[0] + self.trend[1] * t + self.trend[2] * t * t + _gauss(d * d, self.shape) @ self.coef
        return out if np.ndim(s) else out[0]

    def d1(self, s):
        d = self._diff(s)
        t = np.atleast_1d(np.asarray(s, dtype=float)) - self.offset
        e2 = self.shape ** 2
        out = self.trend[1] + 2.0 * self.trend[2] * t + (-2.0 * e2 * d * _gauss(d * d, self.shape)) @ self.coef
        return out if np.ndim(s) else out[0]

    def d2(self, s):
        d = self._diff(s)
        e2 = self.shape ** 2
        out = 2.0 * self.trend[2] + ((4.0 * e2 * e2 * d * d - 2.0 * e2) * _gauss(d * d, self.shape)) @ self.coef
        return out if np.ndim(s) else out[0]

    def curvature(self, s):
        return np.abs(self.d2(s)) / (1.0 + self.d1(s) ** 2) ** 1.5


def rbf_fit(s, v, eps_b: float, shape: float | None = None) -> RbfModel:
    """Smoothing Gaussian-RBF fit of ``v(s)`` with residual close to ``eps_b``."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    if s.size < 3:
        raise ValueError("rbf_fit needs at least three points")
    order = np.sort(s)
    gaps = np.diff(order)
    if np.any(gaps <= 0):
        raise ValueError("abscissae must be distinct")
    if shape is None:
        shape = 1.0 / float(np.mean(gaps))
    offset = float(np.mean(s))
    t = s - offset
    d = s[:, None] - s[None, :]
    G = _gauss(d * d, shape)
    B = np.hstack([np.ones((s.size, 1)), t[:, None], (t * t)[:, None], G])
    # second derivative collocated densely over the span (approximates its L2 norm)
    coll = np.linspace(order[0], order[-1], 8 * (s.size - 1) + 1)
    dc = coll[:, None] - s[None, :]
    e2 = shape * shape
    D2 = (4.0 * e2 * e2 * dc * dc - 2.0 * e2) * _gauss(dc * dc, shape)
    P = np.hstack([np.zeros((coll.size, 3)), D2])
    coef, lam, res = morozov(B, P, v, eps_b)
    return RbfModel(s.copy(), coef[3:], coef[:3].copy(), offset, shape, lam, res)


# --------------------------------------------------------------- 2D RBF fit

@dataclass
class RbfSurface:
    """Gaussian RBF plus quadratic trend in two variables (a local height field).

    The trend is expressed in ``uv - offset``; only the RBF part is penalised.
    """

    centers: np.ndarray
    coef: np.ndarray
    trend: np.ndarray  # (a0, a_u, a_v, a_uu, a_uv, a_vv)
    offset: np.ndarray
    shape: float
    weight: float
    residual: float

    def value(self, uv):
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        d = uv[:, None, :] - self.centers[None, :, :]
        r2 = np.sum(d * d, axis=2)
        return _quad_basis(uv - self.offset) @ self.trend + _gauss(r2, self.shape) @ self.coef

    def hessian(self, uv) -> np.ndarray:
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        d = uv[:, None, :] - self.centers[None, :, :]
        r2 = np.sum(d * d, axis=2)
        g = _gauss(r2, self.shape)
        e2 = self.shape ** 2
        huu = ((4 * e2 * e2 * d[..., 0] ** 2 - 2 * e2) * g) @ self.coef + 2 * self.trend[3]
        hvv = ((4 * e2 * e2 * d[..., 1] ** 2 - 2 * e2) * g) @ self.coef + 2 * self.trend[5]
        huv = ((4 * e2 * e2 * d[..., 0] * d[..., 1]) * g) @ self.coef + self.trend[4]
        return np.stack([np.stack([huu, huv], -1), np.stack([huv, hvv], -1)], -2)

    def second_derivative_norm(self, uv) -> np.ndarray:
        """Spectral norm of the Hessian at each point."""
        H = self.hessian(uv)
        return np.max(np.abs(np.linalg.eigvalsh(H)), axis=-1)


def _quad_basis(t: np.ndarray) -> np.ndarray:
    u, v = t[:, 0], t[:, 1]
    return np.column_stack([np.ones_like(u), u, v, u * u, u * v, v * v])


def rbf_fit_2d(uv, w, eps_b: float, shape: float | None = None) -> RbfSurface:
    """Smoothing Gaussian-RBF fit of a height field ``w(uv)``; needs six or more points."""
    uv = np.asarray(uv, dtype=float)
    w = np.asarray(w, dtype=float)
    n = len(uv)
    if n < 6:
        raise ValueError("rbf_fit_2d needs at least six points")
    d = uv[:, None, :] - uv[None, :, :]
    r2 = np.sum(d * d, axis=2)
    if shape is None:
        off = r2 + np.diag(np.full(n, np.inf))
        nn = np.sqrt(np.min(off, axis=1))
        if not np.all(nn > 0):
            raise ValueError("duplicate points in surface fit")
        shape = 1.0 / float(np.mean(nn))
    offset = uv.mean(axis=0)
    G = _gauss(r2, shape)
    B = np.hstack([_quad_basis(uv - offset), G])
    e2 = shape * shape
    huu = (4 * e2 * e2 * d[..., 0] ** 2 - 2 * e2) * G
    hvv = (4 * e2 * e2 * d[..., 1] ** 2 - 2 * e2) * G
    huv = (4 * e2 * e2 * d[..., 0] * d[..., 1]) * G
    P = np.hstack([np.zeros((3 * n, 6)), np.vstack([huu, np.sqrt(2.0) * huv, hvv])])
    coef, lam, res = morozov(B, P, w, eps_b)
    return RbfSurface(uv.copy(), coef[6:], coef[:6], offset, shape, lam, res)


# ------------------------------------------------------- polynomial fitting

def polyfit_regularized(s, v, degree: int, eps_b: float) -> Polynomial:
    """Least-squares polynomial with a curvature penalty, weight chosen by Morozov."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    if len(np.unique(s)) != s.size:
        raise ValueError("duplicate abscissae")
    if degree < 1 or s.size < 2:
        raise ValueError("need at least two points and degree >= 1")
    lo, hi = float(s.min()), float(s.max())
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    t = (s - mid) / half
    B = np.vander(t, degree + 1, increasing=True)
    # exact second-derivative penalty via Gauss-Legendre nodes on [-1, 1]
    nodes, wts = np.polynomial.legendre.leggauss(max(degree, 2))
    P = np.zeros((nodes.size, degree + 1))
    for k in range(2, degree + 1):
        P[:, k] = k * (k - 1) * nodes ** (k - 2)
    P *= np.sqrt(wts)[:, None]
    coef, _, _ = morozov(B, P, v, POLY_RESIDUAL_FRACTION * eps_b)
    return Polynomial(coef, domain=[mid - half, mid + half], window=[-1, 1])


# ------------------------------------------------------------- plane fits

@dataclass(frozen=True)
class PlaneFrame:
    """Least-squares line (2D) or plane (3D) with an orthonormal basis.

    ``tangents`` has one row per tangential direction; the first row is the
    direction of largest spread.
    """

    origin: np.ndarray
    tangents: np.ndarray
    normal: np.ndarray

    def to_local(self, pts) -> np.ndarray:
        """Tangential coordinates followed by the normal coordinate."""
        d = np.atleast_2d(pts) - self.origin
        return np.hstack([d @ self.tangents.T, (d @ self.normal)[:, None]])

    def to_global(self, local) -> np.ndarray:
        local = np.atleast_2d(local)
        k = self.tangents.shape[0]
        out = self.origin + local[:, :k] @ self.tangents
        if local.shape[1] > k:
            out = out + local[:, k:k + 1] * self.normal
        return out


def fit_plane(points) -> PlaneFrame:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dim = pts.shape[1]
    origin = pts.mean(axis=0)
    centred = pts - origin
    _, sv, vt = np.linalg.svd(centred, full_matrices=True)
    scale = sv[0] if sv.size else 0.0
    if dim == 2:
        if len(pts) < 2 or scale <= 1e-14 * max(1.0, np.abs(pts).max()):
            raise DegenerateGeometry("line fit needs two distinct points")
    else:
        if len(pts) < 3 or sv.size < 2 or sv[1] <= 1e-9 * scale:
            raise DegenerateGeometry("plane fit needs three non-collinear points")
    return PlaneFrame(origin, vt[: dim - 1].copy(), vt[dim - 1].copy())


# ---------------------------------------------------------------- Delaunay

def _incircle(a, b, c, d) -> float:
    m = np.array(
        [
            [a[0] - d[0], a[1] - d[1], (a[0] - d[0]) ** 2 + (a[1] - d[1]) ** 2],
            [b[0] - d[0], b[1] - d[1], (b[0] - d[0]) ** 2 + (b[1] - d[1]) ** 2],
            [c[0] - d[0], c[1] - d[1], (c[0] - d[0]) ** 2 + (c[1] - d[1]) ** 2],
        ]
    )
    return float(np.linalg.det(m))


def delaunay2d(points) -> np.ndarray:
    """Delaunay triangles as an ``(n, 3)`` index array, counter-clockwise.

    For cocircular quadrilaterals the diagonal through the lowest index wins.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise DegenerateGeometry("need at least three points")
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise DegenerateGeometry("points are collinear or coincident") from exc
    simplices = [list(s) for s in tri.simplices]
    scale = float(np.ptp(pts, axis=0).max()) ** 4
    changed = True
    while changed:
        changed = False
        edges: dict[tuple[int, int], list[int]] = {}
        for k, s in enumerate(simplices):
            for e in ((s[0], s[1]), (s[1], s[2]), (s[2], s[0])):
                edges.setdefault(tuple(sorted(e)), []).append(k)
        for (a, b), owners in sorted(edges.items()):
            if len(owners) != 2:
                continue
            t1, t2 = simplices[owners[0]], simplices[owners[1]]
            c = next(v for v in t1 if v not in (a, b))
            d = next(v for v in t2 if v not in (a, b))
            if abs(_incircle(pts[a], pts[b], pts[c], pts[d])) > 1e-12 * scale:
                continue
            if (min(c, d), max(c, d)) < (a, b):
                simplices[owners[0]] = [a, c, d]
                simplices[owners[1]] = [b, c, d]
                changed = True
                break
    out = []
    for s in simplices:
        a, b, c = s
        cross = (pts[b, 0] - pts[a, 0]) * (pts[c, 1] - pts[a, 1]) - (pts[b, 1] - pts[a, 1]) * (pts[c, 0] - pts[a, 0])
        if cross < 0:
            s = [a, c, b]
        out.append(s)
    return np.array(sorted(out), dtype=int)


# --------------------------------------------------------------------- SVD

def complex_svd(A) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``A = U diag(s) V^*`` with ``s`` non-negative and non-increasing."""
    A = np.asarray(A, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    U, s, Vh = np.linalg.svd(A)
    return U, s, Vh.conj().T


def bisect_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 0.0, maxiter: int = 200) -> float:
    """Bisection for a sign change of ``f`` on ``[lo, hi]``."""
    flo = f(lo)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= tol:
            break
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
