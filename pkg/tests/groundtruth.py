"""Dense analytic samples of the true interfaces of the planar test problems.

Every candidate interface curve is sampled by parameter; each sample is
assigned to a fault by classifying two points offset by a tiny step along the
curve normal.  Samples whose two sides agree (curve parts hidden inside
another region) are discarded.
"""
from __future__ import annotations

import math

import numpy as np

from faultscout.classify import TEST_PROBLEMS

OFFSET = 1e-7


def _superellipse(r, centre):
    # polar form: smooth in the angle, unlike the signed-power parametrisation
    def f(t):
        c, s = math.cos(t), math.sin(t)
        rho = r / (c ** 6 + s ** 6) ** (1 / 6)
        return np.array([centre[0] + rho * c, centre[1] + rho * s])
    return f


def _circle(r, centre):
    return lambda t: np.array([centre[0] + r * math.cos(t), centre[1] + r * math.sin(t)])


def _segment(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return lambda t: a + t * (b - a)


CURVES = {
    "tp1": [
        (lambda t: np.array([t, 0.7 + 0.1 * math.sin(10 * math.pi * t ** 1.5)]), 0.0, 1.0),
        (_superellipse(0.005 ** (1 / 6), (1.0, 0.5)), 0.0, 2 * math.pi),
    ],
    "tp3": [
        (_circle(0.4, (0.5, 0.5)), 0.0, 2 * math.pi),
        (_circle(2 / 3.5, (0.0, 0.0)), 0.0, math.pi / 2),
        (_circle(3 / 3.5, (0.0, 0.0)), 0.0, math.pi / 2),
    ],
    "tp4": [(_segment((0.5, 0), (0.5, 1)), 0.0, 1.0), (_segment((0.6, 0), (0.6, 1)), 0.0, 1.0)],
    "tp5": [
        (_segment((0.4, 0.4), (0.4, 0.6)), 0.0, 1.0),
        (_segment((0.4, 0.4), (1.0, 0.4)), 0.0, 1.0),
        (_segment((0.4, 0.6), (0.8, 1.0)), 0.0, 1.0),
    ],
}


def _length(f, t0, t1, n=2000):
    pts = np.array([f(t) for t in np.linspace(t0, t1, n)])
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def ground_truth(name: str, n_total: int = 10_000) -> dict[tuple[int, int], np.ndarray]:
    """Map of dense fault pair to an ``(m, 2)`` array of samples on the true interface."""
    func, _, labels = TEST_PROBLEMS[name]
    dense = {lab: k + 1 for k, lab in enumerate(labels)}
    curves = CURVES[name]
    lengths = [_length(f, a, b) for f, a, b in curves]
    total = sum(lengths)
    out: dict[tuple[int, int], list] = {}
    for (f, a, b), ln in zip(curves, lengths):
        m = max(int(round(n_total * ln / total)), 2)
        # uniform in arclength: invert the cumulative length of a fine parameter grid
        fine = np.linspace(a, b, 50 * m)
        fp = np.array([f(t) for t in fine])
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(fp, axis=0), axis=1))])
        ts = np.interp(np.linspace(0.0, arc[-1], m), arc, fine)
        h = 1e-6 * (b - a)
        for t in ts:
            p = f(t)
            if np.any(p < OFFSET) or np.any(p > 1 - OFFSET):
                continue
            tan = f(min(t + h, b)) - f(max(t - h, a))
            nt = np.linalg.norm(tan)
            if nt == 0:
                continue
            n = np.array([-tan[1], tan[0]]) / nt
            c1, c2 = dense[func(p + OFFSET * n)], dense[func(p - OFFSET * n)]
            if c1 == c2:
                continue
            out.setdefault((min(c1, c2), max(c1, c2)), []).append(p)
    return {k: np.array(v) for k, v in out.items()}


def true_distance(points, samples: np.ndarray) -> np.ndarray:
    """Distance to the nearest true sample, refined by the chords between neighbouring samples."""
    from scipy.spatial import cKDTree

    pts = np.atleast_2d(points)
    tree = cKDTree(samples)
    d, idx = tree.query(pts, k=2)
    out = d[:, 0].copy()
    for r, (i0, i1) in enumerate(idx):
        for a in (i0,):
            for b in (a - 1, a + 1):
                if 0 <= b < len(samples):
                    p, q = samples[a], samples[b]
                    if np.linalg.norm(p - q) > 1e-2:
                        continue
                    t = np.clip(np.dot(pts[r] - p, q - p) / max(np.dot(q - p, q - p), 1e-300), 0, 1)
                    out[r] = min(out[r], np.linalg.norm(pts[r] - (p + t * (q - p))))
    return out
