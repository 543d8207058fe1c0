"""Seeding: enrich a coarse sample near class changes and bisect towards every fault."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .classify import OUTSIDE, ClassifierHandle
from .core import BoxDomain, FaultSet, LabeledPoint, Params, Triplet, make_triplet
from .sampling import initialset

# stop slightly inside 2*eps_b so that rounding in later coordinate changes cannot exceed it
BISECT_MARGIN = 1e-9


@dataclass(frozen=True)
class StartingPair:
    a: LabeledPoint
    b: LabeledPoint
    pair: tuple[int, int]

    @property
    def valid(self) -> bool:
        return self.a.label != self.b.label and {self.a.label, self.b.label} == set(self.pair)


class BisectionFailure(Exception):
    """A bisection midpoint fell into a class other than the two endpoint classes."""

    def __init__(self, interrupt: LabeledPoint, a: LabeledPoint, b: LabeledPoint):
        super().__init__(f"midpoint {tuple(interrupt.point)} has class {interrupt.label}")
        self.interrupt = interrupt
        self.a = a
        self.b = b


# ------------------------------------------------------------------ barymeans

def barymeans(
    X: Sequence[LabeledPoint], k_near: int, h: ClassifierHandle, phase: str = "initialset"
) -> list[LabeledPoint]:
    """Means of per-class barycentres over every mixed k-nearest neighbourhood.

    Points labelled :data:`OUTSIDE` take no part in the neighbourhood classes.
    New points already present in ``X`` or produced twice are dropped.
    """
    if len(X) < 2:
        return []
    pts = np.array([x.point for x in X], dtype=float)
    labels = np.array([x.label for x in X])
    k = min(k_near, len(X))
    _, idx = cKDTree(pts).query(pts, k=k)
    idx = np.asarray(idx).reshape(len(X), k)
    seen = {tuple(p) for p in pts.tolist()}
    out: list[LabeledPoint] = []
    for row in idx:
        classes = sorted({int(labels[q]) for q in row} - {OUTSIDE})
        if len(classes) < 2:
            continue
        bary = {c: pts[[q for q in row if labels[q] == c]].mean(axis=0) for c in classes}
        for a in range(len(classes)):
            for b in range(a + 1, len(classes)):
                y = 0.5 * (bary[classes[a]] + bary[classes[b]])
                key = tuple(y.tolist())
                if key in seen:
                    continue
                seen.add(key)
                y.flags.writeable = False
                out.append(LabeledPoint(y, h.classify(y, phase)))
    return out


# ------------------------------------------------------------------ bisection

def bisection(a: LabeledPoint, b: LabeledPoint, eps_b: float, h: ClassifierHandle, phase: str) -> Triplet:
    """Halve the segment ``ab`` until its endpoints are at most ``2*eps_b`` apart.

    Raises :class:`BisectionFailure` if a midpoint belongs to neither endpoint class.
    """
    if a.label == b.label:
        raise ValueError("bisection needs endpoints of different classes")
    pa = np.asarray(a.point, dtype=float)
    pb = np.asarray(b.point, dtype=float)
    while np.linalg.norm(pa - pb) > 2.0 * eps_b * (1.0 - BISECT_MARGIN):
        m = 0.5 * (pa + pb)
        c = h.classify(m, phase)
        if c == a.label:
            pa = m
        elif c == b.label:
            pb = m
        else:
            raise BisectionFailure(LabeledPoint(m, c), LabeledPoint(pa, a.label), LabeledPoint(pb, b.label))
    return make_triplet(LabeledPoint(pa, a.label), LabeledPoint(pb, b.label), eps_b, origin=phase)


def bisection_with_fallback(
    a: LabeledPoint, b: LabeledPoint, eps_b: float, h: ClassifierHandle, phase: str
) -> Triplet | None:
    """Bisection that retries once towards the class found at an interrupting midpoint."""
    try:
        return bisection(a, b, eps_b, h, phase)
    except BisectionFailure as fail:
        if fail.interrupt.label == OUTSIDE:
            return None
        try:
            return bisection(fail.a, fail.interrupt, eps_b, h, phase)
        except BisectionFailure:
            return None


# ------------------------------------------------------------------ iniapprox

def iniapprox(
    Xbar: Sequence[LabeledPoint],
    sources: Sequence[LabeledPoint],
    eps_b: float,
    h: ClassifierHandle,
    workers: int = 1,
) -> dict[tuple[int, int], list[Triplet]]:
    """Bisect from every source point towards its nearest point of a higher class."""
    pts = np.array([x.point for x in Xbar], dtype=float).reshape(len(Xbar), -1)
    labels = np.array([x.label for x in Xbar])
    jobs = []
    for x in sources:
        if x.label == OUTSIDE:
            continue
        mask = (labels != x.label) & (labels != OUTSIDE)
        if not np.any(mask):
            continue
        cand = np.flatnonzero(mask)
        d = np.linalg.norm(pts[cand] - x.point, axis=1)
        q = int(cand[int(np.argmin(d))])
        jobs.append((x, Xbar[q]))

    def run(job):
        return bisection_with_fallback(job[0], job[1], eps_b, h, "iniapprox")

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    out: dict[tuple[int, int], list[Triplet]] = {}
    for t in results:
        if t is not None:
            out.setdefault(t.pair, []).append(t)
    return out


def removeclusters(triplets: Sequence[Triplet], radius: float) -> list[Triplet]:
    """Greedy thinning: keep a triplet only if no kept midpoint lies within ``radius``."""
    kept: list[Triplet] = []
    for t in triplets:
        if all(np.linalg.norm(t.mid - k.mid) >= radius for k in kept):
            kept.append(t)
    return kept


# ----------------------------------------------------------------- startpairs

def probe_pair(
    plus,
    minus,
    center,
    pair: tuple[int, int],
    k_rep: int,
    h: ClassifierHandle,
    phase: str,
    factor: float = 2.0,
) -> tuple[StartingPair | None, bool]:
    """Core of :func:`startpairs`; also reports whether a foreign class was met."""
    plus = np.asarray(plus, dtype=float)
    minus = np.asarray(minus, dtype=float)
    center = np.asarray(center, dtype=float)
    cp = h.classify(plus, phase)
    cm = h.classify(minus, phase)
    if cp not in pair or cm not in pair:
        return None, True
    lp, lm = LabeledPoint(plus, cp), LabeledPoint(minus, cm)
    if cp != cm:
        return StartingPair(lp, lm, pair), False
    probes = [lp, lm]
    v = plus - center
    scale = 1.0
    sign = -1.0
    for _ in range(k_rep):
        scale *= factor
        x = center + sign * scale * v
        c = h.classify(x, phase)
        if c not in pair:
            return None, True
        lx = LabeledPoint(x, c)
        if c != cp:
            near = min(probes, key=lambda q: float(np.linalg.norm(q.point - x)))
            return StartingPair(near, lx, pair), False
        probes.append(lx)
        sign = -sign
    return None, False


def startpairs(
    plus,
    minus,
    center,
    pair: tuple[int, int],
    k_rep: int,
    h: ClassifierHandle,
    phase: str,
    factor: float = 2.0,
) -> StartingPair | None:
    """Turn a symmetric probe pair into a valid starting pair for ``pair``.

    When both probes share a class, further probes are placed on alternating
    sides of ``center`` at distances growing by ``factor`` each round.  Each
    probe of the other class is paired with the nearest earlier probe.  A
    probe in any other class ends the search without result.
    """
    return probe_pair(plus, minus, center, pair, k_rep, h, phase, factor)[0]


# ----------------------------------------------------------------- initialise

def initialise(
    domain: BoxDomain,
    n_init: int,
    params: Params,
    h: ClassifierHandle,
    points: Sequence[LabeledPoint] | None = None,
    workers: int = 1,
) -> dict[tuple[int, int], FaultSet]:
    """Initial unsorted triplet sets for every detected fault.

    ``points`` replaces the Halton sample when given (already classified).
    """
    X = list(points) if points is not None else initialset(domain, n_init, h)
    M = barymeans(X, params.k_near, h)
    M2 = barymeans(M, params.k_near, h) if len(M) >= 2 else []
    found = iniapprox(X + M + M2, M + M2, params.eps_b, h, workers=workers)
    out = {}
    for pair in sorted(found):
        kept = removeclusters(found[pair], params.cluster_radius)
        out[pair] = FaultSet(pair, kept, sorted=False)
    return out
