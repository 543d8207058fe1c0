"""The planar pipeline: fill gaps, split components, expand to the ends, adapt to curvature."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classify import ClassifierHandle, EvalLedger
from .core import BoxDomain, FaultSet, LabeledPoint, Params, Triplet
from .curve2d import (
    _angle,
    est_curvature,
    est_error_segment,
    extrapolate_curve,
    graph_fit,
    line_curve,
    offset_alpha,
    reduce_step,
    sort_triplets,
    step_size,
)
from .initial import BisectionFailure, bisection, initialise, probe_pair

EXPAND_MAX_STEPS = 20000
EXPAND_RETRIES = 3
# equidistant fill points land on eps_gap up to rounding
GAP_RTOL = 1e-9


def _oriented_normal(tangent: np.ndarray, ref: Triplet) -> np.ndarray:
    n = np.array([-tangent[1], tangent[0]], dtype=float)
    n /= np.linalg.norm(n)
    return n if np.dot(n, ref.p_j - ref.p_i) >= 0 else -n


def _bisect(pair, eps_b, h, phase) -> Triplet | None:
    try:
        return bisection(pair.a, pair.b, eps_b, h, phase)
    except BisectionFailure:
        return None


def _triplet_at(z, n, alpha, fault, params: Params, h, phase) -> Triplet | None:
    sp, _ = probe_pair(z + alpha * n, z - alpha * n, z, fault, params.k_rep, h, phase, params.rep_factor)
    if sp is None:
        return None
    return _bisect(sp, params.eps_b, h, phase)


def _window(n: int, lo: int, hi: int, closed: bool) -> list[int]:
    """Indices ``lo..hi`` (inclusive), clamped for open chains and wrapped for closed ones."""
    if closed and n >= hi - lo + 1:
        return [k % n for k in range(lo, hi + 1)]
    return list(range(max(lo, 0), min(hi, n - 1) + 1))


def _curvatures(mids: np.ndarray, closed: bool, eps_b: float) -> np.ndarray:
    """Curvature at each vertex from the five-point window centred on it."""
    n = len(mids)
    out = np.zeros(n)
    if n < 3:
        return out
    for k in range(n):
        idx = _window(n, k - 2, k + 2, closed)
        if len(idx) < 3:
            continue
        out[k] = est_curvature(mids[idx], eps_b)[idx.index(k)]
    return out


def _segment_curvature(mids: np.ndarray, a: int, closed: bool, eps_b: float) -> float | None:
    """``max(c_a, c_{a+1})`` from the window ``a-2 .. a+3``; ``None`` below three points."""
    n = len(mids)
    idx = _window(n, a - 2, a + 3, closed)
    if len(idx) < 3:
        return None
    c = est_curvature(mids[idx], eps_b)
    b = (a + 1) % n if closed else a + 1
    return float(max(c[idx.index(a)], c[idx.index(b)]))


# ----------------------------------------------------------------------- fill

@dataclass
class FillResult:
    faults: FaultSet
    unfillable: list[tuple[int, int]] = field(default_factory=list)  # (component, gap index)


def _fill_gap(comp, a, params, h, fault, closed) -> list[Triplet]:
    mids = np.array([t.mid for t in comp])
    x0, x1 = comp[a], comp[(a + 1) % len(comp)]
    d = float(np.linalg.norm(x1.mid - x0.mid))
    R = math.ceil(d / params.eps_gap - GAP_RTOL) - 1
    c = _segment_curvature(mids, a, closed, params.eps_b)
    delta = 0.0 if c is None else est_error_segment(c, d)
    alpha = offset_alpha(delta, d, params.eps_b, params.eps_safemin, params.eps_safemax)
    chord = (x1.mid - x0.mid) / d
    n = _oriented_normal(chord, x0)
    new = []
    for r in range(1, R + 1):
        z = x0.mid + (r / (R + 1)) * (x1.mid - x0.mid)
        t = _triplet_at(z, n, alpha, fault, params, h, "fill")
        if t is not None:
            new.append(t.with_origin("fill"))
    new.sort(key=lambda t: float(np.dot(t.mid - x0.mid, chord)))
    return new


def fill2d(fs: FaultSet, params: Params, h: ClassifierHandle) -> FillResult:
    """Close every gap wider than ``eps_gap`` by probing on the chord; repeat until stable."""
    if not fs.sorted:
        raise ValueError("fill2d needs a sorted fault set")
    comps = fs.components()
    closed = list(fs.closed)
    failed: set[tuple[int, int]] = set()
    for _ in range(params.max_fill_passes):
        progress = False
        for ci, comp in enumerate(comps):
            if len(comp) < 2:
                continue
            nseg = len(comp) if closed[ci] else len(comp) - 1
            out = []
            for a in range(nseg):
                x0, x1 = comp[a], comp[(a + 1) % len(comp)]
                out.append(x0)
                if np.linalg.norm(x1.mid - x0.mid) <= params.eps_gap * (1 + GAP_RTOL) or (id(x0), id(x1)) in failed:
                    continue
                new = _fill_gap(comp, a, params, h, fs.pair, closed[ci])
                if new:
                    out.extend(new)
                    progress = True
                else:
                    failed.add((id(x0), id(x1)))
            if not closed[ci]:
                out.append(comp[-1])
            comps[ci] = out
        if not progress:
            break
    gaps = []
    for ci, comp in enumerate(comps):
        for a in range(len(comp) - 1):
            if np.linalg.norm(comp[a + 1].mid - comp[a].mid) > params.eps_gap * (1 + GAP_RTOL):
                gaps.append((ci, a))
    return FillResult(FaultSet.from_components(fs.pair, comps, closed), gaps)


def split_components(fs: FaultSet, gaps) -> FaultSet:
    """Break components at the given ``(component, gap index)`` positions."""
    cut: dict[int, set[int]] = {}
    for ci, a in gaps:
        cut.setdefault(ci, set()).add(a)
    comps, closed = [], []
    for ci, (comp, cl) in enumerate(zip(fs.components(), fs.closed)):
        start = 0
        for a in sorted(cut.get(ci, ())):
            comps.append(comp[start : a + 1])
            closed.append(False)
            start = a + 1
        comps.append(comp[start:])
        closed.append(cl and ci not in cut)
    return FaultSet.from_components(fs.pair, comps, closed, sorted=True)


# --------------------------------------------------------------------- expand

def _closes(comp: list[Triplet], params: Params) -> bool:
    if len(comp) < 4:
        return False
    t, prev, o = comp[-1].mid, comp[-2].mid, comp[0].mid
    if np.linalg.norm(o - t) > params.eps_gap:
        return False
    return _angle(t - prev, o - t) < params.beta_angle


def _expand_end(comp: list[Triplet], sign: float, params: Params, h, fault) -> tuple[list[Triplet], bool]:
    """Extend ``comp`` beyond its last triplet.  Returns the chain and a closed flag."""
    comp = list(comp)
    eps_b = params.eps_b
    if _closes(comp, params):
        return comp, True
    for _ in range(EXPAND_MAX_STEPS):
        term = comp[-1]
        window = comp[-params.k_extra :]
        mids = np.array([t.mid for t in window])
        if len(window) == 1:
            d = term.direction()
            curve = line_curve(term.mid, sign * np.array([-d[1], d[0]]))
            c, d_avg = 0.0, params.eps_gap
        else:
            try:
                curve = extrapolate_curve(mids, eps_b)
            except ValueError:
                break
            c = float(np.max(est_curvature(mids, eps_b))) if len(window) >= 3 else 0.0
            d_avg = float(np.mean(np.linalg.norm(np.diff(mids, axis=0), axis=1)))
        length = step_size(c, params.eps_err, params.eps_gap, d_avg, params.beta_growth)
        sp, last = None, False
        # a failed probe is retried with halved steps before the end is abandoned
        for _attempt in range(EXPAND_RETRIES + 1):
            delta = est_error_segment(c, length)
            alpha = offset_alpha(delta, length, eps_b, params.eps_safemin, params.eps_safemax)

            def probe(s, alpha=alpha):
                z = curve.point(s)
                n = _oriented_normal(curve.tangent(s), term)
                sp, blocked = probe_pair(
                    z + alpha * n, z - alpha * n, z, fault, params.k_rep, h, "expand", params.rep_factor
                )
                return blocked, sp

            s0 = curve.param_at_distance(length)
            blocked, sp = probe(s0)
            if blocked:
                _, sp = reduce_step(curve, curve.s_end, s0, probe, eps_b)
                last = True
                break
            if sp is not None or length < 8 * eps_b:
                break
            length *= 0.5
        if sp is None:
            break
        t = _bisect(sp, eps_b, h, "expand")
        if t is None:
            break
        t = t.with_origin("expand")
        step = t.mid - term.mid
        forward = float(np.dot(step, curve.tangent(curve.s_end)))
        if forward <= 0.05 * eps_b or np.linalg.norm(step) < 0.5 * eps_b:
            break
        if len(comp) >= 4 and np.linalg.norm(t.mid - comp[0].mid) <= params.eps_gap:
            # the chain meets its own beginning; an overshooting triplet is dropped
            o, o2 = comp[0].mid, comp[1].mid
            if np.linalg.norm(t.mid - o2) < np.linalg.norm(o - o2):
                return comp, True
            comp.append(t)
            if _closes(comp, params):
                return comp, True
        else:
            comp.append(t)
        if last:
            break
    return comp, False


def expand2d(fs: FaultSet, params: Params, h: ClassifierHandle) -> FaultSet:
    """Extend every open component at both ends until it leaves its fault or closes."""
    comps, closed = [], []
    for comp, cl in zip(fs.components(), fs.closed):
        if cl or not comp:
            comps.append(comp)
            closed.append(cl)
            continue
        comp, cl = _expand_end(comp, 1.0, params, h, fs.pair)
        if not cl:
            rev, cl = _expand_end(comp[::-1], -1.0, params, h, fs.pair)
            comp = rev[::-1]
        comps.append(comp)
        closed.append(cl)
    return FaultSet.from_components(fs.pair, comps, closed, sorted=True)


# ---------------------------------------------------------------------- adapt

def _adapt_component(comp, closed, params: Params, h, fault) -> tuple[list[Triplet], bool]:
    n = len(comp)
    if n < 3:
        return comp, False
    mids = np.array([t.mid for t in comp])
    curv = _curvatures(mids, closed, params.eps_b)
    nseg = n if closed else n - 1
    dist = np.array([np.linalg.norm(mids[(a + 1) % n] - mids[a]) for a in range(nseg)])
    err = np.array([est_error_segment(max(curv[a], curv[(a + 1) % n]), dist[a]) for a in range(nseg)])

    remove = set()
    candidates = range(n) if closed else range(1, n - 1)
    for k in candidates:
        if closed and n - len(remove) <= 4:
            break
        before, after = (k - 1) % n, (k + 1) % n
        if before in remove or after in remove:
            continue
        if err[(k - 1) % nseg] < params.eps_coarse and err[k % nseg] < params.eps_coarse:
            if np.linalg.norm(mids[after] - mids[before]) <= params.eps_gap:
                remove.add(k)

    inserts: dict[int, Triplet] = {}
    for a in range(nseg):
        if err[a] <= params.eps_err:
            continue
        b = (a + 1) % n
        d = dist[a]
        c = max(curv[a], curv[b])
        chord = (mids[b] - mids[a]) / d
        z = 0.5 * (mids[a] + mids[b])
        fit = graph_fit(mids[_window(n, a - 1, a + 2, closed)], params.eps_b)
        if fit is not None:
            la, lb = fit.frame.to_local(mids[[a, b]])[:, 0]
            z = fit.point(0.5 * (la + lb))[0]
        alpha = offset_alpha(c ** 3 * d ** 4 / 16.0, d, params.eps_b, params.eps_safemin, params.eps_safemax)
        t = _triplet_at(z, _oriented_normal(chord, comp[a]), alpha, fault, params, h, "adapt")
        if t is not None:
            inserts[a] = t.with_origin("adapt")

    if not remove and not inserts:
        return comp, False
    out = []
    for k in range(n):
        if k not in remove:
            out.append(comp[k])
        if k in inserts:
            out.append(inserts[k])
    return out, True


def adapt2d(fs: FaultSet, params: Params, h: ClassifierHandle) -> FaultSet:
    """Up to ``k_adap`` sweeps of curvature-driven refinement and coarsening."""
    comps = fs.components()
    closed = list(fs.closed)
    for _ in range(params.k_adap):
        changed = False
        for ci, comp in enumerate(comps):
            comps[ci], ch = _adapt_component(comp, closed[ci], params, h, fs.pair)
            changed = changed or ch
        if not changed:
            break
    return FaultSet.from_components(fs.pair, comps, closed, sorted=True)


# --------------------------------------------------------------------- driver

@dataclass
class RunResult:
    faults: dict[tuple[int, int], FaultSet]
    ledger: EvalLedger
    stages: dict[tuple[int, int], dict[str, int]] = field(default_factory=dict)
    filled: dict[tuple[int, int], FaultSet] = field(default_factory=dict)


def process_fault2d(fs: FaultSet, domain: BoxDomain, params: Params, h: ClassifierHandle):
    """sort, fill, split, expand and adapt one fault; returns the final and the filled set."""
    stages = {"initialise": len(fs)}
    order = sort_triplets(fs.triplets, params.k_sort, params.beta_angle, domain)
    fs = FaultSet(fs.pair, order.apply(fs.triplets), sorted=True)
    filled = fill2d(fs, params, h)
    fs = split_components(filled.faults, filled.unfillable)
    filled_fs = fs
    stages["fill"] = len(fs)
    fs = expand2d(fs, params, h)
    stages["expand"] = len(fs)
    fs = adapt2d(fs, params, h)
    stages["adapt"] = len(fs)
    return fs, filled_fs, stages


def run2d(
    domain: BoxDomain,
    h: ClassifierHandle,
    params: Params | None = None,
    n_init: int = 50,
    points: list[LabeledPoint] | None = None,
    workers: int = 1,
) -> RunResult:
    params = params or Params()
    init = initialise(domain, n_init, params, h, points=points, workers=workers)
    pairs = sorted(init)

    def job(pair):
        return process_fault2d(init[pair], domain, params, h)

    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, pairs))
    else:
        results = [job(p) for p in pairs]
    res = RunResult({}, h.ledger)
    for pair, (fs, filled, stages) in zip(pairs, results):
        res.faults[pair] = fs
        res.filled[pair] = filled
        res.stages[pair] = stages
    return res
