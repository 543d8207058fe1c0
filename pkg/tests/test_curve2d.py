from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faultscout.curve2d import (
    est_curvature,
    est_error_segment,
    extrapolate_curve,
    line_curve,
    max_step,
    reduce_step,
    sort_points,
    step_size,
)
from faultscout.numerics import bisect_root


def _circle(r, angles):
    return np.column_stack([r * np.cos(angles), r * np.sin(angles)])


# ---------------------------------------------------------------- sort

def test_sort_collinear_shuffled():
    xs = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    pts = np.column_stack([xs, np.full(5, 0.5)])[[3, 0, 4, 2, 1]]
    out = sort_points(pts, 5, math.acos(-0.9))
    assert list(pts[out.order, 0]) in (list(xs), list(xs[::-1]))


def test_sort_uneven_spacing_combines_subsets():
    # chain from the end nearest the boundary stalls at a wide gap, leaving a second subset
    xs = np.array([0.05, 0.1, 0.15, 0.2, 0.5, 0.55, 0.6, 0.3])
    pts = np.column_stack([xs, 0.5 + 0.01 * np.sin(10 * xs)])
    out = sort_points(pts, 2, math.acos(-0.9))
    got = pts[out.order, 0]
    assert list(got) in (sorted(got), sorted(got)[::-1])
    assert sorted(out.order) == list(range(8))


def test_sort_circle_cyclic():
    ang = np.linspace(0, 2 * math.pi, 8, endpoint=False)
    rng = np.random.default_rng(0)
    perm = rng.permutation(8)
    pts = _circle(0.3, ang)[perm] + 0.5
    out = sort_points(pts, 5, math.acos(-0.9))
    seq = perm[out.order]
    steps = {(b - a) % 8 for a, b in zip(seq[:-1], seq[1:])}
    assert steps in ({1}, {7})


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_sort_is_permutation(seed):
    pts = np.random.default_rng(seed).random((12, 2))
    out = sort_points(pts, 5, math.acos(-0.9))
    assert sorted(out.order) == list(range(12))
    assert sum(len(s) for s in out.subsets) == 12


# ----------------------------------------------------------- curvature

def test_curvature_collinear():
    pts = np.column_stack([np.linspace(0, 1, 5), np.linspace(0, 0.5, 5)])
    assert np.all(est_curvature(pts, 1e-3) <= 1e-6)


def test_curvature_circle_30_degrees():
    pts = _circle(2.0, np.radians([0, 30, 60, 90, 120]))
    c = est_curvature(pts, 1e-3)
    assert np.all(np.abs(c - 0.5) <= 0.025)


def test_curvature_three_point_circle():
    pts = _circle(0.5, np.array([0.1, 0.7, 1.9]))
    assert np.allclose(est_curvature(pts, 1e-3), 2.0, atol=1e-9)


def test_curvature_needs_three():
    with pytest.raises(ValueError):
        est_curvature(np.zeros((2, 2)), 1e-3)


# ------------------------------------------------------------ error, step

@pytest.mark.parametrize("c,d,e", [(0, 1, 0.0), (1, 0.1, 0.00250625), (2, 0.05, 0.001253125)])
def test_est_error_segment(c, d, e):
    assert est_error_segment(c, d) == pytest.approx(e, rel=1e-12, abs=1e-15)


@given(st.floats(0, 100), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_est_error_monotone(c, d, dc, dd):
    assert est_error_segment(c + dc, d) >= est_error_segment(c, d)
    assert est_error_segment(c, d + dd) >= est_error_segment(c, d)


def _oracle(c, eps):
    return bisect_root(lambda d: est_error_segment(c, d) - eps, 0.0, 10.0 / math.sqrt(c) + 10.0)


def test_step_size_zero_curvature():
    assert step_size(0.0, 1e-3, 0.05, 0.01, 2.0) == 0.02
    assert step_size(0.0, 1e-3, 0.05, 1.0, 2.0) == 0.05


def test_step_size_c1():
    l = max_step(1.0, 1e-3)
    assert l == pytest.approx(0.063214, abs=1e-6)
    assert step_size(1.0, 1e-3, 1.0, 1e9, 2.0) == l


def test_step_size_c100():
    # the bisection root is 0.0060534; 0.00626 overshoots eps_err by 7.6%
    l = max_step(100.0, 1e-3)
    assert est_error_segment(100.0, l) == pytest.approx(1e-3, rel=1e-9)
    assert l == pytest.approx(_oracle(100.0, 1e-3), rel=1e-9)


# ---------------------------------------------------------- extrapolation

def test_extrapolate_two_points_is_line():
    cur = extrapolate_curve(np.array([[0.0, 0.0], [0.1, 0.1]]), 1e-3)
    s = cur.param_at_distance(0.05)
    p = cur.point(s)
    assert abs(p[0] - p[1]) < 1e-12 and p[0] > 0.1


def test_extrapolate_line_stays_on_line():
    pts = np.column_stack([np.linspace(0.2, 0.35, 4), 0.5 + 0.3 * np.linspace(0.2, 0.35, 4)])
    cur = extrapolate_curve(pts, 1e-3)
    p = cur.point(cur.param_at_distance(0.05))
    assert abs(p[1] - (0.5 + 0.3 * p[0])) <= 1e-6
    assert np.linalg.norm(p - pts[-1]) == pytest.approx(0.05, rel=1e-9)


def test_extrapolate_circle():
    pts = _circle(1.0, np.radians([0, 5, 10, 15]))
    cur = extrapolate_curve(pts, 1e-3)
    for arc in np.linspace(0.005, 0.05, 10):
        p = cur.point(cur.param_at_distance(arc))
        assert abs(np.linalg.norm(p) - 1.0) <= 2e-3


def test_extrapolate_rejects_coincident():
    with pytest.raises(ValueError):
        extrapolate_curve(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]), 1e-3)


# ------------------------------------------------------------ reduce_step

def test_reduce_step_finds_boundary():
    cur = line_curve([0.0, 0.5], [1.0, 0.0])
    wall = 0.3371

    def probe(s):
        return (s > wall, None if s > wall else ("pair", s))

    s, pair = reduce_step(cur, 0.0, 1.0, probe, 1e-3)
    assert pair is not None and wall - 1e-3 <= s <= wall


def test_reduce_step_valid_start_returned():
    cur = line_curve([0.0, 0.5], [1.0, 0.0])
    assert reduce_step(cur, 0.0, 0.4, lambda s: (False, "ok"), 1e-3) == (0.4, "ok")


def test_reduce_step_never_valid():
    cur = line_curve([0.0, 0.5], [1.0, 0.0])
    assert reduce_step(cur, 0.0, 0.4, lambda s: (True, None), 1e-3) == (None, None)
