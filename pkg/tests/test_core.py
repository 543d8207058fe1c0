from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from faultscout.core import (
    BoxDomain,
    DomainError,
    FaultSet,
    LabeledPoint,
    Params,
    Triplet,
    build_reconstruction,
    make_triplet,
    read_triplet_csv,
    reconstruct_polyline,
    region_query,
    write_ply,
    write_triplet_csv,
)

from conftest import run_2d


def lp(x, y, c):
    return LabeledPoint(np.array([x, y], dtype=float), c)


def test_make_triplet_midpoint():
    t = make_triplet(lp(0, 0, 1), lp(0.001, 0, 2), 0.001)
    assert np.allclose(t.mid, [0.0005, 0])
    assert t.pair == (1, 2)


def test_make_triplet_order_normalised():
    a = make_triplet(lp(0, 0, 1), lp(0.001, 0, 2), 0.001)
    b = make_triplet(lp(0.001, 0, 1), lp(0, 0, 2), 0.001)
    c = make_triplet(lp(0, 0, 2), lp(0.001, 0, 1), 0.001)
    assert c.pair == (1, 2)
    assert np.array_equal(c.p_i, [0.001, 0]) and np.array_equal(c.p_j, [0, 0])
    assert np.array_equal(b.mid, a.mid)


def test_make_triplet_rejects():
    with pytest.raises(ValueError):
        make_triplet(lp(0, 0, 1), lp(0.1, 0, 2), 0.001)
    with pytest.raises(ValueError):
        make_triplet(lp(0, 0, 1), lp(0.001, 0, 1), 0.001)


@given(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 2 * math.pi), st.floats(0, 0.002),
    st.integers(1, 5), st.integers(1, 5),
)
def test_make_triplet_symmetric(x, y, ang, r, ca, cb):
    if ca == cb:
        return
    a = lp(x, y, ca)
    b = lp(x + r * math.cos(ang), y + r * math.sin(ang), cb)
    t1, t2 = make_triplet(a, b, 0.001), make_triplet(b, a, 0.001)
    assert t1.pair == t2.pair
    assert np.array_equal(t1.p_i, t2.p_i) and np.array_equal(t1.p_j, t2.p_j)
    assert np.array_equal(t1.mid, 0.5 * (t1.p_i + t1.p_j))


def _line_triplets(xs, y=0.5):
    return [make_triplet(lp(x, y - 1e-4, 1), lp(x, y + 1e-4, 2), 1e-3) for x in xs]


def test_reconstruct_polyline_single():
    fs = FaultSet((1, 2), _line_triplets([0.1, 0.2, 0.3]), sorted=True)
    (verts, closed), = reconstruct_polyline(fs)
    assert verts.shape == (3, 2) and not closed


def test_reconstruct_polyline_components():
    fs = FaultSet((1, 2), _line_triplets([0.1, 0.2, 0.6, 0.7]), breaks=[2], sorted=True)
    assert [len(v) for v, _ in reconstruct_polyline(fs)] == [2, 2]


def test_reconstruct_polyline_closed_circle():
    ts = []
    for k in range(8):
        a = 2 * math.pi * k / 8
        u = np.array([math.cos(a), math.sin(a)])
        ts.append(make_triplet(LabeledPoint(0.3 * u * 0.999, 2), LabeledPoint(0.3 * u * 1.001, 1), 1e-3))
    fs = FaultSet.from_components((1, 2), [ts], closed=[True])
    (verts, closed), = reconstruct_polyline(fs)
    assert closed and len(verts) == 8
    assert np.allclose(np.linalg.norm(verts, axis=1), 0.3, atol=1e-3)


def test_reconstruct_polyline_unsorted_rejected():
    with pytest.raises(ValueError):
        reconstruct_polyline(FaultSet((1, 2), _line_triplets([0.1, 0.2])))


def test_params_defaults_and_invariants():
    p = Params()
    assert (p.eps_b, p.eps_gap, p.eps_err, p.eps_coarse) == (0.001, 0.05, 0.001, 0.0001)
    assert (p.k_near, p.k_sort, p.k_extra, p.k_rep, p.k_adap) == (10, 5, 4, 3, 4)
    assert p.beta_angle == pytest.approx(math.acos(-0.9))
    assert p.cluster_radius == pytest.approx(0.01)
    with pytest.raises(ValueError):
        Params(eps_coarse=0.01)
    with pytest.raises(ValueError):
        Params(eps_safemax=1.5)


def test_box_domain():
    d = BoxDomain.unit(2)
    assert d.contains([0, 1]) and not d.contains([1.1, 0.5])
    assert d.boundary_distance([0.2, 0.5]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        BoxDomain([0, 0], [0, 1])


def test_csv_roundtrip_bit_exact(tmp_path):
    ts = _line_triplets([0.1 / 3, 0.2, 2 ** 0.5 / 5])
    fs = FaultSet.from_components((1, 2), [ts[:2], ts[2:]])
    write_triplet_csv(tmp_path / "f.csv", fs)
    back = read_triplet_csv(tmp_path / "f.csv")
    assert back.breaks == [2]
    for a, b in zip(fs.triplets, back.triplets):
        assert np.array_equal(a.p_i, b.p_i) and np.array_equal(a.mid, b.mid)
    head = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert head == "fault_i,fault_j,component,seq,xi_1,xi_2,xj_1,xj_2,xm_1,xm_2"


def test_ply_header(tmp_path):
    t = Triplet(np.zeros(3), np.array([0, 0, 1e-3]), np.array([0, 0, 5e-4]), 1, 2, "fill")
    write_ply(tmp_path / "f.ply", FaultSet((1, 2), [t]))
    lines = (tmp_path / "f.ply").read_text().splitlines()
    assert lines[0] == "ply" and "element vertex 1" in lines and lines[-1].endswith("1 2 1")


@pytest.fixture(scope="module")
def tp4_rec():
    res, _ = run_2d("tp4")
    return build_reconstruction(BoxDomain.unit(2), res.faults)


@pytest.mark.parametrize("point,label", [((0.2, 0.5), 1), ((0.9, 0.5), 3), ((0.55, 0.5), 2)])
def test_region_query_tp4(tp4_rec, point, label):
    assert region_query(point, tp4_rec) == label


def test_region_query_outside(tp4_rec):
    with pytest.raises(DomainError):
        region_query((1.5, 0.5), tp4_rec)
