from __future__ import annotations

import numpy as np
import pytest

from faultscout.classify import testproblem_handle
from faultscout.core import BoxDomain
from faultscout.sampling import filtered_initialset, halton, halton_points, initialset


@pytest.mark.parametrize("i,b,v", [(1, 2, 0.5), (2, 3, 2 / 3), (4, 2, 0.125)])
def test_halton(i, b, v):
    assert halton(i, b) == pytest.approx(v, abs=1e-15)


def test_halton_rejects_zero():
    with pytest.raises(ValueError):
        halton(0, 2)


def test_initialset_first_point():
    h = testproblem_handle("tp1")
    (x,) = initialset(BoxDomain.unit(2), 1, h)
    assert np.allclose(x.point, [0.5, 1 / 3])
    assert h.ledger.counts["initialset"] == 1


def test_initialset_sizes():
    h = testproblem_handle("tp1")
    assert len(initialset(BoxDomain.unit(2), 50, h)) == 50
    h3 = testproblem_handle("tp2_3d")
    X = initialset(BoxDomain.unit(3), 200, h3)
    assert len(X) == 200 and h3.evaluations == 200


def test_filtered_initialset():
    dom = BoxDomain.unit(2)
    h1, h2 = testproblem_handle("tp1"), testproblem_handle("tp1")
    a = initialset(dom, 10, h1)
    b = filtered_initialset(dom, 10, h2, lambda p: True)
    assert all(np.array_equal(x.point, y.point) and x.label == y.label for x, y in zip(a, b))
    h3 = testproblem_handle("tp1")
    assert filtered_initialset(dom, 10, h3, lambda p: False) == [] and h3.evaluations == 0


def test_filtered_initialset_triangle():
    from faultscout.mcda import car_embedding

    _, emb, _ = car_embedding()
    dom = emb.bounding_box(0.1)
    h = testproblem_handle("tp1", BoxDomain.unit(2))
    keep = lambda p: emb.contains(p, 0.05)  # noqa: E731
    pts = halton_points(100, 2) * dom.extent + dom.lower
    expected = sum(keep(p) for p in pts)
    from faultscout.classify import ClassifierHandle

    h = ClassifierHandle(lambda p: 1, dom)
    X = filtered_initialset(dom, 100, h, keep)
    assert len(X) == expected == h.evaluations < 100


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
def test_dyadic_equidistribution(k):
    n = 2 ** k
    u = halton_points(n, 1)[:, 0]
    counts = np.bincount(np.floor(u * n).astype(int), minlength=n)
    assert np.all(counts == 1)
