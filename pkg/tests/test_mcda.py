from __future__ import annotations

import numpy as np
import pytest
from scipy import ndimage

from faultscout.classify import OUTSIDE
from faultscout.mcda import (
    McdaError,
    PerformanceMatrix,
    closeness,
    embed_simplex,
    load_performance_matrix,
    mcda_classifier,
    robustness_radius,
    car_embedding,
    topsis_decide,
)


def topsis_oracle(X, w):
    """Textbook TOPSIS with benefit criteria, written out loop by loop."""
    n, m = X.shape
    R = np.empty_like(X)
    for j in range(m):
        R[:, j] = X[:, j] / np.sqrt(sum(X[i, j] ** 2 for i in range(n))) * w[j]
    best, worst = R.max(axis=0), R.min(axis=0)
    c = []
    for i in range(n):
        dp = np.sqrt(sum((R[i, j] - best[j]) ** 2 for j in range(m)))
        dm = np.sqrt(sum((R[i, j] - worst[j]) ** 2 for j in range(m)))
        c.append(dm / (dp + dm))
    return np.array(c)


def test_tie_goes_to_first():
    P = PerformanceMatrix(np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert topsis_decide(P, [0.5, 0.5]) == 0


def test_dominating_alternative_wins():
    rng = np.random.default_rng(0)
    for _ in range(20):
        X = rng.uniform(0.1, 1, size=(4, 3))
        X[2] = X.max(axis=0) + 0.1
        w = rng.dirichlet(np.ones(3))
        assert topsis_decide(PerformanceMatrix(X), w) == 2


def test_car_matrix_matches_oracle():
    P, emb, y = car_embedding()
    w = emb.full_weights(y)
    assert np.allclose(closeness(P, w), topsis_oracle(P.scores, w), atol=1e-14)
    assert P.alternatives[topsis_decide(P, w)] == "ICE"


def test_cost_criterion():
    X = np.array([[1.0, 10.0], [1.0, 1.0]])
    assert topsis_decide(PerformanceMatrix(X, benefit=(True, False)), [0.5, 0.5]) == 1
    assert topsis_decide(PerformanceMatrix(X), [0.5, 0.5]) == 0


def test_invalid_weights():
    P = PerformanceMatrix.cars()
    with pytest.raises(McdaError):
        closeness(P, np.full(5, 0.3))
    with pytest.raises(McdaError):
        closeness(P, [1.0, 0, 0])


def test_column_scaling_invariance():
    rng = np.random.default_rng(1)
    X = rng.uniform(0.1, 1, size=(3, 4))
    w = rng.dirichlet(np.ones(4))
    s = rng.uniform(0.5, 20, size=4)
    a = closeness(PerformanceMatrix(X), w)
    b = closeness(PerformanceMatrix(X * s), w)
    assert np.allclose(a, b, atol=1e-12)


def test_embedding_vertices():
    emb = embed_simplex(3, np.zeros(3), (0, 1, 2))
    v = emb.vertices()
    assert np.allclose(v[0], [np.sqrt(1 / 6), -np.sqrt(1 / 2)], atol=1e-12)
    assert np.allclose(v[1], [np.sqrt(1 / 6), np.sqrt(1 / 2)], atol=1e-12)
    assert np.allclose(v[2], [-2 / np.sqrt(6), 0.0], atol=1e-12)
    _, emb4, _ = car_embedding()
    assert np.allclose(emb4.vertices(), emb4.c_f * v, atol=1e-12)


def test_barycenter_round_trip_isometry():
    rng = np.random.default_rng(2)
    _, emb, _ = car_embedding()
    assert np.allclose(emb.embed(np.full(3, emb.c_f / 3)), 0.0, atol=1e-15)
    for _ in range(50):
        a, b = emb.c_f * rng.dirichlet(np.ones(3), size=2)
        assert np.allclose(emb.invert(emb.embed(a)), a, atol=1e-14)
        assert np.linalg.norm(emb.embed(a) - emb.embed(b)) == pytest.approx(np.linalg.norm(a - b), rel=1e-12)
        assert emb.full_weights(emb.embed(a)).sum() == pytest.approx(1.0, abs=1e-12)


def test_outside_simplex():
    P, emb, _ = car_embedding()
    f = mcda_classifier(P, emb)
    assert f(np.array([1.0, 1.0])) == OUTSIDE
    assert f(np.zeros(2)) in (1, 2, 3)


def test_decision_regions_connected():
    P, emb, _ = car_embedding()
    f = mcda_classifier(P, emb)
    box = emb.bounding_box()
    xs = np.linspace(box.lower[0], box.upper[0], 200)
    ys = np.linspace(box.lower[1], box.upper[1], 200)
    lab = np.array([[f(np.array([x, y])) for x in xs] for y in ys])
    for c in (1, 2, 3):
        mask = lab == c
        if mask.any():
            _, n = ndimage.label(mask)
            assert n == 1, c


def test_robustness_radius_square():
    sq = [np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)]
    assert robustness_radius(sq, [0.5, 0.5]) == pytest.approx(0.5, abs=1e-3)
    assert robustness_radius(sq, [0.5, 0.0]) == 0.0
    assert robustness_radius(sq, [2.0, 2.0], region=sq[0]) == 0.0


def test_load_matrix(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("alt,price,quality\n,cost,benefit\nA,3,0.5\nB,1,0.4\n")
    P = load_performance_matrix(p)
    assert P.alternatives == ("A", "B") and P.benefit == (False, True)
    assert P.scores.shape == (2, 2)
    p.write_text("alt,price\nA,x\nB,1\n")
    with pytest.raises(McdaError):
        load_performance_matrix(p)
