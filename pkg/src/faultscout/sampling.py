"""Halton point sets for the initial coarse sampling."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .classify import ClassifierHandle
from .core import BoxDomain, LabeledPoint

PRIMES = (2, 3, 5, 7, 11, 13)


def halton(index: int, base: int) -> float:
    """Radical inverse of ``index`` in ``base``."""
    if index < 1:
        raise ValueError("Halton indices start at 1")
    result, f = 0.0, 1.0
    i = index
    while i > 0:
        f /= base
        result += f * (i % base)
        i //= base
    return result


def halton_points(n: int, dim: int, start: int = 1) -> np.ndarray:
    """Rows ``start .. start+n-1`` of the Halton sequence in the unit cube."""
    return np.array([[halton(k, PRIMES[d]) for d in range(dim)] for k in range(start, start + n)]).reshape(n, dim)


def _to_box(u: np.ndarray, domain: BoxDomain) -> np.ndarray:
    return domain.lower + u * domain.extent


def initialset(domain: BoxDomain, n: int, h: ClassifierHandle) -> list[LabeledPoint]:
    if n < 1:
        raise ValueError("need at least one initial point")
    pts = _to_box(halton_points(n, domain.dim), domain)
    return [LabeledPoint(p, h.evaluate(p, "initialset")) for p in pts]


def filtered_initialset(
    domain: BoxDomain, n: int, h: ClassifierHandle, keep: Callable[[np.ndarray], bool]
) -> list[LabeledPoint]:
    """First ``n`` Halton points, discarding those failing ``keep`` before classification."""
    pts = _to_box(halton_points(n, domain.dim), domain)
    return [LabeledPoint(p, h.evaluate(p, "initialset")) for p in pts if keep(p)]
