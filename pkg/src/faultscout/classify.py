"""Black-box classifier wrapper with memoisation and per-phase evaluation counts."""
from __future__ import annotations

import math
import threading
from typing import Callable, Hashable, Sequence

import numpy as np

from .core import BoxDomain, DomainError

PHASES = ("initialset", "iniapprox", "fill", "expand", "adapt")

# dense id reserved for "outside the admissible domain"
OUTSIDE = 0


class ClassifierError(RuntimeError):
    def __init__(self, point, cause):
        super().__init__(f"classifier failed at {tuple(float(v) for v in point)}: {cause}")
        self.point = point


class EvalLedger:
    """Counts distinct classifier evaluations per pipeline phase."""

    def __init__(self):
        self.counts = {p: 0 for p in PHASES}

    def charge(self, phase: str, n: int = 1) -> None:
        if phase not in self.counts:
            raise ValueError(f"unknown phase {phase!r}")
        self.counts[phase] += n

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> dict[str, int]:
        return dict(self.counts, total=self.total)

    def table(self) -> str:
        width = max(len(p) for p in (*PHASES, "total"))
        rows = [f"{'phase':<{width}}  evaluations"]
        rows += [f"{p:<{width}}  {self.counts[p]:>11d}" for p in PHASES]
        rows.append(f"{'total':<{width}}  {self.total:>11d}")
        return "\n".join(rows) + "\n"


class ClassifierHandle:
    """Memoising wrapper around a pure point -> label function.

    Raw labels are mapped to dense positive ids.  ``labels`` fixes the order of
    known labels; anything else is appended in first-seen order.  A raw label
    equal to ``outside_label`` maps to :data:`OUTSIDE`.

    ``admissible`` optionally narrows the box domain (e.g. to a simplex).
    Points failing it are reported as :data:`OUTSIDE` without being charged.
    """

    def __init__(
        self,
        func: Callable[[np.ndarray], Hashable],
        domain: BoxDomain,
        labels: Sequence[Hashable] = (),
        outside_label: Hashable | None = None,
        admissible: Callable[[np.ndarray], bool] | None = None,
    ):
        self.func = func
        self.domain = domain
        self.ledger = EvalLedger()
        self.outside_label = outside_label
        self.admissible = admissible
        self._cache: dict[tuple, int] = {}
        self._lock = threading.RLock()
        self.label_map: dict[Hashable, int] = {}
        for lab in labels:
            self._dense(lab)

    def _dense(self, raw) -> int:
        if self.outside_label is not None and raw == self.outside_label:
            return OUTSIDE
        if raw not in self.label_map:
            self.label_map[raw] = len(self.label_map) + 1
        return self.label_map[raw]

    @property
    def evaluations(self) -> int:
        return self.ledger.total

    def cached(self, p) -> int | None:
        return self._cache.get(tuple(float(v) for v in p))

    def evaluate(self, p, phase: str) -> int:
        """Dense class id of ``p``; charges ``phase`` only on a cache miss."""
        key = tuple(float(v) for v in p)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        arr = np.array(key)
        if not self.domain.contains(arr):
            raise DomainError(f"point {key} lies outside the domain")
        try:
            raw = self.func(arr)
        except Exception as exc:  # noqa: BLE001 - re-raised with the point attached
            raise ClassifierError(key, exc) from exc
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
            label = self._dense(raw)
            self._cache[key] = label
            self.ledger.charge(phase)
        return label

    def classify(self, p, phase: str) -> int:
        """Like :meth:`evaluate` but returns :data:`OUTSIDE` for inadmissible points."""
        arr = np.asarray(p, dtype=float)
        if not self.domain.contains(arr):
            return OUTSIDE
        if self.admissible is not None and not self.admissible(arr):
            return OUTSIDE
        return self.evaluate(arr, phase)

    def raw_labels(self) -> dict[int, Hashable]:
        return {v: k for k, v in self.label_map.items()}


# ------------------------------------------------------------ test problems

def _tp1(p):
    x, y = p
    if (x - 1.0) ** 6 + (y - 0.5) ** 6 < 0.005:
        return 3
    if y <= 0.7 + 0.1 * math.sin(10.0 * math.pi * x ** 1.5):
        return 1
    return 2


def _tp3(p):
    x = np.asarray(p, dtype=float)
    if math.hypot(x[0] - 0.5, x[1] - 0.5) < 0.4:
        return 1 + 2 * math.floor(3.5 * math.hypot(x[0], x[1]))
    return 0


def _tp4(p):
    if p[0] > 0.6:
        return 3
    if p[0] < 0.5:
        return 1
    return 2


def _tp5(p):
    x1, x2 = p
    if x1 > 0.4 and x2 > 0.4 and x2 < 0.2 + x1:
        return 2
    return 1


def _tp2_3d(p):
    x, y, z = p
    if (x - 1.0) ** 6 + (y - 0.5) ** 6 + (z - 0.5) ** 6 < 0.002:
        return 3
    if y + 0.1 * z < 0.7 + 0.1 * math.sin(10.0 * x ** 1.5) + 0.05 * math.sin(5.0 * z ** 1.5):
        return 1
    return 2


TEST_PROBLEMS: dict[str, tuple[Callable, int, tuple]] = {
    # name: (function, dimension, declared raw labels in dense order)
    "tp1": (_tp1, 2, (1, 2, 3)),
    "tp3": (_tp3, 2, (0, 3, 5, 7)),
    "tp4": (_tp4, 2, (1, 2, 3)),
    "tp5": (_tp5, 2, (1, 2)),
    "tp2_3d": (_tp2_3d, 3, (1, 2, 3)),
}


def classify_testproblem(name: str, p) -> int:
    """Raw label of one of the analytic test problems."""
    try:
        func, dim, _ = TEST_PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown test problem {name!r}; choose from {sorted(TEST_PROBLEMS)}") from None
    p = np.asarray(p, dtype=float)
    if p.size != dim:
        raise ValueError(f"{name} expects {dim}-dimensional points, got {p.size}")
    return func(p)


def testproblem_handle(name: str, domain: BoxDomain | None = None) -> ClassifierHandle:
    func, dim, labels = TEST_PROBLEMS[name]
    domain = domain or BoxDomain.unit(dim)
    return ClassifierHandle(func, domain, labels=labels)


def constant_classifier(value: int = 1) -> Callable[[np.ndarray], int]:
    return lambda p: value
