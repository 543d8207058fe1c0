"""Factorization-method indicator from a far-field matrix and the inside/outside classifier built on it."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import FaultScoutError

OUTSIDE_CLASS = 1
INSIDE_CLASS = 2
UNIT_TOL = 1e-9


class FarFieldError(FaultScoutError):
    """Malformed or inconsistent far-field data."""


@dataclass(frozen=True)
class FarFieldData:
    """``m`` incident/observation directions, the ``m x m`` far-field matrix and wave number ``k_e``.

    The singular value decomposition ``A = U diag(lam) V^H`` is computed once on construction.
    """

    k_e: float
    directions: np.ndarray
    A: np.ndarray
    U: np.ndarray = field(init=False, repr=False, compare=False)
    lam: np.ndarray = field(init=False, repr=False, compare=False)
    V: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d = np.array(self.directions, dtype=float)
        A = np.array(self.A, dtype=complex)
        if d.ndim != 2 or d.shape[1] != 3:
            raise FarFieldError("directions must be an m x 3 array")
        m = len(d)
        if m == 0 or A.shape != (m, m):
            raise FarFieldError(f"matrix shape {A.shape} does not match {m} directions")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(A))):
            raise FarFieldError("non-finite entries")
        if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > UNIT_TOL):
            raise FarFieldError("directions must be unit vectors")
        if not np.isfinite(self.k_e) or self.k_e <= 0:
            raise FarFieldError("wave number must be positive")
        U, lam, Vh = np.linalg.svd(A)
        for name, arr in (("directions", d), ("A", A), ("U", U), ("lam", lam), ("V", Vh.conj().T)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return len(self.directions)


def load_farfield(path: str | Path) -> FarFieldData:
    """Read ``m k_e``, then ``m`` direction lines, then ``m`` rows of ``re im`` pairs."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        head = lines[0].split()
        m, k_e = int(head[0]), float(head[1])
        if len(head) != 2 or m <= 0:
            raise ValueError
        if len(lines) != 1 + 2 * m:
            raise FarFieldError(f"expected {1 + 2 * m} data lines, found {len(lines)}")
        d = np.array([[float(v) for v in ln.split()] for ln in lines[1 : m + 1]])
        rows = []
        for ln in lines[m + 1 :]:
            vals = np.array([float(v) for v in ln.split()])
            if vals.size != 2 * m:
                raise FarFieldError(f"matrix row has {vals.size} reals, expected {2 * m}")
            rows.append(vals[0::2] + 1j * vals[1::2])
    except (IndexError, ValueError) as exc:
        raise FarFieldError(f"malformed far-field file {path}") from exc
    if d.shape != (m, 3):
        raise FarFieldError("each direction needs three coordinates")
    return FarFieldData(k_e, d, np.array(rows))


def save_farfield(path: str | Path, data: FarFieldData) -> None:
    """Write ``data`` in the format read by :func:`load_farfield` (lossless)."""
    out = [f"{data.m} {data.k_e!r}"]
    out += [" ".join(repr(float(v)) for v in row) for row in data.directions]
    for row in data.A:
        out.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
    Path(path).write_text("\n".join(out) + "\n")


def test_function(z, data: FarFieldData) -> np.ndarray:
    """``r_z = exp(-i k_e z . d_j)`` over all directions."""
    return np.exp(-1j * data.k_e * (data.directions @ np.asarray(z, dtype=float)))


def indicator(z, data: FarFieldData, terms: int | None = None, conjugate: bool = False) -> float:
    """``W(z) = 1 / sum_l |rho_l|^2 / lam_l`` with ``rho = V^T r_z``.

    ``terms`` keeps only the largest singular values.  ``conjugate`` swaps the
    plain transpose for the conjugate transpose.  A vanishing singular value
    with a nonzero coefficient contributes an infinite term, giving ``W = 0``.
    """
    r = test_function(z, data)
    V = data.V if terms is None else data.V[:, :terms]
    lam = data.lam if terms is None else data.lam[:terms]
    rho = (V.conj().T if conjugate else V.T) @ r
    w = np.abs(rho) ** 2
    zero = lam == 0
    if np.any(w[zero] > 0):
        return 0.0
    total = float(np.sum(w[~zero] / lam[~zero]))
    return 1.0 / total if total > 0 else float("inf")


@dataclass(frozen=True)
class IndicatorClassifier:
    """Class 2 (inside) where ``W(z) >= threshold``, class 1 (outside) elsewhere."""

    data: FarFieldData
    threshold: float
    terms: int | None = None
    conjugate: bool = False

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")

    def __call__(self, z) -> int:
        w = indicator(z, self.data, self.terms, self.conjugate)
        return INSIDE_CLASS if w >= self.threshold else OUTSIDE_CLASS


def inside_classifier(data: FarFieldData, w0: float, terms: int | None = None, conjugate: bool = False):
    return IndicatorClassifier(data, w0, terms, conjugate)


def sphere_classifier(radius: float = 1.0, center=(0.0, 0.0, 0.0)):
    """Analytic stand-in for an indicator classifier: class 2 inside a ball."""
    c = np.asarray(center, dtype=float)

    def f(z) -> int:
        return INSIDE_CLASS if np.linalg.norm(np.asarray(z, dtype=float) - c) < radius else OUTSIDE_CLASS

    return f
