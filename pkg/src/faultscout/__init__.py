"""Detect and reconstruct the fault lines and surfaces of a black-box classifier."""
from __future__ import annotations

from .classify import OUTSIDE, ClassifierHandle, EvalLedger, testproblem_handle
from .core import BoxDomain, FaultSet, LabeledPoint, Params, Triplet, build_reconstruction, region_query
from .fault2d import run2d
from .fault3d import run3d

__all__ = [
    "OUTSIDE",
    "BoxDomain",
    "ClassifierHandle",
    "EvalLedger",
    "FaultSet",
    "LabeledPoint",
    "Params",
    "Triplet",
    "build_reconstruction",
    "region_query",
    "run2d",
    "run3d",
    "testproblem_handle",
]
__version__ = "0.1.0"
