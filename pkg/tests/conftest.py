from __future__ import annotations

import functools

import numpy as np
import pytest

from faultscout.classify import ClassifierHandle, testproblem_handle
from faultscout.core import BoxDomain, Params
from faultscout.fault2d import run2d
from faultscout.fault3d import run3d
from faultscout.scattering import sphere_classifier

ACCEPTANCE: dict[int, tuple[bool, str]] = {}

SPHERE_DOMAIN = BoxDomain(np.full(3, -1.5), np.full(3, 1.5))
SPHERE_PARAMS = Params(eps_gap=0.25, eps_err=0.01)


@functools.lru_cache(maxsize=None)
def run_2d(name: str):
    h = testproblem_handle(name)
    return run2d(BoxDomain.unit(2), h, Params(), 50), h


@functools.lru_cache(maxsize=None)
def run_3d(name: str):
    if name == "sphere":
        h = ClassifierHandle(sphere_classifier(1.0), SPHERE_DOMAIN, labels=(1, 2))
        return run3d(SPHERE_DOMAIN, h, SPHERE_PARAMS, 200), h
    h = testproblem_handle(name)
    return run3d(BoxDomain.unit(3), h, Params(), 200), h


@pytest.fixture
def record():
    """Store one acceptance verdict for the terminal summary."""

    def _record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(ok), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
