import time
from dataclasses import dataclass

import pytest

from mutualshape.evolution import EvolutionConfig, EvolutionResult, evolve
from mutualshape.grid import BinaryMask, ShapeSet
from mutualshape.synthetic import lozenge_geometry, make_lozenge_set


@dataclass
class LozengeRun:
    truth: BinaryMask
    shapes: ShapeSet
    result: EvolutionResult
    seconds: float


def _run(mode: str, with_outlier: bool) -> LozengeRun:
    truth, s = make_lozenge_set(128, with_outlier=with_outlier)
    geo = lozenge_geometry(128, with_outlier=with_outlier)
    cfg = EvolutionConfig(mode=mode, lam=10.0, init="circle", init_radius=geo.init_radius)
    t0 = time.perf_counter()
    res = evolve(s, cfg)
    return LozengeRun(truth, s, res, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def lozenge_mutual() -> LozengeRun:
    return _run("mutual", False)


@pytest.fixture(scope="session")
def lozenge_sd() -> LozengeRun:
    return _run("sd", False)


@pytest.fixture(scope="session")
def lozenge_outlier() -> LozengeRun:
    return _run("mutual", True)
