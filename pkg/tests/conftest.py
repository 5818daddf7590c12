from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from lightcone import dynamics, fock, model  # noqa: E402
from lightcone.lattice import Lattice  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def chain_system(length: int, particles: int, J: float = 1.0, lam: float = 1.0) -> dynamics.System:
    lat = Lattice.chain(length)
    h, v = model.bose_hubbard(lat, J, lam)
    return dynamics.System(h, v, fock.enumerate_sector(lat.full(), particles))


def number_on(site: int):
    def build(basis):
        f = np.zeros(len(basis.region.lattice))
        f[site] = 1.0
        return fock.second_quantize_multiplier(f, basis)
    return build


@pytest.fixture
def chain10():
    return chain_system(10, 2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
