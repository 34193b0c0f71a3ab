import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from m3g.dataset import build_bundle  # noqa: E402
from m3g.geo import Modality, Neighborhood  # noqa: E402
from m3g.multigraph import RelationDatum  # noqa: E402
from m3g.synth import SynthConfig, generate  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, name: str, passed: bool, detail: str) -> str:
    line = f"criterion {number} [{name}]: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def world():
    return generate(SynthConfig())


@pytest.fixture(scope="session")
def world_bundle(world):
    return build_bundle(world.raw)


def square(id_, x0, y0, side=1.0, city=""):
    ring = [(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)]
    return Neighborhood.from_polygon(id_, ring, city)


def id_relation(modality, src, dst, weight, reciprocal=False):
    return RelationDatum(Modality.parse(modality), float(weight), reciprocal=reciprocal, src_id=src, dst_id=dst)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
