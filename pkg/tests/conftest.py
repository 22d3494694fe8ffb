import json
from pathlib import Path

import pytest
from hypothesis import settings

from charpent.geometry import Gamma0, build_pentagon
from charpent.symbol import build_symbol

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def oracles():
    return json.loads((DATA / "oracles.json").read_text())


@pytest.fixture(scope="session")
def sym():
    return build_symbol((1, 0, -5, 0, 4))


@pytest.fixture(scope="session")
def unit_gamma():
    return Gamma0(0.0, 1.0)


@pytest.fixture(scope="session")
def pentagon(sym):
    return build_pentagon(sym, Gamma0(0.25, 0.75), (0.5, 0.3))
