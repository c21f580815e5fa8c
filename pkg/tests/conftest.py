import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from twinbench import data_path
from twinbench.mapdata import load_map
from twinbench.scenario import parse_scenario


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture
def straight_map():
    return load_map(str(data_path("maps", "straight.json")))


@pytest.fixture
def two_lane_map():
    return load_map(str(data_path("maps", "two_lane.json")))


@pytest.fixture
def crossing_map():
    return load_map(str(data_path("maps", "crossing.json")))


def scenario(name):
    return parse_scenario(str(data_path("scenarios", f"{name}.json")))


@pytest.fixture
def car_following_spec():
    return scenario("car_following")


@pytest.fixture
def merge_spec():
    return scenario("merge_adversarial")
