import math

import numpy as np
import pytest
from hypothesis import settings

from pedrisk.scenario import bundled_scenario

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def minimal_doc(**extra):
    """One road between two sidewalks, one goal on the north sidewalk."""
    doc = {
        "bounds": [0, 0, 20, 11],
        "regions": [
            {"id": "sw_s", "kind": "sidewalk", "polygon": rect(0, 0, 20, 2)},
            {"id": "road", "kind": "road", "polygon": rect(0, 2, 20, 9)},
            {"id": "sw_n", "kind": "sidewalk", "polygon": rect(0, 9, 20, 11)},
        ],
        "lanes": [{"id": "east", "centerline": [[0, 3.75], [20, 3.75]]}],
        "goals": [[10, 10]],
        "ego": {"x": 2, "y": 3.75, "heading": 0, "speed": 0, "goal": rect(15, 2, 19, 5.5), "lane": "east"},
        "obstacles": [],
    }
    doc.update(extra)
    return doc


@pytest.fixture(scope="session")
def straight_road():
    return bundled_scenario("straight_road")


@pytest.fixture(scope="session")
def crosswalk():
    return bundled_scenario("crosswalk")


def rotate(v, theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]]) @ np.asarray(v, dtype=float)
