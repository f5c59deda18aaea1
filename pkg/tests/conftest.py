import json
from pathlib import Path

import pytest

from openchamber.recipe import parse_recipe

SAMPLE_RECIPE_PATH = Path(__file__).resolve().parents[1] / "data" / "sample_recipe.json"

SAMPLE_ID = "7ca3134e91aec96acd17a74764000bb8"
SAMPLE_DOC = {
    "_id": SAMPLE_ID,
    "format": "simple",
    "operations": [
        [0, "air_temperature", 25],
        [0, "air_humidity", 25],
        [0, "light_illuminance", 60],
        [43200, "air_temperature", 23],
        [108000, "light_illuminance", 0],
        [172800, "air_humidity", 20],
    ],
}


@pytest.fixture
def sample_doc():
    return json.loads(json.dumps(SAMPLE_DOC))


@pytest.fixture
def sample_bytes():
    return json.dumps(SAMPLE_DOC).encode()


@pytest.fixture
def sample_recipe():
    return parse_recipe(json.dumps(SAMPLE_DOC).encode())


def test_shipped_sample_matches_fixture():
    assert json.loads(SAMPLE_RECIPE_PATH.read_text()) == SAMPLE_DOC
