import io
import os

import numpy as np
import pytest

from app.utils.kg_io import load_kg, parse_kg
from config import config

FIXTURE_TRIPLES = os.path.join(config.FIXTURE_PATH, config.TRIPLES_FILE)
FIXTURE_TYPES = os.path.join(config.FIXTURE_PATH, config.TYPES_FILE)


def make_kg(triples: str, types: str):
    return parse_kg(io.StringIO(triples), io.StringIO(types))


@pytest.fixture
def fixture_kg():
    return load_kg(FIXTURE_TRIPLES, FIXTURE_TYPES)


@pytest.fixture
def art_kg():
    "created links artists to paintings and companies to games"
    return make_kg(
        "DaVinci\tcreated\tMonaLisa\n"
        "Nintendo\tcreated\tZelda\n"
        "Monet\tcreated\tWaterLilies\n"
        "MonaLisa\tlocatedIn\tLouvre\n",
        "DaVinci\tartist\nMonet\tartist\nMonaLisa\tpainting\nWaterLilies\tpainting\n"
        "Nintendo\tcompany\nZelda\tgame\nLouvre\tmuseum\n",
    )


def gaussian_blobs(seed, n=200, d=8, separation=10.0, sigma=1.0):
    "two blobs whose centers lie `separation` sigmas apart"
    rng = np.random.default_rng(seed)
    half = n // 2
    center = np.zeros(d)
    center[0] = separation * sigma
    points = np.vstack([rng.normal(0.0, sigma, size=(half, d)),
                        center + rng.normal(0.0, sigma, size=(n - half, d))])
    labels = np.array([0] * half + [1] * (n - half))
    return points, labels


@pytest.fixture
def workdir(tmp_path):
    path = tmp_path / "work"
    path.mkdir()
    return path
