import os
import pathlib

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def fixture_dir():
    return pathlib.Path(os.environ.get("MCP_FIXTURE_DIR", pathlib.Path(__file__).parents[2] / "fixtures"))


@pytest.fixture
def cli():
    path = os.environ.get("MCP_TTA_BIN")
    if not path:
        pytest.skip("MCP_TTA_BIN not set")
    return path


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)
