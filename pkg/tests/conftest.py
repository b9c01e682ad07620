from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import pytest
import yaml

from chemolab.grid import Grid
from chemolab.model import ModelParams

from .constants import EXTINCTION_PARAMS, PERSISTENCE_PARAMS, SMALL_N_X


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid_1d():
    return Grid(n_x=SMALL_N_X)


@pytest.fixture
def grid_2d():
    return Grid(n_x=12, n_y=10, length_x=2.0, length_y=1.5, dim=2)


@pytest.fixture
def extinction_params():
    return ModelParams(**EXTINCTION_PARAMS)


@pytest.fixture
def persistence_params():
    return ModelParams(**PERSISTENCE_PARAMS)


@pytest.fixture
def write_config(tmp_path: Path):
    """
    Write a versioned config document and return its path

    Usage::

        def test_load(write_config):
            path = write_config({"params": {"r": 2}}, name="run.json")
    """

    def factory(data: dict[str, Any], name: str = "config.json") -> Path:
        path = tmp_path / name
        document = {"version": 1, **data}
        if path.suffix == ".json":
            path.write_text(json.dumps(document))
        else:
            path.write_text(yaml.safe_dump(document))
        return path

    return factory
