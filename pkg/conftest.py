# ------------------------------------------------------------------------------------
# 🧪 conftest.py – Shared Test Fixtures
#
# ✅ --runslow – opt-in switch for the full-pipeline acceptance checks
# ✅ small_layout / coarse_spec / small_grids – a two-qubit 1.2 mm chip that solves in seconds
# ✅ small_config_file – YAML config for CLI runs on the small chip
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

import copy

import numpy as np
import pytest
import yaml

from sim_core.geometry_layout import load_layout
from sim_core.weighting_field import GridSpec, solve_all

SMALL_LAYOUT = {
    "substrate": {"side_x": 1200.0, "side_y": 1200.0, "thickness_z0": 60.0},
    "anchor_fraction_beta": 0.2,
    "qubits": [
        {"id": "Q1", "center": [450.0, 600.0]},
        {"id": "Q2", "center": [750.0, 600.0]},
    ],
}

COARSE_FIELD = {
    "spacing_xy": 5.0,
    "spacing_z": 10.0,
    "half_width": 150.0,
    "cap_height": 60.0,
    "tolerance": 1.0e-5,
    "max_iterations": 20000,
    "omega": 1.8,
    "coarse_levels": 1,
    "check_every": 25,
    "lateral_boundary": "grounded",
}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the full-pipeline acceptance checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-pipeline acceptance check, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def small_layout():
    return load_layout(SMALL_LAYOUT)


@pytest.fixture(scope="session")
def coarse_spec():
    return GridSpec(**COARSE_FIELD)


@pytest.fixture(scope="session")
def small_grids(small_layout, coarse_spec):
    return solve_all(small_layout, coarse_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def shared_cache(tmp_path_factory):
    """One cache for every CLI test so the small fields are solved once."""
    return tmp_path_factory.mktemp("cache")


@pytest.fixture
def small_config_file(tmp_path):
    """Write a config for the small chip; extra blocks are deep-merged by the loader."""
    def _write(**blocks):
        data = {
            "layout": copy.deepcopy(SMALL_LAYOUT),
            "field": dict(COARSE_FIELD),
            "run": {"n_events": 30, "seed": 7},
            "scan": {"lambda_trap": [300.0], "f_q": [0.2], "n_events": 30},
        }
        for name, block in blocks.items():
            if isinstance(block, dict) and isinstance(data.get(name), dict):
                data[name].update(block)
            else:
                data[name] = block
        path = tmp_path / "config.yaml"
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(data, fh, sort_keys=False)
        return path
    return _write
