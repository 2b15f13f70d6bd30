# 📐 Geometry layout checks: default chip, invariants, crystal frame, config round trip

import math

import numpy as np
import pytest

from conftest import SMALL_LAYOUT
from sim_core.errors import GeometryError
from sim_core.geometry_layout import (
    ChipLayout, QubitGeometry, Substrate, crystal_rotation, default_layout, is_mirror_symmetric,
    layout_to_dict, load_layout, pair_separations, sensing_area, separation,
)


# === Default chip ===

def test_default_layout_separations():
    layout = default_layout()
    assert layout.qubit_ids == ["Q1", "Q2", "Q3", "Q4"]
    assert separation(layout, "Q3", "Q4") == pytest.approx(340.0, abs=1e-9)
    assert separation(layout, "Q1", "Q2") == pytest.approx(640.0, abs=1e-9)
    assert separation(layout, "Q1", "Q3") == pytest.approx(3195.0, abs=1e-6)
    assert separation(layout, "Q2", "Q4") == pytest.approx(3195.0, abs=1e-6)


def test_default_layout_constants():
    layout = default_layout()
    s = layout.substrate
    assert (s.side_x, s.side_y, s.thickness_z0) == (6250.0, 6250.0, 375.0)
    assert s.relative_permittivity == 11.7
    assert s.sound_speed_cs == 6.0e3
    assert layout.anchor_fraction_beta == 0.2
    for q in layout.qubits:
        assert q.island_radius_ri == 70.0
        assert q.cavity_radius_ro == 90.5
        assert q.xi == pytest.approx(50.0)


def test_default_layout_is_mirror_symmetric():
    assert is_mirror_symmetric(default_layout())


def test_pair_separations_follow_qubit_order():
    seps = pair_separations(default_layout())
    assert list(seps) == [("Q1", "Q2"), ("Q1", "Q3"), ("Q1", "Q4"), ("Q2", "Q3"), ("Q2", "Q4"), ("Q3", "Q4")]


# === Sensing area ===

def test_sensing_area_measured_qubit():
    q = default_layout().qubit("Q1")
    assert sensing_area(q, 11.7) == pytest.approx(2.328e5, rel=1e-3)


def test_sensing_area_unit_case():
    q = QubitGeometry(id="U", center=(10.0, 10.0), island_radius_ri=1.0, cavity_radius_ro=1.0 + 1e-12)
    assert sensing_area(q, 1.0) == pytest.approx(math.pi)


# === Invariants ===

def test_island_must_fit_inside_cavity():
    with pytest.raises(GeometryError):
        QubitGeometry(id="Q", center=(500.0, 500.0), island_radius_ri=0.0)
    with pytest.raises(GeometryError):
        QubitGeometry(id="Q", center=(500.0, 500.0), island_radius_ri=95.0, cavity_radius_ro=90.5)


def test_transmon_regime_required():
    with pytest.raises(GeometryError):
        QubitGeometry(id="Q", center=(500.0, 500.0), charging_energy_EC=1e9, josephson_energy_EJ=1e9)


def test_substrate_rejects_bad_values():
    with pytest.raises(GeometryError):
        Substrate(side_x=0.0, side_y=100.0, thickness_z0=10.0)
    with pytest.raises(GeometryError):
        Substrate(side_x=100.0, side_y=100.0, thickness_z0=10.0, relative_permittivity=0.5)
    with pytest.raises(GeometryError):
        Substrate(side_x=100.0, side_y=100.0, thickness_z0=10.0, crystal_axis_edge=(1.0, 0.0, 1.0))


def test_overlapping_and_outside_qubits_rejected():
    sub = Substrate(side_x=1000.0, side_y=1000.0, thickness_z0=50.0)
    with pytest.raises(GeometryError):
        ChipLayout(sub, (QubitGeometry("A", (300.0, 500.0)), QubitGeometry("B", (450.0, 500.0))))
    with pytest.raises(GeometryError):
        ChipLayout(sub, (QubitGeometry("A", (50.0, 500.0)),))
    with pytest.raises(GeometryError):
        ChipLayout(sub, (QubitGeometry("A", (300.0, 500.0)), QubitGeometry("A", (700.0, 500.0))))


def test_unknown_qubit_id():
    with pytest.raises(KeyError):
        default_layout().qubit("Q9")


# === Crystal frame ===

def test_crystal_rotation_is_orthonormal():
    rot = crystal_rotation(default_layout().substrate)
    np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(rot) == pytest.approx(1.0)


def test_hundred_valleys_lie_on_chip_diagonals():
    rot = crystal_rotation(default_layout().substrate)
    a = 1 / math.sqrt(2)
    # rows of rot.T are R @ e_i, the crystal axes in chip coordinates
    np.testing.assert_allclose(rot.T[0], [a, -a, 0.0], atol=1e-12)
    np.testing.assert_allclose(rot.T[1], [a, a, 0.0], atol=1e-12)
    np.testing.assert_allclose(rot.T[2], [0.0, 0.0, 1.0], atol=1e-12)


# === Config round trip ===

def test_layout_dict_round_trip():
    layout = load_layout(SMALL_LAYOUT)
    again = load_layout(layout_to_dict(layout))
    assert again.qubit_ids == layout.qubit_ids
    assert again.substrate == layout.substrate
    assert again.qubits == layout.qubits


def test_qubit_defaults_apply_before_own_keys():
    block = dict(SMALL_LAYOUT, qubit_defaults={"island_radius_ri": 60.0})
    block["qubits"] = [{"id": "Q1", "center": [450.0, 600.0], "island_radius_ri": 50.0},
                       {"id": "Q2", "center": [750.0, 600.0]}]
    layout = load_layout(block)
    assert layout.qubit("Q1").island_radius_ri == 50.0
    assert layout.qubit("Q2").island_radius_ri == 60.0


def test_malformed_layout_block():
    with pytest.raises(GeometryError):
        load_layout({"substrate": SMALL_LAYOUT["substrate"]})
