# ⚠️ Error model checks: charge dispersion, phase flips, dipole transients, thresholds, exceedance

import math

import numpy as np
import pytest

from sim_core.error_model import (
    ErrorReport, TransmonParams, charge_dispersion, combine_rotations, deposited_energy_ec,
    dipole_transient_error, exceedance_curves, fault_threshold, joint_error, nonadiabatic_surface,
    phase_flip_error, rotation_angle, threshold_table,
)
from sim_core.errors import ConfigError, StatisticsError
from sim_core.event_source import ImpactEvent
from sim_core.induced_charge import EventOutcome
from sim_core.run_monitor import RunMonitor

C_S = 6.0e3


# === Phase flips ===

def test_charge_dispersion_of_measured_qubit():
    disp = charge_dispersion(TransmonParams())
    assert disp / (2 * math.pi) == pytest.approx(6.0e3, rel=0.02)


def test_dispersion_falls_with_xi():
    assert charge_dispersion(TransmonParams(E_J=20e9)) < charge_dispersion(TransmonParams())


def test_phase_flip_shape():
    disp = charge_dispersion(TransmonParams())
    dq = np.linspace(-3, 3, 121)
    eps = phase_flip_error(dq, disp, 1e-6)
    np.testing.assert_allclose(eps, phase_flip_error(-dq, disp, 1e-6), atol=1e-18)
    np.testing.assert_allclose(phase_flip_error(dq + 2.0, disp, 1e-6), eps, atol=1e-15)
    peak = phase_flip_error(1.0, disp, 1e-6)
    assert peak == pytest.approx((disp * 1e-6) ** 2 / 3)
    assert eps.max() == pytest.approx(peak)
    assert phase_flip_error(0.0, disp, 1e-6) == 0.0


def test_phase_flip_is_clipped():
    assert phase_flip_error(1.0, 1.0e7, 1.0) == 1.0
    with pytest.raises(ValueError):
        phase_flip_error(0.5, 1.0, 0.0)


# === Dipole transients ===

def test_energy_matches_rotation_angle():
    params = TransmonParams()
    n, g, cos_eta = 5000.0, 2.0e4, 0.6
    theta = rotation_angle(n, g, cos_eta, params, C_S)
    energy = deposited_energy_ec(n, g, cos_eta, params, C_S)
    assert energy == pytest.approx(theta ** 2 * params.w01 / (4 * params.ec_angular))


def test_rotation_combination():
    assert combine_rotations(np.array([0.3, -0.4]), "signed") == pytest.approx(-0.1)
    assert combine_rotations(np.array([0.3, -0.4]), "quadrature") == pytest.approx(0.5)


def _deposit_under(center, z: float, n_seg: int = 2) -> ImpactEvent:
    p = np.tile([center[0], center[1], z], (n_seg, 1))
    return ImpactEvent("muon", p, p.copy(), np.full(n_seg, 1.0e4))


def test_no_pairs_no_rotation(small_grids, small_layout, rng):
    event = _deposit_under(small_layout.qubit("Q1").center, 40.0)
    theta, eps, energy = dipole_transient_error(event, [0.0, 0.0], small_grids["Q1"], TransmonParams(), C_S, rng)
    assert (theta, eps, energy) == (0.0, 0.0, 0.0)


def test_dipole_error_is_bounded(small_grids, small_layout, rng):
    params = TransmonParams(eps_theta_cap=0.5)
    event = _deposit_under(small_layout.qubit("Q1").center, 40.0)
    for counts in ([1.0e3, 1.0e3], [1.0e12, 1.0e12]):
        theta, eps, energy = dipole_transient_error(event, counts, small_grids["Q1"], params, C_S, rng)
        assert 0.0 <= eps <= 0.5
        assert energy >= 0.0
        assert eps == pytest.approx(min(theta ** 2 / 6, 0.5))


def test_dipole_error_needs_one_count_per_segment(small_grids, small_layout, rng):
    event = _deposit_under(small_layout.qubit("Q1").center, 40.0)
    with pytest.raises(ValueError):
        dipole_transient_error(event, [1.0], small_grids["Q1"], TransmonParams(), C_S, rng)


def test_wall_deposits_are_counted(small_grids, small_layout, rng):
    grid = small_grids["Q1"]
    lo = grid.origin
    event = _deposit_under((lo[0] + 0.5 * grid.spacing[0], lo[1] + 20.0), 30.0, n_seg=1)
    monitor = RunMonitor()
    theta, _, _ = dipole_transient_error(event, [1.0e4], grid, TransmonParams(), C_S, rng, monitor=monitor)
    assert theta == 0.0
    assert monitor.count("error_model", "dipole_deposit_skipped") == 1


# === Nonadiabatic surface ===

def test_nonadiabatic_region_empty_for_measured_device(small_grids):
    assert nonadiabatic_surface(small_grids["Q1"], TransmonParams(), C_S).is_empty


def test_nonadiabatic_region_stays_in_substrate(small_grids):
    grid = small_grids["Q1"]
    region = nonadiabatic_surface(grid, TransmonParams(E_C=250.0e12, E_J=12.5e15), C_S)
    assert not region.is_empty
    assert region.indices()[:, 2].max() <= grid.surface_index
    assert region.volume == pytest.approx(region.n_cells * np.prod(grid.spacing))


# === Thresholds ===

def test_fault_threshold_powers():
    assert fault_threshold(1e-2, 2) == pytest.approx(1e-4)
    assert fault_threshold(1e-2, 3) == pytest.approx(1e-6)
    table = threshold_table(1e-2, [1, 2, 3, 4])
    assert table["threshold"].tolist() == pytest.approx([1e-2, 1e-4, 1e-6, 1e-8])


@pytest.mark.parametrize("p, m", [(1.0, 2), (0.0, 2), (0.01, 0), (0.01, 1.5)])
def test_fault_threshold_rejects(p, m):
    with pytest.raises(ValueError):
        fault_threshold(p, m)


def test_invalid_transmon():
    with pytest.raises(ConfigError):
        TransmonParams(E_C=1e9, E_J=1e9)
    with pytest.raises(ConfigError):
        TransmonParams(theta_combination="sum")


# === Exceedance ===

def _outcome(eid: int, species: str, eps_phi) -> EventOutcome:
    zeros = np.zeros(2)
    return EventOutcome(eid, ("A", "B"), zeros, zeros, zeros, eps_phi=eps_phi, species=species)


OUTCOMES = [
    _outcome(0, "gamma", [2e-4, 3e-4]),
    _outcome(1, "gamma", [5e-5, 1e-3]),
    _outcome(2, "muon", [1e-3, 1e-3]),
    _outcome(3, "muon", [2e-4, 2e-4]),
]


def test_exceedance_fractions():
    report = exceedance_curves(OUTCOMES, {("A", "B"): 340.0}, levels=[1e-4, 5e-4])
    assert isinstance(report, ErrorReport)
    assert report.n_events == 4
    assert report.fraction("phase", "A-B", 1e-4) == pytest.approx(0.75)
    assert report.fraction("phase", "A-B", 1e-4, "gamma") == pytest.approx(0.5)
    assert report.fraction("phase", "A-B", 1e-4, "muon") == pytest.approx(1.0)
    assert report.fraction("phase", "A-B", 5e-4) == pytest.approx(0.25)
    assert report.fraction("bit", "A-B", 1e-4) == 0.0


def test_geometric_mean_rule():
    report = exceedance_curves(OUTCOMES, {("A", "B"): 340.0}, levels=[1e-4], joint_rule="geometric_mean")
    assert report.fraction("phase", "A-B", 1e-4, "gamma") == pytest.approx(1.0)
    np.testing.assert_allclose(joint_error(np.array([4.0]), np.array([1.0]), "geometric_mean"), [2.0])


def test_exceedance_errors():
    report = exceedance_curves(OUTCOMES, {("A", "B"): 340.0}, levels=[1e-4])
    with pytest.raises(KeyError):
        report.fraction("phase", "A-B", 0.3)
    with pytest.raises(StatisticsError):
        exceedance_curves([], {("A", "B"): 340.0}, levels=[1e-4])


# === Reference values ===

def test_phase_flip_at_six_khz():
    assert phase_flip_error(1.0, 2 * math.pi * 6000.0, 1e-6) == pytest.approx(4.7e-4, rel=0.01)


def test_rotation_angle_reference_deposit():
    expected = 2 * 100.0 * 6.0e3 * 1.0e3 * math.sqrt(2 * math.pi * 250.0e6 / (2 * math.pi * 5.0e9) ** 3)
    assert rotation_angle(1.0e4, 1.0e3, 1.0, TransmonParams(), C_S) == pytest.approx(expected, rel=1e-12)
    assert rotation_angle(1.0e4, 1.0e3, 0.0, TransmonParams(), C_S) == 0.0


def test_orientation_average_is_one_third(rng):
    params = TransmonParams()
    cos_eta = rng.uniform(-1.0, 1.0, 200_000)
    mean = deposited_energy_ec(1.0e4, 1.0e3, cos_eta, params, C_S).mean()
    aligned = deposited_energy_ec(1.0e4, 1.0e3, 1.0, params, C_S)
    assert mean == pytest.approx(aligned / 3, rel=0.01)
