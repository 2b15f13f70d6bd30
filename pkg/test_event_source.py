# ☢️ Event source checks: spectra, muon chords, Poisson streams, replay files, rate bookkeeping

import math

import numpy as np
import pytest
from scipy import stats

from sim_core.errors import ConfigError, StatisticsError
from sim_core.event_source import (
    GammaSpectrum, ImpactEvent, SourceSpec, generate_event, infer_impact_rate, read_events_jsonl,
    sample_event_stream, sample_gamma, sample_muon, sample_zenith_cosine, schedule_events,
    species_fractions, split_jump_rate, write_events_jsonl,
)
from sim_core.geometry_layout import Substrate, default_layout

SUBSTRATE = default_layout().substrate


# === Gamma spectrum ===

def test_default_spectrum_mean_is_100_kev(rng):
    spectrum = GammaSpectrum()
    samples = spectrum.sample(rng, 100_000)
    assert samples.max() <= spectrum.max_eV
    assert samples.mean() == pytest.approx(100.0e3, rel=0.05)
    assert samples.mean() == pytest.approx(spectrum.mean(), rel=0.02)


def test_delta_spectrum(rng):
    spectrum = GammaSpectrum(kind="delta", mean_eV=3.6)
    assert spectrum.sample(rng) == 3.6
    assert spectrum.mean() == 3.6


def test_table_spectrum_from_file(tmp_path, rng):
    path = tmp_path / "spectrum.txt"
    path.write_text("# energy_eV, density\n0, 1\n1000, 1\n")
    spectrum = GammaSpectrum.from_table(path)
    samples = spectrum.sample(rng, 20_000)
    assert samples.min() >= 0 and samples.max() <= 1000
    assert spectrum.mean() == pytest.approx(500.0)
    assert stats.kstest(samples, "uniform", args=(0, 1000)).pvalue > 0.01


def test_bad_table_rejected(tmp_path):
    with pytest.raises(ConfigError):
        GammaSpectrum(kind="table", energies=(10.0, 5.0), density=(1.0, 1.0))
    with pytest.raises(ConfigError):
        GammaSpectrum.from_table(tmp_path / "missing.txt")


# === Gamma deposits ===

def test_gamma_is_point_like_inside_substrate(rng):
    spec = SourceSpec()
    for _ in range(200):
        ev = sample_gamma(spec, SUBSTRATE, rng)
        assert ev.species == "gamma"
        np.testing.assert_array_equal(ev.starts, ev.ends)
        assert SUBSTRATE.contains(ev.starts).all()


def test_gamma_segment_stays_inside(rng):
    spec = SourceSpec(gamma_segment_length=40.0)
    for _ in range(200):
        ev = sample_gamma(spec, SUBSTRATE, rng)
        assert SUBSTRATE.contains(np.vstack([ev.starts, ev.ends])).all()
        assert ev.track_length <= 40.0 + 1e-9


# === Muons ===

def test_zenith_law_matches_cos_squared(rng):
    c = sample_zenith_cosine(2.0, rng, 100_000)
    assert stats.kstest(c, lambda x: np.clip(x, 0, 1) ** 3).pvalue > 0.01


def test_vertical_muon_deposit():
    spec = SourceSpec(muon_zenith_exponent=math.inf, muon_dEdx_mean=387.0, muon_dEdx_sigma=0.0)
    ev = sample_muon(spec, SUBSTRATE, np.random.default_rng(5))
    assert ev.track_length == pytest.approx(375.0)
    assert ev.total_energy == pytest.approx(375.0 * 387.0)
    assert len(ev.energies) == math.ceil(375.0 / 25.0)


def test_muon_segments_are_short_and_inside(rng):
    spec = SourceSpec()
    for _ in range(100):
        ev = sample_muon(spec, SUBSTRATE, rng)
        lengths = np.linalg.norm(ev.ends - ev.starts, axis=1)
        assert lengths.max() <= spec.muon_segment_max + 1e-9
        assert ev.track_length >= 1.0
        assert SUBSTRATE.contains(np.vstack([ev.starts, ev.ends])).all()
        assert ev.total_energy == pytest.approx(ev.energies.sum())


def test_mean_muon_deposit_is_460_kev():
    spec = SourceSpec()
    rng = np.random.default_rng(11)
    totals = np.array([sample_muon(spec, SUBSTRATE, rng).total_energy for _ in range(5000)])
    assert totals.mean() == pytest.approx(460.0e3, rel=0.10)


# === Determinism ===

def test_generate_event_is_reproducible():
    spec = SourceSpec()
    a = generate_event(spec, SUBSTRATE, "muon", 42, seed=9)
    b = generate_event(spec, SUBSTRATE, "muon", 42, seed=9)
    c = generate_event(spec, SUBSTRATE, "muon", 43, seed=9)
    np.testing.assert_array_equal(a.starts, b.starts)
    np.testing.assert_array_equal(a.energies, b.energies)
    assert not np.array_equal(a.starts[0], c.starts[0])
    assert a.event_id == 42


# === Streams ===

def test_species_mix_follows_rates():
    schedule = schedule_events(SourceSpec(), n_events=20_000, seed=3)
    gamma = sum(1 for _, sp, _ in schedule if sp == "gamma") / len(schedule)
    assert gamma == pytest.approx(19.8 / 20.3, abs=0.01)
    times = [t for _, _, t in schedule]
    assert all(b > a for a, b in zip(times, times[1:]))
    assert [eid for eid, _, _ in schedule] == list(range(20_000))


def test_duration_mode():
    schedule = schedule_events(SourceSpec(), duration=36_000.0, seed=4)
    expected = 20.3e-3 * 36_000.0
    assert abs(len(schedule) - expected) < 5 * math.sqrt(expected)
    assert all(0 <= t < 36_000.0 for _, _, t in schedule)
    assert schedule_events(SourceSpec(), duration=0.0) == []
    assert schedule_events(SourceSpec(gamma_rate=0.0, muon_rate=0.0), duration=100.0) == []


def test_zero_rates_with_event_count():
    with pytest.raises(ConfigError):
        schedule_events(SourceSpec(gamma_rate=0.0, muon_rate=0.0), n_events=5)
    assert schedule_events(SourceSpec(), n_events=0) == []


def test_event_stream_is_time_ordered():
    sub = Substrate(side_x=500.0, side_y=500.0, thickness_z0=50.0)
    events = sample_event_stream(SourceSpec(muon_rate=5e-3), sub, n_events=50, seed=2)
    assert [e.time for e in events] == sorted(e.time for e in events)
    assert sum(species_fractions(events).values()) == pytest.approx(1.0)


def test_invalid_source_spec():
    with pytest.raises(ConfigError):
        SourceSpec(gamma_rate=-1.0)
    with pytest.raises(ConfigError):
        SourceSpec(muon_dEdx_mean=0.0)


# === Replay ===

def test_jsonl_replay(tmp_path):
    sub = Substrate(side_x=500.0, side_y=500.0, thickness_z0=50.0)
    events = sample_event_stream(SourceSpec(muon_rate=5e-3), sub, n_events=10, seed=6)
    path = write_events_jsonl(events, tmp_path / "events.jsonl")
    again = read_events_jsonl(path)
    assert [e.event_id for e in again] == [e.event_id for e in events]
    for a, b in zip(events, again):
        assert a.species == b.species
        np.testing.assert_array_equal(a.starts, b.starts)
        np.testing.assert_array_equal(a.energies, b.energies)


def test_malformed_replay_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"species": "gamma"}\n')
    with pytest.raises(ConfigError):
        read_events_jsonl(path)


def test_event_invariants():
    with pytest.raises(ValueError):
        ImpactEvent("gamma", np.zeros((1, 3)), np.zeros((1, 3)), np.array([0.0]))
    with pytest.raises(ValueError):
        ImpactEvent("neutron", np.zeros((1, 3)), np.zeros((1, 3)), np.array([1.0]))


# === Rate bookkeeping ===

def test_infer_impact_rate():
    assert infer_impact_rate(1.27e-3, 0.06) == pytest.approx(21.17e-3, rel=1e-3)
    with pytest.raises(StatisticsError):
        infer_impact_rate(1.0e-3, 0.0)


def test_split_jump_rate():
    assert split_jump_rate(1.35e-3, 0.5e-3, 0.16) == pytest.approx(1.27e-3)
    assert split_jump_rate(1.0e-4, 0.5e-3, 0.5) == 0.0
