# 🐢 Full-chip acceptance checks against the measured targets (run with --runslow)

import os

import numpy as np
import pytest
from scipy import stats

from shared.config_manager import load_config
from sim_core.burst_runner import analyse_outcomes, build_setup, event_schedule, load_pdfs, simulate_events
from sim_core.burst_statistics import asymmetry_1324, charge_asymmetry
from sim_core.geometry_layout import default_layout
from sim_core.qp_recovery import RecoveryParams, phonon_dwell_time
from sim_core.weighting_field import solve_all

pytestmark = pytest.mark.slow

N_EVENTS = 20_000


def _overrides(cache_dir, mode: str = "direct") -> dict:
    return {
        "run": {"n_events": N_EVENTS, "seed": 11, "workers": max(1, (os.cpu_count() or 1) - 1),
                "cache_dir": str(cache_dir)},
        "transport": {"lambda_trap": 300.0, "f_q": 0.2, "mode": mode},
    }


@pytest.fixture(scope="module")
def field_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("field_cache")


@pytest.fixture(scope="module")
def direct_pipeline(field_cache):
    setup = build_setup(load_config(overrides=_overrides(field_cache)))
    grids = solve_all(setup.layout, setup.grid_spec, setup.cache_dir)
    schedule = event_schedule(setup)
    _, outcomes, _ = simulate_events(setup, schedule, grids, workers=setup.config.run.workers)
    return setup, grids, schedule, outcomes


@pytest.fixture(scope="module")
def default_run(direct_pipeline):
    setup, _, schedule, outcomes = direct_pipeline
    return analyse_outcomes(setup, outcomes, float(schedule[-1][2]))


def _pair(result, a, b):
    df = result["tables"]["pair_stats"]
    return df[(df["qubit_a"] == a) & (df["qubit_b"] == b)].iloc[0]


def _exceeds(result, kind, pair, level, species):
    t = result["tables"]["exceedance"]
    row = t[(t["kind"] == kind) & (t["pair"] == pair) & (t["species"] == species) & np.isclose(t["level"], level)]
    return float(row["fraction"].iloc[0])


# === Correlated jumps ===

@pytest.mark.parametrize("a, b, target, tol", [("Q3", "Q4", 0.54, 0.10), ("Q1", "Q2", 0.46, 0.10),
                                               ("Q1", "Q3", 0.00, 0.02)])
def test_correlation_against_separation(default_run, a, b, target, tol):
    assert _pair(default_run, a, b)["p_corr"] == pytest.approx(target, abs=tol)


def test_sign_asymmetries(default_run):
    records = default_run["records"]
    assert charge_asymmetry(records).value > 0.5
    assert asymmetry_1324(records, "Q3", "Q4").value > 0


# === Correlated errors ===

@pytest.mark.parametrize("pair, target", [("Q3-Q4", 0.11), ("Q1-Q2", 0.097)])
def test_gamma_phase_flip_exceedance(default_run, pair, target):
    assert _exceeds(default_run, "phase", pair, 1.0e-6, "gamma") == pytest.approx(target, abs=0.03)


def test_muon_phase_flip_exceedance_far_pair(default_run):
    assert _exceeds(default_run, "phase", "Q1-Q3", 1.0e-6, "muon") == pytest.approx(0.072, abs=0.02)


@pytest.mark.parametrize("pair, target", [("Q3-Q4", 0.012), ("Q1-Q2", 0.007)])
def test_gamma_bit_flip_exceedance(default_run, pair, target):
    assert _exceeds(default_run, "bit", pair, 1.0e-8, "gamma") == pytest.approx(target, abs=0.005)


# === Recovery ===

def test_phonon_dwell_time_is_near_recovery_time():
    dwell = phonon_dwell_time(default_layout())
    tau = RecoveryParams().tau
    assert tau / 2 <= dwell <= 2 * tau


# === Charge PDF equivalence ===

def test_pdf_transport_matches_direct_transport(direct_pipeline, field_cache):
    setup, grids, schedule, direct = direct_pipeline
    pdf_setup = build_setup(load_config(overrides=_overrides(field_cache, mode="pdf")))
    _, tabled, _ = simulate_events(pdf_setup, schedule, grids, load_pdfs(pdf_setup),
                                   workers=pdf_setup.config.run.workers)
    for i, qid in enumerate(setup.qubit_ids):
        a = np.array([o.dq_raw[i] for o in direct])
        b = np.array([o.dq_raw[i] for o in tabled])
        assert stats.ks_2samp(a, b).pvalue > 0.01, qid
