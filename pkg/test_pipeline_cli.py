# 🚀 End-to-end CLI checks on the small two-qubit chip: outputs, manifests, determinism, exit codes

import copy
import hashlib
import json

import numpy as np
import pandas as pd
import pytest
import yaml

from conftest import COARSE_FIELD, SMALL_LAYOUT
from shared.config_manager import config_hash, load_config
from sim_core.burst_runner import MANIFEST_NAME, RESOLVED_CONFIG_NAME, main
from sim_core.qp_recovery import RecoveryParams, dropout_curve

SIMULATE_TABLES = [
    "events.jsonl", "outcomes.csv", "pair_stats.csv", "rates.csv", "single_hist.csv", "joint_hist.csv",
    "species.csv", "exceedance.csv", "thresholds.csv", "nonadiabatic.csv",
]


def _run(command, config, out, cache, *extra) -> int:
    return main([command, "--config", str(config), "--out", str(out), "--cache-dir", str(cache), "--quiet",
                 *map(str, extra)])


def _manifest(out) -> dict:
    with open(out / MANIFEST_NAME, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _result_hashes(out) -> dict:
    return {k: v for k, v in _manifest(out)["files"].items() if k.startswith("results/")}


@pytest.fixture(scope="module")
def module_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "config.yaml"
    data = {
        "layout": copy.deepcopy(SMALL_LAYOUT),
        "field": dict(COARSE_FIELD),
        "run": {"n_events": 30, "seed": 7},
        "scan": {"lambda_trap": [300.0], "f_q": [0.2], "n_events": 30},
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=False)
    return path


@pytest.fixture(scope="module")
def simulated_run(tmp_path_factory, module_config, shared_cache):
    out = tmp_path_factory.mktemp("runs") / "sim"
    assert _run("simulate", module_config, out, shared_cache) == 0
    return out


# === simulate ===

def test_simulate_writes_every_table(simulated_run):
    results = simulated_run / "results"
    for name in SIMULATE_TABLES:
        assert (results / name).exists(), name
    assert not simulated_run.with_name("sim.partial").exists()
    assert (simulated_run.parent / "run_log.csv").exists()


def test_manifest_lists_file_hashes(simulated_run):
    manifest = _manifest(simulated_run)
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 7
    assert len(manifest["manifest_hash"]) == 16
    path = simulated_run / "results" / "outcomes.csv"
    assert manifest["files"]["results/outcomes.csv"] == hashlib.sha256(path.read_bytes()).hexdigest()
    stamped = set(pd.read_csv(path, dtype={"manifest_hash": str})["manifest_hash"])
    assert stamped == {manifest["manifest_hash"]}


def test_run_keeps_its_resolved_config(simulated_run, module_config):
    saved = simulated_run / RESOLVED_CONFIG_NAME
    manifest = _manifest(simulated_run)
    assert RESOLVED_CONFIG_NAME in manifest["files"]
    reloaded = load_config(saved)
    assert config_hash(reloaded) == manifest["config_hash"]
    assert config_hash(reloaded) == config_hash(load_config(module_config))
    assert reloaded.run.seed == 7


def test_outcomes_follow_event_order(simulated_run):
    df = pd.read_csv(simulated_run / "results" / "outcomes.csv")
    assert df["event_id"].tolist() == sorted(df["event_id"].tolist())
    assert set(df["event_id"]) == set(range(30))
    assert df["dq_measured"].between(-0.5, 0.5, inclusive="left").all()
    pairs = pd.read_csv(simulated_run / "results" / "pair_stats.csv")
    assert pairs[["qubit_a", "qubit_b"]].values.tolist() == [["Q1", "Q2"]]
    assert pairs["separation_um"].iloc[0] == pytest.approx(300.0)
    # event mode: one record per event, no coincidence correction
    assert pairs["p_ab"].iloc[0] == pytest.approx(pairs["p_obs_ab"].iloc[0])


def test_simulation_is_reproducible(tmp_path, module_config, shared_cache, simulated_run):
    again = tmp_path / "again"
    assert _run("simulate", module_config, again, shared_cache) == 0
    assert _result_hashes(again) == _result_hashes(simulated_run)


def test_worker_count_does_not_change_results(tmp_path, module_config, shared_cache, simulated_run):
    parallel = tmp_path / "parallel"
    assert _run("simulate", module_config, parallel, shared_cache, "--workers", 2) == 0
    assert _result_hashes(parallel) == _result_hashes(simulated_run)


def test_seed_changes_results(tmp_path, module_config, shared_cache, simulated_run):
    other = tmp_path / "other"
    assert _run("simulate", module_config, other, shared_cache, "--seed", 8) == 0
    assert _manifest(other)["manifest_hash"] != _manifest(simulated_run)["manifest_hash"]
    before = pd.read_csv(simulated_run / "results" / "outcomes.csv")["dq_raw"]
    after = pd.read_csv(other / "results" / "outcomes.csv")["dq_raw"]
    assert not np.array_equal(before.to_numpy(), after.to_numpy())


def test_zero_events_give_empty_tables(tmp_path, module_config, shared_cache):
    out = tmp_path / "empty"
    assert _run("simulate", module_config, out, shared_cache, "--events", 0) == 0
    results = out / "results"
    assert (results / "events.jsonl").read_text() == ""
    outcomes = pd.read_csv(results / "outcomes.csv")
    assert outcomes.empty and "dq_measured" in outcomes.columns
    pairs = pd.read_csv(results / "pair_stats.csv")
    assert pairs.empty and "p_corr" in pairs.columns


def test_time_series_mode(tmp_path, module_config, shared_cache):
    out = tmp_path / "cycles"
    assert _run("simulate", module_config, out, shared_cache, "--time-series") == 0
    pairs = pd.read_csv(out / "results" / "pair_stats.csv")
    events = pd.read_csv(out / "results" / "outcomes.csv")
    last = events["time"].max()
    assert pairs["n_cycles"].iloc[0] == max(1, int(np.ceil(last / 44.0)))


def test_pdf_mode(tmp_path, small_config_file, shared_cache):
    config = small_config_file(transport={"mode": "pdf", "pdf_samples_per_zbin": 10000, "pdf_bins": 21})
    out = tmp_path / "pdf"
    assert _run("simulate", config, out, shared_cache, "--events", 10) == 0
    assert len(pd.read_csv(out / "results" / "outcomes.csv")) == 20


def test_sampled_ramsey_readout_mode(tmp_path, small_config_file, shared_cache):
    config = small_config_file(readout={"mode": "ramsey", "ramsey_shots": 400})
    out = tmp_path / "ramsey"
    assert _run("simulate", config, out, shared_cache, "--events", 10) == 0
    df = pd.read_csv(out / "results" / "outcomes.csv")
    assert len(df) == 20
    gap = df["dq_measured"] - df["dq_aliased"]
    assert (np.abs(gap - np.round(gap)) < 0.05).all()


# === Failures ===

def test_ramsey_settings_outside_unit_range_exit_2(tmp_path, small_config_file, shared_cache):
    config = small_config_file(readout={"mode": "ramsey", "ramsey_contrast": 1.0, "ramsey_offset": 0.6})
    assert _run("simulate", config, tmp_path / "bad_ramsey", shared_cache) == 2


def test_invalid_config_exits_2(tmp_path, small_config_file, shared_cache):
    config = small_config_file(transport={"f_q": 1.5})
    out = tmp_path / "bad"
    assert _run("simulate", config, out, shared_cache) == 2
    assert not out.exists()
    assert not out.with_name("bad.partial").exists()


def test_solver_failure_exits_3(tmp_path, small_config_file, shared_cache):
    config = small_config_file(field={"max_iterations": 1})
    out = tmp_path / "diverged"
    assert _run("solve-field", config, out, shared_cache) == 3
    assert not out.exists()
    assert not out.with_name("diverged.partial").exists()


# === Other subcommands ===

def test_solve_field(tmp_path, module_config, shared_cache):
    out = tmp_path / "field"
    assert _run("solve-field", module_config, out, shared_cache) == 0
    summary = pd.read_csv(out / "results" / "field_summary.csv")
    assert summary["qubit_id"].tolist() == ["Q1", "Q2"]
    assert (summary["residual"] <= COARSE_FIELD["tolerance"]).all()
    assert (summary["n_cells"] == 0).all()


def test_build_pdf(tmp_path, small_config_file, shared_cache):
    config = small_config_file(transport={"pdf_samples_per_zbin": 10000, "pdf_bins": 21})
    out = tmp_path / "pdf_tables"
    assert _run("build-pdf", config, out, shared_cache) == 0
    summary = pd.read_csv(out / "results" / "pdf_summary.csv")
    assert len(summary) == 2 * 6
    assert summary["lost"].between(0, 1).all()
    for species in ("electron", "hole"):
        cells = pd.read_csv(out / "results" / f"charge_pdf_{species}.csv")
        per_layer = cells.groupby("layer")["probability"].sum()
        lost = summary[summary["species"] == species].set_index("layer")["lost"]
        np.testing.assert_allclose(per_layer + lost, 1.0, atol=1e-9)


def test_errors_from_saved_outcomes(tmp_path, module_config, shared_cache, simulated_run):
    out = tmp_path / "errors"
    outcomes = simulated_run / "results" / "outcomes.csv"
    assert _run("errors", module_config, out, shared_cache, "--outcomes", outcomes) == 0
    table = pd.read_csv(out / "results" / "exceedance.csv")
    assert set(table["kind"]) == {"phase", "bit"}
    assert table["fraction"].between(0, 1).all()
    thresholds = pd.read_csv(out / "results" / "thresholds.csv")
    assert thresholds["threshold"].tolist() == pytest.approx([1e-2, 1e-4, 1e-6, 1e-8])


def test_scan_matches_simulate(tmp_path, module_config, shared_cache, simulated_run):
    out = tmp_path / "scan"
    assert _run("scan", module_config, out, shared_cache) == 0
    scan = pd.read_csv(out / "results" / "scan.csv")
    assert len(scan) == 1 and bool(scan["best"].iloc[0])
    pairs = pd.read_csv(simulated_run / "results" / "pair_stats.csv")
    assert scan["p_corr_Q1-Q2_300"].iloc[0] == pytest.approx(pairs["p_corr"].iloc[0], nan_ok=True)


def test_fit_dropout_from_csv(tmp_path, module_config, shared_cache):
    t = np.arange(-1.0e-3, 2.0e-3, 10.0e-6)
    data = pd.DataFrame({"t_s": t, "y": dropout_curve(t, RecoveryParams(tau=100e-6, sigma=200e-6))})
    source = tmp_path / "dropout.csv"
    data.to_csv(source, index=False)
    out = tmp_path / "fit"
    assert _run("fit-dropout", module_config, out, shared_cache, "--input", source, "--signal", "y") == 0
    fit = pd.read_csv(out / "results" / "dropout_fit.csv")
    assert fit["tau_s"].iloc[0] == pytest.approx(100e-6, rel=1e-3)
    assert fit["phonon_dwell_time_s"].iloc[0] > 0
    curve = pd.read_csv(out / "results" / "dropout_curve.csv")
    np.testing.assert_allclose(curve["model"], curve["y"], atol=1e-6)


def test_fit_dropout_missing_column(tmp_path, module_config, shared_cache):
    source = tmp_path / "dropout.csv"
    pd.DataFrame({"t_s": np.linspace(0, 1e-3, 20), "y": np.zeros(20)}).to_csv(source, index=False)
    assert _run("fit-dropout", module_config, tmp_path / "fit", shared_cache,
                "--input", source, "--signal", "p1") == 2


def test_dropout_fixture_and_default_fit(tmp_path, module_config, shared_cache):
    out = tmp_path / "fixture"
    assert _run("dropout-fixture", module_config, out, shared_cache) == 0
    fixture = pd.read_csv(out / "results" / "dropout_fixture.csv")
    assert {"t_s", "p1", "delta_gamma01", "x_qp"} <= set(fixture.columns)
    fit_out = tmp_path / "default_fit"
    assert _run("fit-dropout", module_config, fit_out, shared_cache) == 0
    assert (fit_out / "results" / "dropout_fit.csv").exists()


# === plot ===

def test_plot_writes_figures(tmp_path, module_config, shared_cache, simulated_run):
    assert main(["plot", "--config", str(module_config), "--run", str(simulated_run), "--quiet"]) == 0
    figures = [p for p in (simulated_run / "plots").iterdir() if p.suffix in (".svg", ".html")]
    assert any(p.stem == "single_hist" for p in figures)
    assert any(p.stem == "joint_Q1_Q2" for p in figures)


def test_plot_rejects_foreign_tables(tmp_path, module_config, shared_cache):
    out = tmp_path / "tampered"
    assert _run("simulate", module_config, out, shared_cache) == 0
    path = out / "results" / "pair_stats.csv"
    df = pd.read_csv(path)
    df["manifest_hash"] = "deadbeefdeadbeef"
    df.to_csv(path, index=False)
    assert main(["plot", "--config", str(module_config), "--run", str(out), "--quiet"]) == 1


def test_plot_rejects_partly_foreign_tables(tmp_path, module_config, shared_cache):
    out = tmp_path / "spliced"
    assert _run("simulate", module_config, out, shared_cache) == 0
    path = out / "results" / "outcomes.csv"
    df = pd.read_csv(path, dtype={"manifest_hash": str})
    df.loc[0, "manifest_hash"] = "deadbeefdeadbeef"
    df.to_csv(path, index=False)
    assert main(["plot", "--config", str(module_config), "--run", str(out), "--quiet"]) == 1
