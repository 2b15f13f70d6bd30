# 📈 Report output checks: figures, export fallback, result tables, run log, run paths

import numpy as np
import pandas as pd
import plotly.graph_objects as go
import pytest

from shared.settings import get_cache_dir, get_run_paths
from sim_core.errors import ManifestMismatchError
from sim_core.outcome_log import log_run, read_table, table_manifest_hash, write_table
from sim_core.report_charts import (
    charge_histogram_chart, dropout_chart, exceedance_chart, joint_scatter_chart, save_figure, scan_heatmap,
)


def _outcome_frame():
    rows = []
    for eid, (a, b) in enumerate([(0.2, 0.15), (-0.3, -0.2), (0.01, 0.4)]):
        rows += [{"event_id": eid, "qubit_id": "Q1", "dq_measured": a},
                 {"event_id": eid, "qubit_id": "Q2", "dq_measured": b}]
    return pd.DataFrame(rows)


# === Figures ===

def test_charge_histogram_has_one_trace_per_qubit():
    hist = pd.DataFrame({"qubit_id": ["Q1", "Q1", "Q2"], "bin_lo": [0.0, 0.1, 0.0],
                         "bin_hi": [0.1, 0.2, 0.1], "count": [3, 1, 2]})
    fig = charge_histogram_chart(hist)
    assert [t.name for t in fig.data] == ["Q1", "Q2"]


def test_joint_scatter():
    fig = joint_scatter_chart(_outcome_frame(), "Q1", "Q2", separation=340.0)
    assert len(fig.data[0].x) == 3
    assert "340" in fig.layout.title.text
    empty = joint_scatter_chart(_outcome_frame(), "Q1", "Q9")
    assert len(empty.data[0].x) == 0


def test_exceedance_chart_filters_kind_and_species():
    table = pd.DataFrame({
        "kind": ["phase", "phase", "bit"], "pair": ["Q1-Q2"] * 3, "species": ["all", "muon", "all"],
        "level": [1e-6, 1e-6, 1e-6], "fraction": [0.1, 0.3, 0.0], "stderr": [0.01, 0.02, 0.0],
    })
    fig = exceedance_chart(table, "phase", "all")
    assert len(fig.data) == 1
    assert list(fig.data[0].y) == [0.1]


def test_dropout_and_scan_charts():
    t = np.linspace(-1e-3, 2e-3, 5)
    fig = dropout_chart(t, np.zeros(5), model=np.ones(5))
    assert len(fig.data) == 2
    np.testing.assert_allclose(fig.data[0].x, t * 1e6)
    scan = pd.DataFrame({"lambda_trap": [100.0, 300.0], "f_q": [0.2, 0.2], "score": [3.0, 1.0]})
    heat = scan_heatmap(scan, "score")
    assert np.asarray(heat.data[0].z).shape == (1, 2)


def test_save_figure_falls_back_to_html(tmp_path, monkeypatch):
    def no_static_export(self, *args, **kwargs):
        raise ValueError("kaleido missing")

    monkeypatch.setattr(go.Figure, "write_image", no_static_export)
    path = save_figure(go.Figure(), tmp_path / "plots" / "chart")
    assert path.suffix == ".html"
    assert path.exists()


# === Result tables ===

def test_write_table_stamps_manifest_hash(tmp_path):
    df = pd.DataFrame({"x": [0.1, 1 / 3]})
    path = write_table(df, tmp_path / "t.csv", manifest_hash="abcd1234")
    assert "manifest_hash" not in df.columns
    back = read_table(path)
    assert back["x"].tolist() == [0.1, 1 / 3]
    assert table_manifest_hash(path) == "abcd1234"


def test_table_without_hash(tmp_path):
    path = write_table(pd.DataFrame({"x": [1]}), tmp_path / "t.csv")
    assert table_manifest_hash(path) is None


def test_table_with_mixed_stamps_is_rejected(tmp_path):
    path = tmp_path / "t.csv"
    first = pd.DataFrame({"x": [1, 2], "manifest_hash": ["abcd1234", "abcd1234"]})
    second = pd.DataFrame({"x": [3], "manifest_hash": ["ffff0000"]})
    pd.concat([first, second]).to_csv(path, index=False)
    with pytest.raises(ManifestMismatchError):
        table_manifest_hash(path)


def test_log_run_appends_rows(tmp_path):
    log = tmp_path / "run_log.csv"
    log_run(log, {"command": "simulate", "n_events": 10})
    log_run(log, {"command": "simulate", "n_events": 20})
    log_run(log, {"command": "scan", "n_events": 5, "rows": 4})
    df = pd.read_csv(log)
    assert df["n_events"].tolist() == [10, 20, 5]
    assert "rows" in df.columns


# === Paths ===

def test_run_paths_and_cache_dir(tmp_path, monkeypatch):
    paths = get_run_paths(tmp_path / "run")
    assert all(p.is_dir() for p in paths.values())
    assert paths["results"] == tmp_path / "run" / "results"
    monkeypatch.setenv("BURST_SIM_CACHE_DIR", str(tmp_path / "cache"))
    assert get_cache_dir() == tmp_path / "cache"
    assert get_cache_dir(tmp_path / "explicit") == tmp_path / "explicit"
