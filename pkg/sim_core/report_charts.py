# ------------------------------------------------------------------------------------
# 📈 report_charts.py – SVG Figures for a Run
#
# ✅ charge_histogram_chart() – single-qubit Δq histograms
# ✅ joint_scatter_chart() – joint Δq scatter per pair with the ±0.1e threshold box
# ✅ exceedance_chart() – joint-error exceedance fractions vs level
# ✅ dropout_chart() – dropout data with the fitted recovery curve
# ✅ scan_heatmap() – p_corr over the λ_trap × f_q grid
# ✅ save_figure() – SVG through kaleido, HTML fallback when static export is unavailable
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from shared.logging_utils import log_warning

CHART_TEMPLATE = "plotly_dark"
THRESHOLD_E = 0.1


def save_figure(fig: go.Figure, path_stem: str | Path) -> Path:
    """Write `<stem>.svg`; falls back to `<stem>.html` with a warning if kaleido is missing."""
    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    svg = stem.with_suffix(".svg")
    try:
        fig.write_image(str(svg), format="svg")
        return svg
    except (ValueError, ImportError, RuntimeError, OSError) as e:
        html = stem.with_suffix(".html")
        fig.write_html(str(html), include_plotlyjs="cdn")
        log_warning(f"static SVG export unavailable ({e}); wrote {html.name}", "report_charts")
        return html


def charge_histogram_chart(hist: pd.DataFrame, title: str = "Single-qubit offset-charge jumps") -> go.Figure:
    """hist: rows of (qubit_id, bin_lo, bin_hi, count) as produced by single_qubit_histogram."""
    fig = go.Figure()
    for qid, g in hist.groupby("qubit_id", sort=True):
        centers = 0.5 * (g["bin_lo"] + g["bin_hi"])
        fig.add_trace(go.Bar(x=centers, y=g["count"], name=str(qid), opacity=0.7))
    for x in (-THRESHOLD_E, THRESHOLD_E):
        fig.add_vline(x=x, line_dash="dash", line_color="gray")
    fig.update_layout(
        title=title,
        xaxis_title="Δq (e)",
        yaxis_title="count",
        yaxis_type="log",
        barmode="overlay",
        template=CHART_TEMPLATE,
    )
    return fig


def joint_scatter_chart(outcomes: pd.DataFrame, a: str, b: str, separation: Optional[float] = None) -> go.Figure:
    """outcomes: the per-event × qubit outcome frame; plots dq_measured of a against b."""
    wide = outcomes.pivot_table(index="event_id", columns="qubit_id", values="dq_measured")
    if a not in wide or b not in wide:
        wide = pd.DataFrame({a: [], b: []})
    fig = go.Figure(go.Scatter(
        x=wide[a], y=wide[b], mode="markers", marker=dict(size=3, opacity=0.5),
        hovertemplate=f'<b>{a}:</b> %{{x:.3f}} e<br><b>{b}:</b> %{{y:.3f}} e<extra></extra>',
    ))
    fig.add_shape(type="rect", x0=-THRESHOLD_E, x1=THRESHOLD_E, y0=-THRESHOLD_E, y1=THRESHOLD_E,
                  line=dict(color="gray", dash="dot"))
    label = f"{a}-{b}" + (f" ({separation:.0f} µm)" if separation else "")
    fig.update_layout(
        title=f"Joint offset-charge jumps {label}",
        xaxis=dict(title=f"Δq {a} (e)", range=[-0.5, 0.5]),
        yaxis=dict(title=f"Δq {b} (e)", range=[-0.5, 0.5], scaleanchor="x"),
        template=CHART_TEMPLATE,
    )
    return fig


def exceedance_chart(table: pd.DataFrame, kind: str = "phase", species: str = "all") -> go.Figure:
    sel = table[(table["kind"] == kind) & (table["species"] == species)]
    fig = go.Figure()
    for pair, g in sel.groupby("pair", sort=False):
        g = g.sort_values("level")
        fig.add_trace(go.Scatter(
            x=g["level"], y=g["fraction"], mode="lines+markers", name=str(pair),
            error_y=dict(type="data", array=g["stderr"], visible=True),
        ))
    name = "phase-flip ε_φ" if kind == "phase" else "bit-flip ε_θ"
    fig.update_layout(
        title=f"Correlated {name} exceedance ({species} events)",
        xaxis=dict(title="error level", type="log"),
        yaxis=dict(title="fraction of events above level"),
        template=CHART_TEMPLATE,
    )
    return fig


def dropout_chart(t: Sequence[float], y: Sequence[float], model: Optional[Sequence[float]] = None,
                  title: str = "T1 dropout after impact") -> go.Figure:
    t_us = np.asarray(t, dtype=float) * 1e6
    fig = go.Figure(go.Scatter(x=t_us, y=y, mode="markers", name="data"))
    if model is not None:
        fig.add_trace(go.Scatter(x=t_us, y=model, mode="lines", name="fit"))
    fig.update_layout(title=title, xaxis_title="time from trigger (µs)", yaxis_title="signal",
                      template=CHART_TEMPLATE)
    return fig


def scan_heatmap(scan: pd.DataFrame, column: str) -> go.Figure:
    grid = scan.pivot_table(index="f_q", columns="lambda_trap", values=column)
    fig = go.Figure(go.Heatmap(
        z=grid.to_numpy(), x=[f"{v:g}" for v in grid.columns], y=[f"{v:g}" for v in grid.index],
        colorscale="Viridis", colorbar=dict(title=column),
    ))
    fig.update_layout(title=f"{column} over the parameter grid", xaxis_title="λ_trap (µm)", yaxis_title="f_q",
                      template=CHART_TEMPLATE)
    return fig
