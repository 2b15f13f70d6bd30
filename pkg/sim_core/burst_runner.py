# ------------------------------------------------------------------------------------
# 🚀 burst_runner.py – Command-Line Pipeline (layout → α → events → charge → statistics → errors)
#
# ✅ build_setup() – domain objects from a validated SimulationConfig
# ✅ simulate_events() – event-parallel pipeline, records re-ordered by event_id
# ✅ analyse_outcomes() – jumps, pair stats, rates, histograms, exceedance tables
# ✅ RunDirectory – staged output directory, removed on failure, promoted on success
# ✅ write_manifest() – config hash, seed, versions, wall time, monitor summary, file SHA-256s
# ✅ Subcommands: solve-field, build-pdf, simulate, scan, errors, fit-dropout, dropout-fixture, plot
#
# Exit codes: 0 success, 1 other simulator error, 2 config error, 3 numerical failure
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import argparse
import hashlib
import json
import multiprocessing
import platform
import shutil
import sys
import time
from dataclasses import dataclass, replace
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from data_files.config import MEASURED_TARGETS
from shared.config_manager import ConfigManager, SimulationConfig, config_hash, load_config
from shared.logging_utils import (
    close_logger, log_error, log_event_summary, log_info, log_success, setup_logger,
)
from shared.settings import get_cache_dir, get_run_paths
from sim_core import report_charts
from sim_core.burst_statistics import (
    all_pair_stats, bin_into_cycles, charge_asymmetry, asymmetry_1324, detect_jumps, jump_mask,
    joint_histogram, parameter_scan, rates_report, single_qubit_histogram,
)
from sim_core.charge_transport import (
    TransportParams, create_pairs, dump_pdf_csv, load_or_build_pdf, transport, transport_with_pdf,
)
from sim_core.error_model import (
    TransmonParams, charge_dispersion, dipole_transient_error, exceedance_curves, nonadiabatic_surface,
    phase_flip_error, threshold_table,
)
from sim_core.errors import (
    BurstSimError, ConfigError, GeometryError, ManifestMismatchError, StatisticsError,
)
from sim_core.event_source import (
    ImpactEvent, SourceSpec, generate_event, infer_impact_rate, schedule_events, write_events_jsonl,
)
from sim_core.geometry_layout import ChipLayout, load_layout, pair_separations
from sim_core.induced_charge import (
    EventOutcome, RamseyReadout, induced_charges, outcome_from_charges, read_outcomes_csv, write_outcomes_csv,
)
from sim_core.outcome_log import log_run, read_table, table_manifest_hash, write_table
from sim_core.qp_recovery import (
    RecoveryParams, dropout_curve, emulate_dropout_experiment, fit_dropout, phonon_dwell_time,
    quasiparticle_density,
)
from sim_core.rng_streams import (
    STREAM_CYCLES, STREAM_DIPOLE, STREAM_DROPOUT, STREAM_NOISE, STREAM_PAIRS, STREAM_TRANSPORT, event_rng,
)
from sim_core.run_monitor import RunMonitor
from sim_core.weighting_field import GridSpec, WeightingGrid, solve_all

MANIFEST_NAME = "run_manifest.json"
RESOLVED_CONFIG_NAME = "config_resolved.yaml"
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "plotly", "pydantic", "PyYAML", "tqdm")

PAIR_COLUMNS = [
    "qubit_a", "qubit_b", "separation_um", "p_obs_a", "p_obs_b", "p_obs_ab", "p_ab", "p_corr",
    "asym_1324", "n_cycles", "n_joint", "n_q1", "n_q2", "n_q3", "n_q4",
]
RATE_COLUMNS = ["kind", "name", "count", "p_obs", "rate_hz", "rate_err_hz", "rate_upper_hz"]
HIST_COLUMNS = ["qubit_id", "bin_lo", "bin_hi", "count"]
JOINT_COLUMNS = ["qubit_a", "qubit_b", "dq_a_lo", "dq_b_lo", "count"]
EXCEEDANCE_COLUMNS = ["kind", "pair", "separation_um", "species", "level", "fraction", "stderr", "n_events"]
SPECIES_COLUMNS = ["species", "n_events", "above_threshold_fraction", "implied_impact_rate_hz"]


# === Setup ===

@dataclass
class SimulationSetup:
    config: SimulationConfig
    layout: ChipLayout
    source: SourceSpec
    transport: TransportParams
    grid_spec: GridSpec
    transmon: TransmonParams
    recovery: RecoveryParams
    cache_dir: Path

    @property
    def seed(self) -> int:
        return self.config.run.seed

    @property
    def qubit_ids(self) -> List[str]:
        return self.layout.qubit_ids

    @property
    def ramsey(self) -> Optional[RamseyReadout]:
        """Sampled Ramsey reconstruction, or None for Gaussian readout noise."""
        r = self.config.readout
        if r.mode != "ramsey":
            return None
        return RamseyReadout(r.ramsey_contrast, r.ramsey_offset, r.ramsey_gate_points, r.ramsey_shots)


def build_setup(config: SimulationConfig) -> SimulationSetup:
    try:
        layout = load_layout(config.layout_block())
        grid_spec = GridSpec.from_config(config.field.model_dump())
    except GeometryError as e:
        raise ConfigError([f"layout: {e}"]) from e
    return SimulationSetup(
        config=config,
        layout=layout,
        source=SourceSpec.from_config(config.source.model_dump()),
        transport=TransportParams.from_config(config.transport.model_dump()),
        grid_spec=grid_spec,
        transmon=TransmonParams.from_config(config.transmon.model_dump()),
        recovery=RecoveryParams.from_config(config.recovery.model_dump()),
        cache_dir=get_cache_dir(config.run.cache_dir),
    )


def manifest_hash(config: SimulationConfig) -> str:
    """Run identity stamped on every output table; the seed is part of the config hash."""
    return config_hash(config)[:16]


def load_pdfs(setup: SimulationSetup, progress: bool = False):
    t = setup.config.transport
    return load_or_build_pdf(
        setup.transport, setup.layout.substrate, setup.cache_dir, t.pdf_samples_per_zbin, setup.seed,
        t.pdf_zbin_width, t.pdf_lateral_bin, t.pdf_bins, progress=progress,
    )


# === Event pipeline ===

_WORKER: Dict[str, Any] = {}


def _init_worker(state: Mapping[str, Any]):
    """Pool initializer; grids and PDFs arrive once per worker."""
    _WORKER.clear()
    _WORKER.update(state)


def _worker_state(setup: SimulationSetup, grids: Mapping[str, WeightingGrid], pdfs=None) -> Dict[str, Any]:
    return {
        "layout": setup.layout,
        "source": setup.source,
        "transport": setup.transport,
        "transmon": setup.transmon,
        "sigma_q": setup.config.readout.sigma_q,
        "ramsey": setup.ramsey,
        "seed": setup.seed,
        "grids": dict(grids),
        "pdfs": pdfs,
    }


def simulate_event(task: Tuple[int, str, float]) -> Tuple[ImpactEvent, EventOutcome, Dict]:
    """One event through source, pairs, transport, induced charge and both error channels."""
    event_id, species, t = task
    st = _WORKER
    layout: ChipLayout = st["layout"]
    params: TransportParams = st["transport"]
    seed = st["seed"]
    substrate = layout.substrate
    monitor = RunMonitor()

    event = generate_event(st["source"], substrate, species, event_id, t, seed=seed, monitor=monitor)
    pairs = create_pairs(event, params, event_rng(seed, STREAM_PAIRS, event_id))
    monitor.increment("charge_transport", "pairs_raw", pairs.n_raw)
    monitor.increment("charge_transport", "pairs_retained", pairs.n_retained)
    transport_rng = event_rng(seed, STREAM_TRANSPORT, event_id)
    if st["pdfs"] is not None:
        carriers = transport_with_pdf(pairs, st["pdfs"], substrate, transport_rng)
    else:
        carriers = transport(pairs, params, substrate, transport_rng)

    qubit_ids = layout.qubit_ids
    dq_raw = induced_charges(carriers, st["grids"], qubit_ids)

    n = len(qubit_ids)
    eps_phi, eps_theta, theta, energy = np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n)
    for i, qid in enumerate(qubit_ids):
        tp = st["transmon"].for_qubit(layout.qubit(qid))
        eps_phi[i] = phase_flip_error(dq_raw[i], charge_dispersion(tp), tp.tau_sc)
        theta[i], eps_theta[i], energy[i] = dipole_transient_error(
            event, pairs.segment_counts, st["grids"][qid], tp, substrate.sound_speed_cs,
            event_rng(seed, STREAM_DIPOLE, event_id, i), monitor,
        )

    outcome = outcome_from_charges(
        event_id, qubit_ids, dq_raw, st["sigma_q"], event_rng(seed, STREAM_NOISE, event_id),
        ramsey=st["ramsey"], monitor=monitor,
        species=species, time=t, eps_phi=eps_phi, eps_theta=eps_theta, theta=theta, energy_ec=energy,
    )
    return event, outcome, monitor.snapshot()


def simulate_events(setup: SimulationSetup, schedule: Sequence[Tuple[int, str, float]],
                    grids: Mapping[str, WeightingGrid], pdfs=None, workers: int = 1,
                    progress: bool = False) -> Tuple[List[ImpactEvent], List[EventOutcome], RunMonitor]:
    """Run every scheduled event; output order is by event_id whatever the worker count."""
    state = _worker_state(setup, grids, pdfs)
    monitor = RunMonitor()
    results = []
    bar = dict(total=len(schedule), desc="events", disable=not progress)
    if workers > 1 and len(schedule) > 1:
        chunk = max(1, len(schedule) // (workers * 8))
        with multiprocessing.Pool(processes=workers, initializer=_init_worker, initargs=(state,)) as pool:
            for res in tqdm(pool.imap_unordered(simulate_event, schedule, chunksize=chunk), **bar):
                results.append(res)
    else:
        _init_worker(state)
        for task in tqdm(schedule, **bar):
            results.append(simulate_event(task))
    results.sort(key=lambda r: r[1].event_id)
    for _, _, snap in results:
        monitor.merge(RunMonitor.from_snapshot(snap))
    events = [r[0] for r in results]
    outcomes = [r[1] for r in results]
    return events, outcomes, monitor


def event_schedule(setup: SimulationSetup, n_events: Optional[int] = None):
    run = setup.config.run
    if n_events is None and run.duration is not None:
        return schedule_events(setup.source, duration=run.duration, seed=setup.seed)
    return schedule_events(setup.source, n_events=run.n_events if n_events is None else n_events, seed=setup.seed)


def _exposure(setup: SimulationSetup, schedule) -> float:
    if setup.config.run.duration is not None:
        return float(setup.config.run.duration)
    return float(schedule[-1][2]) if schedule else 0.0


# === Analysis ===

def _reported_pairs(separations: Mapping[Tuple[str, str], float],
                    targets: Mapping[float, float]) -> Dict[Tuple[str, str], float]:
    """For each target separation the single pair closest to it."""
    chosen = {}
    for target in targets:
        pair = min(separations, key=lambda p: abs(separations[p] - target))
        chosen[pair] = separations[pair]
    return chosen


def species_summary(outcomes: Sequence[EventOutcome], threshold: float) -> pd.DataFrame:
    rows = []
    for species in ("gamma", "muon"):
        sel = [o for o in outcomes if o.species == species]
        if not sel:
            continue
        frac = float(np.mean([jump_mask(o.dq_measured, threshold).mean() for o in sel]))
        implied = infer_impact_rate(MEASURED_TARGETS["jump_rate_mean"], frac) if frac > 0 else float("nan")
        rows.append({"species": species, "n_events": len(sel), "above_threshold_fraction": frac,
                     "implied_impact_rate_hz": implied})
        log_event_summary(species, len(sel), frac)
    return pd.DataFrame(rows, columns=SPECIES_COLUMNS)


def analyse_outcomes(setup: SimulationSetup, outcomes: Sequence[EventOutcome], exposure: float) -> Dict[str, Any]:
    """Jump statistics and error tables for one outcome stream.

    Event mode treats every event as its own record and skips the coincidence correction; the
    time-series mode folds events into measurement cycles first and applies it.
    """
    cfg = setup.config
    readout = cfg.readout
    qubit_ids = setup.qubit_ids
    separations = pair_separations(setup.layout)

    if cfg.run.time_series:
        series = bin_into_cycles(outcomes, readout.cycle_time, readout.sigma_q,
                                 event_rng(setup.seed, STREAM_CYCLES), duration=exposure or None,
                                 qubit_ids=qubit_ids)
        records = detect_jumps(series, readout.jump_threshold)
        correct, rate_exposure = True, None
    else:
        records = detect_jumps(outcomes, readout.jump_threshold)
        correct, rate_exposure = False, exposure

    tables: Dict[str, pd.DataFrame] = {}
    if records:
        stats = all_pair_stats(records, separations, correct, cfg.run.bootstrap_samples, setup.seed)
        tables["pair_stats"] = pd.DataFrame([s.as_row() for s in stats])
        tables["rates"] = rates_report(records, readout.cycle_time, separations,
                                       exposure=rate_exposure if rate_exposure else None,
                                       correct_coincidence=correct)
    else:
        stats = []
        tables["pair_stats"] = pd.DataFrame(columns=PAIR_COLUMNS)
        tables["rates"] = pd.DataFrame(columns=RATE_COLUMNS)

    tables["single_hist"] = pd.concat(
        [single_qubit_histogram(records, q, readout.histogram_bin) for q in qubit_ids], ignore_index=True,
    ) if records else pd.DataFrame(columns=HIST_COLUMNS)
    tables["joint_hist"] = pd.concat(
        [joint_histogram(records, a, b, readout.histogram_bin) for a, b in separations], ignore_index=True,
    ) if records else pd.DataFrame(columns=JOINT_COLUMNS)
    tables["species"] = species_summary(outcomes, readout.jump_threshold)

    tm = cfg.transmon
    if outcomes:
        report = exceedance_curves(outcomes, separations, tm.exceedance_levels, tm.joint_rule,
                                   tm.threshold_p, tm.threshold_degrees)
        tables["exceedance"] = report.exceedance
    else:
        tables["exceedance"] = pd.DataFrame(columns=EXCEEDANCE_COLUMNS)
    tables["thresholds"] = threshold_table(tm.threshold_p, tm.threshold_degrees)

    summary = scan_row(records, stats, separations)
    return {"records": records, "stats": stats, "tables": tables, "summary": summary}


def scan_row(records, stats, separations: Mapping[Tuple[str, str], float]) -> Dict[str, float]:
    """Scalar summary scored by the parameter scan: p_corr per reported pair plus both asymmetries."""
    row: Dict[str, float] = {}
    by_pair = {s.qubit_pair: s for s in stats}
    reported = _reported_pairs(separations, MEASURED_TARGETS["p_corr"])
    for (a, b), sep in sorted(reported.items(), key=lambda kv: kv[1]):
        s = by_pair.get((a, b))
        row[f"p_corr_{a}-{b}_{sep:.0f}"] = s.p_corr if s is not None else float("nan")
    closest = min(separations, key=separations.get)
    row["charge_asymmetry"] = charge_asymmetry(records).value
    row["asym_1324"] = asymmetry_1324(records, *closest).value if records else float("nan")
    return row


def nonadiabatic_table(setup: SimulationSetup, grids: Mapping[str, WeightingGrid]) -> pd.DataFrame:
    rows = []
    c_s = setup.layout.substrate.sound_speed_cs
    for qid in setup.qubit_ids:
        region = nonadiabatic_surface(grids[qid], setup.transmon.for_qubit(setup.layout.qubit(qid)), c_s)
        rows.append({"qubit_id": qid, "n_cells": region.n_cells, "volume_um3": region.volume})
    return pd.DataFrame(rows)


# === Output directory ===

class RunDirectory:
    """Outputs go to `<out>.partial` and replace `<out>` only when the command succeeds."""

    def __init__(self, out: str | Path):
        self.final = Path(out)
        self.stage = self.final.with_name(self.final.name + ".partial")
        self.paths: Dict[str, Path] = {}

    def __enter__(self) -> Dict[str, Path]:
        if self.stage.exists():
            shutil.rmtree(self.stage)
        self.paths = get_run_paths(self.stage)
        return self.paths

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            close_logger()
            shutil.rmtree(self.stage, ignore_errors=True)
            return False
        if self.final.exists():
            shutil.rmtree(self.final)
        self.stage.rename(self.final)
        return False


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(base: Path, config: SimulationConfig, command: str, monitor: RunMonitor,
                   started: float, extra: Mapping[str, Any] | None = None) -> Path:
    files = {
        p.relative_to(base).as_posix(): _sha256(p)
        for p in sorted(base.rglob("*"))
        if p.is_file() and p.name != MANIFEST_NAME and p.parent.name != "logs"
    }
    manifest = {
        "command": command,
        "manifest_hash": manifest_hash(config),
        "config_hash": config_hash(config),
        "seed": config.run.seed,
        "versions": package_versions(),
        "wall_time_s": round(time.time() - started, 3),
        "monitor": monitor.get_summary(),
        "files": files,
        **dict(extra or {}),
    }
    path = base / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return path


def read_manifest(run_dir: Path) -> Dict[str, Any]:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.exists():
        raise ManifestMismatchError(f"{run_dir} has no {MANIFEST_NAME}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_tables(tables: Mapping[str, pd.DataFrame], results: Path, mhash: str):
    for name, df in tables.items():
        write_table(df, results / f"{name}.csv", mhash)


# === Subcommands ===

def cmd_solve_field(setup: SimulationSetup, args, paths) -> Dict[str, Any]:
    grids = solve_all(setup.layout, setup.grid_spec, setup.cache_dir)
    rows = [{
        "qubit_id": qid, "nx": g.shape[0], "ny": g.shape[1], "nz": g.shape[2],
        "iterations": g.iterations, "residual": g.residual,
    } for qid, g in grids.items()]
    summary = pd.DataFrame(rows).merge(nonadiabatic_table(setup, grids), on="qubit_id")
    write_table(summary, paths["results"] / "field_summary.csv", manifest_hash(setup.config))
    log_success(f"weighting fields ready for {len(grids)} qubits", "solve-field")
    return {"n_qubits": len(grids)}


def cmd_build_pdf(setup: SimulationSetup, args, paths) -> Dict[str, Any]:
    pdfs = load_pdfs(setup, progress=not args.quiet)
    rows = []
    for pdf in pdfs:
        dump_pdf_csv(pdf, paths["results"] / f"charge_pdf_{pdf.species}.csv")
        for k in range(pdf.n_layers):
            rows.append({"species": pdf.species, "layer": k, "lost": float(pdf.lost[k]),
                         "central_fraction": pdf.central_fraction(k)})
    write_table(pd.DataFrame(rows), paths["results"] / "pdf_summary.csv", manifest_hash(setup.config))
    return {"n_layers": pdfs[0].n_layers}


def _run_pipeline(setup: SimulationSetup, args, n_events: Optional[int] = None):
    grids = solve_all(setup.layout, setup.grid_spec, setup.cache_dir)
    pdfs = load_pdfs(setup, progress=not args.quiet) if setup.config.transport.mode == "pdf" else None
    schedule = event_schedule(setup, n_events)
    events, outcomes, monitor = simulate_events(setup, schedule, grids, pdfs, setup.config.run.workers,
                                                progress=not args.quiet)
    return grids, pdfs, schedule, events, outcomes, monitor


def cmd_simulate(setup: SimulationSetup, args, paths) -> Dict[str, Any]:
    grids, _, schedule, events, outcomes, monitor = _run_pipeline(setup, args)
    mhash = manifest_hash(setup.config)
    results = paths["results"]
    write_events_jsonl(events, results / "events.jsonl")
    write_outcomes_csv(outcomes, results / "outcomes.csv", mhash)
    analysis = analyse_outcomes(setup, outcomes, _exposure(setup, schedule))
    tables = dict(analysis["tables"])
    tables["nonadiabatic"] = nonadiabatic_table(setup, grids)
    _write_tables(tables, results, mhash)
    if not tables["pair_stats"].empty:
        print(tables["pair_stats"][["qubit_a", "qubit_b", "separation_um", "p_corr", "asym_1324"]]
              .to_string(index=False))
    return {"n_events": len(outcomes), "monitor": monitor, "summary": analysis["summary"]}


def cmd_errors(setup: SimulationSetup, args, paths) -> Dict[str, Any]:
    grids = solve_all(setup.layout, setup.grid_spec, setup.cache_dir)
    monitor = RunMonitor()
    if args.outcomes:
        outcomes = read_outcomes_csv(args.outcomes)
    else:
        _, _, _, _, outcomes, monitor = _run_pipeline(setup, args)
    tm = setup.config.transmon
    if not outcomes:
        raise StatisticsError("no events to build an error report from")
    report = exceedance_curves(outcomes, pair_separations(setup.layout), tm.exceedance_levels, tm.joint_rule,
                               tm.threshold_p, tm.threshold_degrees)
    mhash = manifest_hash(setup.config)
    _write_tables({
        "exceedance": report.exceedance,
        "thresholds": report.thresholds,
        "nonadiabatic": nonadiabatic_table(setup, grids),
    }, paths["results"], mhash)
    return {"n_events": report.n_events, "monitor": monitor}


def cmd_scan(setup: SimulationSetup, args, paths) -> Dict[str, Any]:
    scan_cfg = setup.config.scan
    lambdas = args.lambda_trap or scan_cfg.lambda_trap
    f_qs = args.f_q or scan_cfg.f_q
    n_events = args.events if args.events is not None else scan_cfg.n_events
    grids = solve_all(setup.layout, setup.grid_spec, setup.cache_dir)
    schedule = event_schedule(setup, n_events)
    exposure = _exposure(setup, schedule)
    monitor = RunMonitor()

    def evaluate(lam: float, fq: float) -> Mapping:
        point = replace(setup, transport=replace(setup.transport, lambda_trap=float(lam), f_q=float(fq)))
        pdfs = load_pdfs(point) if setup.config.transport.mode == "pdf" else None
        _, outcomes, mon = simulate_events(point, schedule, grids, pdfs, setup.config.run.workers)
        monitor.merge(mon)
        return analyse_outcomes(point, outcomes, exposure)["summary"]

    table = parameter_scan(lambdas, f_qs, evaluate, MEASURED_TARGETS, progress=not args.quiet, monitor=monitor)
    write_table(table, paths["results"] / "scan.csv", manifest_hash(setup.config))
    best = table[table["best"]].iloc[0]
    log_success(f"best scan point: λ_trap={best['lambda_trap']:g} µm, f_q={best['f_q']:g}", "scan")
    print(table.to_string(index=False))
    return {"n_events": len(schedule), "monitor": monitor, "grid_points": len(table)}


def _emulate(setup: SimulationSetup) -> pd.DataFrame:
    em = setup.config.recovery.emulator
    return emulate_dropout_experiment(
        setup.recovery, n_events=em.n_events, duty_cycle=em.duty_cycle, idle=em.idle, gamma0=em.gamma0,
        delta_gamma_peak=em.delta_gamma_peak, window=tuple(em.window), rng=event_rng(setup.seed, STREAM_DROPOUT),
    )


def cmd_dropout_fixture(setup: SimulationSetup, args, paths) -> Dict[str, Any]:
    data = _emulate(setup)
    write_table(data, paths["results"] / "dropout_fixture.csv", manifest_hash(setup.config))
    return {"n_samples": len(data)}


def cmd_fit_dropout(setup: SimulationSetup, args, paths) -> Dict[str, Any]:
    if args.input:
        data = read_table(args.input)
    else:
        data = _emulate(setup)
    for column in ("t_s", args.signal):
        if column not in data.columns:
            raise ConfigError([f"fit-dropout: input has no column {column!r}"])
    t = data["t_s"].to_numpy(float)
    y = data[args.signal].to_numpy(float)
    # emulated ΔΓ01 is in 1/s, so its scale is always fitted
    fit_amplitude = args.fit_amplitude or not args.input
    fit = fit_dropout(t, y, initial=(setup.recovery.tau, setup.recovery.sigma), base=setup.recovery,
                      fit_amplitude=fit_amplitude, fit_baseline=args.fit_baseline,
                      amplitude=float(np.max(y)) if fit_amplitude else 1.0)
    dwell = phonon_dwell_time(setup.layout)
    row = fit.as_row()
    row.update({"phonon_dwell_time_s": dwell, "signal": args.signal})
    if "x_qp" in data.columns:
        peak = float(data["x_qp"].max())
        row.update({"x_qp_peak": peak, "n_qp_peak_per_um3": quasiparticle_density(peak, setup.recovery.n_cp)})
    mhash = manifest_hash(setup.config)
    write_table(pd.DataFrame([row]), paths["results"] / "dropout_fit.csv", mhash)
    model = fit.baseline + fit.amplitude * dropout_curve(t, fit.params)
    write_table(pd.DataFrame({"t_s": t, "y": y, "model": model}), paths["results"] / "dropout_curve.csv", mhash)
    log_info(f"phonon dwell time {dwell * 1e6:.1f} µs vs fitted τ {fit.params.tau * 1e6:.1f} µs", "fit-dropout")
    return {"tau_s": fit.params.tau, "sigma_s": fit.params.sigma}


def _check_table(path: Path, expected: str):
    header = pd.read_csv(path, nrows=0).columns
    if "manifest_hash" not in header:
        raise ManifestMismatchError(f"{path.name} carries no manifest hash")
    found = table_manifest_hash(path)
    if found is not None and found != expected:
        raise ManifestMismatchError(f"{path.name} belongs to run {found}, manifest says {expected}")


def cmd_plot(run_dir: Path) -> Dict[str, Any]:
    """SVG figures for an existing run directory; every input table must match its manifest."""
    manifest = read_manifest(run_dir)
    expected = manifest["manifest_hash"]
    results = run_dir / "results"
    tables = sorted(results.glob("*.csv"))
    for path in tables:
        _check_table(path, expected)
    plots = get_run_paths(run_dir)["plots"]
    written = []

    def have(name: str) -> Optional[pd.DataFrame]:
        path = results / f"{name}.csv"
        return read_table(path) if path.exists() else None

    hist = have("single_hist")
    if hist is not None and not hist.empty:
        written.append(report_charts.save_figure(report_charts.charge_histogram_chart(hist), plots / "single_hist"))
    outcomes, pairs = have("outcomes"), have("pair_stats")
    if outcomes is not None and pairs is not None and not pairs.empty:
        outcomes["qubit_id"] = outcomes["qubit_id"].astype(str)
        for _, p in pairs.iterrows():
            a, b = str(p["qubit_a"]), str(p["qubit_b"])
            fig = report_charts.joint_scatter_chart(outcomes, a, b, float(p["separation_um"]))
            written.append(report_charts.save_figure(fig, plots / f"joint_{a}_{b}"))
    exceedance = have("exceedance")
    if exceedance is not None and not exceedance.empty:
        for kind in ("phase", "bit"):
            fig = report_charts.exceedance_chart(exceedance, kind)
            written.append(report_charts.save_figure(fig, plots / f"exceedance_{kind}"))
    curve = have("dropout_curve")
    if curve is not None and not curve.empty:
        fig = report_charts.dropout_chart(curve["t_s"], curve["y"], curve["model"])
        written.append(report_charts.save_figure(fig, plots / "dropout"))
    scan = have("scan")
    if scan is not None and not scan.empty:
        for column in [c for c in scan.columns if c.startswith("p_corr_")] + ["score"]:
            written.append(report_charts.save_figure(report_charts.scan_heatmap(scan, column), plots / f"scan_{column}"))
    log_success(f"{len(written)} figures written to {plots}", "plot")
    return {"n_figures": len(written)}


COMMANDS = {
    "solve-field": cmd_solve_field,
    "build-pdf": cmd_build_pdf,
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "errors": cmd_errors,
    "fit-dropout": cmd_fit_dropout,
    "dropout-fixture": cmd_dropout_fixture,
}


# === CLI ===

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config layered over the built-in defaults")
    common.add_argument("--seed", type=int)
    common.add_argument("--events", type=int, help="number of events (clears run.duration)")
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--cache-dir", dest="cache_dir")
    common.add_argument("--log-level", dest="log_level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--quiet", action="store_true", help="no progress bars")

    parser = argparse.ArgumentParser(prog="burst-sim", description="Correlated charge-burst simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("solve-field", parents=[common], help="solve and cache the weighting potentials")
    for name, text in (("build-pdf", "tabulate the charge PDFs"), ("simulate", "run the full event pipeline"),
                       ("errors", "correlated phase/bit-flip exceedance report")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--lambda-trap", dest="lambda_trap", type=float)
        p.add_argument("--f-q", dest="f_q", type=float)
        p.add_argument("--mode", choices=["direct", "pdf"])
        if name in ("simulate", "errors"):
            p.add_argument("--time-series", dest="time_series", action="store_true", default=None,
                           help="fold events into measurement cycles before detecting jumps")
        if name == "errors":
            p.add_argument("--outcomes", help="reuse an outcomes.csv instead of simulating")

    scan = sub.add_parser("scan", parents=[common], help="λ_trap × f_q grid scored against measured targets")
    scan.add_argument("--lambda-trap", dest="lambda_trap", type=float, nargs="+")
    scan.add_argument("--f-q", dest="f_q", type=float, nargs="+")
    scan.add_argument("--mode", choices=["direct", "pdf"])

    fit = sub.add_parser("fit-dropout", parents=[common], help="fit the T1 dropout recovery curve")
    fit.add_argument("--input", help="CSV with a t_s column (default: emulated experiment)")
    fit.add_argument("--signal", default="delta_gamma01", help="column to fit")
    fit.add_argument("--fit-amplitude", dest="fit_amplitude", action="store_true")
    fit.add_argument("--fit-baseline", dest="fit_baseline", action="store_true")

    sub.add_parser("dropout-fixture", parents=[common], help="write an emulated dropout experiment")

    plot = sub.add_parser("plot", parents=[common], help="SVG figures for an existing run")
    plot.add_argument("--run", help="run directory (default: --out / run.out)")
    return parser


def cli_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    run: Dict[str, Any] = {}
    transport: Dict[str, Any] = {}
    if args.seed is not None:
        run["seed"] = args.seed
    if args.events is not None:
        run.update(n_events=args.events, duration=None)
    if args.workers is not None:
        run["workers"] = args.workers
    if args.out is not None:
        run["out"] = args.out
    if args.cache_dir is not None:
        run["cache_dir"] = args.cache_dir
    if getattr(args, "time_series", None):
        run["time_series"] = True
    if args.command != "scan":
        if getattr(args, "lambda_trap", None) is not None:
            transport["lambda_trap"] = args.lambda_trap
        if getattr(args, "f_q", None) is not None:
            transport["f_q"] = args.f_q
    if getattr(args, "mode", None):
        transport["mode"] = args.mode
    out: Dict[str, Any] = {}
    if run:
        out["run"] = run
    if transport:
        out["transport"] = transport
    return out


def _run_command(args: argparse.Namespace) -> int:
    started = time.time()
    config = load_config(args.config, cli_overrides(args))
    if args.command == "plot":
        run_dir = Path(args.run or config.run.out)
        setup_logger(log_level=args.log_level, log_file=str(run_dir / "logs" / "plot.log"), force=True)
        cmd_plot(run_dir)
        return 0

    setup = build_setup(config)
    with RunDirectory(config.run.out) as paths:
        setup_logger(log_level=args.log_level, log_file=str(paths["logs"] / "run.log"), force=True)
        log_info(f"{args.command}: seed {config.run.seed}, config {config_hash(config)[:12]}", "burst_runner")
        ConfigManager().save_config(config, paths["base"] / RESOLVED_CONFIG_NAME, create_backup=False)
        result = COMMANDS[args.command](setup, args, paths)
        monitor = result.pop("monitor", None) or RunMonitor()
        summary = result.pop("summary", {})
        write_manifest(paths["base"], config, args.command, monitor, started,
                       extra={"result": result, "summary": summary})
        close_logger()
    log_run(Path(config.run.out).parent / "run_log.csv", {
        "command": args.command, "out": config.run.out, "seed": config.run.seed,
        "manifest_hash": manifest_hash(config), "wall_time_s": round(time.time() - started, 3), **result,
    })
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logger(log_level=args.log_level, force=True)
    try:
        return _run_command(args)
    except BurstSimError as e:
        log_error(e, "config" if isinstance(e, ConfigError) else args.command)
        return e.exit_code
    finally:
        close_logger()


if __name__ == "__main__":
    sys.exit(main())
