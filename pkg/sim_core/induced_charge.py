# ------------------------------------------------------------------------------------
# 🎯 induced_charge.py – Offset Charge Seen by Each Qubit
#
# ✅ induced_offset_charge() – Δq = Σ (−sign) · weight · α(r) over trapped carriers
# ✅ alias() / measure() – fold into [−0.5, 0.5), add Ramsey reconstruction noise, fold again
# ✅ ramsey_response() / fit_ramsey_offset() – parity-blind, 1e-periodic transfer function
# ✅ RamseyReadout – binomial P1 at a set of gate charges, fitted back to an offset
# ✅ EventOutcome + CSV / binary writers (schema versioned)
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from sim_core.charge_transport import CarrierSet
from sim_core.errors import FitError
from sim_core.rng_streams import as_generator
from sim_core.run_monitor import RunMonitor
from sim_core.weighting_field import WeightingGrid, alpha_values

OUTCOME_SCHEMA_VERSION = 1
OUTCOME_COLUMNS = [
    "schema_version", "event_id", "species", "time", "qubit_id",
    "dq_raw", "dq_aliased", "dq_measured", "eps_phi", "eps_theta", "theta", "energy_ec",
]


def induced_offset_charge(carriers: CarrierSet, grid: WeightingGrid) -> float:
    """Offset charge (e) induced on the grid's island; a trapped electron near it reads positive."""
    if len(carriers) == 0:
        return 0.0
    alpha = alpha_values(grid, carriers.positions)
    return float(np.sum(-carriers.signs * carriers.weights * alpha))


def alias(dq):
    """Fold charge into [−0.5, 0.5); halves round to even, so +0.5 lands on −0.5."""
    arr = np.asarray(dq, dtype=float)
    r = arr - np.round(arr)
    r = np.where(r >= 0.5, r - 1.0, r)
    return float(r) if np.ndim(r) == 0 else r


def measure(dq_aliased, sigma_q: float, rng):
    if sigma_q < 0:
        raise ValueError("sigma_q must be ≥ 0")
    if sigma_q == 0:
        return alias(dq_aliased)
    rng = as_generator(rng)
    arr = np.asarray(dq_aliased, dtype=float)
    return alias(arr + sigma_q * rng.standard_normal(arr.shape))


def ramsey_response(n_g, contrast: float = 0.9, offset: float = 0.5):
    """P1 after the charge-sensitive Ramsey sequence; even and periodic in n_g with period 1e."""
    if offset - 0.5 * abs(contrast) < 0 or offset + 0.5 * abs(contrast) > 1:
        raise ValueError("contrast/offset give P1 outside [0, 1]")
    n = np.asarray(n_g, dtype=float)
    p = offset + 0.5 * contrast * np.cos(math.pi * np.cos(math.pi * n))
    return float(p) if np.ndim(p) == 0 else p


def fit_ramsey_offset(gate_charges: Sequence[float], p1: Sequence[float], contrast: float = 0.9,
                      offset: float = 0.5) -> float:
    """Offset charge δ (aliased) that best explains P1 measured at n_gate + δ."""
    n = np.asarray(gate_charges, dtype=float)
    y = np.asarray(p1, dtype=float)
    if n.size < 3 or n.size != y.size:
        raise FitError("need at least three (gate charge, P1) points")

    def residual(delta):
        return ramsey_response(n + delta[0], contrast, offset) - y

    grid = np.arange(-0.5, 0.5, 0.005)
    costs = [np.sum(residual([d]) ** 2) for d in grid]
    start = grid[int(np.argmin(costs))]
    result = least_squares(residual, x0=[start], method="lm", xtol=1e-10)
    if not result.success:
        raise FitError(f"Ramsey offset fit failed: {result.message}", [float(result.cost)])
    return alias(result.x[0])


@dataclass(frozen=True)
class RamseyReadout:
    """Offset-charge reconstruction from sampled Ramsey data instead of Gaussian noise.

    Each qubit gets `shots` single-shot readouts at `gate_points` gate charges spread over one
    period; the fitted offset becomes dq_measured.
    """
    contrast: float = 0.9
    offset: float = 0.5
    gate_points: int = 10
    shots: int = 100

    @property
    def gate_charges(self) -> np.ndarray:
        return np.arange(self.gate_points) / self.gate_points

    def sample(self, dq_aliased: float, rng) -> np.ndarray:
        p = ramsey_response(self.gate_charges + dq_aliased, self.contrast, self.offset)
        return as_generator(rng).binomial(self.shots, p) / self.shots

    def reconstruct(self, dq_aliased, sigma_q: float, rng, monitor: RunMonitor | None = None,
                    context: str = "ramsey") -> np.ndarray:
        """Fitted offsets per qubit; a failed fit falls back to Gaussian noise and is recorded."""
        rng = as_generator(rng)
        aliased = np.atleast_1d(np.asarray(dq_aliased, dtype=float))
        out = np.empty_like(aliased)
        for i, dq in enumerate(aliased):
            p1 = self.sample(dq, rng)
            try:
                out[i] = fit_ramsey_offset(self.gate_charges, p1, self.contrast, self.offset)
            except FitError as e:
                if monitor is not None:
                    monitor.log_error(e, f"{context} qubit {i}")
                    monitor.increment("induced_charge", "ramsey_fit_failed")
                out[i] = measure(dq, sigma_q, rng)
        return out


@dataclass(frozen=True, eq=False)
class EventOutcome:
    """Per-qubit charge and error values for one event; arrays follow `qubit_ids` order."""
    event_id: int
    qubit_ids: Tuple[str, ...]
    dq_raw: np.ndarray
    dq_aliased: np.ndarray
    dq_measured: np.ndarray
    eps_phi: np.ndarray = None
    eps_theta: np.ndarray = None
    theta: np.ndarray = None
    energy_ec: np.ndarray = None
    species: str = ""
    time: float = 0.0

    def __post_init__(self):
        n = len(self.qubit_ids)
        object.__setattr__(self, "qubit_ids", tuple(self.qubit_ids))
        for name in ("dq_raw", "dq_aliased", "dq_measured", "eps_phi", "eps_theta", "theta", "energy_ec"):
            value = getattr(self, name)
            arr = np.zeros(n) if value is None else np.asarray(value, dtype=float).reshape(-1)
            if len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} entries for {n} qubits")
            object.__setattr__(self, name, arr)
        for name in ("dq_aliased", "dq_measured"):
            arr = getattr(self, name)
            if np.any(arr < -0.5) or np.any(arr >= 0.5):
                raise ValueError(f"{name} outside [-0.5, 0.5)")
        for name in ("eps_phi", "eps_theta"):
            arr = getattr(self, name)
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"{name} outside [0, 1]")

    @property
    def per_qubit(self) -> List[Tuple[str, float, float, float, float, float]]:
        return [
            (q, float(r), float(a), float(m), float(p), float(t))
            for q, r, a, m, p, t in zip(self.qubit_ids, self.dq_raw, self.dq_aliased,
                                        self.dq_measured, self.eps_phi, self.eps_theta)
        ]

    def index(self, qubit_id: str) -> int:
        return self.qubit_ids.index(qubit_id)


def outcome_from_charges(event_id: int, qubit_ids: Sequence[str], dq_raw: Sequence[float], sigma_q: float,
                         rng, species: str = "", time: float = 0.0, ramsey: RamseyReadout | None = None,
                         monitor: RunMonitor | None = None, **errors) -> EventOutcome:
    """raw -> alias -> readout -> alias; the readout is Gaussian noise unless `ramsey` is given."""
    raw = np.asarray(dq_raw, dtype=float)
    aliased = alias(raw)
    if ramsey is None:
        measured = measure(aliased, sigma_q, rng)
    else:
        measured = ramsey.reconstruct(aliased, sigma_q, rng, monitor, context=f"event {event_id}")
    return EventOutcome(event_id=event_id, qubit_ids=tuple(qubit_ids), dq_raw=raw,
                        dq_aliased=np.atleast_1d(aliased), dq_measured=np.atleast_1d(measured),
                        species=species, time=time, **errors)


def induced_charges(carriers: CarrierSet, grids: Mapping[str, WeightingGrid], qubit_ids: Sequence[str]) -> np.ndarray:
    return np.array([induced_offset_charge(carriers, grids[q]) for q in qubit_ids])


# === Output ===

def outcomes_to_frame(outcomes: Iterable[EventOutcome], manifest_hash: str | None = None) -> pd.DataFrame:
    rows = []
    for o in outcomes:
        for i, q in enumerate(o.qubit_ids):
            rows.append({
                "schema_version": OUTCOME_SCHEMA_VERSION,
                "event_id": o.event_id,
                "species": o.species,
                "time": o.time,
                "qubit_id": q,
                "dq_raw": o.dq_raw[i],
                "dq_aliased": o.dq_aliased[i],
                "dq_measured": o.dq_measured[i],
                "eps_phi": o.eps_phi[i],
                "eps_theta": o.eps_theta[i],
                "theta": o.theta[i],
                "energy_ec": o.energy_ec[i],
            })
    df = pd.DataFrame(rows, columns=OUTCOME_COLUMNS)
    if manifest_hash is not None:
        df["manifest_hash"] = manifest_hash
    return df


def frame_to_outcomes(df: pd.DataFrame) -> List[EventOutcome]:
    if df.empty:
        return []
    outcomes = []
    for (eid, species, time), g in df.groupby(["event_id", "species", "time"], sort=False):
        outcomes.append(EventOutcome(
            event_id=int(eid), qubit_ids=tuple(g["qubit_id"]), species=str(species), time=float(time),
            dq_raw=g["dq_raw"].to_numpy(), dq_aliased=g["dq_aliased"].to_numpy(),
            dq_measured=g["dq_measured"].to_numpy(), eps_phi=g["eps_phi"].to_numpy(),
            eps_theta=g["eps_theta"].to_numpy(), theta=g["theta"].to_numpy(),
            energy_ec=g["energy_ec"].to_numpy(),
        ))
    outcomes.sort(key=lambda o: o.event_id)
    return outcomes


def write_outcomes_csv(outcomes: Iterable[EventOutcome], path: str | Path, manifest_hash: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    outcomes_to_frame(outcomes, manifest_hash).to_csv(path, index=False)
    return path


def read_outcomes_csv(path: str | Path) -> List[EventOutcome]:
    df = pd.read_csv(path, dtype={"qubit_id": str, "species": str}, keep_default_na=False,
                     float_precision="round_trip")
    if not df.empty and int(df["schema_version"].iloc[0]) != OUTCOME_SCHEMA_VERSION:
        raise ValueError(f"{path}: outcome schema {df['schema_version'].iloc[0]} is not supported")
    return frame_to_outcomes(df)


def write_outcomes_binary(outcomes: Sequence[EventOutcome], path: str | Path) -> Path:
    """Compact columnar log (.npz), one row per event x qubit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = outcomes_to_frame(outcomes)
    np.savez_compressed(
        path,
        schema_version=OUTCOME_SCHEMA_VERSION,
        event_id=df["event_id"].to_numpy(np.int64),
        species=df["species"].to_numpy(str),
        qubit_id=df["qubit_id"].to_numpy(str),
        **{c: df[c].to_numpy(float) for c in OUTCOME_COLUMNS[5:] + ["time"]},
    )
    return path


def read_outcomes_binary(path: str | Path) -> List[EventOutcome]:
    with np.load(path, allow_pickle=False) as data:
        df = pd.DataFrame({k: data[k] for k in data.files if k != "schema_version"})
    return frame_to_outcomes(df)
