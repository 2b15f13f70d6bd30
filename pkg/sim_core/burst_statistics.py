# ------------------------------------------------------------------------------------
# 📊 burst_statistics.py – Jump Detection and Correlation Statistics
#
# ✅ detect_jumps() – 0.1e < |Δq| ≤ 0.5e per qubit, event mode or 44 s cycle series
# ✅ bin_into_cycles() – Poisson-timed events summed into measurement cycles
# ✅ corrected_joint_probability() / correlation_probability() – random-coincidence correction
# ✅ charge_asymmetry() / asymmetry_1324() – sign statistics with binomial errors
# ✅ pair_stats() / rates_report() – per-pair and per-qubit summary tables
# ✅ single_qubit_histogram() / joint_histogram() – 0.02e binned dumps
# ✅ parameter_scan() – λ_trap × f_q grid scored against the measured targets
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from data_files.config import MEASURED_TARGETS
from shared.logging_utils import log_info, log_pair_stats
from sim_core.errors import NumericalError, StatisticsError
from sim_core.induced_charge import EventOutcome, alias
from sim_core.rng_streams import STREAM_BOOTSTRAP, STREAM_CYCLES, as_generator, event_rng
from sim_core.run_monitor import RunMonitor

QUADRANTS = ("Q1", "Q2", "Q3", "Q4")
ZERO_COUNT_UPPER = 3.0   # ~95% Poisson upper limit for zero observed jumps


@dataclass(frozen=True, eq=False)
class JumpRecord:
    cycle_id: int
    qubit_ids: Tuple[str, ...]
    dq: np.ndarray
    is_jump: np.ndarray = None
    threshold: float = 0.1

    def __post_init__(self):
        dq = np.asarray(self.dq, dtype=float).reshape(-1)
        object.__setattr__(self, "qubit_ids", tuple(self.qubit_ids))
        object.__setattr__(self, "dq", dq)
        expected = jump_mask(dq, self.threshold)
        if self.is_jump is None:
            object.__setattr__(self, "is_jump", expected)
        elif not np.array_equal(np.asarray(self.is_jump, dtype=bool), expected):
            raise ValueError("is_jump disagrees with the threshold rule")

    def jumped(self, qubit_id: str) -> bool:
        return bool(self.is_jump[self.qubit_ids.index(qubit_id)])


@dataclass
class AsymmetryResult:
    value: float
    stderr: float
    n: int
    defined: bool = True

    @classmethod
    def undefined(cls) -> "AsymmetryResult":
        return cls(value=math.nan, stderr=math.nan, n=0, defined=False)


@dataclass
class PairStats:
    qubit_pair: Tuple[str, str]
    separation: float
    p_obs_A: float
    p_obs_B: float
    p_obs_AB: float
    p_AB: float
    p_corr: float
    asym_1324: float
    n_cycles: int
    n_joint: int = 0
    quadrants: Dict[str, int] = field(default_factory=dict)
    uncertainties: Dict[str, float] = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {
            "qubit_a": self.qubit_pair[0],
            "qubit_b": self.qubit_pair[1],
            "separation_um": self.separation,
            "p_obs_a": self.p_obs_A,
            "p_obs_b": self.p_obs_B,
            "p_obs_ab": self.p_obs_AB,
            "p_ab": self.p_AB,
            "p_corr": self.p_corr,
            "asym_1324": self.asym_1324,
            "n_cycles": self.n_cycles,
            "n_joint": self.n_joint,
        }
        row.update({f"n_{q.lower()}": self.quadrants.get(q, 0) for q in QUADRANTS})
        row.update({f"{k}_err": v for k, v in self.uncertainties.items()})
        return row


def jump_mask(dq, threshold: float = 0.1) -> np.ndarray:
    a = np.abs(np.asarray(dq, dtype=float))
    return (a > threshold) & (a <= 0.5)


def _check_threshold(threshold: float):
    if not (0 < threshold <= 0.5):
        raise ValueError("jump threshold must lie in (0, 0.5]")


def detect_jumps(outcomes, threshold: float = 0.1) -> List[JumpRecord]:
    """Jump records from EventOutcomes (one per event) or a cycle series (one per cycle step).

    A cycle series is a DataFrame indexed by cycle with one reconstructed-charge column per qubit;
    a jump there is the aliased difference between consecutive cycles.
    """
    _check_threshold(threshold)
    if isinstance(outcomes, pd.DataFrame):
        if len(outcomes) < 2:
            return []
        qubits = tuple(str(c) for c in outcomes.columns)
        diffs = alias(np.diff(outcomes.to_numpy(dtype=float), axis=0))
        cycles = outcomes.index.to_numpy()[1:]
        return [JumpRecord(int(c), qubits, d, threshold=threshold) for c, d in zip(cycles, np.atleast_2d(diffs))]
    return [JumpRecord(o.event_id, o.qubit_ids, o.dq_measured, threshold=threshold) for o in outcomes]


def bin_into_cycles(outcomes: Sequence[EventOutcome], cycle_time: float = 44.0, sigma_q: float = 0.02,
                    rng=None, duration: float | None = None, qubit_ids: Sequence[str] | None = None) -> pd.DataFrame:
    """Reconstructed offset charge per qubit: a zero-charge baseline (cycle 0) then the end of every cycle.

    True offset charge accumulates the raw Δq of every event in the cycle; each reconstruction,
    the baseline included, adds independent σ_q noise and folds into [−0.5, 0.5). Cycle k holds
    the events with (k−1)·cycle_time ≤ t < k·cycle_time.
    """
    if cycle_time <= 0:
        raise ValueError("cycle_time must be > 0")
    if qubit_ids is None:
        if not outcomes:
            raise StatisticsError("qubit ids are needed for an empty outcome stream")
        qubit_ids = outcomes[0].qubit_ids
    rng = as_generator(rng) if rng is not None else event_rng(0, STREAM_CYCLES)
    t_end = duration if duration is not None else (max((o.time for o in outcomes), default=0.0))
    n_cycles = max(1, int(math.ceil(t_end / cycle_time)))
    steps = np.zeros((n_cycles + 1, len(qubit_ids)))
    for o in outcomes:
        c = min(int(o.time // cycle_time), n_cycles - 1)
        steps[c + 1] += o.dq_raw
    true_charge = np.cumsum(steps, axis=0)
    noisy = true_charge + sigma_q * rng.standard_normal(true_charge.shape)
    series = pd.DataFrame(alias(noisy), columns=list(qubit_ids))
    series.index.name = "cycle"
    return series


# === Estimators ===

def corrected_joint_probability(p_obs_A: float, p_obs_B: float, p_obs_AB: float) -> float:
    """True joint probability after removing random coincidences, floored at 0."""
    for p in (p_obs_A, p_obs_B, p_obs_AB):
        if not (0 <= p <= 1):
            raise StatisticsError("probabilities must lie in [0, 1]")
    denom = 1.0 + p_obs_AB - (p_obs_A + p_obs_B)
    if denom <= 0:
        raise StatisticsError(f"coincidence correction undefined (denominator {denom:.3g})")
    return max(0.0, (p_obs_AB - p_obs_A * p_obs_B) / denom)


def compose_observed(p_A: float, p_B: float, p_AB: float) -> Tuple[float, float, float]:
    """Forward model: observed single and joint probabilities from independent and common causes."""
    p_obs_A = p_AB + p_A * (1 - p_AB)
    p_obs_B = p_AB + p_B * (1 - p_AB)
    p_obs_AB = p_AB + p_A * p_B * (1 - p_AB)
    return p_obs_A, p_obs_B, p_obs_AB


def correlation_probability(p_AB: float, p_obs_A: float, p_obs_B: float) -> float:
    denom = p_obs_A + p_obs_B
    if denom <= 0:
        raise StatisticsError("correlation probability undefined without single-qubit jumps")
    return float(min(1.0, max(0.0, 2 * p_AB / denom)))


def _matrix(records: Sequence[JumpRecord], qubits: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    if not records:
        return np.zeros((0, len(qubits))), np.zeros((0, len(qubits)), dtype=bool)
    order = [records[0].qubit_ids.index(q) for q in qubits]
    dq = np.array([r.dq[order] for r in records])
    jumps = np.array([r.is_jump[order] for r in records])
    return dq, jumps


def charge_asymmetry(records: Sequence[JumpRecord], qubit_ids: Sequence[str] | None = None) -> AsymmetryResult:
    """Fraction of positive jumps, averaged over qubits that saw at least one jump."""
    if not records:
        return AsymmetryResult.undefined()
    qubits = list(qubit_ids or records[0].qubit_ids)
    dq, jumps = _matrix(records, qubits)
    values, variances, total = [], [], 0
    for k in range(len(qubits)):
        n = int(jumps[:, k].sum())
        if n == 0:
            continue
        frac = float((dq[jumps[:, k], k] > 0).sum()) / n
        values.append(frac)
        variances.append(frac * (1 - frac) / n)
        total += n
    if not values:
        return AsymmetryResult.undefined()
    return AsymmetryResult(value=float(np.mean(values)), stderr=math.sqrt(sum(variances)) / len(values), n=total)


def quadrant_counts(records: Sequence[JumpRecord], a: str, b: str) -> Dict[str, int]:
    """Joint jumps by sign quadrant: Q1 (+,+), Q2 (−,+), Q3 (−,−), Q4 (+,−)."""
    dq, jumps = _matrix(records, [a, b])
    joint = jumps[:, 0] & jumps[:, 1] if len(dq) else np.zeros(0, bool)
    sa, sb = dq[joint, 0] > 0, dq[joint, 1] > 0
    return {
        "Q1": int(np.sum(sa & sb)),
        "Q2": int(np.sum(~sa & sb)),
        "Q3": int(np.sum(~sa & ~sb)),
        "Q4": int(np.sum(sa & ~sb)),
    }


def asymmetry_1324(records: Sequence[JumpRecord], a: str, b: str) -> AsymmetryResult:
    q = quadrant_counts(records, a, b)
    n = sum(q.values())
    if n == 0:
        return AsymmetryResult.undefined()
    value = (q["Q1"] + q["Q3"] - q["Q2"] - q["Q4"]) / n
    return AsymmetryResult(value=value, stderr=math.sqrt(max(0.0, 1 - value ** 2) / n), n=n)


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n > 0 else math.nan


def _pair_point(jumps: np.ndarray, correct: bool) -> Tuple[float, float, float, float, float]:
    n = len(jumps)
    p_a = float(jumps[:, 0].mean())
    p_b = float(jumps[:, 1].mean())
    p_ab_obs = float((jumps[:, 0] & jumps[:, 1]).mean())
    p_ab = corrected_joint_probability(p_a, p_b, p_ab_obs) if correct else p_ab_obs
    p_corr = correlation_probability(p_ab, p_a, p_b) if (p_a + p_b) > 0 else 0.0
    return p_a, p_b, p_ab_obs, p_ab, p_corr


def pair_stats(records: Sequence[JumpRecord], a: str, b: str, separation: float,
               correct_coincidence: bool = True, bootstrap_samples: int = 0, seed: int = 0) -> PairStats:
    """Pair statistics; cycle series need the coincidence correction, single-event records do not."""
    if not records:
        raise StatisticsError("no cycles to analyse")
    dq, jumps = _matrix(records, [a, b])
    n = len(records)
    p_a, p_b, p_ab_obs, p_ab, p_corr = _pair_point(jumps, correct_coincidence)
    asym = asymmetry_1324(records, a, b)
    quads = quadrant_counts(records, a, b)
    denom = p_a + p_b
    unc = {
        "p_obs_a": _binomial_se(p_a, n),
        "p_obs_b": _binomial_se(p_b, n),
        "p_obs_ab": _binomial_se(p_ab_obs, n),
        "p_ab": _binomial_se(p_ab_obs, n),
        "p_corr": 2 * _binomial_se(p_ab_obs, n) / denom if denom > 0 else math.nan,
        "asym_1324": asym.stderr,
    }
    if bootstrap_samples > 0:
        unc.update(bootstrap_pair(jumps, dq, correct_coincidence, bootstrap_samples, seed))
    stats = PairStats(
        qubit_pair=(a, b), separation=separation, p_obs_A=p_a, p_obs_B=p_b, p_obs_AB=p_ab_obs,
        p_AB=p_ab, p_corr=p_corr, asym_1324=asym.value, n_cycles=n, n_joint=asym.n,
        quadrants=quads, uncertainties=unc,
    )
    log_pair_stats(f"{a}-{b}", separation, p_corr, asym.value)
    return stats


def bootstrap_pair(jumps: np.ndarray, dq: np.ndarray, correct: bool, n_samples: int, seed: int = 0) -> Dict[str, float]:
    """Resampled standard deviations of p_corr and the 13/24 asymmetry."""
    rng = event_rng(seed, STREAM_BOOTSTRAP)
    n = len(jumps)
    p_corr, asym = [], []
    for _ in range(n_samples):
        idx = rng.integers(0, n, n)
        j, d = jumps[idx], dq[idx]
        try:
            p_corr.append(_pair_point(j, correct)[4])
        except StatisticsError:
            continue
        joint = j[:, 0] & j[:, 1]
        if joint.any():
            same = np.sign(d[joint, 0]) == np.sign(d[joint, 1])
            asym.append(float(2 * same.mean() - 1))
    return {
        "p_corr_boot": float(np.std(p_corr, ddof=1)) if len(p_corr) > 1 else math.nan,
        "asym_1324_boot": float(np.std(asym, ddof=1)) if len(asym) > 1 else math.nan,
    }


def all_pair_stats(records: Sequence[JumpRecord], separations: Mapping[Tuple[str, str], float],
                   correct_coincidence: bool = True, bootstrap_samples: int = 0, seed: int = 0) -> List[PairStats]:
    return [pair_stats(records, a, b, sep, correct_coincidence, bootstrap_samples, seed)
            for (a, b), sep in separations.items()]


def rates_report(records: Sequence[JumpRecord], cycle_time: float,
                 separations: Mapping[Tuple[str, str], float] | None = None,
                 exposure: float | None = None, correct_coincidence: bool = True) -> pd.DataFrame:
    """Jump rates (Hz) per qubit and per pair with Poisson errors.

    exposure defaults to n_cycles x cycle_time; event-mode callers pass the simulated duration.
    Zero counts report a rate of 0 and a ~95% upper bound.
    """
    if cycle_time <= 0:
        raise ValueError("cycle_time must be > 0")
    n = len(records)
    if n == 0:
        raise StatisticsError("rates need at least one cycle")
    exposure = n * cycle_time if exposure is None else exposure
    qubits = list(records[0].qubit_ids)
    _, jumps = _matrix(records, qubits)
    rows = []
    for k, q in enumerate(qubits):
        count = int(jumps[:, k].sum())
        rows.append({
            "kind": "qubit", "name": q, "count": count, "p_obs": count / n,
            "rate_hz": count / exposure, "rate_err_hz": math.sqrt(count) / exposure,
            "rate_upper_hz": (ZERO_COUNT_UPPER if count == 0 else count + 2 * math.sqrt(count)) / exposure,
        })
    for (a, b) in (separations or {}):
        ia, ib = qubits.index(a), qubits.index(b)
        pair_jumps = jumps[:, [ia, ib]]
        _, _, p_ab_obs, p_ab, _ = _pair_point(pair_jumps, correct_coincidence)
        count = int((pair_jumps[:, 0] & pair_jumps[:, 1]).sum())
        rows.append({
            "kind": "pair", "name": f"{a}-{b}", "count": count, "p_obs": p_ab_obs,
            "rate_hz": p_ab * n / exposure, "rate_err_hz": math.sqrt(count) / exposure,
            "rate_upper_hz": (ZERO_COUNT_UPPER if count == 0 else count + 2 * math.sqrt(count)) / exposure,
        })
    return pd.DataFrame(rows)


# === Histograms ===

def _charge_edges(bin_width: float) -> np.ndarray:
    n = int(round(1.0 / bin_width))
    return np.linspace(-0.5, 0.5, n + 1)


def single_qubit_histogram(records: Sequence[JumpRecord], qubit_id: str, bin_width: float = 0.02) -> pd.DataFrame:
    dq, _ = _matrix(records, [qubit_id])
    edges = _charge_edges(bin_width)
    counts, _ = np.histogram(dq[:, 0] if len(dq) else [], bins=edges)
    return pd.DataFrame({"qubit_id": qubit_id, "bin_lo": edges[:-1], "bin_hi": edges[1:], "count": counts})


def joint_histogram(records: Sequence[JumpRecord], a: str, b: str, bin_width: float = 0.02) -> pd.DataFrame:
    dq, _ = _matrix(records, [a, b])
    edges = _charge_edges(bin_width)
    counts, _, _ = np.histogram2d(dq[:, 0] if len(dq) else [], dq[:, 1] if len(dq) else [], bins=(edges, edges))
    ia, ib = np.nonzero(counts)
    return pd.DataFrame({
        "qubit_a": a, "qubit_b": b,
        "dq_a_lo": edges[ia], "dq_b_lo": edges[ib],
        "count": counts[ia, ib].astype(int),
    })


# === Parameter scan ===

def _nearest_target(separation: float, targets: Mapping[float, float]) -> Optional[float]:
    best = min(targets, key=lambda s: abs(s - separation))
    return best if abs(best - separation) <= 0.05 * best else None


def score_scan_row(row: Mapping, targets: Mapping = MEASURED_TARGETS) -> float:
    """χ²-like distance to the measured p_corr values plus a penalty per wrong asymmetry sign."""
    sigma = targets["p_corr_sigma"]
    score = 0.0
    for key, value in row.items():
        if not str(key).startswith("p_corr_"):
            continue
        sep = float(str(key).split("_")[-1])
        target_sep = _nearest_target(sep, targets["p_corr"])
        if target_sep is None:
            continue
        if value is None or (isinstance(value, float) and math.isnan(value)):
            score += 25.0
        else:
            score += ((value - targets["p_corr"][target_sep]) / sigma) ** 2
    ca = row.get("charge_asymmetry", math.nan)
    if not (ca > targets["charge_asymmetry_min"]):
        score += 4.0
    a1324 = row.get("asym_1324", math.nan)
    if not (a1324 > targets["asym_1324_min"]):
        score += 4.0
    return float(score)


def parameter_scan(lambda_traps: Sequence[float], f_qs: Sequence[float],
                   evaluate: Callable[[float, float], Mapping], targets: Mapping = MEASURED_TARGETS,
                   progress: bool = False, monitor: Optional[RunMonitor] = None) -> pd.DataFrame:
    """Run `evaluate(lambda_trap, f_q)` on every grid point and flag the best-scoring row.

    `evaluate` returns a mapping with p_corr_<separation> entries plus charge_asymmetry and
    asym_1324 (for the closest pair); callers reuse one event stream across the grid.
    A point whose statistics or fits fail is recorded on `monitor`, kept with an infinite
    score and never flagged best.
    """
    grid = list(itertools.product(lambda_traps, f_qs))
    if not grid:
        raise ValueError("parameter scan grid is empty")
    monitor = monitor if monitor is not None else RunMonitor()
    rows = []
    for lam, fq in tqdm(grid, desc="parameter scan", disable=not progress):
        try:
            row = {"lambda_trap": float(lam), "f_q": float(fq), **dict(evaluate(lam, fq))}
            row["score"] = score_scan_row(row, targets)
        except (StatisticsError, NumericalError) as e:
            monitor.log_error(e, f"scan λ_trap={lam:g} f_q={fq:g}")
            monitor.increment("parameter_scan", "points_failed")
            row = {"lambda_trap": float(lam), "f_q": float(fq), "score": math.inf}
        rows.append(row)
        log_info(f"λ_trap={lam:g} µm, f_q={fq:g}: score {row['score']:.2f}", "parameter_scan")
    table = pd.DataFrame(rows)
    if not np.isfinite(table["score"]).any():
        raise StatisticsError("every parameter scan point failed")
    table["best"] = False
    table.loc[table["score"].idxmin(), "best"] = True
    best = table[table["best"]].iloc[0]
    if len(table) > 1 and (table["score"] == best["score"]).sum() > 1:
        monitor.log_warning("several scan rows share the best score; first one flagged", "parameter_scan")
    return table
