# ------------------------------------------------------------------------------------
# ☢️ event_source.py – Muon Tracks and Gamma-Ray Deposits
#
# ✅ SourceSpec / GammaSpectrum – rates, deposit spectrum, muon dE/dx and zenith law
# ✅ sample_gamma() – point-like (or short-segment) deposit uniform in the substrate
# ✅ sample_muon() – straight chord from the top face, cos^n θ zenith law, ≤ 25 µm segments
# ✅ sample_event_stream() – Poisson arrivals, species drawn in proportion to the rates
# ✅ write_events_jsonl() / read_events_jsonl() – replayable event files
# ✅ infer_impact_rate() / split_jump_rate() – jump rate <-> impact rate bookkeeping
#
# Every event draws from its own (seed, event_id) stream, so generation order and worker
# assignment never change an event.
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, List, Literal, Mapping, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from shared.logging_utils import log_info, log_warning
from sim_core.errors import ConfigError, GeometryError, StatisticsError
from sim_core.geometry_layout import Substrate
from sim_core.rng_streams import STREAM_GEOMETRY, STREAM_SCHEDULE, as_generator, event_rng

Species = Literal["muon", "gamma"]
MIN_CHORD_UM = 1.0
MAX_CHORD_RESAMPLES = 1000


# === Spectrum ===

@dataclass(frozen=True)
class GammaSpectrum:
    """Deposited-energy PDF for gamma impacts (eV)."""
    kind: Literal["exponential", "table", "delta"] = "exponential"
    mean_eV: float = 100.0e3
    max_eV: float = 1.0e6
    energies: Tuple[float, ...] = ()
    density: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "exponential":
            if self.mean_eV <= 0 or self.max_eV <= 0:
                raise ConfigError(["source.gamma_spectrum: mean_eV and max_eV must be positive"])
        elif self.kind == "delta":
            if self.mean_eV <= 0:
                raise ConfigError(["source.gamma_spectrum.mean_eV: must be positive"])
        elif self.kind == "table":
            e = np.asarray(self.energies, dtype=float)
            d = np.asarray(self.density, dtype=float)
            if e.ndim != 1 or e.size < 2 or e.size != d.size:
                raise ConfigError(["source.gamma_spectrum: table needs ≥ 2 (energy, density) rows"])
            if np.any(np.diff(e) <= 0) or e[0] < 0:
                raise ConfigError(["source.gamma_spectrum: table energies must be increasing and ≥ 0"])
            if np.any(d < 0) or trapezoid(d, e) <= 0:
                raise ConfigError(["source.gamma_spectrum: table density must be ≥ 0 and integrate to > 0"])
        else:
            raise ConfigError([f"source.gamma_spectrum.kind: unknown kind {self.kind!r}"])

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "GammaSpectrum":
        kind = cfg.get("kind", "exponential")
        if kind == "table":
            if cfg.get("table_path"):
                return cls.from_table(cfg["table_path"])
            return cls(kind="table", energies=tuple(cfg["energies"]), density=tuple(cfg["density"]))
        return cls(kind=kind, mean_eV=float(cfg.get("mean_eV", 100.0e3)), max_eV=float(cfg.get("max_eV", 1.0e6)))

    @classmethod
    def from_table(cls, path: str | Path) -> "GammaSpectrum":
        """Two-column text table: energy_eV, density (comma or whitespace separated, # comments)."""
        try:
            raw = Path(path).read_text().replace(",", " ")
            data = np.loadtxt(raw.splitlines(), ndmin=2)
        except (OSError, ValueError) as e:
            raise ConfigError([f"source.gamma_spectrum.table_path: cannot read {path}: {e}"]) from e
        return cls(kind="table", energies=tuple(data[:, 0]), density=tuple(data[:, 1]))

    def _table_cdf(self) -> Tuple[np.ndarray, np.ndarray]:
        e = np.asarray(self.energies, dtype=float)
        d = np.asarray(self.density, dtype=float)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(e))])
        return e, cdf / cdf[-1]

    def sample(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(size)
        if self.kind == "delta":
            return np.full_like(u, self.mean_eV) if size is not None else float(self.mean_eV)
        if self.kind == "exponential":
            # Inverse CDF of the exponential truncated at max_eV
            span = -math.expm1(-self.max_eV / self.mean_eV)
            return -self.mean_eV * np.log1p(-u * span)
        e, cdf = self._table_cdf()
        return np.interp(u, cdf, e)

    def mean(self) -> float:
        if self.kind == "delta":
            return float(self.mean_eV)
        if self.kind == "exponential":
            mu, emax = self.mean_eV, self.max_eV
            return mu - emax * math.exp(-emax / mu) / -math.expm1(-emax / mu)
        e = np.asarray(self.energies, dtype=float)
        d = np.asarray(self.density, dtype=float)
        return float(trapezoid(e * d, e) / trapezoid(d, e))


@dataclass(frozen=True)
class SourceSpec:
    gamma_rate: float = 19.8e-3
    muon_rate: float = 0.5e-3
    gamma_spectrum: GammaSpectrum = field(default_factory=GammaSpectrum)
    gamma_segment_length: float = 0.0
    muon_dEdx_mean: float = 820.0
    muon_dEdx_sigma: float = 0.3
    muon_zenith_exponent: float = 2.0
    muon_segment_max: float = 25.0
    rng_seed: int = 1

    def __post_init__(self):
        problems = []
        if self.gamma_rate < 0 or self.muon_rate < 0:
            problems.append("source: rates must be ≥ 0")
        if self.muon_dEdx_mean <= 0:
            problems.append("source.muon_dEdx_mean: must be > 0")
        if self.muon_dEdx_sigma < 0:
            problems.append("source.muon_dEdx_sigma: must be ≥ 0")
        if self.muon_zenith_exponent < 0:
            problems.append("source.muon_zenith_exponent: must be ≥ 0")
        if self.muon_segment_max <= 0:
            problems.append("source.muon_segment_max: must be > 0")
        if self.gamma_segment_length < 0:
            problems.append("source.gamma_segment_length: must be ≥ 0")
        if problems:
            raise ConfigError(problems)

    @property
    def total_rate(self) -> float:
        return self.gamma_rate + self.muon_rate

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "SourceSpec":
        spectrum = GammaSpectrum.from_config(cfg.get("gamma_spectrum", {}) or {})
        names = set(cls.__dataclass_fields__) - {"gamma_spectrum"}
        return cls(gamma_spectrum=spectrum, **{k: v for k, v in cfg.items() if k in names})


# === Events ===

@dataclass(frozen=True, eq=False)
class ImpactEvent:
    """One impact: straight segments (start, end, energy_eV) in chip coordinates (µm)."""
    species: Species
    starts: np.ndarray
    ends: np.ndarray
    energies: np.ndarray
    time: float = 0.0
    event_id: int = 0

    def __post_init__(self):
        starts = np.atleast_2d(np.asarray(self.starts, dtype=float))
        ends = np.atleast_2d(np.asarray(self.ends, dtype=float))
        energies = np.atleast_1d(np.asarray(self.energies, dtype=float))
        if self.species not in ("muon", "gamma"):
            raise ValueError(f"unknown species {self.species!r}")
        if starts.shape != ends.shape or starts.shape[1:] != (3,) or len(energies) != len(starts):
            raise ValueError("segment arrays are inconsistent")
        if np.any(energies < 0) or energies.sum() <= 0:
            raise ValueError("segment energies must be ≥ 0 with a positive total")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "energies", energies)

    @property
    def total_energy(self) -> float:
        return float(self.energies.sum())

    @property
    def segments(self) -> List[Tuple[Tuple[float, ...], Tuple[float, ...], float]]:
        return [(tuple(s), tuple(e), float(en)) for s, e, en in zip(self.starts, self.ends, self.energies)]

    @property
    def track_length(self) -> float:
        return float(np.linalg.norm(self.ends - self.starts, axis=1).sum())

    def to_record(self) -> dict:
        return {
            "event_id": int(self.event_id),
            "species": self.species,
            "time": float(self.time),
            "segments": [
                {"start": list(map(float, s)), "end": list(map(float, e)), "energy_eV": float(en)}
                for s, e, en in zip(self.starts, self.ends, self.energies)
            ],
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "ImpactEvent":
        segs = rec["segments"]
        return cls(
            species=rec["species"],
            starts=np.array([s["start"] for s in segs], dtype=float),
            ends=np.array([s["end"] for s in segs], dtype=float),
            energies=np.array([s["energy_eV"] for s in segs], dtype=float),
            time=float(rec.get("time", 0.0)),
            event_id=int(rec.get("event_id", 0)),
        )


def _assert_inside(substrate: Substrate, *arrays: np.ndarray) -> None:
    for pts in arrays:
        if not np.all(substrate.contains(pts, tol=1e-6)):
            raise GeometryError("generated segment endpoint lies outside the substrate")


def _isotropic_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    cos_t = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2 * math.pi, n)
    sin_t = np.sqrt(1.0 - cos_t ** 2)
    return np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])


def _exit_distance(substrate: Substrate, origin: np.ndarray, direction: np.ndarray) -> float:
    """Distance along `direction` from an interior point to the substrate boundary."""
    lo, hi = substrate.bounds
    best = math.inf
    for d in range(3):
        if direction[d] > 0:
            best = min(best, (hi[d] - origin[d]) / direction[d])
        elif direction[d] < 0:
            best = min(best, (lo[d] - origin[d]) / direction[d])
    return max(best, 0.0)


def sample_gamma(spec: SourceSpec, substrate: Substrate, rng) -> ImpactEvent:
    """Gamma deposit: uniform position, energy from the spectrum, optional short segment."""
    rng = as_generator(rng)
    lo, hi = substrate.bounds
    center = lo + rng.random(3) * (hi - lo)
    energy = float(spec.gamma_spectrum.sample(rng))
    if spec.gamma_segment_length <= 0:
        start = end = center
    else:
        direction = _isotropic_directions(rng, 1)[0]
        half = 0.5 * spec.gamma_segment_length
        start = center - min(half, _exit_distance(substrate, center, -direction)) * direction
        end = center + min(half, _exit_distance(substrate, center, direction)) * direction
    start, end = np.clip(start, lo, hi), np.clip(end, lo, hi)
    _assert_inside(substrate, start, end)
    return ImpactEvent(species="gamma", starts=start[None, :], ends=end[None, :], energies=np.array([energy]))


def sample_zenith_cosine(exponent: float, rng: np.random.Generator, size: int | None = None):
    """cos θ with density ∝ cos^n θ per unit solid angle, i.e. pdf(c) = (n + 1) c^n on (0, 1]."""
    if math.isinf(exponent):
        return np.ones(size) if size is not None else 1.0
    u = 1.0 - rng.random(size)          # (0, 1]
    return u ** (1.0 / (exponent + 1.0))


def sample_muon(spec: SourceSpec, substrate: Substrate, rng, monitor=None) -> ImpactEvent:
    """Muon chord entering through the top face, subdivided into ≤ muon_segment_max pieces."""
    rng = as_generator(rng)
    lo, hi = substrate.bounds
    for _ in range(MAX_CHORD_RESAMPLES):
        entry = np.array([rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), hi[2]])
        cos_t = float(sample_zenith_cosine(spec.muon_zenith_exponent, rng))
        phi = rng.uniform(0.0, 2 * math.pi)
        sin_t = math.sqrt(max(0.0, 1.0 - cos_t ** 2))
        direction = np.array([sin_t * math.cos(phi), sin_t * math.sin(phi), -cos_t])
        length = _exit_distance(substrate, entry, direction)
        if length >= MIN_CHORD_UM:
            break
        if monitor is not None:
            monitor.increment("event_source", "muon_chord_resampled")
    else:
        raise GeometryError("could not draw a muon chord longer than 1 µm")

    n_seg = max(1, math.ceil(length / spec.muon_segment_max - 1e-12))
    t = np.linspace(0.0, length, n_seg + 1)
    starts = entry + t[:-1, None] * direction
    ends = entry + t[1:, None] * direction
    starts, ends = np.clip(starts, lo, hi), np.clip(ends, lo, hi)
    seg_len = np.diff(t)
    sigma = spec.muon_dEdx_sigma
    fluctuation = np.exp(sigma * rng.standard_normal(n_seg) - 0.5 * sigma ** 2) if sigma > 0 else np.ones(n_seg)
    energies = seg_len * spec.muon_dEdx_mean * fluctuation
    _assert_inside(substrate, starts, ends)
    return ImpactEvent(species="muon", starts=starts, ends=ends, energies=energies)


def generate_event(spec: SourceSpec, substrate: Substrate, species: Species, event_id: int,
                   time: float = 0.0, seed: int | None = None, monitor=None) -> ImpactEvent:
    """Regenerate one event from (seed, event_id) alone."""
    rng = event_rng(spec.rng_seed if seed is None else seed, STREAM_GEOMETRY, event_id)
    if species == "gamma":
        ev = sample_gamma(spec, substrate, rng)
    elif species == "muon":
        ev = sample_muon(spec, substrate, rng, monitor=monitor)
    else:
        raise ValueError(f"unknown species {species!r}")
    return ImpactEvent(species=ev.species, starts=ev.starts, ends=ev.ends, energies=ev.energies,
                       time=float(time), event_id=int(event_id))


def schedule_events(spec: SourceSpec, n_events: int | None = None, duration: float | None = None,
                    seed: int | None = None) -> List[Tuple[int, Species, float]]:
    """Arrival times and species for a stream, as (event_id, species, time) sorted by time."""
    if n_events is None and duration is None:
        raise ValueError("give n_events or duration")
    if (n_events is not None and n_events < 0) or (duration is not None and duration < 0):
        raise ValueError("n_events and duration must be ≥ 0")
    rate = spec.total_rate
    rng = event_rng(spec.rng_seed if seed is None else seed, STREAM_SCHEDULE)
    if duration is not None:
        if rate == 0 or duration == 0:
            return []
        n = int(rng.poisson(rate * duration))
        times = np.sort(rng.uniform(0.0, duration, n))
    else:
        if n_events == 0:
            return []
        if rate == 0:
            raise ConfigError(["source: gamma_rate and muon_rate are both zero"])
        n = n_events
        times = np.cumsum(rng.exponential(1.0 / rate, n))
    is_gamma = rng.random(n) < spec.gamma_rate / rate
    return [(i, "gamma" if g else "muon", float(t)) for i, (g, t) in enumerate(zip(is_gamma, times))]


def sample_event_stream(spec: SourceSpec, substrate: Substrate, n_events: int | None = None,
                        duration: float | None = None, seed: int | None = None,
                        monitor=None) -> List[ImpactEvent]:
    """Poisson stream of events ordered by time; species chosen in proportion to the rates."""
    schedule = schedule_events(spec, n_events=n_events, duration=duration, seed=seed)
    events = [generate_event(spec, substrate, sp, eid, t, seed=seed, monitor=monitor) for eid, sp, t in schedule]
    n_muon = sum(1 for e in events if e.species == "muon")
    log_info(f"generated {len(events)} events ({len(events) - n_muon} gamma, {n_muon} muon)", "event_source")
    return events


# === Replay files ===

def write_events_jsonl(events: Iterable[ImpactEvent], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_record()) + "\n")
    return path


def iter_events_jsonl(path: str | Path) -> Iterator[ImpactEvent]:
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield ImpactEvent.from_record(json.loads(line))
            except (KeyError, ValueError, TypeError) as e:
                raise ConfigError([f"{path}:{line_no}: malformed event record ({e})"]) from e


def read_events_jsonl(path: str | Path) -> List[ImpactEvent]:
    return list(iter_events_jsonl(path))


# === Rate bookkeeping ===

def infer_impact_rate(observed_jump_rate: float, fraction_above_threshold: float) -> float:
    """Impact rate on the chip (Hz) implied by a per-qubit rate of above-threshold jumps."""
    if not (0 < fraction_above_threshold <= 1):
        raise StatisticsError("fraction of impacts above threshold must lie in (0, 1]")
    if observed_jump_rate < 0:
        raise StatisticsError("observed jump rate must be ≥ 0")
    return observed_jump_rate / fraction_above_threshold


def split_jump_rate(total_rate: float, muon_impact_rate: float, muon_fraction: float) -> float:
    """Jump rate left for gammas after removing the muon contribution."""
    remainder = total_rate - muon_impact_rate * muon_fraction
    if remainder < 0:
        log_warning(f"muon share {muon_impact_rate * muon_fraction:.3e} Hz exceeds the total jump rate",
                    "event_source")
        return 0.0
    return remainder


def species_fractions(events: Sequence[ImpactEvent]) -> dict:
    n = len(events)
    if n == 0:
        return {"gamma": 0.0, "muon": 0.0}
    n_gamma = sum(1 for e in events if e.species == "gamma")
    return {"gamma": n_gamma / n, "muon": (n - n_gamma) / n}
