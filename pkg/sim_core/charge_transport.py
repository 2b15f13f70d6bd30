# ------------------------------------------------------------------------------------
# 🔋 charge_transport.py – Electron-Hole Pairs, Trapping and Charge PDFs
#
# ✅ TransportParams – λ_trap, f_q, pair energy, valley axes and spread, carrier cap
# ✅ create_pairs() – one pair per 3.6 eV, Bernoulli f_q thinning, weighted subsampling
# ✅ transport() – single exponential flight; holes isotropic, electrons along <100> valleys
# ✅ build_charge_pdf() – per-depth displacement histograms, sparse and cacheable
# ✅ sample_from_pdf() / transport_with_pdf() – final positions by weighted table draws
# ✅ save_pdf_pair() / load_pdf_pair() / dump_pdf_csv() – versioned cache + text dump
#
# Carriers stop where their path crosses a substrate face; nothing leaves the volume.
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from shared.logging_utils import log_info, log_success
from sim_core.errors import ConfigError, OutOfBoundsError
from sim_core.event_source import ImpactEvent
from sim_core.geometry_layout import Substrate, crystal_rotation
from sim_core.rng_streams import STREAM_PAIRS, STREAM_PDF, STREAM_TRANSPORT, as_generator, event_rng

ELECTRON = -1
HOLE = +1
PDF_CACHE_VERSION = 1


@dataclass(frozen=True)
class TransportParams:
    lambda_trap: float = 300.0
    f_q: float = 0.2
    pair_energy: float = 3.6
    valley_axes: Optional[Tuple[Tuple[float, float, float], ...]] = None
    valley_spread_sigma: float = math.radians(15.0)
    max_carriers_per_event: int = 20000

    def __post_init__(self):
        problems = []
        if self.lambda_trap <= 0:
            problems.append("transport.lambda_trap: must be > 0")
        if not (0 < self.f_q <= 1):
            problems.append("transport.f_q: must lie in (0, 1]")
        if self.pair_energy <= 0:
            problems.append("transport.pair_energy: must be > 0")
        if self.valley_spread_sigma < 0:
            problems.append("transport.valley_spread_sigma: must be ≥ 0")
        if self.max_carriers_per_event < 1:
            problems.append("transport.max_carriers_per_event: must be ≥ 1")
        if self.valley_axes is not None:
            axes = np.asarray(self.valley_axes, dtype=float)
            if axes.ndim != 2 or axes.shape[1] != 3 or np.any(np.linalg.norm(axes, axis=1) == 0):
                problems.append("transport.valley_axes: need a list of nonzero 3-vectors")
            else:
                object.__setattr__(self, "valley_axes", tuple(tuple(map(float, a)) for a in axes))
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "TransportParams":
        names = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in cfg.items() if k in names})

    def resolved_axes(self, substrate: Substrate) -> np.ndarray:
        """Valley axes in chip coordinates; default is the six <100> directions of the crystal."""
        if self.valley_axes is not None:
            axes = np.asarray(self.valley_axes, dtype=float)
            return axes / np.linalg.norm(axes, axis=1, keepdims=True)
        rot = crystal_rotation(substrate)
        return np.vstack([rot.T, -rot.T])


@dataclass(frozen=True, eq=False)
class PairCloud:
    """Retained pair positions for one event; every pair carries the same weight.

    `segment_counts` holds the pairs kept on each track segment after f_q thinning, scaled by
    `weight` when the carrier cap applied.
    """
    positions: np.ndarray
    weight: float = 1.0
    n_raw: int = 0
    n_retained: int = 0
    event_id: int = 0
    segment_counts: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class CarrierSet:
    signs: np.ndarray          # -1 electron, +1 hole
    positions: np.ndarray      # final positions (µm)
    weights: np.ndarray
    origin_event_id: int = 0

    def __post_init__(self):
        signs = np.asarray(self.signs, dtype=np.int8).reshape(-1)
        positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (len(signs) == len(positions) == len(weights)):
            raise ValueError("carrier arrays differ in length")
        if np.any(weights <= 0):
            raise ValueError("carrier weights must be > 0")
        if not np.all(np.isin(signs, (ELECTRON, HOLE))):
            raise ValueError("carrier signs must be -1 or +1")
        e_w = weights[signs == ELECTRON].sum()
        h_w = weights[signs == HOLE].sum()
        if not math.isclose(e_w, h_w, rel_tol=1e-9, abs_tol=1e-9):
            raise ValueError(f"electron weight {e_w} differs from hole weight {h_w}")
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.signs)

    @property
    def electrons(self) -> np.ndarray:
        return self.positions[self.signs == ELECTRON]

    @property
    def holes(self) -> np.ndarray:
        return self.positions[self.signs == HOLE]

    @classmethod
    def empty(cls, event_id: int = 0) -> "CarrierSet":
        return cls(np.zeros(0, np.int8), np.zeros((0, 3)), np.zeros(0), event_id)

    @classmethod
    def from_species(cls, electrons: np.ndarray, holes: np.ndarray, weight: float, event_id: int = 0) -> "CarrierSet":
        n_e, n_h = len(electrons), len(holes)
        return cls(
            signs=np.concatenate([np.full(n_e, ELECTRON), np.full(n_h, HOLE)]).astype(np.int8),
            positions=np.vstack([np.reshape(electrons, (-1, 3)), np.reshape(holes, (-1, 3))]),
            weights=np.full(n_e + n_h, float(weight)),
            origin_event_id=event_id,
        )


# === Pair creation ===

def create_pairs(event: ImpactEvent, params: TransportParams, rng) -> PairCloud:
    """Pairs uniform along each segment, thinned by f_q, capped at max_carriers_per_event."""
    rng = as_generator(rng)
    n_raw = np.rint(event.energies / params.pair_energy).astype(np.int64)
    kept = rng.binomial(n_raw, params.f_q) if params.f_q < 1 else n_raw.copy()
    n_retained = int(kept.sum())
    weight = 1.0
    if n_retained > params.max_carriers_per_event:
        kept = rng.multivariate_hypergeometric(kept, params.max_carriers_per_event)
        weight = n_retained / params.max_carriers_per_event
    seg_index = np.repeat(np.arange(len(kept)), kept)
    u = rng.random(len(seg_index))[:, None]
    starts, ends = event.starts[seg_index], event.ends[seg_index]
    positions = starts + u * (ends - starts)
    return PairCloud(positions=positions, weight=weight, n_raw=int(n_raw.sum()),
                     n_retained=n_retained, event_id=event.event_id, segment_counts=kept * weight)


# === Transport ===

def _isotropic(rng: np.random.Generator, n: int) -> np.ndarray:
    cos_t = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2 * math.pi, n)
    sin_t = np.sqrt(1.0 - cos_t ** 2)
    return np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])


def _valley_directions(rng: np.random.Generator, n: int, axes: np.ndarray, sigma: float) -> np.ndarray:
    base = axes[rng.integers(0, len(axes), n)]
    if sigma <= 0:
        return base.copy()
    kick = sigma * rng.standard_normal((n, 3))
    kick -= np.sum(kick * base, axis=1, keepdims=True) * base
    d = base + kick
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _distance_to_boundary(pos: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = np.where(dirs > 0, (hi - pos) / dirs, np.inf)
        t_lo = np.where(dirs < 0, (lo - pos) / dirs, np.inf)
    return np.clip(np.minimum(t_hi, t_lo).min(axis=1), 0.0, None)


def _fly(origins: np.ndarray, sign: int, params: TransportParams, substrate: Substrate,
         axes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(origins)
    if n == 0:
        return np.zeros((0, 3))
    dirs = _isotropic(rng, n) if sign == HOLE else _valley_directions(rng, n, axes, params.valley_spread_sigma)
    free_path = rng.exponential(params.lambda_trap, n)
    lo, hi = substrate.bounds
    travel = np.minimum(free_path, _distance_to_boundary(origins, dirs, lo, hi))
    return np.clip(origins + travel[:, None] * dirs, lo, hi)


def transport(pairs: PairCloud | np.ndarray, params: TransportParams, substrate: Substrate, rng,
              weight: float | None = None, event_id: int | None = None) -> CarrierSet:
    """Move every electron and hole of the pair cloud to its trap (or exit-surface) position."""
    rng = as_generator(rng)
    if isinstance(pairs, PairCloud):
        origins, w, eid = pairs.positions, pairs.weight, pairs.event_id
    else:
        origins, w, eid = np.reshape(pairs, (-1, 3)), 1.0, 0
    w = w if weight is None else weight
    eid = eid if event_id is None else event_id
    axes = params.resolved_axes(substrate)
    electrons = _fly(origins, ELECTRON, params, substrate, axes, rng)
    holes = _fly(origins, HOLE, params, substrate, axes, rng)
    return CarrierSet.from_species(electrons, holes, w, eid)


def transport_event(event: ImpactEvent, params: TransportParams, substrate: Substrate, seed: int) -> CarrierSet:
    """create_pairs + transport on the event's own streams."""
    pairs = create_pairs(event, params, event_rng(seed, STREAM_PAIRS, event.event_id))
    return transport(pairs, params, substrate, event_rng(seed, STREAM_TRANSPORT, event.event_id))


# === Charge PDFs ===

@dataclass(frozen=True, eq=False)
class ChargePdf:
    """Per-origin-depth histograms of final position for one species.

    x / y axes are lateral displacements from the origin; the z axis is absolute final depth.
    Layer k stores its nonzero cells as flat indices with probabilities; `lost[k]` is the mass
    that left the lateral window, so probs.sum() + lost == 1. Draws keep that mass outside the
    window, pinned on its edge.
    """
    species: Literal["electron", "hole"]
    origin_z_edges: np.ndarray
    x_edges: np.ndarray
    y_edges: np.ndarray
    z_edges: np.ndarray
    indices: Tuple[np.ndarray, ...]
    probs: Tuple[np.ndarray, ...]
    lost: np.ndarray
    sample_count: int
    params_hash: str = ""

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (len(self.x_edges) - 1, len(self.y_edges) - 1, len(self.z_edges) - 1)

    @property
    def n_layers(self) -> int:
        return len(self.origin_z_edges) - 1

    def layer_of(self, z: float) -> int:
        lo, hi = self.origin_z_edges[0], self.origin_z_edges[-1]
        if not (lo <= z <= hi):
            raise OutOfBoundsError(f"origin depth {z:.2f} µm outside the table range [{lo}, {hi}]")
        return int(min(np.searchsorted(self.origin_z_edges, z, side="right") - 1, self.n_layers - 1))

    def layer_mass(self, k: int) -> float:
        return float(self.probs[k].sum())

    def dense_layer(self, k: int) -> np.ndarray:
        out = np.zeros(int(np.prod(self.shape)))
        out[self.indices[k]] = self.probs[k]
        return out.reshape(self.shape)

    def central_fraction(self, k: int) -> float:
        """Mass in the x/y bin holding zero displacement, summed over depth."""
        ix = np.searchsorted(self.x_edges, 0.0, side="right") - 1
        iy = np.searchsorted(self.y_edges, 0.0, side="right") - 1
        return float(self.dense_layer(k)[ix, iy, :].sum())

    def draw(self, k: int, n: int, rng: np.random.Generator) -> np.ndarray:
        """n draws of (dx, dy, z) from layer k, the `lost` mass included.

        A carrier that left the lateral window comes back pinned on the window edge in a uniform
        azimuthal direction with z = NaN; the caller keeps it at its origin depth.
        """
        if n == 0:
            return np.zeros((0, 3))
        p = self.probs[k]
        mass = float(p.sum())
        lost = max(float(self.lost[k]), 0.0)
        if mass + lost <= 0:
            raise OutOfBoundsError(f"{self.species} layer {k} holds no mass")
        escaped = rng.random(n) < lost / (mass + lost)
        out = np.empty((n, 3))

        n_in = int(n - escaped.sum())
        if n_in:
            cells = rng.choice(self.indices[k], size=n_in, p=p / mass)
            ix, iy, iz = np.unravel_index(cells, self.shape)
            jitter = rng.random((n_in, 3))
            inside = np.empty((n_in, 3))
            for d, (edges, idx) in enumerate(((self.x_edges, ix), (self.y_edges, iy), (self.z_edges, iz))):
                inside[:, d] = edges[idx] + jitter[:, d] * (edges[idx + 1] - edges[idx])
            out[~escaped] = inside

        n_out = n - n_in
        if n_out:
            phi = rng.uniform(0.0, 2 * math.pi, n_out)
            u = np.column_stack([np.cos(phi), np.sin(phi)])
            half = np.array([self.x_edges[-1], self.y_edges[-1]])
            with np.errstate(divide="ignore"):
                scale = np.min(half / np.abs(u), axis=1)
            out[escaped, :2] = u * scale[:, None]
            out[escaped, 2] = np.nan
        return out


def _bin_edges(n_bins: int, width: float) -> np.ndarray:
    half = 0.5 * n_bins * width
    return np.linspace(-half, half, n_bins + 1)


def pdf_cache_key(params: TransportParams, substrate: Substrate, samples_per_zbin: int, seed: int,
                  zbin_width: float, lateral_bin: float, n_bins: int) -> str:
    payload = {
        "version": PDF_CACHE_VERSION,
        "params": asdict(params),
        "substrate": asdict(substrate),
        "samples_per_zbin": int(samples_per_zbin),
        "seed": int(seed),
        "zbin_width": zbin_width,
        "lateral_bin": lateral_bin,
        "n_bins": n_bins,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=list).encode()).hexdigest()[:20]


def build_charge_pdf(params: TransportParams, substrate: Substrate, samples_per_zbin: int = 100_000,
                     seed: int = 1, zbin_width: float = 10.0, lateral_bin: float = 10.0,
                     n_bins: int = 101, progress: bool = False) -> Tuple[ChargePdf, ChargePdf]:
    """Electron and hole tables from pairs started uniformly along a vertical line at the chip center."""
    if samples_per_zbin < 10_000:
        raise ConfigError(["transport.pdf_samples_per_zbin: must be ≥ 10000"])
    z0 = substrate.thickness_z0
    n_layers = int(math.ceil(z0 / zbin_width - 1e-9))
    origin_edges = np.minimum(np.arange(n_layers + 1) * zbin_width, z0)
    xy_edges = _bin_edges(n_bins, lateral_bin)
    z_edges = np.linspace(0.0, z0, n_bins + 1)
    key = pdf_cache_key(params, substrate, samples_per_zbin, seed, zbin_width, lateral_bin, n_bins)
    axes = params.resolved_axes(substrate)
    center = np.array([0.5 * substrate.side_x, 0.5 * substrate.side_y])

    tables = {ELECTRON: ([], [], []), HOLE: ([], [], [])}
    layers = tqdm(range(n_layers), desc="charge PDF layers", disable=not progress)
    for k in layers:
        rng = event_rng(seed, STREAM_PDF, k)
        origins = np.empty((samples_per_zbin, 3))
        origins[:, :2] = center
        origins[:, 2] = rng.uniform(origin_edges[k], origin_edges[k + 1], samples_per_zbin)
        for sign in (ELECTRON, HOLE):
            final = _fly(origins, sign, params, substrate, axes, rng)
            disp = np.column_stack([final[:, :2] - center, final[:, 2]])
            counts, _ = np.histogramdd(disp, bins=(xy_edges, xy_edges, z_edges))
            flat = counts.ravel() / samples_per_zbin
            nz = np.flatnonzero(flat)
            idx, prob, lost = tables[sign]
            idx.append(nz)
            prob.append(flat[nz])
            lost.append(1.0 - flat[nz].sum())

    def _pack(sign: int, name: str) -> ChargePdf:
        idx, prob, lost = tables[sign]
        return ChargePdf(species=name, origin_z_edges=origin_edges, x_edges=xy_edges, y_edges=xy_edges.copy(),
                         z_edges=z_edges, indices=tuple(idx), probs=tuple(prob), lost=np.array(lost),
                         sample_count=samples_per_zbin, params_hash=key)

    e_pdf, h_pdf = _pack(ELECTRON, "electron"), _pack(HOLE, "hole")
    log_success(
        f"charge PDFs built: {n_layers} layers x {samples_per_zbin} pairs, mean lost "
        f"e {e_pdf.lost.mean():.3f} / h {h_pdf.lost.mean():.3f}",
        "charge_transport",
    )
    return e_pdf, h_pdf


def _sample_layered(pdf: ChargePdf, origins: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((len(origins), 3))
    layer = np.array([pdf.layer_of(z) for z in origins[:, 2]], dtype=int) if len(origins) else np.zeros(0, int)
    for k in np.unique(layer):
        sel = np.flatnonzero(layer == k)
        draws = pdf.draw(int(k), len(sel), rng)
        out[sel, :2] = origins[sel, :2] + draws[:, :2]
        out[sel, 2] = np.where(np.isnan(draws[:, 2]), origins[sel, 2], draws[:, 2])
    return out


def sample_from_pdf(pdfs: Tuple[ChargePdf, ChargePdf], origin, n_pairs: int, weight: float, rng,
                    substrate: Substrate | None = None, event_id: int = 0) -> CarrierSet:
    """n_pairs electrons and holes from one origin; clipped to the substrate when one is given."""
    rng = as_generator(rng)
    origins = np.repeat(np.asarray(origin, dtype=float).reshape(1, 3), n_pairs, axis=0)
    return _pdf_carriers(pdfs, origins, weight, rng, substrate, event_id)


def _pdf_carriers(pdfs, origins, weight, rng, substrate, event_id) -> CarrierSet:
    e_pdf, h_pdf = pdfs
    electrons = _sample_layered(e_pdf, origins, rng)
    holes = _sample_layered(h_pdf, origins, rng)
    if substrate is not None:
        lo, hi = substrate.bounds
        electrons, holes = np.clip(electrons, lo, hi), np.clip(holes, lo, hi)
    return CarrierSet.from_species(electrons, holes, weight, event_id)


def transport_with_pdf(pairs: PairCloud, pdfs: Tuple[ChargePdf, ChargePdf], substrate: Substrate, rng) -> CarrierSet:
    """PDF-mode replacement for transport(): one table draw per carrier at its pair's depth."""
    return _pdf_carriers(pdfs, pairs.positions, pairs.weight, as_generator(rng), substrate, pairs.event_id)


# === Persistence ===

def save_pdf_pair(pdfs: Sequence[ChargePdf], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"version": PDF_CACHE_VERSION}
    for pdf in pdfs:
        p = pdf.species
        arrays.update({
            f"{p}_origin_z_edges": pdf.origin_z_edges,
            f"{p}_x_edges": pdf.x_edges,
            f"{p}_y_edges": pdf.y_edges,
            f"{p}_z_edges": pdf.z_edges,
            f"{p}_offsets": np.cumsum([0] + [len(i) for i in pdf.indices]),
            f"{p}_indices": np.concatenate(pdf.indices) if pdf.indices else np.zeros(0, int),
            f"{p}_probs": np.concatenate(pdf.probs) if pdf.probs else np.zeros(0),
            f"{p}_lost": pdf.lost,
            f"{p}_sample_count": pdf.sample_count,
            f"{p}_params_hash": pdf.params_hash,
        })
    np.savez_compressed(path, **arrays)
    return path


def load_pdf_pair(path: str | Path) -> Tuple[ChargePdf, ChargePdf]:
    out = []
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != PDF_CACHE_VERSION:
            raise ValueError(f"{path}: charge PDF cache version {int(data['version'])} is not supported")
        for p in ("electron", "hole"):
            off = data[f"{p}_offsets"]
            idx, prob = data[f"{p}_indices"], data[f"{p}_probs"]
            out.append(ChargePdf(
                species=p,
                origin_z_edges=data[f"{p}_origin_z_edges"],
                x_edges=data[f"{p}_x_edges"],
                y_edges=data[f"{p}_y_edges"],
                z_edges=data[f"{p}_z_edges"],
                indices=tuple(idx[a:b] for a, b in zip(off[:-1], off[1:])),
                probs=tuple(prob[a:b] for a, b in zip(off[:-1], off[1:])),
                lost=data[f"{p}_lost"],
                sample_count=int(data[f"{p}_sample_count"]),
                params_hash=str(data[f"{p}_params_hash"]),
            ))
    return out[0], out[1]


def load_or_build_pdf(params: TransportParams, substrate: Substrate, cache_dir: Path | None,
                      samples_per_zbin: int, seed: int, zbin_width: float = 10.0, lateral_bin: float = 10.0,
                      n_bins: int = 101, progress: bool = False) -> Tuple[ChargePdf, ChargePdf]:
    key = pdf_cache_key(params, substrate, samples_per_zbin, seed, zbin_width, lateral_bin, n_bins)
    if cache_dir is not None:
        path = Path(cache_dir) / f"charge_pdf_{key}.npz"
        if path.exists():
            log_info(f"reusing cached charge PDFs: {path.name}", "charge_transport")
            return load_pdf_pair(path)
    pdfs = build_charge_pdf(params, substrate, samples_per_zbin, seed, zbin_width, lateral_bin, n_bins, progress)
    if cache_dir is not None:
        save_pdf_pair(pdfs, Path(cache_dir) / f"charge_pdf_{key}.npz")
    return pdfs


def dump_pdf_csv(pdf: ChargePdf, path: str | Path) -> Path:
    """Nonzero cells as rows: layer, origin depth range, bin centers, probability."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xc = 0.5 * (pdf.x_edges[:-1] + pdf.x_edges[1:])
    yc = 0.5 * (pdf.y_edges[:-1] + pdf.y_edges[1:])
    zc = 0.5 * (pdf.z_edges[:-1] + pdf.z_edges[1:])
    frames: List[pd.DataFrame] = []
    for k in range(pdf.n_layers):
        ix, iy, iz = np.unravel_index(pdf.indices[k], pdf.shape)
        frames.append(pd.DataFrame({
            "species": pdf.species,
            "layer": k,
            "origin_z_lo": pdf.origin_z_edges[k],
            "origin_z_hi": pdf.origin_z_edges[k + 1],
            "dx_um": xc[ix],
            "dy_um": yc[iy],
            "z_um": zc[iz],
            "probability": pdf.probs[k],
        }))
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    df.to_csv(path, index=False)
    return path
