# ------------------------------------------------------------------------------------
# ⚠️ error_model.py – Correlated Phase-Flip and Bit-Flip Errors
#
# ✅ TransmonParams – E_C, E_J (Hz), ω01 (rad/s), surface-code cycle τ_sc
# ✅ charge_dispersion() – half peak-to-peak 01 dispersion in the transmon limit
# ✅ phase_flip_error() – ε_φ = (Δω01² τ_sc² / 3) sin²(π Δq / 2e)
# ✅ dipole_transient_error() – rotation from the expanding e-h dipole, ε_θ = θ² / 6 (capped)
# ✅ nonadiabatic_surface() – cells where c_s |∇α| E_C/ħ ≥ ω01²
# ✅ fault_threshold() / exceedance_curves() – p^m table and joint-error exceedance fractions
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Dict, Literal, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from sim_core.errors import ConfigError, StatisticsError
from sim_core.event_source import ImpactEvent
from sim_core.geometry_layout import QubitGeometry
from sim_core.induced_charge import EventOutcome
from sim_core.rng_streams import as_generator
from sim_core.weighting_field import GRAD_NEAR_WALL, WeightingGrid, grad_alpha_values, gradient_magnitude_field

PER_UM_TO_PER_M = 1.0e6


@dataclass(frozen=True)
class TransmonParams:
    E_C: float = 250.0e6                    # Hz (E_C / h)
    E_J: float = 12.5e9                     # Hz (E_J / h)
    w01: float = 2 * math.pi * 5.0e9        # rad/s
    tau_sc: float = 1.0e-6                  # s
    eps_theta_cap: float = 0.5
    theta_combination: Literal["signed", "quadrature"] = "signed"
    joint_rule: Literal["min", "geometric_mean"] = "min"

    def __post_init__(self):
        problems = []
        if self.E_C <= 0 or self.E_J <= 0:
            problems.append("transmon: E_C and E_J must be > 0")
        elif self.E_J / self.E_C <= 1:
            problems.append("transmon: ξ = E_J/E_C must exceed 1")
        if self.tau_sc <= 0:
            problems.append("transmon.tau_sc: must be > 0")
        if self.w01 <= 0:
            problems.append("transmon.w01: must be > 0")
        if not (0 < self.eps_theta_cap <= 1):
            problems.append("transmon.eps_theta_cap: must lie in (0, 1]")
        if self.theta_combination not in ("signed", "quadrature"):
            problems.append(f"transmon.theta_combination: unknown {self.theta_combination!r}")
        if self.joint_rule not in ("min", "geometric_mean"):
            problems.append(f"transmon.joint_rule: unknown {self.joint_rule!r}")
        if problems:
            raise ConfigError(problems)

    @property
    def xi(self) -> float:
        return self.E_J / self.E_C

    @property
    def ec_angular(self) -> float:
        """E_C / ħ in rad/s."""
        return 2 * math.pi * self.E_C

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "TransmonParams":
        names = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in cfg.items() if k in names})

    def for_qubit(self, q: QubitGeometry) -> "TransmonParams":
        return replace(self, E_C=q.charging_energy_EC, E_J=q.josephson_energy_EJ, w01=q.frequency_w01)


def charge_dispersion(params: TransmonParams) -> float:
    """Δω01 in rad/s (half the peak-to-peak modulation with offset charge)."""
    half_xi = params.xi / 2
    return (
        16 * math.sqrt(2 / math.pi) * params.ec_angular * half_xi ** 0.75
        * math.exp(-math.sqrt(8 * params.xi)) * (16 * math.sqrt(half_xi) + 1)
    )


def phase_flip_error(dq, dispersion: float, tau_sc: float):
    """ε_φ for an unaliased jump Δq (e); 2e-periodic, even, largest at Δq = e."""
    if tau_sc <= 0:
        raise ValueError("tau_sc must be > 0")
    eps = (dispersion * tau_sc) ** 2 / 3 * np.sin(math.pi * np.asarray(dq, dtype=float) / 2) ** 2
    eps = np.clip(eps, 0.0, 1.0)
    return float(eps) if np.ndim(eps) == 0 else eps


def rotation_angle(n_pairs, grad_per_m, cos_eta, params: TransmonParams, c_s: float):
    """θ = 2 √n c_s |∇α| √(E_C / ħ ω01³) cos η, with |∇α| in 1/m and c_s in m/s."""
    return (2 * np.sqrt(n_pairs) * c_s * np.asarray(grad_per_m)
            * math.sqrt(params.ec_angular / params.w01 ** 3) * np.asarray(cos_eta))


def deposited_energy_ec(n_pairs, grad_per_m, cos_eta, params: TransmonParams, c_s: float):
    """Transient energy left in the qubit, in units of E_C."""
    return np.asarray(n_pairs) * (c_s * np.asarray(grad_per_m)) ** 2 / params.w01 ** 2 * np.asarray(cos_eta) ** 2


def combine_rotations(thetas: np.ndarray, combination: str = "signed") -> float:
    if combination == "quadrature":
        return float(np.sqrt(np.sum(np.square(thetas))))
    return float(np.sum(thetas))


def dipole_transient_error(event: ImpactEvent, pair_counts: Sequence[float], grid: WeightingGrid,
                           params: TransmonParams, c_s: float, rng, monitor=None) -> Tuple[float, float, float]:
    """(θ_total, ε_θ, deposited energy / E_C) for one qubit and one event.

    Each segment is one deposit point at its midpoint holding `pair_counts[k]` pairs (after f_q);
    cos η is drawn uniformly on [−1, 1] per deposit. Deposits within one cell of a grid wall are
    skipped and counted on the monitor.
    """
    rng = as_generator(rng)
    counts = np.asarray(pair_counts, dtype=float)
    if len(counts) != len(event.energies):
        raise ValueError("need one pair count per segment")
    mids = 0.5 * (event.starts + event.ends)
    cos_eta = rng.uniform(-1.0, 1.0, len(counts))
    grad, status = grad_alpha_values(grid, mids)
    skipped = int(np.sum(status == GRAD_NEAR_WALL))
    if skipped and monitor is not None:
        monitor.increment("error_model", "dipole_deposit_skipped", skipped)
    grad_m = np.linalg.norm(grad, axis=1) * PER_UM_TO_PER_M
    thetas = rotation_angle(counts, grad_m, cos_eta, params, c_s)
    energy = float(np.sum(deposited_energy_ec(counts, grad_m, cos_eta, params, c_s)))
    theta = combine_rotations(thetas, params.theta_combination)
    eps = min(theta ** 2 / 6, params.eps_theta_cap)
    return theta, eps, energy


@dataclass(frozen=True, eq=False)
class NonadiabaticRegion:
    mask: np.ndarray
    cell_volume: float

    @property
    def n_cells(self) -> int:
        return int(self.mask.sum())

    @property
    def volume(self) -> float:
        """µm³"""
        return self.n_cells * self.cell_volume

    @property
    def is_empty(self) -> bool:
        return self.n_cells == 0

    def indices(self) -> np.ndarray:
        return np.argwhere(self.mask)


def nonadiabatic_surface(grid: WeightingGrid, params: TransmonParams, c_s: float) -> NonadiabaticRegion:
    """Substrate nodes where the dipole transient is faster than the qubit can follow."""
    grad_m = gradient_magnitude_field(grid) * PER_UM_TO_PER_M
    mask = c_s * grad_m * params.ec_angular >= params.w01 ** 2
    mask[:, :, grid.surface_index + 1:] = False
    return NonadiabaticRegion(mask=mask, cell_volume=float(np.prod(grid.spacing)))


def fault_threshold(p: float, m: int) -> float:
    if not (0 < p < 1):
        raise ValueError("threshold p must lie in (0, 1)")
    if int(m) != m or m < 1:
        raise ValueError("correlation degree m must be an integer ≥ 1")
    return p ** int(m)


def threshold_table(p: float, degrees: Sequence[int]) -> pd.DataFrame:
    return pd.DataFrame({"degree": list(degrees), "threshold": [fault_threshold(p, m) for m in degrees]})


# === Exceedance ===

@dataclass
class ErrorReport:
    exceedance: pd.DataFrame
    thresholds: pd.DataFrame
    n_events: int

    def fraction(self, kind: str, pair: str, level: float, species: str = "all") -> float:
        t = self.exceedance
        row = t[(t["kind"] == kind) & (t["pair"] == pair) & (t["species"] == species) & np.isclose(t["level"], level)]
        if row.empty:
            raise KeyError(f"no exceedance entry for {kind} {pair} {species} {level}")
        return float(row["fraction"].iloc[0])


def joint_error(eps_a: np.ndarray, eps_b: np.ndarray, rule: str = "min") -> np.ndarray:
    if rule == "geometric_mean":
        return np.sqrt(eps_a * eps_b)
    return np.minimum(eps_a, eps_b)


def exceedance_curves(outcomes: Sequence[EventOutcome], pairs: Mapping[Tuple[str, str], float],
                      levels: Sequence[float], joint_rule: str = "min", threshold_p: float = 1e-2,
                      threshold_degrees: Sequence[int] = (1, 2, 3, 4)) -> ErrorReport:
    """Fraction of events whose joint pair error exceeds each level, overall and per species."""
    if not outcomes:
        raise StatisticsError("exceedance curves need at least one event")
    levels = sorted(float(x) for x in levels)
    qubits = outcomes[0].qubit_ids
    species = np.array([o.species for o in outcomes])
    phase = np.array([o.eps_phi for o in outcomes])
    bit = np.array([o.eps_theta for o in outcomes])
    groups = {"all": np.ones(len(outcomes), bool)}
    for sp in ("gamma", "muon"):
        sel = species == sp
        if sel.any():
            groups[sp] = sel
    rows = []
    for (a, b), sep in pairs.items():
        ia, ib = qubits.index(a), qubits.index(b)
        for kind, eps in (("phase", phase), ("bit", bit)):
            joint = joint_error(eps[:, ia], eps[:, ib], joint_rule)
            for name, sel in groups.items():
                n = int(sel.sum())
                for level in levels:
                    frac = float(np.mean(joint[sel] > level))
                    rows.append({
                        "kind": kind, "pair": f"{a}-{b}", "separation_um": sep, "species": name,
                        "level": level, "fraction": frac, "stderr": math.sqrt(frac * (1 - frac) / n), "n_events": n,
                    })
    return ErrorReport(
        exceedance=pd.DataFrame(rows),
        thresholds=threshold_table(threshold_p, threshold_degrees),
        n_events=len(outcomes),
    )
