# ------------------------------------------------------------------------------------
# 📐 geometry_layout.py – Chip, Substrate and Qubit Geometry
#
# ✅ Substrate / QubitGeometry / ChipLayout – immutable data contracts with invariant checks
# ✅ default_layout() – the measured four-qubit chip (340 µm and 640 µm pairs, 3195 µm apart)
# ✅ sensing_area() – uniform-field sensing area π ε r_i r_o
# ✅ crystal_rotation() – crystal (Miller) frame -> chip frame
# ✅ load_layout() / layout_to_dict() – config round trip
#
# Units: µm for lengths, Hz for E_C / E_J (energy over h), rad/s for ω01, m/s for c_s.
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Tuple

import numpy as np

from data_files.config import LAYOUT_CONFIG
from sim_core.errors import GeometryError

_ORTHO_TOL = 1e-9


def _unit(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    norm = np.linalg.norm(arr)
    if norm == 0:
        raise GeometryError("crystal axis must be nonzero")
    return arr / norm


@dataclass(frozen=True)
class Substrate:
    """Chip substrate: footprint, thickness, permittivity, crystal orientation, sound speed"""
    side_x: float
    side_y: float
    thickness_z0: float
    relative_permittivity: float = 11.7
    crystal_axis_normal: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    crystal_axis_edge: Tuple[float, float, float] = (1.0, 1.0, 0.0)
    sound_speed_cs: float = 6.0e3   # m/s

    def __post_init__(self):
        if min(self.side_x, self.side_y, self.thickness_z0) <= 0:
            raise GeometryError("substrate dimensions must be positive")
        if self.relative_permittivity < 1:
            raise GeometryError("relative permittivity must be >= 1")
        if self.sound_speed_cs <= 0:
            raise GeometryError("sound speed must be positive")
        object.__setattr__(self, "crystal_axis_normal", tuple(float(c) for c in self.crystal_axis_normal))
        object.__setattr__(self, "crystal_axis_edge", tuple(float(c) for c in self.crystal_axis_edge))
        if abs(float(np.dot(_unit(self.crystal_axis_normal), _unit(self.crystal_axis_edge)))) > _ORTHO_TOL:
            raise GeometryError("crystal axes must be orthogonal")

    @property
    def bounds(self) -> np.ndarray:
        """[[xmin, ymin, zmin], [xmax, ymax, zmax]] in µm; z = 0 is the back face, z = z0 the metalized top."""
        return np.array([[0.0, 0.0, 0.0], [self.side_x, self.side_y, self.thickness_z0]])

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = self.bounds
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)


@dataclass(frozen=True)
class QubitGeometry:
    """Circular island of radius r_i inside a circular cavity of radius r_o"""
    id: str
    center: Tuple[float, float]
    island_radius_ri: float = 70.0
    cavity_radius_ro: float = 90.5
    charging_energy_EC: float = 250.0e6      # Hz
    josephson_energy_EJ: float = 12.5e9      # Hz
    frequency_w01: float = 2 * math.pi * 5.0e9

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not (0 < self.island_radius_ri < self.cavity_radius_ro):
            raise GeometryError(f"{self.id}: need 0 < r_i < r_o")
        if self.charging_energy_EC <= 0 or self.josephson_energy_EJ / self.charging_energy_EC <= 1:
            raise GeometryError(f"{self.id}: E_J/E_C must exceed 1")
        if self.frequency_w01 <= 0:
            raise GeometryError(f"{self.id}: ω01 must be positive")

    @property
    def xi(self) -> float:
        return self.josephson_energy_EJ / self.charging_energy_EC


@dataclass(frozen=True)
class ChipLayout:
    substrate: Substrate
    qubits: Tuple[QubitGeometry, ...]
    anchor_fraction_beta: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if not (0 < self.anchor_fraction_beta <= 1):
            raise GeometryError("anchor fraction β must lie in (0, 1]")
        ids = [q.id for q in self.qubits]
        if len(set(ids)) != len(ids):
            raise GeometryError(f"duplicate qubit ids: {ids}")
        s = self.substrate
        for q in self.qubits:
            cx, cy = q.center
            r = q.cavity_radius_ro
            if cx - r < 0 or cy - r < 0 or cx + r > s.side_x or cy + r > s.side_y:
                raise GeometryError(f"{q.id}: cavity extends beyond the substrate footprint")
        for a, b in itertools.combinations(self.qubits, 2):
            if math.dist(a.center, b.center) <= a.cavity_radius_ro + b.cavity_radius_ro:
                raise GeometryError(f"{a.id} and {b.id} overlap")

    @property
    def qubit_ids(self) -> List[str]:
        return [q.id for q in self.qubits]

    def qubit(self, qubit_id: str) -> QubitGeometry:
        for q in self.qubits:
            if q.id == qubit_id:
                return q
        raise KeyError(f"unknown qubit id {qubit_id!r}")


def sensing_area(q: QubitGeometry, eps: float) -> float:
    """Sensing area for uniform fields, π ε r_i r_o (µm²)."""
    return math.pi * eps * q.island_radius_ri * q.cavity_radius_ro


def separation(layout: ChipLayout, a: str, b: str) -> float:
    return math.dist(layout.qubit(a).center, layout.qubit(b).center)


def pair_separations(layout: ChipLayout) -> Dict[Tuple[str, str], float]:
    """Center-to-center distance for every qubit pair, in reporting order."""
    return {
        (a.id, b.id): math.dist(a.center, b.center)
        for a, b in itertools.combinations(layout.qubits, 2)
    }


def crystal_rotation(substrate: Substrate) -> np.ndarray:
    """Rotation R with chip_vector = R @ crystal_vector.

    Chip x runs along the edge axis, chip z along the surface normal.
    """
    z_hat = _unit(substrate.crystal_axis_normal)
    x_hat = _unit(substrate.crystal_axis_edge)
    y_hat = np.cross(z_hat, x_hat)
    return np.vstack([x_hat, y_hat, z_hat])


def is_mirror_symmetric(layout: ChipLayout, tol: float = 1e-6) -> bool:
    """True when the layout maps onto itself under x -> side_x - x and the pair midpoints
    are point-symmetric about the chip center (reflection swapping the two pairs)."""
    s = layout.substrate
    centers = np.array([q.center for q in layout.qubits])
    mirrored = centers.copy()
    mirrored[:, 0] = s.side_x - mirrored[:, 0]
    for c in mirrored:
        if np.min(np.linalg.norm(centers - c, axis=1)) > tol:
            return False
    if len(layout.qubits) % 2:
        return True
    mids = centers.reshape(-1, 2, 2).mean(axis=1)
    chip_mid = np.array([s.side_x / 2, s.side_y / 2])
    reflected = 2 * chip_mid - mids
    return all(np.min(np.linalg.norm(mids - r, axis=1)) <= tol for r in reflected)


def load_layout(source: Mapping[str, Any] | str | None = None) -> ChipLayout:
    """Build a layout from a config block (or "default"/None).

    Block keys: substrate{...}, anchor_fraction_beta, qubits[{id, center, ...}], and optional
    qubit_defaults applied to every qubit before its own keys.
    """
    if source is None or source == "default":
        source = LAYOUT_CONFIG
    data = copy.deepcopy(dict(source))
    try:
        substrate = Substrate(**data["substrate"])
        defaults = data.get("qubit_defaults", {}) or {}
        qubits = [QubitGeometry(**{**defaults, **q}) for q in data["qubits"]]
    except (KeyError, TypeError) as e:
        raise GeometryError(f"malformed layout block: {e}") from e
    return ChipLayout(
        substrate=substrate,
        qubits=tuple(qubits),
        anchor_fraction_beta=data.get("anchor_fraction_beta", 0.2),
    )


def default_layout() -> ChipLayout:
    """The measured four-qubit chip: 6250 x 6250 x 375 µm Si, r_i = 70 µm, r_o = 90.5 µm."""
    return load_layout(LAYOUT_CONFIG)


def layout_to_dict(layout: ChipLayout) -> Dict[str, Any]:
    s = layout.substrate
    return {
        "substrate": {
            "side_x": s.side_x,
            "side_y": s.side_y,
            "thickness_z0": s.thickness_z0,
            "relative_permittivity": s.relative_permittivity,
            "crystal_axis_normal": list(s.crystal_axis_normal),
            "crystal_axis_edge": list(s.crystal_axis_edge),
            "sound_speed_cs": s.sound_speed_cs,
        },
        "anchor_fraction_beta": layout.anchor_fraction_beta,
        "qubits": [
            {
                "id": q.id,
                "center": list(q.center),
                "island_radius_ri": q.island_radius_ri,
                "cavity_radius_ro": q.cavity_radius_ro,
                "charging_energy_EC": q.charging_energy_EC,
                "josephson_energy_EJ": q.josephson_energy_EJ,
                "frequency_w01": q.frequency_w01,
            }
            for q in layout.qubits
        ],
    }
