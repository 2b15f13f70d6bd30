# ------------------------------------------------------------------------------------
# 🔧 config_manager.py – Simulation Config Load / Validate / Save
#
# ✅ default_config_dict() – every default from data_files/config.py in one nested dict
# ✅ load_config() – YAML overrides deep-merged over the defaults, validated with pydantic
# ✅ ConfigManager.save_config() – writes the resolved config, backing up what it replaces
# ✅ config_hash() – SHA-256 of the semantic part of a config (no paths, no worker count)
#
# Validation problems come back as one ConfigError listing `field.path: message` entries.
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import copy
import hashlib
import json
import os
import shutil
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from data_files.config import (
    FIELD_CONFIG,
    LAYOUT_CONFIG,
    READOUT_CONFIG,
    RECOVERY_CONFIG,
    RUN_CONFIG,
    SCAN_CONFIG,
    SOURCE_CONFIG,
    TRANSMON_CONFIG,
    TRANSPORT_CONFIG,
)
from sim_core.errors import ConfigError

NON_SEMANTIC_RUN_KEYS = ("out", "cache_dir", "workers")


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SubstrateModel(_Block):
    side_x: float = Field(gt=0)
    side_y: float = Field(gt=0)
    thickness_z0: float = Field(gt=0)
    relative_permittivity: float = Field(default=11.7, ge=1)
    crystal_axis_normal: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    crystal_axis_edge: Tuple[float, float, float] = (1.0, 1.0, 0.0)
    sound_speed_cs: float = Field(default=6.0e3, gt=0)


class QubitModel(_Block):
    id: str
    center: Tuple[float, float]
    island_radius_ri: Optional[float] = Field(default=None, gt=0)
    cavity_radius_ro: Optional[float] = Field(default=None, gt=0)
    charging_energy_EC: Optional[float] = Field(default=None, gt=0)
    josephson_energy_EJ: Optional[float] = Field(default=None, gt=0)
    frequency_w01: Optional[float] = Field(default=None, gt=0)


class LayoutModel(_Block):
    substrate: SubstrateModel
    qubits: List[QubitModel] = Field(min_length=1)
    qubit_defaults: Dict[str, float] = Field(default_factory=dict)
    anchor_fraction_beta: float = Field(default=0.2, gt=0, le=1)

    def as_block(self) -> Dict[str, Any]:
        data = self.model_dump()
        data["qubits"] = [{k: v for k, v in q.items() if v is not None} for q in data["qubits"]]
        return data


class GammaSpectrumModel(_Block):
    kind: Literal["exponential", "table", "delta"] = "exponential"
    mean_eV: float = Field(default=100.0e3, gt=0)
    max_eV: float = Field(default=1.0e6, gt=0)
    table_path: Optional[str] = None
    energies: Optional[List[float]] = None
    density: Optional[List[float]] = None

    @model_validator(mode="after")
    def _table_source(self):
        if self.kind == "table" and not self.table_path and not (self.energies and self.density):
            raise ValueError("table spectrum needs table_path or energies + density")
        return self


class SourceModel(_Block):
    gamma_rate: float = Field(ge=0)
    muon_rate: float = Field(ge=0)
    gamma_spectrum: GammaSpectrumModel = Field(default_factory=GammaSpectrumModel)
    gamma_segment_length: float = Field(default=0.0, ge=0)
    muon_dEdx_mean: float = Field(gt=0)
    muon_dEdx_sigma: float = Field(default=0.3, ge=0)
    muon_zenith_exponent: float = Field(default=2.0, ge=0)
    muon_segment_max: float = Field(default=25.0, gt=0)
    rng_seed: int = 1


class TransportModel(_Block):
    lambda_trap: float = Field(gt=0)
    f_q: float = Field(gt=0, le=1)
    pair_energy: float = Field(default=3.6, gt=0)
    valley_spread_sigma: float = Field(ge=0)
    valley_axes: Optional[List[Tuple[float, float, float]]] = None
    max_carriers_per_event: int = Field(default=20000, ge=1)
    mode: Literal["direct", "pdf"] = "direct"
    pdf_samples_per_zbin: int = Field(default=100000, ge=10000)
    pdf_zbin_width: float = Field(default=10.0, gt=0)
    pdf_lateral_bin: float = Field(default=10.0, gt=0)
    pdf_bins: int = Field(default=101, ge=3)


class FieldModel(_Block):
    spacing_xy: float = Field(gt=0)
    spacing_z: float = Field(gt=0)
    half_width: float = Field(gt=0)
    cap_height: float = Field(gt=0)
    tolerance: float = Field(gt=0)
    max_iterations: int = Field(ge=1)
    omega: float = Field(gt=0, lt=2)
    coarse_levels: int = Field(default=2, ge=0)
    check_every: int = Field(default=25, ge=1)
    lateral_boundary: Literal["grounded", "reflecting"] = "grounded"


class ReadoutModel(_Block):
    sigma_q: float = Field(ge=0)
    jump_threshold: float = Field(gt=0, le=0.5)
    cycle_time: float = Field(gt=0)
    histogram_bin: float = Field(gt=0, le=0.5)
    ramsey_contrast: float = Field(default=0.9, ge=0, le=1)
    ramsey_offset: float = Field(default=0.5, ge=0, le=1)
    mode: Literal["direct", "ramsey"] = "direct"
    ramsey_gate_points: int = Field(default=10, ge=3)
    ramsey_shots: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _ramsey_range(self):
        if self.ramsey_offset - 0.5 * self.ramsey_contrast < 0 or self.ramsey_offset + 0.5 * self.ramsey_contrast > 1:
            raise ValueError("ramsey_contrast and ramsey_offset give P1 outside [0, 1]")
        return self


class TransmonModel(_Block):
    E_C: float = Field(gt=0)
    E_J: float = Field(gt=0)
    w01: float = Field(gt=0)
    tau_sc: float = Field(gt=0)
    eps_theta_cap: float = Field(default=0.5, gt=0, le=1)
    theta_combination: Literal["signed", "quadrature"] = "signed"
    joint_rule: Literal["min", "geometric_mean"] = "min"
    exceedance_levels: List[float] = Field(default_factory=lambda: [1e-8, 1e-6, 1e-4], min_length=1)
    threshold_p: float = Field(default=1e-2, gt=0, lt=1)
    threshold_degrees: List[int] = Field(default_factory=lambda: [1, 2, 3, 4], min_length=1)

    @model_validator(mode="after")
    def _transmon_regime(self):
        if self.E_J / self.E_C <= 1:
            raise ValueError("E_J/E_C must exceed 1")
        return self


class EmulatorModel(_Block):
    n_events: int = Field(default=142, ge=1)
    duty_cycle: float = Field(default=40e-6, gt=0)
    idle: float = Field(default=10e-6, gt=0)
    gamma0: float = Field(default=5e4, ge=0)
    delta_gamma_peak: float = Field(default=6e4, ge=0)
    window: Tuple[float, float] = (-1e-3, 2e-3)


class RecoveryModel(_Block):
    tau: float = Field(gt=0)
    sigma: float = Field(gt=0)
    delta_gap: float = Field(gt=0)
    w01: float = Field(gt=0)
    n_cp: float = Field(default=4e6, gt=0)
    emulator: EmulatorModel = Field(default_factory=EmulatorModel)


class RunModel(_Block):
    n_events: int = Field(default=20000, ge=0)
    duration: Optional[float] = Field(default=None, ge=0)
    seed: int = 1
    workers: int = Field(default=1, ge=1)
    time_series: bool = False
    bootstrap_samples: int = Field(default=0, ge=0)
    out: str = "var/runs/latest"
    cache_dir: Optional[str] = None


class ScanModel(_Block):
    lambda_trap: List[float] = Field(min_length=1)
    f_q: List[float] = Field(min_length=1)
    n_events: int = Field(default=5000, ge=0)


class SimulationConfig(_Block):
    layout: Union[Literal["default"], LayoutModel] = "default"
    source: SourceModel
    transport: TransportModel
    field: FieldModel
    readout: ReadoutModel
    transmon: TransmonModel
    recovery: RecoveryModel
    run: RunModel = Field(default_factory=RunModel)
    scan: ScanModel

    def layout_block(self) -> Mapping[str, Any] | str:
        return "default" if self.layout == "default" else self.layout.as_block()


def default_config_dict() -> Dict[str, Any]:
    return copy.deepcopy({
        "layout": "default",
        "source": SOURCE_CONFIG,
        "transport": TRANSPORT_CONFIG,
        "field": FIELD_CONFIG,
        "readout": READOUT_CONFIG,
        "transmon": TRANSMON_CONFIG,
        "recovery": RECOVERY_CONFIG,
        "run": RUN_CONFIG,
        "scan": SCAN_CONFIG,
    })


def default_layout_block() -> Dict[str, Any]:
    return copy.deepcopy(LAYOUT_CONFIG)


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any] | None) -> Dict[str, Any]:
    """Nested dict merge; override wins, lists and scalars are replaced wholesale."""
    out = copy.deepcopy(dict(base))
    for key, value in (override or {}).items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _problems(err: ValidationError) -> List[str]:
    return [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in err.errors()]


def validate_config(data: Mapping[str, Any]) -> SimulationConfig:
    try:
        return SimulationConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_problems(e)) from e


def read_yaml(path: str | os.PathLike) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as e:
        raise ConfigError([f"config: cannot read {path}: {e}"]) from e
    except yaml.YAMLError as e:
        raise ConfigError([f"config: {path} is not valid YAML: {e}"]) from e
    if not isinstance(data, dict):
        raise ConfigError([f"config: {path} must hold a mapping at the top level"])
    return data


def load_config(path: str | os.PathLike | None = None, overrides: Mapping[str, Any] | None = None) -> SimulationConfig:
    """Defaults <- YAML file <- explicit overrides (CLI flags), then validation."""
    merged = default_config_dict()
    if path is not None:
        user = read_yaml(path)
        if isinstance(user.get("layout"), Mapping) and "substrate" not in user["layout"]:
            # a partial layout block patches the default chip
            user["layout"] = deep_merge(default_layout_block(), user["layout"])
        merged = deep_merge(merged, user)
    merged = deep_merge(merged, overrides)
    return validate_config(merged)


def config_hash(config: SimulationConfig) -> str:
    data = config.model_dump(mode="json")
    for key in NON_SEMANTIC_RUN_KEYS:
        data["run"].pop(key, None)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class ConfigManager:
    def __init__(self, config_file: str | os.PathLike | None = None, backup_dir: str | os.PathLike = "backups"):
        self.config_file = Path(config_file) if config_file else None
        self.backup_dir = Path(backup_dir)

    def load_config(self, overrides: Mapping[str, Any] | None = None) -> SimulationConfig:
        return load_config(self.config_file, overrides)

    def save_config(self, config: SimulationConfig, path: str | os.PathLike | None = None,
                    create_backup: bool = True) -> Path:
        """Write the resolved config as YAML; an existing file is backed up first."""
        target = Path(path) if path else self.config_file
        if target is None:
            raise ConfigError(["config: no output path given"])
        if create_backup and target.exists():
            self.create_backup(target)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as fh:
            yaml.safe_dump(config.model_dump(mode="json"), fh, sort_keys=False)
        return target

    def create_backup(self, source: Path | None = None) -> Path:
        """Copy `source` into backup_dir under a timestamped name."""
        source = Path(source or self.config_file)
        self.backup_dir.mkdir(parents=True, exist_ok=True)
        timestamp = datetime.now().strftime("%Y-%m-%dT%H-%M-%S")
        backup_path = self.backup_dir / f"{source.stem}_backup_{timestamp}{source.suffix}"
        shutil.copy2(source, backup_path)
        return backup_path
