# ------------------------------------------------------------------------------------
# ⚙️ config.py – Global Simulation Defaults
#
# This file holds every default parameter used across the charge-burst simulator.
# All values match the measured device and the tuned transport model, so a run without
# a user config reproduces the headline numbers.
#
# ✅ LAYOUT_CONFIG – chip, substrate and four-qubit geometry
# ✅ FIELD_CONFIG – weighting-potential grid and relaxation solver
# ✅ SOURCE_CONFIG – gamma / muon rates and deposit models
# ✅ TRANSPORT_CONFIG – pair creation, trapping length, valley spread
# ✅ TRANSMON_CONFIG – charge dispersion and error-model parameters
# ✅ RECOVERY_CONFIG – T1 dropout / quasiparticle defaults
# ✅ RUN_CONFIG – event counts, seeds, modes, workers
# ✅ SCAN_CONFIG / MEASURED_TARGETS – λ_trap × f_q scan grid and comparison targets
#
# Units: lengths µm, energies eV (E_C / E_J in Hz, i.e. E/h), charge in e, times s,
# angular frequencies rad/s.
#
# Used by: shared/config_manager.py, sim_core/burst_runner.py
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

import math

# ✅ Chip Layout
# Pair midpoints sit symmetrically about the chip center; Q1-Q3 is 3195 µm apart.
_CHIP = 6250.0
_HALF_ROW = 0.5 * math.sqrt(3195.0 ** 2 - 150.0 ** 2)

LAYOUT_CONFIG = {
    "substrate": {
        "side_x": _CHIP,
        "side_y": _CHIP,
        "thickness_z0": 375.0,
        "relative_permittivity": 11.7,
        "crystal_axis_normal": [0.0, 0.0, 1.0],   # <001> normal to the chip
        "crystal_axis_edge": [1.0, 1.0, 0.0],     # <110> along the chip edge
        "sound_speed_cs": 6.0e3,                  # m/s
    },
    "anchor_fraction_beta": 0.2,
    "qubits": [
        # Q1-Q2: 640 µm pair
        {"id": "Q1", "center": [_CHIP / 2 - 320.0, _CHIP / 2 - _HALF_ROW]},
        {"id": "Q2", "center": [_CHIP / 2 + 320.0, _CHIP / 2 - _HALF_ROW]},
        # Q3-Q4: 340 µm pair
        {"id": "Q3", "center": [_CHIP / 2 - 170.0, _CHIP / 2 + _HALF_ROW]},
        {"id": "Q4", "center": [_CHIP / 2 + 170.0, _CHIP / 2 + _HALF_ROW]},
    ],
    "qubit_defaults": {
        "island_radius_ri": 70.0,
        "cavity_radius_ro": 90.5,
        "charging_energy_EC": 250.0e6,     # E_C / h in Hz
        "josephson_energy_EJ": 12.5e9,     # E_J / h in Hz
        "frequency_w01": 2 * math.pi * 5.0e9,
    },
}

# ✅ Weighting Field Solver
FIELD_CONFIG = {
    "spacing_xy": 5.0,           # µm, 401 x 401 nodes across the default subdomain
    "spacing_z": 3.71,           # µm, snapped so the chip surface lies on a node plane
    "half_width": 1000.0,        # µm, local subdomain around each qubit
    "cap_height": 500.0,         # µm of vacuum above the chip, grounded lid
    "tolerance": 1.0e-6,         # relative residual
    "max_iterations": 20000,
    "omega": 1.9,                # over-relaxation factor
    "coarse_levels": 2,          # nested coarse solves used as initial guess
    "check_every": 25,           # sweeps between residual evaluations
    "lateral_boundary": "grounded",   # grounded | reflecting
}

# ✅ Event Sources
SOURCE_CONFIG = {
    "gamma_rate": 19.8e-3,           # Hz, gamma impacts on the 6.25 x 6.25 mm² chip
    "muon_rate": 0.5e-3,             # Hz, primary + secondary muon events
    "gamma_spectrum": {
        "kind": "exponential",       # exponential | table
        "mean_eV": 100.0e3,
        "max_eV": 1.0e6,
        "table_path": None,          # two-column text: energy_eV, density
    },
    "gamma_segment_length": 0.0,     # µm, 0 = point-like deposit
    "muon_dEdx_mean": 820.0,         # eV/µm, calibrated so the mean deposit is ~460 keV
    "muon_dEdx_sigma": 0.3,          # log-normal fluctuation per segment
    "muon_zenith_exponent": 2.0,
    "muon_segment_max": 25.0,        # µm
    "rng_seed": 1,
}

# ✅ Charge Transport
TRANSPORT_CONFIG = {
    "lambda_trap": 300.0,            # µm
    "f_q": 0.2,
    "pair_energy": 3.6,              # eV per electron-hole pair
    "valley_spread_sigma": math.radians(15.0),
    "valley_axes": None,             # None = derive <100> valleys from the crystal orientation
    "max_carriers_per_event": 20000,
    "mode": "direct",                # direct | pdf
    "pdf_samples_per_zbin": 100000,
    "pdf_zbin_width": 10.0,          # µm of origin depth per table layer
    "pdf_lateral_bin": 10.0,         # µm
    "pdf_bins": 101,
}

# ✅ Readout / Induced Charge
READOUT_CONFIG = {
    "sigma_q": 0.02,                 # e, Ramsey reconstruction noise
    "jump_threshold": 0.1,           # e
    "cycle_time": 44.0,              # s
    "histogram_bin": 0.02,           # e
    "ramsey_contrast": 0.9,
    "ramsey_offset": 0.5,
    "mode": "direct",                # direct | ramsey (binomial P1 at gate charges, then a fit)
    "ramsey_gate_points": 10,        # gate charges across one 1e period
    "ramsey_shots": 100,             # single-shot readouts per gate charge
}

# ✅ Transmon / Error Model
TRANSMON_CONFIG = {
    "E_C": 250.0e6,                  # Hz (E_C / h)
    "E_J": 12.5e9,                   # Hz (E_J / h)
    "w01": 2 * math.pi * 5.0e9,      # rad/s
    "tau_sc": 1.0e-6,                # s, surface-code cycle
    "eps_theta_cap": 0.5,
    "theta_combination": "signed",   # signed | quadrature
    "joint_rule": "min",             # min | geometric_mean
    "exceedance_levels": [1.0e-8, 1.0e-6, 1.0e-4],
    "threshold_p": 1.0e-2,
    "threshold_degrees": [1, 2, 3, 4],
}

# ✅ Quasiparticle Recovery
RECOVERY_CONFIG = {
    "tau": 130.0e-6,                 # s
    "sigma": 210.0e-6,               # s
    "delta_gap": 190.0e-6,           # eV (2Δ/e = 380 µV)
    "w01": 2 * math.pi * 4.5e9,      # rad/s
    "n_cp": 4.0e6,                   # Cooper pairs per µm³ (Al)
    "emulator": {
        "n_events": 142,
        "duty_cycle": 40.0e-6,       # s
        "idle": 10.0e-6,             # s
        "gamma0": 1.0 / 20.0e-6,     # 1/s, baseline relaxation rate
        "delta_gamma_peak": 6.0e4,   # 1/s
        "window": [-1.0e-3, 2.0e-3],  # s around the trigger
    },
}

# ✅ Run Control
RUN_CONFIG = {
    "n_events": 20000,
    "duration": None,                # s; when set, overrides n_events
    "seed": 1,
    "workers": 1,
    "time_series": False,            # False: event mode; True: 44 s cycle emulation
    "bootstrap_samples": 0,
    "out": "var/runs/latest",
    "cache_dir": None,
}

# ✅ Parameter Scan (λ_trap x f_q)
SCAN_CONFIG = {
    "lambda_trap": [100.0, 300.0, 1000.0],
    "f_q": [1.0, 0.5, 0.2, 0.1],
    "n_events": 5000,
}

# ✅ Comparison Targets (measured values)
MEASURED_TARGETS = {
    "p_corr": {340.0: 0.54, 640.0: 0.46, 3195.0: 0.00},
    "p_corr_sigma": 0.04,
    "charge_asymmetry_min": 0.5,     # sign-level target: excess of positive jumps
    "asym_1324_min": 0.0,            # sign-level target: excess in quadrants 1 and 3
    "jump_rate_mean": 1.35e-3,       # Hz, averaged over the four qubits
    "muon_above_threshold": 0.16,
    "gamma_above_threshold": 0.06,
}
