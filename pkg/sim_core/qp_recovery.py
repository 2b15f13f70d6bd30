# ------------------------------------------------------------------------------------
# 🌡️ qp_recovery.py – Quasiparticle Poisoning After an Impact
#
# ✅ RecoveryParams – recovery time τ, trigger jitter σ, gap Δ, ω01, Cooper-pair density
# ✅ dropout_curve() – exponential recovery convolved with a Gaussian (stable erfc / erfcx)
# ✅ fit_dropout() – trust-region least squares on (τ, σ) [+ amplitude, baseline]
# ✅ xqp_from_rate() / rate_from_xqp() / quasiparticle_density()
# ✅ phonon_dwell_time() – x0² / (β c_s z0)
# ✅ emulate_dropout_experiment() – premeasure / X / idle / measure averaging over events
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import constants
from scipy.optimize import least_squares
from scipy.special import erfc, erfcx

from shared.logging_utils import log_info
from sim_core.errors import ConfigError, FitError
from sim_core.geometry_layout import ChipLayout
from sim_core.rng_streams import as_generator

HBAR_EV_S = constants.hbar / constants.e
MIN_FIT_SAMPLES = 10
US = 1.0e-6


@dataclass(frozen=True)
class RecoveryParams:
    tau: float = 130.0e-6               # s
    sigma: float = 210.0e-6             # s
    delta_gap: float = 190.0e-6         # eV
    w01: float = 2 * math.pi * 4.5e9    # rad/s
    n_cp: float = 4.0e6                 # µm⁻³

    def __post_init__(self):
        problems = []
        if self.tau <= 0 or self.sigma <= 0:
            problems.append("recovery: tau and sigma must be > 0")
        if self.delta_gap <= 0:
            problems.append("recovery.delta_gap: must be > 0")
        if self.w01 <= 0:
            problems.append("recovery.w01: must be > 0")
        if self.n_cp <= 0:
            problems.append("recovery.n_cp: must be > 0")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "RecoveryParams":
        names = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in cfg.items() if k in names})


def dropout_curve(t, params: RecoveryParams):
    """½ exp((σ² − 2τt)/2τ²) erfc((σ² − τt)/(√2 στ)), the causal exponential smeared by σ.

    For positive erfc arguments the product is rewritten as ½ exp(−t²/2σ²) erfcx(u), which stays
    finite where the direct form overflows.
    """
    tau, sigma = params.tau, params.sigma
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    u = (sigma ** 2 - tau * t) / (math.sqrt(2) * sigma * tau)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 0.5 * np.exp(-t[pos] ** 2 / (2 * sigma ** 2)) * erfcx(u[pos])
    neg = ~pos
    out[neg] = 0.5 * np.exp((sigma ** 2 - 2 * tau * t[neg]) / (2 * tau ** 2)) * erfc(u[neg])
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


@dataclass
class DropoutFit:
    params: RecoveryParams
    tau_err: float
    sigma_err: float
    amplitude: float = 1.0
    baseline: float = 0.0
    amplitude_err: float = 0.0
    baseline_err: float = 0.0
    cost: float = 0.0
    nfev: int = 0
    residual_trace: list = field(default_factory=list)

    def as_row(self) -> dict:
        return {
            "tau_s": self.params.tau, "tau_err_s": self.tau_err,
            "sigma_s": self.params.sigma, "sigma_err_s": self.sigma_err,
            "amplitude": self.amplitude, "amplitude_err": self.amplitude_err,
            "baseline": self.baseline, "baseline_err": self.baseline_err,
            "cost": self.cost, "nfev": self.nfev,
        }


def fit_dropout(t: Sequence[float], y: Sequence[float], initial: Tuple[float, float] = (130e-6, 210e-6),
                base: RecoveryParams | None = None, fit_amplitude: bool = False, fit_baseline: bool = False,
                amplitude: float = 1.0, baseline: float = 0.0) -> DropoutFit:
    """Fit y = baseline + amplitude · dropout_curve(t; τ, σ); τ and σ are fitted in µs."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < MIN_FIT_SAMPLES or t.size != y.size:
        raise FitError(f"need at least {MIN_FIT_SAMPLES} (t, occupation) samples")
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise FitError("data are flat; no transient to fit", [0.0])
    base = base or RecoveryParams()
    t_us = t / US

    def unpack(x):
        tau, sigma = x[0], x[1]
        i = 2
        amp = x[i] if fit_amplitude else amplitude
        i += int(fit_amplitude)
        off = x[i] if fit_baseline else baseline
        return tau, sigma, amp, off

    def residual(x):
        tau, sigma, amp, off = unpack(x)
        shape = dropout_curve(t_us, RecoveryParams(tau=tau, sigma=sigma, delta_gap=base.delta_gap,
                                                    w01=base.w01, n_cp=base.n_cp))
        return off + amp * shape - y

    x0 = [initial[0] / US, initial[1] / US]
    lower, upper = [1e-3, 1e-3], [1e7, 1e7]
    if fit_amplitude:
        x0.append(amplitude if amplitude != 0 else float(np.ptp(y)))
        lower.append(-np.inf)
        upper.append(np.inf)
    if fit_baseline:
        x0.append(baseline)
        lower.append(-np.inf)
        upper.append(np.inf)

    result = least_squares(residual, x0=x0, bounds=(lower, upper), method="trf",
                           xtol=1e-8, ftol=1e-12, gtol=1e-12, max_nfev=2000)
    trace = [float(result.cost)]
    if not result.success:
        raise FitError(f"dropout fit did not converge: {result.message}", trace)
    tau_us, sigma_us, amp, off = unpack(result.x)
    if tau_us >= 0.999 * upper[0] or sigma_us >= 0.999 * upper[1]:
        raise FitError("recovery time ran to the fit bound (τ → ∞); no resolvable transient", trace)

    dof = max(1, t.size - len(result.x))
    s2 = 2 * result.cost / dof
    try:
        cov = np.linalg.inv(result.jac.T @ result.jac) * s2
        errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        errs = np.full(len(result.x), np.nan)
    amp_err = errs[2] if fit_amplitude else 0.0
    off_err = errs[2 + int(fit_amplitude)] if fit_baseline else 0.0
    params = RecoveryParams(tau=tau_us * US, sigma=sigma_us * US, delta_gap=base.delta_gap, w01=base.w01, n_cp=base.n_cp)
    log_info(f"dropout fit: τ = {params.tau / US:.1f} ± {errs[0]:.1f} µs, σ = {params.sigma / US:.1f} ± {errs[1]:.1f} µs",
             "qp_recovery")
    return DropoutFit(params=params, tau_err=errs[0] * US, sigma_err=errs[1] * US, amplitude=float(amp),
                      baseline=float(off), amplitude_err=float(amp_err), baseline_err=float(off_err),
                      cost=float(result.cost), nfev=int(result.nfev), residual_trace=trace)


def _qp_scale(params: RecoveryParams) -> float:
    """√(2Δ ω01 / ħ) in 1/s."""
    return math.sqrt(2 * params.delta_gap / HBAR_EV_S * params.w01)


def xqp_from_rate(delta_gamma, params: RecoveryParams):
    """Reduced quasiparticle density from the excess relaxation rate ΔΓ01 (1/s)."""
    rate = np.asarray(delta_gamma, dtype=float)
    if np.any(rate < 0):
        raise ValueError("ΔΓ01 must be ≥ 0")
    x = math.pi * rate / _qp_scale(params)
    return float(x) if x.ndim == 0 else x


def rate_from_xqp(x_qp, params: RecoveryParams):
    rate = np.asarray(x_qp, dtype=float) / math.pi * _qp_scale(params)
    return float(rate) if rate.ndim == 0 else rate


def quasiparticle_density(x_qp, n_cp: float = 4.0e6):
    """Quasiparticles per µm³."""
    return x_qp * n_cp


def phonon_dwell_time(layout: ChipLayout) -> float:
    """x0² / (β c_s z0) in seconds; x0 is the chip edge length."""
    s = layout.substrate
    x0_m = s.side_x * US
    z0_m = s.thickness_z0 * US
    return x0_m ** 2 / (layout.anchor_fraction_beta * s.sound_speed_cs * z0_m)


def emulate_dropout_experiment(params: RecoveryParams, n_events: int = 142, duty_cycle: float = 40e-6,
                               idle: float = 10e-6, gamma0: float = 1 / 20e-6, delta_gamma_peak: float = 6.0e4,
                               window: Tuple[float, float] = (-1e-3, 2e-3), rng=None) -> pd.DataFrame:
    """Repeated premeasure / X / idle / measure cycles around impact triggers.

    Each event adds ΔΓ_peak · exp(−(t − t0)/τ) for t > t0, with t0 ~ N(0, σ) trigger jitter; P1 per
    cycle is exp(−Γ01 · idle). Returns the event-averaged occupation, the inverted Γ01 and ΔΓ01,
    x_QP and the noiseless expectation.
    """
    if n_events < 1 or duty_cycle <= 0 or idle <= 0 or window[1] <= window[0]:
        raise ValueError("invalid emulator settings")
    rng = as_generator(rng)
    t = np.arange(window[0], window[1], duty_cycle)
    t0 = rng.normal(0.0, params.sigma, n_events)
    lag = t[None, :] - t0[:, None]
    extra = np.where(lag > 0, delta_gamma_peak * np.exp(-np.clip(lag, 0, None) / params.tau), 0.0)
    p_excited = np.exp(-(gamma0 + extra) * idle)
    counts = rng.binomial(1, p_excited).sum(axis=0)
    p1 = counts / n_events

    floor = 0.5 / n_events
    gamma = -np.log(np.clip(p1, floor, 1.0)) / idle
    pre = t < -3 * params.sigma
    gamma_base = float(np.mean(gamma[pre])) if pre.sum() >= 3 else gamma0
    delta_gamma = np.clip(gamma - gamma_base, 0.0, None)
    expected = np.exp(-(gamma0 + delta_gamma_peak * dropout_curve(t, params)) * idle)
    return pd.DataFrame({
        "t_s": t,
        "p1": p1,
        "p1_expected_linear": expected,
        "gamma01": gamma,
        "delta_gamma01": delta_gamma,
        "x_qp": xqp_from_rate(delta_gamma, params),
    })
