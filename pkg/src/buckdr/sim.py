"""Switched-mode and averaged time-domain simulation.

Integrates the full loop (PWM comparator, half bridge, power stage, outer
controller, disturbance-rejection scheme) with fixed-step RK4. The switched
mode compares the total command voltage against a trailing-edge sawtooth;
the averaged mode replaces the comparator with its small-signal gain plus
the physical duty saturation. The per-step work is compiled with numba so
the Monte Carlo study stays interactive; a run is strictly sequential,
runs are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .buck import BuckParams, UncertaintyBox, build_plant, power_stage_ss, pwm_bound, sample_params
from .design import StructuredController, TypeIIIParams
from .lti import RationalTF, tf_to_ss
from .schemes import DRScheme, _estimator_block, _realize, build_dob, build_lec, build_none, build_uio


class NumericalBlowup(RuntimeError):
    def __init__(self, t: float):
        super().__init__(f"state exceeded 1e9 at t = {t:.6e} s")
        self.t = t


class HypothesisViolated(ValueError):
    """Modulation parameters leave the single-tone PWM result's domain."""


@dataclass(frozen=True)
class SimConfig:
    """Integration setup; mode is "switched" or "averaged"."""

    t_end: float
    mode: str = "averaged"
    steps_per_period: int = 200
    dt: float = 4e-8
    V_ref: float | None = None
    soft_start: float = 2e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("switched", "averaged"):
            raise ValueError("mode must be 'switched' or 'averaged'")
        if self.steps_per_period < 50:
            raise ValueError("need at least 50 steps per switching period")
        if self.dt <= 0.0 or self.t_end <= 0.0:
            raise ValueError("dt and t_end must be positive")


@dataclass(frozen=True)
class LoadProfile:
    """Ramped load-current step on top of the static resistive load."""

    step_amplitude: float
    step_slope: float
    step_time: float
    baseline: float = 0.0

    def __post_init__(self) -> None:
        if self.step_slope <= 0.0 or self.step_amplitude < 0.0:
            raise ValueError("need slope > 0 and amplitude >= 0")

    def current(self, t: np.ndarray) -> np.ndarray:
        ramp = np.clip((t - self.step_time) * self.step_slope, 0.0, self.step_amplitude)
        return self.baseline + ramp


@dataclass(frozen=True, eq=False)
class SimTrace:
    t: np.ndarray
    v_o: np.ndarray
    v_c_tot: np.ndarray
    v_inj: np.ndarray
    v_saw: np.ndarray
    v_sw: np.ndarray
    i_L: np.ndarray
    i_out_hat: np.ndarray
    i_out_true: np.ndarray
    d: np.ndarray

    COLUMNS = ("v_o", "v_c_tot", "v_inj", "v_saw", "v_sw", "i_L", "i_out_hat", "i_out_true", "d")


@dataclass(frozen=True)
class Metrics:
    undershoot_pct: float
    overshoot_pct: float
    settling_time: float
    saturation_fraction: float
    steady_state_error: float

    FIELDS = (
        "undershoot_pct",
        "overshoot_pct",
        "settling_time",
        "saturation_fraction",
        "steady_state_error",
    )


@dataclass(frozen=True, eq=False)
class McSummary:
    """Per-scheme aggregate of a seeded Monte Carlo study."""

    n_runs: int
    metrics: dict
    envelope_t: np.ndarray
    envelopes: dict
    per_run: tuple
    failures: tuple


# ---------------------------------------------------------------------------
# compiled integration core


@njit(cache=True)
def _deriv(
    t,
    x,
    d_frozen,
    mode,
    A_p, B_io, B_sw, C_vo, d_oo,
    A_K, B_K, C_K,
    A_E, B_E, C_E, D_E0, D_E1,
    A_F, B_F, C_F, D_F,
    Gf, V_in, V_pk,
    t_step, slope, amp,
    V_target, t_soft,
):
    n_p, n_k = 2, A_K.shape[0]
    n_e, n_f = A_E.shape[0], A_F.shape[0]
    x_p = x[:n_p]
    x_k = x[n_p : n_p + n_k]
    x_e = x[n_p + n_k : n_p + n_k + n_e]
    x_f = x[n_p + n_k + n_e :]

    i_out = min(max((t - t_step) * slope, 0.0), amp)
    v_ref = V_target * min(t / t_soft, 1.0) if t_soft > 0.0 else V_target

    v_o = C_vo[0] * x_p[0] + C_vo[1] * x_p[1] + d_oo * i_out
    e = D_E0 * v_o + D_E1 * x_p[0]
    for i in range(n_e):
        e += C_E[i] * x_e[i]
    v_inj = D_F * e
    for i in range(n_f):
        v_inj += C_F[i] * x_f[i]
    v_c = 0.0
    for i in range(n_k):
        v_c += C_K[i] * x_k[i]
    v_c_tot = v_c + v_inj
    if mode == 1:
        v_sw = V_in * d_frozen
    else:
        duty = v_c_tot / V_pk
        if duty < 0.0:
            duty = 0.0
        elif duty > 1.0:
            duty = 1.0
        v_sw = V_in * duty

    dx = np.empty_like(x)
    for i in range(n_p):
        acc = B_io[i] * i_out + B_sw[i] * v_sw
        for j in range(n_p):
            acc += A_p[i, j] * x_p[j]
        dx[i] = acc
    err = v_ref - Gf * v_o
    for i in range(n_k):
        acc = B_K[i] * err
        for j in range(n_k):
            acc += A_K[i, j] * x_k[j]
        dx[n_p + i] = acc
    for i in range(n_e):
        acc = B_E[i, 0] * v_o + B_E[i, 1] * x_p[0] + B_E[i, 2] * v_sw
        for j in range(n_e):
            acc += A_E[i, j] * x_e[j]
        dx[n_p + n_k + i] = acc
    for i in range(n_f):
        acc = B_F[i] * e
        for j in range(n_f):
            acc += A_F[i, j] * x_f[j]
        dx[n_p + n_k + n_e + i] = acc
    return dx


@njit(cache=True)
def _rk4_step(
    t, x, h, d_frozen, mode,
    A_p, B_io, B_sw, C_vo, d_oo,
    A_K, B_K, C_K,
    A_E, B_E, C_E, D_E0, D_E1,
    A_F, B_F, C_F, D_F,
    Gf, V_in, V_pk,
    t_step, slope, amp, V_target, t_soft,
):
    k1 = _deriv(t, x, d_frozen, mode, A_p, B_io, B_sw, C_vo, d_oo, A_K, B_K, C_K,
                A_E, B_E, C_E, D_E0, D_E1, A_F, B_F, C_F, D_F, Gf, V_in, V_pk,
                t_step, slope, amp, V_target, t_soft)
    k2 = _deriv(t + 0.5 * h, x + 0.5 * h * k1, d_frozen, mode, A_p, B_io, B_sw, C_vo, d_oo,
                A_K, B_K, C_K, A_E, B_E, C_E, D_E0, D_E1, A_F, B_F, C_F, D_F, Gf, V_in, V_pk,
                t_step, slope, amp, V_target, t_soft)
    k3 = _deriv(t + 0.5 * h, x + 0.5 * h * k2, d_frozen, mode, A_p, B_io, B_sw, C_vo, d_oo,
                A_K, B_K, C_K, A_E, B_E, C_E, D_E0, D_E1, A_F, B_F, C_F, D_F, Gf, V_in, V_pk,
                t_step, slope, amp, V_target, t_soft)
    k4 = _deriv(t + h, x + h * k3, d_frozen, mode, A_p, B_io, B_sw, C_vo, d_oo,
                A_K, B_K, C_K, A_E, B_E, C_E, D_E0, D_E1, A_F, B_F, C_F, D_F, Gf, V_in, V_pk,
                t_step, slope, amp, V_target, t_soft)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _signals(
    t, x, i_out,
    C_vo, d_oo, C_K, C_E, D_E0, D_E1, C_F, D_F,
):
    v_o = C_vo[0] * x[0] + C_vo[1] * x[1] + d_oo * i_out
    n_k = C_K.shape[0]
    n_e = C_E.shape[0]
    n_f = C_F.shape[0]
    e = D_E0 * v_o + D_E1 * x[0]
    for i in range(n_e):
        e += C_E[i] * x[2 + n_k + i]
    v_inj = D_F * e
    for i in range(n_f):
        v_inj += C_F[i] * x[2 + n_k + n_e + i]
    v_c = 0.0
    for i in range(n_k):
        v_c += C_K[i] * x[2 + i]
    return v_o, v_c + v_inj, v_inj, e


@njit(cache=True)
def _run(
    x0, h, n_steps, mode,
    A_p, B_io, B_sw, C_vo, d_oo,
    A_K, B_K, C_K,
    A_E, B_E, C_E, D_E0, D_E1,
    A_F, B_F, C_F, D_F,
    Gf, V_in, V_pk, T_sw,
    t_step, slope, amp, V_target, t_soft,
    out,
):
    x = x0.copy()
    for k in range(n_steps + 1):
        t = k * h
        i_out = min(max((t - t_step) * slope, 0.0), amp)
        v_o, v_c_tot, v_inj, e = _signals(t, x, i_out, C_vo, d_oo, C_K, C_E, D_E0, D_E1, C_F, D_F)
        v_saw = V_pk * ((t / T_sw) % 1.0)
        if mode == 1:
            d_now = 1.0 if v_c_tot >= v_saw else 0.0
            v_sw = V_in * d_now
        else:
            duty = v_c_tot / V_pk
            if duty < 0.0:
                duty = 0.0
            elif duty > 1.0:
                duty = 1.0
            d_now = duty
            v_sw = V_in * duty
            v_saw = 0.0
        out[k, 0] = v_o
        out[k, 1] = v_c_tot
        out[k, 2] = v_inj
        out[k, 3] = v_saw
        out[k, 4] = v_sw
        out[k, 5] = x[0]
        out[k, 6] = e
        out[k, 7] = i_out
        out[k, 8] = d_now
        if k == n_steps:
            break

        if mode == 1:
            d = d_now
            x_full = _rk4_step(t, x, h, d, mode, A_p, B_io, B_sw, C_vo, d_oo, A_K, B_K, C_K,
                               A_E, B_E, C_E, D_E0, D_E1, A_F, B_F, C_F, D_F, Gf, V_in, V_pk,
                               t_step, slope, amp, V_target, t_soft)
            i_end = min(max((t + h - t_step) * slope, 0.0), amp)
            vo2, vct2, _, _ = _signals(t + h, x_full, i_end, C_vo, d_oo, C_K, C_E, D_E0, D_E1, C_F, D_F)
            saw_end = V_pk * (((t + h) / T_sw) % 1.0)
            d_end = 1.0 if vct2 >= saw_end else 0.0
            if d_end != d:
                # one bisection of the crossing step: integrate the half in
                # which the comparator still agrees, flip for the rest
                x_half = _rk4_step(t, x, 0.5 * h, d, mode, A_p, B_io, B_sw, C_vo, d_oo,
                                   A_K, B_K, C_K, A_E, B_E, C_E, D_E0, D_E1, A_F, B_F, C_F, D_F,
                                   Gf, V_in, V_pk, t_step, slope, amp, V_target, t_soft)
                i_mid = min(max((t + 0.5 * h - t_step) * slope, 0.0), amp)
                vo3, vct3, _, _ = _signals(t + 0.5 * h, x_half, i_mid, C_vo, d_oo, C_K, C_E,
                                           D_E0, D_E1, C_F, D_F)
                saw_mid = V_pk * (((t + 0.5 * h) / T_sw) % 1.0)
                d_mid = 1.0 if vct3 >= saw_mid else 0.0
                d_second = (1.0 - d) if d_mid != d else d
                x = _rk4_step(t + 0.5 * h, x_half, 0.5 * h, d_second, mode,
                              A_p, B_io, B_sw, C_vo, d_oo, A_K, B_K, C_K,
                              A_E, B_E, C_E, D_E0, D_E1, A_F, B_F, C_F, D_F,
                              Gf, V_in, V_pk, t_step, slope, amp, V_target, t_soft)
            else:
                x = x_full
        else:
            x = _rk4_step(t, x, h, 0.0, mode, A_p, B_io, B_sw, C_vo, d_oo, A_K, B_K, C_K,
                          A_E, B_E, C_E, D_E0, D_E1, A_F, B_F, C_F, D_F, Gf, V_in, V_pk,
                          t_step, slope, amp, V_target, t_soft)
        if k % 256 == 0:
            for i in range(x.shape[0]):
                a = abs(x[i])
                if a > 1e9 or not np.isfinite(a):
                    return k
    return -1


# ---------------------------------------------------------------------------
# block packing and the public simulate()


def _controller_tf(controller) -> RationalTF:
    if isinstance(controller, (StructuredController, TypeIIIParams)):
        return controller.tf()
    return controller


def _pad_block(A, B, C, width):
    """One inert stable state stands in for an absent block so the kernel
    never sees zero-length arrays."""
    if A.shape[0] > 0:
        return A, B, C
    return (np.array([[-1.0]]), np.zeros((1, width)), np.zeros((1, 1)))


def simulate(
    params: BuckParams,
    controller,
    scheme: DRScheme,
    cfg: SimConfig,
    load: LoadProfile,
    Gf: float = 1.0,
) -> SimTrace:
    """Fixed-step RK4 of power stage + controller + scheme, zero initial
    state, reference ramped over the soft-start window.

    Switched mode freezes the comparator decision over each step and
    refines flips with one bisection; averaged mode drives the switch node
    with the saturated feedforward gain. Raises NumericalBlowup when any
    state passes 1e9.
    """
    T_sw = 1.0 / params.f_sw
    if cfg.t_end < load.step_time + 20.0 * T_sw:
        raise ValueError("t_end must cover at least 20 switching periods past the step")
    ps = power_stage_ss(params)
    A_p = np.ascontiguousarray(ps.A)
    B_io, B_sw = ps.B[:, 0].copy(), ps.B[:, 1].copy()
    C_vo, d_oo = ps.C[0].copy(), float(ps.D[0, 0])

    kss = tf_to_ss(_controller_tf(controller))
    if float(np.max(np.abs(kss.D))) != 0.0:
        raise ValueError("outer controller must be strictly proper")
    A_K = np.ascontiguousarray(kss.A)
    B_K, C_K = kss.B[:, 0].copy(), kss.C[0].copy()

    A_E, B_E, C_Em, D_E = _estimator_block(scheme)
    if D_E[0, 2] != 0.0:
        raise ValueError("estimator must not feed through the switch-node voltage")
    A_Fm, B_Fm, C_Fm, D_Fm = _realize(scheme.compensator)
    A_E, B_E, C_E = _pad_block(A_E, B_E, C_Em, 3)
    C_E = C_E.ravel() if C_E.ndim > 1 else C_E
    A_F, B_F, C_F = _pad_block(A_Fm, B_Fm, C_Fm, 1)
    C_F = C_F.ravel() if C_F.ndim > 1 else C_F

    if cfg.mode == "switched":
        h = T_sw / cfg.steps_per_period
        mode = 1
    else:
        h = cfg.dt
        mode = 0
    n_steps = int(round(cfg.t_end / h))
    v_target = params.V_o_target if cfg.V_ref is None else cfg.V_ref

    out = np.empty((n_steps + 1, 9))
    x0 = np.zeros(2 + A_K.shape[0] + A_E.shape[0] + A_F.shape[0])
    diverged = _run(
        x0, h, n_steps, mode,
        A_p, B_io, B_sw, C_vo, d_oo,
        A_K, B_K, C_K,
        np.ascontiguousarray(A_E), np.ascontiguousarray(B_E), np.ascontiguousarray(C_E),
        float(D_E[0, 0]), float(D_E[0, 1]),
        np.ascontiguousarray(A_F), B_F[:, 0].copy(), np.ascontiguousarray(C_F), float(D_Fm[0, 0]),
        Gf, params.V_in, params.V_pk, T_sw,
        load.step_time, load.step_slope, load.step_amplitude, v_target, cfg.soft_start,
        out,
    )
    if diverged >= 0:
        raise NumericalBlowup(diverged * h)
    t = np.arange(n_steps + 1) * h
    cols = {name: out[:, j] for j, name in enumerate(SimTrace.COLUMNS)}
    return SimTrace(t=t, **cols)


def metrics(trace: SimTrace, V_o_target: float, V_pk: float, t_start: float = 0.0) -> Metrics:
    """Post-window performance numbers: worst dip/rise as a percentage of
    the target, last exit from the 2 percent band, command-saturation
    fraction, and the final deviation."""
    sel = trace.t >= t_start
    v = trace.v_o[sel]
    t = trace.t[sel]
    under = max(0.0, float(np.max(V_o_target - v))) / V_o_target * 100.0
    over = max(0.0, float(np.max(v - V_o_target))) / V_o_target * 100.0
    outside = np.abs(v - V_o_target) > 0.02 * V_o_target
    settling = float(t[outside][-1] - t_start) if outside.any() else 0.0
    vc = trace.v_c_tot[sel]
    sat = float(np.mean((vc < 0.0) | (vc > V_pk)))
    return Metrics(
        undershoot_pct=under,
        overshoot_pct=over,
        settling_time=settling,
        saturation_fraction=sat,
        steady_state_error=float(v[-1] - V_o_target),
    )


# ---------------------------------------------------------------------------
# Monte Carlo harness


def build_scheme(kind: str, plant, k_FF: float, p_H: float, uio_lambdas=(-1e6, -1e6, -0.95e6)):
    if kind == "none":
        return build_none()
    if kind == "dob":
        return build_dob(plant, k_FF, p_H)
    if kind == "lec":
        return build_lec(plant, k_FF, p_H)
    if kind == "uio":
        return build_uio(plant, uio_lambdas, k_FF, p_H)[1]
    raise ValueError(f"unknown scheme kind {kind!r}")


def monte_carlo(
    box: UncertaintyBox,
    nominal: BuckParams,
    controller,
    schemes: list[str],
    n_runs: int,
    seed: int,
    cfg: SimConfig,
    load: LoadProfile,
    p_H: float = 1e6,
    uio_lambdas=(-1e6, -1e6, -0.95e6),
    fix_R_L: float | None = None,
    fix_V_in: float | None = None,
    Gf: float = 1.0,
) -> dict[str, McSummary]:
    """Seeded study: one parameter draw per run, the nominal-parameter
    controller and schemes held fixed, every scheme simulated on the same
    sampled plant. Per-run failures are recorded, not fatal."""
    if n_runs < 1:
        raise ValueError("need at least one run")
    nom_plant = build_plant(nominal)
    built = {kind: build_scheme(kind, nom_plant, nominal.k_FF, p_H, uio_lambdas) for kind in schemes}
    acc = {
        kind: {
            "metrics": [],
            "fail": [],
            "v_o": None,
            "v_c_tot": None,
        }
        for kind in schemes
    }
    t_ref = None
    for i in range(n_runs):
        p = sample_params(box, np.random.default_rng([seed, i]), nominal, R_L=fix_R_L, V_in=fix_V_in)
        for kind in schemes:
            try:
                trace = simulate(p, controller, built[kind], cfg, load, Gf=Gf)
            except NumericalBlowup as exc:
                acc[kind]["fail"].append((i, str(exc)))
                continue
            m = metrics(trace, nominal.V_o_target, nominal.V_pk, t_start=load.step_time)
            acc[kind]["metrics"].append(m)
            t_ref = trace.t
            for sig in ("v_o", "v_c_tot"):
                arr = getattr(trace, sig)
                slot = acc[kind][sig]
                if slot is None:
                    acc[kind][sig] = [arr.copy(), arr.copy(), arr.copy()]  # min, max, sum
                else:
                    np.minimum(slot[0], arr, out=slot[0])
                    np.maximum(slot[1], arr, out=slot[1])
                    slot[2] += arr
    summaries = {}
    for kind in schemes:
        ms = acc[kind]["metrics"]
        stats = {}
        for name in Metrics.FIELDS:
            vals = np.array([getattr(m, name) for m in ms]) if ms else np.array([math.nan])
            stats[name] = {
                "mean": float(vals.mean()),
                "min": float(vals.min()),
                "max": float(vals.max()),
            }
        envs = {}
        for sig in ("v_o", "v_c_tot"):
            slot = acc[kind][sig]
            if slot is not None:
                envs[sig] = {
                    "min": slot[0],
                    "max": slot[1],
                    "mean": slot[2] / max(len(ms), 1),
                }
        summaries[kind] = McSummary(
            n_runs=n_runs,
            metrics=stats,
            envelope_t=t_ref if t_ref is not None else np.empty(0),
            envelopes=envs,
            per_run=tuple(ms),
            failures=tuple(acc[kind]["fail"]),
        )
    return summaries


# ---------------------------------------------------------------------------
# PWM spectral verification


def _bessel_j(n: int, z: float, tol: float = 1e-18) -> float:
    """First-kind Bessel function by its power series (the verification
    oracle stays independent of scipy.special)."""
    n = abs(n)
    term = (0.5 * z) ** n / math.factorial(n)
    total = term
    j = 0
    while abs(term) > tol * max(abs(total), 1.0) and j < 200:
        j += 1
        term *= -(0.25 * z * z) / (j * (n + j))
        total += term
    return total


@dataclass(frozen=True)
class SpectrumLine:
    m: int
    n: int
    omega: float
    measured: float
    oracle: float
    bound: float


@dataclass(frozen=True, eq=False)
class PwmSpectrumReport:
    dc_measured: float
    dc_expected: float
    fundamental_measured: float
    fundamental_expected: float
    lines: tuple[SpectrumLine, ...]
    omega_1: float

    @property
    def dc_ok(self) -> bool:
        return abs(self.dc_measured - self.dc_expected) <= 0.01 * self.dc_expected

    @property
    def fundamental_ok(self) -> bool:
        return abs(self.fundamental_measured - self.fundamental_expected) <= 0.02 * (
            self.fundamental_expected
        )

    @property
    def bounds_ok(self) -> bool:
        return all(ln.measured <= ln.bound * (1 + 1e-9) for ln in self.lines)

    @property
    def oracle_ok(self) -> bool:
        return all(
            abs(ln.measured - ln.oracle) <= 0.02 * max(ln.oracle, 1e-12) for ln in self.lines
        )


def _pwm_switch_segments(R0, R1, omega_1, theta_1, V_pk, f_sw, n_periods):
    """Exact on-intervals of the trailing-edge comparator per period.

    The comparator output is 1 wherever the tone sits above the sawtooth;
    every sign change is bracketed on a dense scan and polished to machine
    precision, so later quadrature carries no sampling error.
    """
    T = 1.0 / f_sw
    segs = []
    scan = np.linspace(0.0, T, 257)

    def gap(tau, t0):
        return R0 + R1 * math.cos(omega_1 * (t0 + tau) + theta_1) - V_pk * tau / T

    for k in range(n_periods):
        t0 = k * T
        vals = R0 + R1 * np.cos(omega_1 * (t0 + scan) + theta_1) - V_pk * scan / T
        on_at = vals[0] > 0.0
        start = t0 if on_at else None
        for j in range(1, len(scan)):
            if (vals[j] > 0.0) != on_at:
                tau = brentq(gap, scan[j - 1], scan[j], args=(t0,), xtol=1e-16 * T, rtol=1e-15)
                if on_at:
                    segs.append((start, t0 + tau))
                    start = None
                else:
                    start = t0 + tau
                on_at = not on_at
        if on_at:
            segs.append((start, t0 + T))
    return segs


def _fourier_amplitude(segs, omega: float, t_total: float) -> float:
    a = np.array([s[0] for s in segs])
    b = np.array([s[1] for s in segs])
    if omega == 0.0:
        return float(np.sum(b - a) / t_total)
    x = np.sum((np.exp(-1j * omega * a) - np.exp(-1j * omega * b)) / (1j * omega))
    return float(2.0 * np.abs(x) / t_total)


def pwm_spectrum_check(
    v1_params: tuple[float, float, float, float],
    pwm: tuple[float, float],
    n_periods: int = 256,
    m_max: int = 5,
    n_max: int = 3,
    denom_limit: int = 64,
) -> PwmSpectrumReport:
    """Compare the comparator output spectrum against the Bessel-series
    description of single-tone trailing-edge modulation.

    The tone frequency is snapped to a rational multiple of the switching
    frequency so the record holds an integer number of beat periods; the
    duty intervals are located exactly and integrated in closed form, and
    each line is checked against the series oracle and its amplitude bound.
    """
    R0, R1, omega_1, theta_1 = v1_params
    V_pk, omega_sw = pwm
    if not (omega_1 < omega_sw and R0 + R1 < V_pk and R0 - R1 > 0.0):
        raise HypothesisViolated("need omega_1 < omega_sw, R0 + R1 < V_pk, R0 - R1 > 0")
    f_sw = omega_sw / (2.0 * math.pi)
    frac = Fraction(omega_1 / omega_sw).limit_denominator(denom_limit)
    omega_1 = float(frac) * omega_sw
    q = frac.denominator
    n_p = int(math.ceil(n_periods / q)) * q
    t_total = n_p / f_sw

    segs = _pwm_switch_segments(R0, R1, omega_1, theta_1, V_pk, f_sw, n_p)
    D_c = R0 / V_pk
    M = 2.0 * R1 / V_pk

    lines = []
    seen = {}
    for m in range(1, m_max + 1):
        for n in range(-n_max, n_max + 1):
            omega = m * omega_sw + n * omega_1
            key = round(abs(omega) / omega_sw * q)
            if key in seen or key == 0 or key == round(omega_1 / omega_sw * q):
                # rational collisions would stack phasors; the admissible
                # draws below avoid them, anything else is skipped
                continue
            seen[key] = True
            if n == 0:
                oracle = (
                    abs(1.0 - _bessel_j(0, m * math.pi * M) * np.exp(-2j * m * D_c * math.pi))
                    / (m * math.pi)
                )
            else:
                oracle = abs(_bessel_j(n, m * math.pi * M)) / (m * math.pi)
            bound = pwm_bound(m, abs(n), max(R1, 1e-12 * V_pk), V_pk)
            lines.append(
                SpectrumLine(
                    m=m,
                    n=n,
                    omega=abs(omega),
                    measured=_fourier_amplitude(segs, abs(omega), t_total),
                    oracle=float(oracle),
                    bound=bound,
                )
            )
    return PwmSpectrumReport(
        dc_measured=_fourier_amplitude(segs, 0.0, t_total),
        dc_expected=D_c,
        fundamental_measured=_fourier_amplitude(segs, omega_1, t_total),
        fundamental_expected=0.5 * M,
        lines=tuple(lines),
        omega_1=omega_1,
    )
