"""Nominal-identity verification and robust-stability analysis.

Checks the inner-loop identity on matched parameters, builds sampled
envelopes for the estimator mismatch and for the scaled sensitivity bound,
evaluates the sufficient robust-stability condition on the compensator
pole, and runs seeded worst-case stability scans over the parameter box.

The envelopes are sampling-based (vertices plus uniform interior points).
Sampling under-covers a true worst-case envelope; the 1.1 safety factor
mitigates but cannot certify, so reports are labeled sampled evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .buck import BuckParams, UncertaintyBox, build_plant, sample_params
from .design import STABILITY_MARGIN, closed_loop_poles
from .lti import FrequencyGrid, RationalTF, StateSpace, eval_many, tf_to_ss
from .schemes import DRScheme, assemble_matrices

SAFETY_FACTOR = 1.1


class SampledInstability(RuntimeError):
    """The fixed controller failed to stabilize some sampled plants."""

    def __init__(self, failures: list[BuckParams]):
        super().__init__(f"{len(failures)} sampled plants are not stabilized")
        self.failures = failures


@dataclass(frozen=True, eq=False)
class EnvelopeCurve:
    """Sampled magnitude envelope on a frequency grid.

    direction records the conservatism sense of the sampling: "lower" means
    the true envelope can only be larger, "upper" means it can only be
    smaller.
    """

    grid: FrequencyGrid
    values: np.ndarray
    direction: str
    sample_budget: int

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float).ravel()
        if len(v) != len(self.grid) or np.any(v < 0.0):
            raise ValueError("envelope values must be nonnegative and match the grid")
        if self.direction not in ("upper", "lower"):
            raise ValueError("direction must be 'upper' or 'lower'")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class RobustReport:
    condition_margin: float | None = None
    first_violation_omega: float | None = None
    worst_sample: BuckParams | None = None
    stable_fraction: float | None = None
    p_H_used: float | None = None

    @property
    def condition_holds(self) -> bool:
        return self.condition_margin is not None and self.condition_margin > 0.0


# ---------------------------------------------------------------------------
# nominal identity


def _ge_solve_batched(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Partial-pivot Gaussian elimination batched over the leading axis.

    Works in whatever dtype M carries; LAPACK has no extended-precision
    path, and the identity meter needs one.
    """
    M = M.copy()
    x = rhs.astype(M.dtype).copy()
    nb, n, _ = M.shape
    idx = np.arange(nb)
    for col in range(n):
        piv = col + np.argmax(np.abs(M[:, col:, col]), axis=1)
        for arr in (M, x):
            tmp = arr[idx, piv].copy()
            arr[idx, piv] = arr[idx, col]
            arr[idx, col] = tmp
        f = M[:, col + 1 :, col] / M[:, col, None, col]
        M[:, col + 1 :, col:] -= f[:, :, None] * M[:, None, col, col:]
        x[:, col + 1 :] -= f * x[:, col, None]
    out = np.zeros_like(x)
    for row in range(n - 1, -1, -1):
        acc = x[:, row] - np.einsum("kj,kj->k", M[:, row, row + 1 :], out[:, row + 1 :])
        out[:, row] = acc / M[:, row, row]
    return out


def inner_loop_response_precise(
    plant, scheme: DRScheme, k_FF: float, omegas: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(v_o/v_c, v_o/i_out) of the assembled loop, in extended precision.

    The identity this feeds is exact algebra, but at omega << p_H the
    disturbance channel sits 1e5 times below the terms that cancel to
    produce it; verifying to 1e-8 there is outside float64's range, so the
    whole assembly and the solves run in 80-bit arithmetic.
    """
    from scipy.linalg import matrix_balance

    A, B, C, D = assemble_matrices(plant, scheme, k_FF, dtype=np.longdouble)
    n = A.shape[0]
    # radix-2 balancing computed on the rounded copy, applied exactly
    _, T = matrix_balance(A.astype(float))
    t = np.diag(T).astype(np.longdouble)
    A = A / t[:, None] * t[None, :]
    B = B / t[:, None]
    C = C * t[None, :]
    w = np.asarray(omegas, dtype=np.longdouble)
    M = 1j * w[:, None, None] * np.eye(n, dtype=np.longdouble) - A[None, :, :]
    out = []
    for j in (0, 1):
        x = _ge_solve_batched(M, np.broadcast_to(B[:, j], (len(w), n)))
        y = x @ C[0].astype(np.clongdouble) + np.clongdouble(D[0, j])
        out.append(y.astype(complex))
    return out[0], out[1]


def theorem1_check(
    plant,
    lec: DRScheme,
    k_FF: float,
    grid: FrequencyGrid,
) -> float:
    """Max relative error of the assembled loop against
    (k_FF P11, P12 s/(s+p_H)) over the grid."""
    if lec.kind != "lec":
        raise ValueError("identity check expects the algebraic scheme")
    w = grid.omegas
    s = 1j * w
    got_vc, got_io = inner_loop_response_precise(plant, lec, k_FF, w)
    ref_vc = k_FF * eval_many(plant.P11, s)
    ref_io = eval_many(plant.P12, s) * s / (s + lec.p_H)
    err_vc = np.max(np.abs(got_vc - ref_vc) / np.abs(ref_vc))
    err_io = np.max(np.abs(got_io - ref_io) / np.abs(ref_io))
    return float(max(err_vc, err_io))


# ---------------------------------------------------------------------------
# envelopes


def _g1_values(omega: np.ndarray, R_L: float, R_C: float, C: float) -> np.ndarray:
    s = 1j * omega
    return (1.0 + C * (R_L + R_C) * s) / (R_L * (1.0 + C * R_C * s))


def _vertices(intervals: list[tuple[float, float]]) -> np.ndarray:
    grids = np.meshgrid(*intervals, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def lambda_envelope(
    box: UncertaintyBox,
    nominal: BuckParams,
    grid: FrequencyGrid,
    budget: int = 200,
    seed: int = 0,
) -> EnvelopeCurve:
    """Sampled additive-mismatch envelope of the load-current estimator.

    The estimator ratio depends only on (R_L, R_C, C); the envelope is the
    per-frequency max of |G1(iw; sample) - G1(iw; nominal)| over the eight
    box vertices plus `budget` uniform interior samples, scaled by the
    safety factor. Sampling under-estimates, hence direction "lower".
    """
    if budget < 8:
        raise ValueError("budget must cover at least the 8 vertices")
    rng = np.random.default_rng(seed)
    ivals = [box.R_L, box.R_C, box.C]
    pts = [_vertices(ivals)]
    pts.append(
        np.column_stack([rng.uniform(lo, hi, size=budget) for lo, hi in ivals])
    )
    samples = np.vstack(pts)
    w = grid.omegas
    ref = _g1_values(w, nominal.R_L, nominal.R_C, nominal.C)
    worst = np.zeros(len(w))
    for r_l, r_c, c in samples:
        np.maximum(worst, np.abs(_g1_values(w, r_l, r_c, c) - ref), out=worst)
    return EnvelopeCurve(grid, SAFETY_FACTOR * worst, "lower", len(samples))


def n_lower_bound(
    box: UncertaintyBox,
    nominal: BuckParams,
    controller: RationalTF,
    k_FF_interval: tuple[float, float],
    grid: FrequencyGrid,
    budget: int = 200,
    seed: int = 0,
    Gf: float = 1.0,
) -> EnvelopeCurve:
    """Sampled bound N(w) <= 1 / (k_FF |P11(iw) S(iw)|) over the box.

    S is formed per sample with the fixed controller, matching the premise
    that the outer controller already stabilizes the bare uncertain loop;
    samples it fails to stabilize are collected and reported, not dropped.
    """
    rng = np.random.default_rng(seed)
    ivals = [getattr(box, name) for name in UncertaintyBox.FIELDS]
    samples = [_vertices(ivals)]
    samples.append(np.column_stack([rng.uniform(lo, hi, size=budget) for lo, hi in ivals]))
    samples = np.vstack(samples)
    kf_lo, kf_hi = k_FF_interval
    kfs = np.full(len(samples), 0.5 * (kf_lo + kf_hi))
    if kf_hi > kf_lo:
        kfs = rng.uniform(kf_lo, kf_hi, size=len(samples))

    w = grid.omegas
    s = 1j * w
    kv = eval_many(controller, s)
    worst = np.zeros(len(w))
    failures: list[BuckParams] = []
    for row, kf in zip(samples, kfs):
        p = nominal.replace(**dict(zip(UncertaintyBox.FIELDS, row)))
        plant = build_plant(p)
        p11 = eval_many(plant.P11, s)
        loop_tf = _bare_loop(plant.P11, controller, kf * Gf)
        poles = closed_loop_poles(loop_tf)
        if np.any(poles.real >= STABILITY_MARGIN):
            failures.append(p)
            continue
        np.maximum(worst, kf * np.abs(p11 / (1.0 + kf * Gf * kv * p11)), out=worst)
    if failures:
        raise SampledInstability(failures)
    return EnvelopeCurve(grid, 1.0 / (SAFETY_FACTOR * worst), "upper", len(samples))


def _bare_loop(p11: RationalTF, controller: RationalTF, gain: float) -> RationalTF:
    num = controller.num * p11.num * gain
    den = controller.den * p11.den
    return RationalTF(num, den)


# ---------------------------------------------------------------------------
# sufficient condition


def w_r_magnitude(nominal: BuckParams, lam: np.ndarray, p_H: float, omegas: np.ndarray):
    """|G2_hat(iw)| Lambda(w) / (k_FF_hat |1 + iw/p_H|)."""
    g2_mag = np.hypot(nominal.R_i_prime, omegas * nominal.L)
    return g2_mag * lam / (nominal.k_FF * np.abs(1.0 + 1j * omegas / p_H))


def check_condition(
    lam: EnvelopeCurve,
    n_curve: EnvelopeCurve,
    nominal: BuckParams,
    p_H: float,
    grid: FrequencyGrid | None = None,
) -> RobustReport:
    """Pointwise test |W_r(iw)| < N(w); a violation is a reported outcome."""
    grid = lam.grid if grid is None else grid
    if lam.grid.omegas.shape != n_curve.grid.omegas.shape or np.any(
        lam.grid.omegas != n_curve.grid.omegas
    ):
        raise ValueError("envelopes must share one grid")
    w = grid.omegas
    wr = w_r_magnitude(nominal, lam.values, p_H, w)
    margin = n_curve.values - wr
    i_min = int(np.argmin(margin))
    first_violation = None
    bad = np.flatnonzero(margin <= 0.0)
    if bad.size:
        first_violation = float(w[bad[0]])
    return RobustReport(
        condition_margin=float(margin[i_min]),
        first_violation_omega=first_violation,
        p_H_used=p_H,
    )


def critical_p_h(
    lam: EnvelopeCurve,
    n_curve: EnvelopeCurve,
    nominal: BuckParams,
    lo: float = 1e3,
    hi: float = 1e12,
    rel_tol: float = 0.01,
) -> float:
    """Largest passing compensator pole; +inf when even `hi` passes.

    |W_r| is pointwise increasing in p_H, so the passing set is an interval
    and bisection is exact.
    """
    if not check_condition(lam, n_curve, nominal, lo).condition_holds:
        return 0.0
    if check_condition(lam, n_curve, nominal, hi).condition_holds:
        return math.inf
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        if check_condition(lam, n_curve, nominal, mid).condition_holds:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# sampled stability scan


def _controller_ss(controller: RationalTF) -> StateSpace:
    ss = tf_to_ss(controller)
    if float(np.max(np.abs(ss.D))) != 0.0:
        raise ValueError("outer controller must be strictly proper")
    return ss


def _closed_outer_A(inner_A, inner_B, inner_C, kss: StateSpace, Gf: float) -> np.ndarray:
    """State matrix of controller + inner loop with v_c = K (0 - Gf v_o)."""
    n_i = inner_A.shape[0]
    n_k = kss.n_states
    A = np.zeros((n_i + n_k, n_i + n_k))
    A[:n_i, :n_i] = inner_A
    A[:n_i, n_i:] = np.outer(inner_B[:, 0], kss.C[0])
    A[n_i:, :n_i] = -Gf * np.outer(kss.B[:, 0], inner_C[0])
    A[n_i:, n_i:] = kss.A
    return A


def sampled_stability_scan(
    box: UncertaintyBox,
    nominal: BuckParams,
    controller: RationalTF,
    scheme: DRScheme,
    n_samples: int,
    seed: int,
    Gf: float = 1.0,
) -> RobustReport:
    """Closed-loop stability over sampled plants with the nominal-parameter
    scheme left in place; the estimator mismatch is exactly the point.

    Stability is an eigenvalue test on the assembled outer loop with the
    margin threshold shared across the package. Returns the stable fraction
    and the sample closest to (or past) instability.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    kss = _controller_ss(controller)
    n_stable = 0
    worst_re = -math.inf
    worst: BuckParams | None = None
    for i in range(n_samples):
        p = sample_params(box, np.random.default_rng([seed, i]), nominal)
        plant = build_plant(p)
        A, B, C, _ = assemble_matrices(plant, scheme, nominal.k_FF)
        A_cl = _closed_outer_A(A, B, C, kss, Gf)
        re_max = float(np.max(np.linalg.eigvals(A_cl).real))
        if re_max < STABILITY_MARGIN:
            n_stable += 1
        if re_max > worst_re:
            worst_re = re_max
            worst = p
    return RobustReport(
        worst_sample=worst,
        stable_fraction=n_stable / n_samples,
        p_H_used=scheme.p_H if scheme.kind != "none" else None,
    )
