"""Load disturbance-rejection schemes.

Three estimator/compensator pairs built around the same injection point:

* DOB: approximate plant inversion of the output voltage, low-pass filtered,
  compared against the applied switch-node voltage.
* UIO: Luenberger observer on the plant augmented with a constant-disturbance
  state, reduced to second order by removing its structurally unobservable
  mode.
* LEC: algebraic reconstruction of the load current from v_o and i_L, exact
  on the nominal plant.

Each scheme feeds a compensation filter that injects an additive correction
ahead of the PWM stage. The inner loop is assembled in state space; doing
the interconnection with polynomial fractions would blow up coefficient
spans, so rational forms are only extracted at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .buck import BuckParams, PlantMatrix, power_stage_ss
from .lti import (
    Polynomial,
    RationalTF,
    StateSpace,
    eval_many,
    ss_frequency_response,
    ss_to_tf,
)

SCHEME_KINDS = ("none", "dob", "uio", "lec")

#: estimator input signals per scheme kind, in wiring order
SCHEME_INPUTS = {
    "none": (),
    "dob": ("v_o", "v_sw"),
    "uio": ("v_sw", "v_o", "i_l"),
    "lec": ("v_o", "i_l"),
}


def _solve_dense(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Partial-pivot Gaussian elimination in the dtype of M (LAPACK cannot
    take extended precision)."""
    M = M.copy()
    x = b.astype(M.dtype).copy()
    n = len(x)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(M[k:, k])))
        if piv != k:
            M[[k, piv]] = M[[piv, k]]
            x[[k, piv]] = x[[piv, k]]
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            M[i, k:] -= f * M[k, k:]
            x[i] -= f * x[k]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - np.dot(M[i, i + 1 :], x[i + 1 :])) / M[i, i]
    return x


def _realize(g: RationalTF, dtype=np.float64) -> tuple[np.ndarray, ...]:
    """Controllable-canonical (A, B, C, D) arrays with a DC-exact output row.

    A canonical realization of a block whose zero sits decades below its
    pole recovers the DC gain as a near-cancellation of C x against D,
    losing as many digits as the gain spread. The nominal-loop identities
    hinge on exact DC cancellations across blocks, so C is rescaled (a
    ~1e-13 relative perturbation) until C(-A)^-1 B + D equals the direct
    coefficient ratio num(0)/den(0).
    """
    num = g.num.coef.astype(dtype)
    den = g.den.coef.astype(dtype)
    n = len(den) - 1
    if len(num) - 1 > n:
        raise ValueError("block must be proper")
    a = den / den[-1]
    b = np.zeros(n + 1, dtype=dtype)
    b[: len(num)] = num / den[-1]
    d = b[n]
    if n == 0:
        return (
            np.zeros((0, 0), dtype=dtype),
            np.zeros((0, 1), dtype=dtype),
            np.zeros((1, 0), dtype=dtype),
            np.array([[d]], dtype=dtype),
        )
    A = np.zeros((n, n), dtype=dtype)
    if n > 1:
        A[:-1, 1:] = np.eye(n - 1, dtype=dtype)
    A[-1, :] = -a[:n]
    B = np.zeros((n, 1), dtype=dtype)
    B[-1, 0] = 1.0
    C = (b[:n] - d * a[:n]).reshape(1, n)
    if den[0] != 0.0:
        dc_exact = num[0] / den[0] if len(num) else dtype(0.0)
        dc_state = (C @ _solve_dense(-A, B[:, 0]))[0]
        if dc_state != 0.0:
            C = C * ((dc_exact - d) / dc_state)
    return A, B, C, np.array([[d]], dtype=dtype)


class PlacementFailed(RuntimeError):
    """Observer eigenvector system is singular for the requested spectrum."""


class TooManyCoincident(ValueError):
    """With two measured outputs at most two eigenvalues may coincide."""


class IllPosed(ValueError):
    """Direct-feedthrough loop determinant vanishes."""


@dataclass(frozen=True, eq=False)
class DRScheme:
    """Estimator bank + compensation filter, ready for loop assembly.

    estimator_ss, when present, is a shared multi-input realization of the
    estimator row (columns follow `inputs`); the observer-based scheme uses
    it so that its channels keep one set of states instead of three copies.
    """

    kind: str
    estimator: tuple[RationalTF, ...]
    compensator: RationalTF
    p_H: float
    estimator_ss: StateSpace | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        expected = len(SCHEME_INPUTS[self.kind])
        if len(self.estimator) != expected:
            raise ValueError(f"{self.kind} estimator needs {expected} inputs")
        for g in (*self.estimator, self.compensator):
            if not g.is_proper:
                raise ValueError("estimator and compensator entries must be proper")
            poles = g.simplified().den.roots()
            if np.any(poles.real >= 0.0):
                raise ValueError("estimator and compensator entries must be stable")
        if self.estimator_ss is not None and self.estimator_ss.n_inputs != expected:
            raise ValueError("shared realization must have one column per input")

    @property
    def inputs(self) -> tuple[str, ...]:
        return SCHEME_INPUTS[self.kind]


def build_none() -> DRScheme:
    return DRScheme("none", (), RationalTF.const(0.0), math.inf)


def g1(plant: PlantMatrix) -> RationalTF:
    """P21 / P11 in closed form: (C (R_L + R_C) s + 1) / (R_L (1 + C R_C s))."""
    p = plant.params
    return RationalTF(
        Polynomial([1.0, p.C * (p.R_L + p.R_C)]),
        Polynomial([p.R_L, p.R_L * p.C * p.R_C]),
    )


def g2(params: BuckParams, check: bool = True) -> RationalTF:
    """P12 / P11 in closed form: -(L s + R_i + R_on), exact for every
    component value. With check=True the closed form is verified pointwise
    against the plant ratio at a few frequencies."""
    out = RationalTF(Polynomial([-params.R_i_prime, -params.L]), Polynomial([1.0]))
    if check:
        from .buck import build_plant

        plant = build_plant(params)
        s = 1j * np.logspace(2, 8, 7)
        ratio = eval_many(plant.P12, s) / eval_many(plant.P11, s)
        direct = eval_many(out, s)
        if np.max(np.abs(ratio - direct) / np.abs(direct)) > 1e-9:
            raise AssertionError("closed form for P12/P11 failed verification")
    return out


def build_compensator(params: BuckParams, k_FF: float, p_H: float) -> RationalTF:
    """(L s + R_i') / (k_FF (1 + s / p_H)): the ideal inverse of the
    disturbance path made proper by one high-frequency pole."""
    if p_H <= 0.0:
        raise ValueError("p_H must be positive")
    return RationalTF(
        Polynomial([params.R_i_prime, params.L]),
        Polynomial([k_FF, k_FF / p_H]),
    )


def build_dob(plant: PlantMatrix, k_FF: float, p_H: float) -> DRScheme:
    """Disturbance observer with real-zero approximate plant inverse.

    Estimator inputs (v_o, v_sw): delta_hat = G_dob v_o - Q v_sw with
    G_dob = (1 + s/w_PS)^2 / ((1 + s/w_ESR)(1 + s/p_H)), Q = p_H/(s + p_H).
    The resonant pair is replaced by the coincident real zeros so the block
    stays implementable with a plain RC network; the residual mismatch is
    the known over-compensation artifact of this scheme. The filter is the
    static gain -1/k_FF.
    """
    if p_H <= 0.0:
        raise ValueError("p_H must be positive")
    wz = plant.omega_PS
    we = plant.omega_ESR
    g_dob = RationalTF(
        Polynomial([1.0, 2.0 / wz, 1.0 / (wz * wz)]),
        Polynomial([1.0, 1.0 / we + 1.0 / p_H, 1.0 / (we * p_H)]),
    )
    q = RationalTF(Polynomial([p_H]), Polynomial([p_H, 1.0]))
    return DRScheme("dob", (g_dob, -1.0 * q), RationalTF.const(-1.0 / k_FF), p_H)


def build_lec(plant: PlantMatrix, k_FF: float, p_H: float) -> DRScheme:
    """Algebraic load estimator i_hat = -G1 v_o + i_L with the proper
    compensation filter; exact on the nominal plant."""
    est = (-1.0 * g1(plant), RationalTF.const(1.0))
    return DRScheme("lec", est, build_compensator(plant.params, k_FF, p_H), p_H)


# ---------------------------------------------------------------------------
# unknown input observer


def augmented_ss(plant: PlantMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A_a, B_a, C_a) of the plant with the load current as a third state.

    The disturbance exo-system is a single pole at the origin (the load
    step is treated as piecewise constant).
    """
    ps = power_stage_ss(plant.params)
    A_a = np.zeros((3, 3))
    A_a[:2, :2] = ps.A
    A_a[:2, 2] = ps.B[:, 0]  # disturbance input column
    B_a = np.zeros((3, 1))
    B_a[:2, 0] = ps.B[:, 1]  # switch-node voltage column
    C_a = np.zeros((2, 3))
    C_a[:, :2] = ps.C
    C_a[:, 2] = ps.D[:, 0]
    return A_a, B_a, C_a


def _place_observer(A: np.ndarray, C: np.ndarray, lambdas: tuple[float, ...]) -> np.ndarray:
    """Gain F with eig(A - F C) = lambdas via eigenstructure assignment.

    Works on the transposed (state-feedback) problem: each eigenvector is
    picked inside the subspace (A^T - lambda I)^(-1) C^T q; the direction
    selector q must differ between coincident eigenvalues, which is what
    limits the multiplicity to the number of measured outputs.
    """
    n, p = A.shape[0], C.shape[0]
    counts: dict[float, int] = {}
    qs = []
    for lam in lambdas:
        k = counts.get(lam, 0)
        if k >= p:
            raise TooManyCoincident(
                f"eigenvalue {lam} requested {k + 1} times with only {p} outputs"
            )
        counts[lam] = k + 1
        q = np.zeros(p)
        q[k] = 1.0
        qs.append(q)
    At, Ct = A.T, C.T
    U = np.empty((n, n))
    for j, (lam, q) in enumerate(zip(lambdas, qs)):
        M = At - lam * np.eye(n)
        try:
            U[:, j] = np.linalg.solve(M, Ct @ q)
        except np.linalg.LinAlgError as exc:
            raise PlacementFailed(f"lambda={lam} coincides with an open-loop mode") from exc
    if np.linalg.cond(U) > 1e12:
        raise PlacementFailed("eigenvector basis is numerically singular")
    Q = np.column_stack(qs)
    K = np.linalg.solve(U.T, Q.T).T  # K U = Q
    return K.T


def _observable_reduction(A: np.ndarray, B: np.ndarray, c: np.ndarray) -> StateSpace:
    """Exact removal of the unobservable mode via a staircase basis.

    The observable subspace comes from the row space of the observability
    matrix (rows rescaled before the SVD so the rank decision is not skewed
    by the rad/s magnitudes); the complement is A-invariant by construction,
    so truncating it leaves the transfer functions untouched.
    """
    n = A.shape[0]
    obs = np.vstack([c @ np.linalg.matrix_power(A, k) for k in range(n)])
    norms = np.linalg.norm(obs, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    _, sv, vt = np.linalg.svd(obs / norms)
    rank = int(np.sum(sv > 1e-8 * sv[0]))
    basis = np.vstack([vt[:rank], vt[rank:]]).T  # observable block first
    Az = basis.T @ A @ basis
    unobservable_coupling = np.abs(Az[:rank, rank:]).max() if rank < n else 0.0
    scale = np.abs(Az).max()
    if unobservable_coupling > 1e-8 * scale:
        raise PlacementFailed("observability staircase failed to decouple")
    return StateSpace(
        Az[:rank, :rank], basis.T[:rank] @ B, (c @ basis)[:, :rank], np.zeros((1, B.shape[1]))
    )


@dataclass(frozen=True, eq=False)
class UIORealization:
    """Observer gain, closed-loop matrix, and the reduced estimator."""

    F: np.ndarray
    A_cl: np.ndarray
    lambdas: tuple[float, float, float]
    full: StateSpace
    reduced: StateSpace

    @property
    def observability_rank(self) -> int:
        obs = np.vstack([self.full.C @ np.linalg.matrix_power(self.A_cl, k) for k in range(3)])
        norms = np.linalg.norm(obs, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        sv = np.linalg.svd(obs / norms, compute_uv=False)
        return int(np.sum(sv > 1e-8 * sv[0]))


def build_uio(
    plant: PlantMatrix,
    lambdas: tuple[float, float, float],
    k_FF: float,
    p_H: float,
) -> tuple[UIORealization, DRScheme]:
    """Constant-disturbance observer with spectrum `lambdas` (all < 0).

    The estimator maps (v_sw, v_o, i_L) to the disturbance estimate through
    the observer x' = (A_a - F C_a) x + B_a v_sw + F [v_o; i_L]. Selecting
    only the disturbance state leaves one mode unobservable, so the block
    reduces exactly to second order; the reduced realization is what enters
    the loop. Compensation uses the same proper inverse filter as the
    algebraic scheme.
    """
    lams = tuple(float(x) for x in lambdas)
    if len(lams) != 3 or any(x >= 0.0 for x in lams):
        raise ValueError("need three strictly negative eigenvalues")
    if lams[0] == lams[1] == lams[2]:
        raise TooManyCoincident("all three eigenvalues coincide")
    A_a, B_a, C_a = augmented_ss(plant)
    F = _place_observer(A_a, C_a, lams)
    A_cl = A_a - F @ C_a
    got = np.sort(np.linalg.eigvals(A_cl).real)
    want = np.sort(np.asarray(lams))
    if np.max(np.abs(got - want) / np.abs(want)) > 1e-6:
        raise PlacementFailed(f"achieved spectrum {got} differs from request {want}")
    c_sel = np.array([[0.0, 0.0, 1.0]])
    full = StateSpace(A_cl, np.hstack([B_a, F]), c_sel, np.zeros((1, 3)))
    reduced = _observable_reduction(A_cl, np.hstack([B_a, F]), c_sel)
    realization = UIORealization(F=F, A_cl=A_cl, lambdas=lams, full=full, reduced=reduced)
    # keep the denominator shared across the three channels: individual
    # entries may have coincident pole/zero pairs that the cancellation
    # policy would otherwise strip
    estimator = tuple(ss_to_tf(reduced, in_index=j, simplify=False) for j in range(3))
    scheme = DRScheme(
        "uio",
        estimator,
        build_compensator(plant.params, k_FF, p_H),
        p_H,
        estimator_ss=reduced,
    )
    return realization, scheme


# ---------------------------------------------------------------------------
# inner-loop assembly


@dataclass(frozen=True, eq=False)
class InnerLoop:
    """Closed inner loop with inputs (v_c, i_out) and outputs (v_o, e).

    e is the raw estimator output (the disturbance-voltage estimate for the
    DOB, the load-current estimate otherwise). Rational forms of the two
    v_o channels are extracted through the cancellation policy.
    """

    ss: StateSpace
    tf_vc: RationalTF
    tf_io: RationalTF
    kind: str

    def response_vc(self, omegas: np.ndarray) -> np.ndarray:
        return ss_frequency_response(self.ss, omegas, in_index=0, out_index=0)

    def response_io(self, omegas: np.ndarray) -> np.ndarray:
        return ss_frequency_response(self.ss, omegas, in_index=1, out_index=0)

    def response_estimate(self, omegas: np.ndarray, in_index: int = 1) -> np.ndarray:
        return ss_frequency_response(self.ss, omegas, in_index=in_index, out_index=1)


def _estimator_block(scheme: DRScheme, dtype=np.float64):
    """Stack the estimator entries into one block with inputs (v_o, i_l, v_sw)."""
    order = {"v_o": 0, "i_l": 1, "v_sw": 2}
    if scheme.estimator_ss is not None:
        shared = scheme.estimator_ss
        n = shared.n_states
        B = np.zeros((n, 3), dtype=dtype)
        D = np.zeros((1, 3), dtype=dtype)
        for j, sig in enumerate(scheme.inputs):
            B[:, order[sig]] = shared.B[:, j].astype(dtype)
            D[0, order[sig]] += dtype(shared.D[0, j])
        return shared.A.astype(dtype), B, shared.C.astype(dtype), D
    blocks = [_realize(g, dtype) for g in scheme.estimator]
    n = sum(blk[0].shape[0] for blk in blocks)
    A = np.zeros((n, n), dtype=dtype)
    B = np.zeros((n, 3), dtype=dtype)
    Cm = np.zeros((1, n), dtype=dtype)
    D = np.zeros((1, 3), dtype=dtype)
    at = 0
    for sig, (Ab, Bb, Cb, Db) in zip(scheme.inputs, blocks):
        col = order[sig]
        k = Ab.shape[0]
        A[at : at + k, at : at + k] = Ab
        B[at : at + k, col] = Bb[:, 0]
        Cm[0, at : at + k] = Cb[0]
        D[0, col] += Db[0, 0]
        at += k
    return A, B, Cm, D


def _power_stage_matrices(p: BuckParams, dtype=np.float64):
    ss = power_stage_ss(p)
    if dtype is np.float64:
        return ss.A, ss.B, ss.C, ss.D
    # recompute the entries in the requested precision
    Rp = dtype(p.R_i) + dtype(p.R_on)
    rsum = dtype(p.R_L) + dtype(p.R_C)
    rpar = dtype(p.R_L) * dtype(p.R_C) / rsum
    L, C, R_L = dtype(p.L), dtype(p.C), dtype(p.R_L)
    A = np.array(
        [[-(Rp + rpar) / L, -R_L / (rsum * L)], [R_L / (rsum * C), -1.0 / (rsum * C)]],
        dtype=dtype,
    )
    B = np.array([[rpar / L, 1.0 / L], [-R_L / (rsum * C), dtype(0.0)]], dtype=dtype)
    Cm = np.array([[rpar, R_L / rsum], [dtype(1.0), dtype(0.0)]], dtype=dtype)
    D = np.array([[-rpar, dtype(0.0)], [dtype(0.0), dtype(0.0)]], dtype=dtype)
    return A, B, Cm, D


def assemble_matrices(
    plant: PlantMatrix, scheme: DRScheme, k_FF: float, dtype=np.float64
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Raw (A, B, C, D) of the closed inner loop in the requested precision.

    Inputs (v_c, i_out), outputs (v_o, e). The nominal-loop identities rest
    on cancellations across entries whose magnitudes span the estimator
    gain spread, so verification meters assemble in extended precision;
    everything else uses the float64 default.
    """
    A_p, B_ps, C_ps, D_ps = _power_stage_matrices(plant.params, dtype)
    B_io, B_sw = B_ps[:, 0], B_ps[:, 1]
    C_vo, C_il, d_oo = C_ps[0], C_ps[1], D_ps[0, 0]
    kf = dtype(k_FF)

    if scheme.kind == "none":
        A = A_p
        B = np.column_stack([kf * B_sw, B_io])
        C = np.vstack([C_vo, np.zeros(2, dtype=dtype)])
        D = np.array([[0.0, d_oo], [0.0, 0.0]], dtype=dtype)
        return A, B, C, D

    A_E, B_E, C_E, D_E = _estimator_block(scheme, dtype)
    A_F, B_Fm, C_Fm, D_Fm = _realize(scheme.compensator, dtype)
    B_F, C_F, D_F = B_Fm[:, 0], C_Fm[0], D_Fm[0, 0]
    nE, nF = A_E.shape[0], A_F.shape[0]
    n = 2 + nE + nF
    sl_p, sl_e, sl_f = slice(0, 2), slice(2, 2 + nE), slice(2 + nE, n)

    gamma = dtype(1.0) - kf * D_F * D_E[0, 2]
    if abs(gamma) < 1e-12:
        raise IllPosed("feedthrough loop determinant vanishes")

    # v_sw = w_x x + w_c v_c + w_i i_out
    w_x = np.zeros(n, dtype=dtype)
    w_x[sl_p] = kf * D_F * (D_E[0, 0] * C_vo + D_E[0, 1] * C_il)
    w_x[sl_e] = kf * D_F * C_E[0]
    w_x[sl_f] = kf * C_F
    w_x /= gamma
    w_c = kf / gamma
    w_i = kf * D_F * D_E[0, 0] * d_oo / gamma

    # e = e_x x + e_c v_c + e_i i_out
    e_x = np.zeros(n, dtype=dtype)
    e_x[sl_p] = D_E[0, 0] * C_vo + D_E[0, 1] * C_il
    e_x[sl_e] = C_E[0]
    e_x += D_E[0, 2] * w_x
    e_c = D_E[0, 2] * w_c
    e_i = D_E[0, 0] * d_oo + D_E[0, 2] * w_i

    A = np.zeros((n, n), dtype=dtype)
    B = np.zeros((n, 2), dtype=dtype)
    A[sl_p, sl_p] = A_p
    A[sl_p] += np.outer(B_sw, w_x)
    B[sl_p, 0] = B_sw * w_c
    B[sl_p, 1] = B_io + B_sw * w_i
    if nE:
        A[sl_e, sl_e] = A_E
        A[sl_e, sl_p] += np.outer(B_E[:, 0], C_vo) + np.outer(B_E[:, 1], C_il)
        A[sl_e] += np.outer(B_E[:, 2], w_x)
        B[sl_e, 0] += B_E[:, 2] * w_c
        B[sl_e, 1] += B_E[:, 0] * d_oo + B_E[:, 2] * w_i
    if nF:
        A[sl_f, sl_f] = A_F
        A[sl_f] += np.outer(B_F, e_x)
        B[sl_f, 0] += B_F * e_c
        B[sl_f, 1] += B_F * e_i

    C = np.zeros((2, n), dtype=dtype)
    C[0, sl_p] = C_vo
    C[1] = e_x
    D = np.array([[0.0, d_oo], [e_c, e_i]], dtype=dtype)
    return A, B, C, D


def assemble_inner_loop(plant: PlantMatrix, scheme: DRScheme, k_FF: float) -> InnerLoop:
    """Close the injection loop around the power stage in state space.

    Solves the single algebraic relation v_sw = k_FF (v_c + v_inj) with
    v_inj produced by the estimator/compensator chain; raises IllPosed when
    the direct-feedthrough determinant vanishes. For kind "none" the result
    is the bare feedforward-scaled plant: (k_FF P11, P12).
    """
    A, B, C, D = assemble_matrices(plant, scheme, k_FF)
    ss = StateSpace(A, B, C, D)
    return InnerLoop(ss, ss_to_tf(ss, 0, 0), ss_to_tf(ss, 1, 0), scheme.kind)
