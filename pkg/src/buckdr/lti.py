"""Minimal LTI systems kernel.

Polynomials in s, scalar rational transfer functions, state-space models,
frequency responses, the H-infinity norm, step responses, and the series /
parallel / feedback interconnections. All types are immutable after
construction and every operation is a pure function, so everything here is
safe to call from parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import expm


class PoleHit(ArithmeticError):
    """Evaluation point is numerically on a pole."""


class DegenerateDenominator(ValueError):
    """Denominator polynomial is identically zero."""


class AlgebraicLoop(ValueError):
    """Feedback interconnection with identically zero return difference."""


class ImproperTF(ValueError):
    """deg(num) > deg(den): no state-space realization exists."""


# A num/den root pair is cancelled only when |r_n - r_d| < tol * (1 + |r_d|).
# Anything looser could silently cancel a near-unstable pair and fake a
# stability property that the loop does not actually have.
CANCEL_RTOL = 1e-7


def _sort_roots(r: np.ndarray) -> np.ndarray:
    if r.size == 0:
        return r
    order = np.lexsort((r.imag, r.real))
    return r[order]


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Real polynomial, coefficients stored in ascending powers of s."""

    coef: np.ndarray

    def __init__(self, coef) -> None:
        c = np.atleast_1d(np.asarray(coef, dtype=float)).ravel()
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1].copy() if nz.size else np.zeros(1)
        c.flags.writeable = False
        object.__setattr__(self, "coef", c)

    @property
    def degree(self) -> int:
        return len(self.coef) - 1

    @property
    def is_zero(self) -> bool:
        return self.degree == 0 and self.coef[0] == 0.0

    def __call__(self, s):
        return npoly.polyval(s, self.coef)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polyadd(self.coef, other.coef))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polysub(self.coef, other.coef))

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(npoly.polymul(self.coef, other.coef))
        return Polynomial(self.coef * float(other))

    __rmul__ = __mul__

    def roots(self) -> np.ndarray:
        """Roots via companion-matrix eigenvalues, sorted by (Re, Im).

        The variable is rescaled by the geometric mean of the root
        magnitudes before forming the companion matrix; coefficients here
        routinely span nine decades and the rescaling keeps the matrix
        balanced.
        """
        if self.is_zero or self.degree == 0:
            return np.empty(0, dtype=complex)
        c = self.coef
        n_zero = 0
        while n_zero < len(c) - 1 and c[n_zero] == 0.0:
            n_zero += 1
        c = c[n_zero:]
        roots = [0.0 + 0.0j] * n_zero
        if len(c) > 1:
            k = abs(c[0] / c[-1]) ** (1.0 / (len(c) - 1))
            if not np.isfinite(k) or k <= 0.0:
                k = 1.0
            scaled = c * k ** np.arange(len(c))
            roots.extend(k * npoly.polyroots(scaled))
        return _sort_roots(np.asarray(roots, dtype=complex))

    @staticmethod
    def from_roots(roots: Iterable[complex], lead: float = 1.0) -> "Polynomial":
        rl = np.asarray(list(roots), dtype=complex)
        if rl.size == 0:
            return Polynomial([lead])
        c = npoly.polyfromroots(rl)
        scale = float(np.max(np.abs(c))) or 1.0
        if float(np.max(np.abs(c.imag))) > 1e-8 * scale:
            raise ValueError("root set is not closed under conjugation")
        return Polynomial(lead * c.real)

    def __repr__(self) -> str:
        return f"Polynomial({self.coef.tolist()})"


@dataclass(frozen=True, eq=False)
class RationalTF:
    """Scalar rational transfer function num(s)/den(s)."""

    num: Polynomial
    den: Polynomial

    def __post_init__(self) -> None:
        num = self.num if isinstance(self.num, Polynomial) else Polynomial(self.num)
        den = self.den if isinstance(self.den, Polynomial) else Polynomial(self.den)
        if den.is_zero:
            raise DegenerateDenominator("denominator is identically zero")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @staticmethod
    def const(g: float) -> "RationalTF":
        return RationalTF(Polynomial([float(g)]), Polynomial([1.0]))

    @property
    def is_proper(self) -> bool:
        return self.num.degree <= self.den.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.is_zero or self.num.degree < self.den.degree

    def __call__(self, s):
        return evaluate(self, s)

    def normalized(self) -> "RationalTF":
        """Scale num and den so that the denominator is monic."""
        lead = self.den.coef[-1]
        return RationalTF(Polynomial(self.num.coef / lead), Polynomial(self.den.coef / lead))

    def simplified(self) -> "RationalTF":
        """Apply the exact pole/zero cancellation policy.

        Common roots are removed only when they agree to CANCEL_RTOL in the
        relative sense; everything else is kept verbatim.
        """
        if self.num.is_zero:
            return RationalTF(Polynomial([0.0]), Polynomial([1.0]))
        zn = list(self.num.roots())
        zd = list(self.den.roots())
        keep_n = []
        for r in zn:
            best_j, best_d = -1, math.inf
            for j, q in enumerate(zd):
                d = abs(r - q)
                if d < best_d:
                    best_j, best_d = j, d
            if best_j >= 0 and best_d < CANCEL_RTOL * (1.0 + abs(zd[best_j])):
                zd.pop(best_j)
            else:
                keep_n.append(r)
        if len(keep_n) == len(zn):
            return self
        try:
            num = Polynomial.from_roots(keep_n, float(self.num.coef[-1]))
            den = Polynomial.from_roots(zd, float(self.den.coef[-1]))
        except ValueError:
            # a lone member of a conjugate pair matched: leave untouched
            return self
        return RationalTF(num, den)

    def __mul__(self, other):
        if isinstance(other, RationalTF):
            return connect("series", self, other)
        return RationalTF(self.num * float(other), self.den)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"RationalTF(num={self.num.coef.tolist()}, den={self.den.coef.tolist()})"


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Real state-space model (A, B, C, D) with consistent dimensions."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}")
        for m in (A, B, C, D):
            m.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Strictly increasing grid of positive angular frequencies [rad/s]."""

    omegas: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.omegas, dtype=float).ravel()
        if w.size == 0 or w[0] <= 0.0 or not np.isfinite(w[-1]):
            raise ValueError("grid must be positive and finite")
        if np.any(np.diff(w) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "omegas", w)

    def __len__(self) -> int:
        return len(self.omegas)


def default_grid(n_points: int = 2000, lo: float = 1e1, hi: float = 1e9) -> FrequencyGrid:
    """Default evaluation grid: 2000 log-spaced points over [1e1, 1e9] rad/s.

    The span covers everything from the power-stage resonance (~1e4 rad/s)
    up to PWM sidebands several multiples above the switching frequency.
    """
    return FrequencyGrid(np.logspace(math.log10(lo), math.log10(hi), n_points))


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=complex).ravel()
        if len(v) != len(self.grid):
            raise ValueError("response length must match the grid")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


# ---------------------------------------------------------------------------
# operations


def evaluate(tf: RationalTF, s: complex) -> complex:
    """Evaluate num(s)/den(s); raises PoleHit numerically on a pole."""
    dv = complex(tf.den(s))
    mags = np.abs(tf.den.coef) * abs(s) ** np.arange(len(tf.den.coef))
    scale = float(np.sum(mags))
    if abs(dv) <= 1e-13 * max(scale, np.finfo(float).tiny):
        raise PoleHit(f"denominator vanishes at s = {s}")
    return complex(tf.num(s)) / dv


def eval_many(tf: RationalTF, s: np.ndarray) -> np.ndarray:
    """Vectorized evaluation with no pole check (grid assumed off-pole)."""
    return np.asarray(tf.num(s)) / np.asarray(tf.den(s))


def freq_response(tf: RationalTF, grid: FrequencyGrid) -> FrequencyResponse:
    return FrequencyResponse(grid, eval_many(tf, 1j * grid.omegas))


def poles_zeros(tf: RationalTF) -> tuple[np.ndarray, np.ndarray]:
    """(poles, zeros) of the cancelled transfer function, sorted by (Re, Im)."""
    if tf.den.is_zero:
        raise DegenerateDenominator("denominator is identically zero")
    red = tf.simplified()
    return red.den.roots(), red.num.roots()


def connect(op: str, a: RationalTF, b: RationalTF) -> RationalTF:
    """Interconnect two blocks: series a*b, parallel a+b, feedback a/(1+ab).

    Feedback uses the negative-feedback convention with b in the return
    path. Results pass through the cancellation policy.
    """
    if op == "series":
        num, den = a.num * b.num, a.den * b.den
    elif op == "parallel":
        num = a.num * b.den + b.num * a.den
        den = a.den * b.den
    elif op == "feedback":
        num = a.num * b.den
        den = a.den * b.den + a.num * b.num
        if den.is_zero:
            raise AlgebraicLoop("1 + a*b is identically zero")
    else:
        raise ValueError(f"unknown interconnection {op!r}")
    return RationalTF(num, den).simplified()


class HinfResult(NamedTuple):
    value: float
    omega_peak: float
    finite: bool


def _golden_max(f, xa: float, xb: float, n_iter: int = 80) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = xb - invphi * (xb - xa)
    x2 = xa + invphi * (xb - xa)
    f1, f2 = f(x1), f(x2)
    for _ in range(n_iter):
        if xb - xa < 1e-9:
            break
        if f1 < f2:
            xa, x1, f1 = x1, x2, f2
            x2 = xa + invphi * (xb - xa)
            f2 = f(x2)
        else:
            xb, x2, f2 = x2, x1, f1
            x1 = xb - invphi * (xb - xa)
            f1 = f(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def hinf_norm(tf: RationalTF, grid: FrequencyGrid | None = None) -> HinfResult:
    """Peak magnitude of the frequency response (grid + local refinement).

    Unstable systems (any pole with Re >= 0) and improper systems have an
    unbounded norm: the result is +inf with finite=False instead of an
    exception. Grid search is refined by golden-section around the grid
    maximizer; the DC and high-frequency limits enter as extra candidates.
    """
    if grid is None:
        grid = default_grid()
    red = tf.simplified()
    if red.num.is_zero:
        return HinfResult(0.0, float(grid.omegas[0]), True)
    poles = red.den.roots()
    if any(p.real > -1e-9 * max(1.0, abs(p)) for p in poles):
        return HinfResult(math.inf, math.nan, False)
    if red.num.degree > red.den.degree:
        return HinfResult(math.inf, math.inf, False)

    w = grid.omegas
    mag = np.abs(eval_many(red, 1j * w))
    i = int(np.argmax(mag))
    best, w_best = float(mag[i]), float(w[i])
    lo, hi = w[max(i - 1, 0)], w[min(i + 1, len(w) - 1)]
    if hi > lo:
        x, fx = _golden_max(
            lambda t: abs(complex(eval_many(red, np.array([1j * 10.0**t]))[0])),
            math.log10(lo),
            math.log10(hi),
        )
        if fx > best:
            best, w_best = float(fx), 10.0**x
    dc = abs(complex(red.num(0.0)) / complex(red.den(0.0)))
    if dc > best:
        best, w_best = float(dc), 0.0
    if red.num.degree == red.den.degree:
        hf = abs(red.num.coef[-1] / red.den.coef[-1])
        if hf > best:
            best, w_best = float(hf), math.inf
    return HinfResult(best, w_best, True)


def tf_to_ss(tf: RationalTF) -> StateSpace:
    """Controllable-canonical realization of a proper transfer function."""
    den = tf.den.coef
    num = tf.num.coef
    n = len(den) - 1
    if len(num) - 1 > n:
        raise ImproperTF(f"deg(num)={len(num) - 1} > deg(den)={n}")
    a = den / den[-1]
    b = np.zeros(n + 1)
    b[: len(num)] = num / den[-1]
    d = b[n]
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d]])
    r = b[:n] - d * a[:n]
    A = np.zeros((n, n))
    if n > 1:
        A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    return StateSpace(A, B, r.reshape(1, n), [[d]])


def _charpoly(A: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial (ascending) from the eigenvalues."""
    lam = np.linalg.eigvals(A)
    c = npoly.polyfromroots(lam)
    return c.real


def ss_to_tf(
    ss: StateSpace, in_index: int = 0, out_index: int = 0, simplify: bool = True
) -> RationalTF:
    """SISO transfer function of one (input, output) pair.

    Uses the determinant identity det(sI - A + bc) = det(sI - A)(1 + c(sI-A)^-1 b)
    with eigenvalue-based characteristic polynomials, then applies the
    cancellation policy (skip with simplify=False to keep a denominator
    shared across channels).
    """
    A = ss.A
    b = ss.B[:, [in_index]]
    c = ss.C[[out_index], :]
    d = float(ss.D[out_index, in_index])
    n = ss.n_states
    if n == 0:
        return RationalTF([d], [1.0])
    den = _charpoly(A)
    v = _charpoly(A - b @ c)
    num = npoly.polyadd(npoly.polysub(v, den), d * den)
    out = RationalTF(Polynomial(num), Polynomial(den))
    return out.simplified() if simplify else out


def ss_frequency_response(
    ss: StateSpace, omegas: np.ndarray, in_index: int = 0, out_index: int = 0
) -> np.ndarray:
    """C (jw I - A)^-1 B + D for one channel, batched over the grid.

    A is balanced first (radix-2 diagonal similarity, exact in floating
    point), and the batched solve gets one iterative-refinement step with
    the residual accumulated in extended precision. Channels with a
    structural transmission zero cancel many digits between C x and D, so
    the extra forward accuracy is what keeps low-frequency evaluations
    meaningful.
    """
    from scipy.linalg import matrix_balance

    w = np.asarray(omegas, dtype=float).ravel()
    n = ss.n_states
    d = complex(ss.D[out_index, in_index])
    if n == 0:
        return np.full(len(w), d, dtype=complex)
    Ab, T = matrix_balance(ss.A)
    b = np.linalg.solve(T, ss.B[:, [in_index]])
    c = ss.C[[out_index], :] @ T
    M = 1j * w[:, None, None] * np.eye(n) - Ab[None, :, :]
    rhs = np.broadcast_to(b, (len(w), n, 1))
    x = np.linalg.solve(M, rhs)
    resid = rhs.astype(np.clongdouble) - np.einsum(
        "kij,kjl->kil", M.astype(np.clongdouble), x.astype(np.clongdouble)
    )
    dx = np.linalg.solve(M, resid.astype(complex))
    y = np.einsum("j,kjl->kl", c[0].astype(np.clongdouble), x.astype(np.clongdouble) + dx)
    return (y[:, 0] + np.clongdouble(d)).astype(complex)


def step_response(
    ss: StateSpace, t_end: float, dt: float, in_index: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Unit-step response from zero initial state, sampled every dt.

    The step is propagated with the exact zero-order-hold discretization of
    (A, B) over dt (matrix exponential of the augmented block), so sample
    values carry no integration error.
    """
    if dt <= 0.0 or t_end < dt:
        raise ValueError("need dt > 0 and t_end >= dt")
    n = ss.n_states
    steps = int(round(t_end / dt))
    t = np.arange(steps + 1) * dt
    d_col = ss.D[:, in_index]
    if n == 0:
        return t, np.tile(d_col, (steps + 1, 1))
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = ss.A * dt
    M[:n, n] = ss.B[:, in_index] * dt
    E = expm(M)
    Ad, bd = E[:n, :n], E[:n, n]
    x = np.zeros(n)
    y = np.empty((steps + 1, ss.n_outputs))
    for k in range(steps + 1):
        y[k] = ss.C @ x + d_col
        x = Ad @ x + bd
    return t, y
