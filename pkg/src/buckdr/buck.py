"""Buck converter plant model.

Builds the 2x2 power-stage transfer matrix from component values, the
parameter uncertainty box, the CCM load-resistance interval, the
feedforward relation V_pk = V_in / k_FF, and the PWM spectral bounds used
by the complementary-sensitivity masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .lti import Polynomial, RationalTF, StateSpace


class InvalidRatio(ValueError):
    """Target output voltage must be strictly below the maximum input."""


@dataclass(frozen=True)
class BuckParams:
    """Component values of one converter instance (SI units).

    R_on lumps the two MOSFET on-resistances (high and low side are taken
    equal); the plant sees them only through R_i' = R_i + R_on.
    """

    C: float
    L: float
    R_C: float
    R_i: float
    R_on: float
    R_L: float
    f_sw: float
    k_FF: float
    V_in: float
    V_in_max: float
    V_o_target: float
    I_max: float

    def __post_init__(self) -> None:
        for name in ("C", "L", "R_C", "R_i", "R_on", "R_L", "f_sw", "k_FF", "I_max"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.V_o_target < self.V_in <= self.V_in_max:
            raise InvalidRatio("need V_o_target < V_in <= V_in_max")
        lo = self.V_o_target / self.I_max
        hi = 2.0 * self.L * self.f_sw / (1.0 - self.V_o_target / self.V_in_max)
        tol = 1e-9
        if not (lo * (1 - tol) <= self.R_L <= hi * (1 + tol)):
            raise ValueError(f"R_L={self.R_L} leaves the CCM interval [{lo}, {hi}]")

    @property
    def R_i_prime(self) -> float:
        return self.R_i + self.R_on

    @property
    def omega_sw(self) -> float:
        return 2.0 * math.pi * self.f_sw

    @property
    def V_pk(self) -> float:
        """Sawtooth amplitude set by the input-voltage feedforward."""
        return self.V_in / self.k_FF

    def replace(self, **kw) -> "BuckParams":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kw)
        return BuckParams(**vals)


@dataclass(frozen=True)
class UncertaintyBox:
    """Closed [lo, hi] interval per uncertain component value."""

    C: tuple[float, float]
    L: tuple[float, float]
    R_C: tuple[float, float]
    R_i: tuple[float, float]
    R_on: tuple[float, float]
    R_L: tuple[float, float]

    #: sampling order is fixed so that seeded draws are reproducible
    FIELDS = ("C", "L", "R_C", "R_i", "R_on", "R_L")

    def __post_init__(self) -> None:
        for name in self.FIELDS:
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi):
                raise ValueError(f"invalid interval for {name}: [{lo}, {hi}]")

    def interval(self, name: str) -> tuple[float, float]:
        return getattr(self, name)

    def contains(self, p: BuckParams, rtol: float = 1e-12) -> bool:
        return all(
            getattr(self, n)[0] * (1 - rtol) <= getattr(p, n) <= getattr(self, n)[1] * (1 + rtol)
            for n in self.FIELDS
        )

    def replace(self, **kw) -> "UncertaintyBox":
        vals = {n: getattr(self, n) for n in self.FIELDS}
        vals.update(kw)
        return UncertaintyBox(**vals)


class CcmInterval(NamedTuple):
    lo: float
    hi: float
    nominal: float


def ccm_load_interval(p: BuckParams, box: UncertaintyBox | None = None) -> CcmInterval:
    """Load-resistance interval that keeps the converter in CCM.

    lo = V_o_target / I_max, hi = 2 L_min f_sw / (1 - V_o_target / V_in_max),
    with L_min the lower endpoint of the inductance interval. The nominal
    load is the interval midpoint.
    """
    if p.V_o_target >= p.V_in_max:
        raise InvalidRatio("V_o_target must be below V_in_max")
    L_min = box.L[0] if box is not None else p.L
    if L_min <= 0.0:
        raise ValueError("L_min must be positive")
    lo = p.V_o_target / p.I_max
    hi = 2.0 * L_min * p.f_sw / (1.0 - p.V_o_target / p.V_in_max)
    return CcmInterval(lo, hi, 0.5 * (lo + hi))


# Reference design used throughout the test bench: 5 V output from a 20 V
# rail at 500 kHz, 8.2 uH / 249 uF output filter.
_REFERENCE = dict(
    C=0.249e-3,
    L=8.2e-6,
    R_C=0.115e-3,
    R_i=7e-3,
    R_on=6.5e-3,
    f_sw=500e3,
    k_FF=30.0,
    V_in_max=20.0,
    V_o_target=5.0,
    I_max=10.0,
)

#: symmetric relative uncertainty of each component of the reference design
_REFERENCE_UNC = dict(C=0.10, L=0.20, R_C=0.15, R_i=0.15, R_on=0.15)


def default_params(V_in: float = 20.0, R_L: float | None = None) -> BuckParams:
    """Reference converter; R_L defaults to the CCM-interval midpoint."""
    if R_L is None:
        lo = _REFERENCE["V_o_target"] / _REFERENCE["I_max"]
        L_min = (1.0 - _REFERENCE_UNC["L"]) * _REFERENCE["L"]
        hi = 2.0 * L_min * _REFERENCE["f_sw"] / (1.0 - _REFERENCE["V_o_target"] / _REFERENCE["V_in_max"])
        R_L = 0.5 * (lo + hi)
    return BuckParams(V_in=V_in, R_L=R_L, **_REFERENCE)


def default_box(nominal: BuckParams | None = None) -> UncertaintyBox:
    """Uncertainty box of the reference design (R_L spans the CCM interval)."""
    p = nominal if nominal is not None else default_params()
    vals = {}
    for name, frac in _REFERENCE_UNC.items():
        c = getattr(p, name)
        vals[name] = ((1.0 - frac) * c, (1.0 + frac) * c)
    box_no_rl = dict(vals)
    L_min = vals["L"][0]
    lo = p.V_o_target / p.I_max
    hi = 2.0 * L_min * p.f_sw / (1.0 - p.V_o_target / p.V_in_max)
    box_no_rl["R_L"] = (lo, hi)
    return UncertaintyBox(**box_no_rl)


@dataclass(frozen=True, eq=False)
class PlantMatrix:
    """2x2 power-stage transfer matrix (v_SW, i_out) -> (v_o, i_L).

    All four entries share one denominator a0 s^2 + a1 s + a2; the derived
    quantities are the ESR zero frequency, the resonance frequency and its
    damping ratio.
    """

    P11: RationalTF
    P12: RationalTF
    P21: RationalTF
    P22: RationalTF
    omega_ESR: float
    omega_PS: float
    zeta_PS: float
    R_i_prime: float
    alpha: tuple[float, float, float]
    params: BuckParams


def build_plant(p: BuckParams) -> PlantMatrix:
    """Transfer matrix of the output filter with parasitics.

    P11 = R_L (1 + C R_C s) / D,
    P12 = -R_L (1 + C R_C s)(L s + R_i') / D,
    P21 = (C (R_L + R_C) s + 1) / D,  P22 = P11,
    D   = a0 s^2 + a1 s + a2.
    """
    Rp = p.R_i_prime
    a0 = p.C * p.L * (p.R_L + p.R_C)
    a1 = p.L + p.C * p.R_L * (p.R_C + Rp) + p.C * p.R_C * Rp
    a2 = p.R_L + Rp
    den = Polynomial([a2, a1, a0])
    num11 = Polynomial([p.R_L, p.R_L * p.C * p.R_C])
    # expanded form of -R_L (1 + C R_C s)(L s + R_i')
    num12 = Polynomial(
        [-p.R_L * Rp, -p.R_L * (p.L + p.C * p.R_C * Rp), -p.R_L * p.C * p.L * p.R_C]
    )
    num21 = Polynomial([1.0, p.C * (p.R_L + p.R_C)])
    p11 = RationalTF(num11, den)
    return PlantMatrix(
        P11=p11,
        P12=RationalTF(num12, den),
        P21=RationalTF(num21, den),
        P22=p11,
        omega_ESR=1.0 / (p.C * p.R_C),
        omega_PS=math.sqrt(a2 / a0),
        zeta_PS=a1 / (2.0 * math.sqrt(a0 * a2)),
        R_i_prime=Rp,
        alpha=(a0, a1, a2),
        params=p,
    )


def power_stage_ss(p: BuckParams) -> StateSpace:
    """Physical realization with states (i_L, v_C), inputs (i_out, v_SW),
    outputs (v_o, i_L).

    The capacitor branch is C in series with R_C, so v_o carries a direct
    feedthrough from the load-current disturbance.
    """
    Rp = p.R_i_prime
    rsum = p.R_L + p.R_C
    rpar = p.R_L * p.R_C / rsum
    A = np.array(
        [
            [-(Rp + rpar) / p.L, -p.R_L / (rsum * p.L)],
            [p.R_L / (rsum * p.C), -1.0 / (rsum * p.C)],
        ]
    )
    B = np.array(
        [
            [rpar / p.L, 1.0 / p.L],
            [-p.R_L / (rsum * p.C), 0.0],
        ]
    )
    C = np.array(
        [
            [rpar, p.R_L / rsum],
            [1.0, 0.0],
        ]
    )
    D = np.array([[-rpar, 0.0], [0.0, 0.0]])
    return StateSpace(A, B, C, D)


def pwm_bound(m: int, n: int, R_bar: float, V_pk: float) -> float:
    """Amplitude bound of the PWM spectral component at m w_sw +- n w_1.

    D_{m,0} = 2 / (m pi); for n >= 1,
    D_{m,n} = (m pi)^(n-1) / n! * (R_bar / V_pk)^n.
    """
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    if not (0.0 < R_bar < V_pk):
        raise ValueError("need 0 < R_bar < V_pk")
    if n == 0:
        return 2.0 / (m * math.pi)
    return (m * math.pi) ** (n - 1) / math.factorial(n) * (R_bar / V_pk) ** n


@dataclass(frozen=True)
class PwmBound:
    m: int
    n: int
    value: float
    R_bar: float
    V_pk: float

    @staticmethod
    def build(m: int, n: int, R_bar: float, V_pk: float) -> "PwmBound":
        return PwmBound(m, n, pwm_bound(m, n, R_bar, V_pk), R_bar, V_pk)


def epsilon_schedule(m: int, n: int) -> float:
    """Admissible relative command-ripple per spectral line, decaying in m, n.

    eps_{1,0} = 1e-2, eps_{2,0} = 1e-3, halving for each further m;
    eps_{m,1} = 1e-3 for every m, halving for each further n.
    """
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    if n == 0:
        if m == 1:
            return 1e-2
        return 1e-3 * 0.5 ** (m - 2)
    if n == 1:
        return 1e-3
    return 1e-3 * 0.5 ** (n - 1)


def sample_params(
    box: UncertaintyBox,
    seed,
    base: BuckParams,
    R_L: float | None = None,
    V_in: float | None = None,
) -> BuckParams:
    """One independent uniform draw per boxed parameter.

    Deterministic for a fixed seed (ints, sequences and Generators accepted).
    R_L is always drawn so the stream stays aligned, then overridden when a
    scenario pins the load; V_in is not boxed and comes from the scenario.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = {name: float(rng.uniform(*box.interval(name))) for name in UncertaintyBox.FIELDS}
    if R_L is not None:
        draws["R_L"] = R_L
    if V_in is not None:
        draws["V_in"] = V_in
    return base.replace(**draws)
