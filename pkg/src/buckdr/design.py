"""Voltage-mode controller design.

Covers the classical type-III compensation network and its component
mapping, the mixed-sensitivity weighting pair, the complementary-sensitivity
masks derived from the PWM spectral bounds, the gridded stacked-norm
objective, and the tuning of the final structured controller (integrator,
double real zero at the plant resonance, two high-frequency poles).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .buck import PlantMatrix, epsilon_schedule, pwm_bound
from .lti import FrequencyGrid, Polynomial, RationalTF, connect, default_grid, eval_many

# Closed-loop poles must lie strictly left of this line [rad/s]; the offset
# absorbs eigenvalue noise on systems whose scales span many decades.
STABILITY_MARGIN = -1.0


class Unrealizable(ValueError):
    """Requested parameter set forces a non-positive component value."""


class Infeasible(RuntimeError):
    """No gain in the search range satisfies the masks with a stable loop."""


def closed_loop_poles(loop: RationalTF) -> np.ndarray:
    """Poles of the unity-feedback closed loop: roots of den + num."""
    return Polynomial((loop.den + loop.num).coef).roots()


def loop_is_stable(loop: RationalTF) -> bool:
    poles = closed_loop_poles(loop)
    return bool(np.all(poles.real < STABILITY_MARGIN))


# ---------------------------------------------------------------------------
# type-III compensator


@dataclass(frozen=True)
class TypeIIIParams:
    """Integrator + two zeros + two poles: Gc0 (1+s/wz0)(1+s/wz1) / (s (1+s/wp0)(1+s/wp1))."""

    Gc0: float
    wz0: float
    wz1: float
    wp0: float
    wp1: float

    def __post_init__(self) -> None:
        for name in ("Gc0", "wz0", "wz1", "wp0", "wp1"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    def tf(self) -> RationalTF:
        num = self.Gc0 * Polynomial([1.0, 1.0 / self.wz0]) * Polynomial([1.0, 1.0 / self.wz1])
        den = (
            Polynomial([0.0, 1.0])
            * Polynomial([1.0, 1.0 / self.wp0])
            * Polynomial([1.0, 1.0 / self.wp1])
        )
        return RationalTF(num, den)


@dataclass(frozen=True)
class TypeIIIComponents:
    """RC network realizing a type-III compensator."""

    R1: float
    R2: float
    R3: float
    C1: float
    C2: float
    C3: float

    def __post_init__(self) -> None:
        for name in ("R1", "R2", "R3", "C1", "C2", "C3"):
            if getattr(self, name) <= 0.0:
                raise Unrealizable(f"{name} must be positive")


def type3_from_components(c: TypeIIIComponents) -> TypeIIIParams:
    """Network values -> transfer-function parameters."""
    return TypeIIIParams(
        Gc0=1.0 / (c.R1 * (c.C2 + c.C3)),
        wz0=1.0 / (c.R2 * c.C1),
        wz1=1.0 / (c.C2 * (c.R1 + c.R3)),
        wp0=1.0 / (c.R3 * c.C2),
        wp1=(c.C1 + c.C3) / (c.R2 * c.C1 * c.C3),
    )


def components_from_params(p: TypeIIIParams, R1_fixed: float) -> TypeIIIComponents:
    """Invert the parameter formulas with R1 as the free degree of freedom.

    Solvability needs wz1 < wp0 (positive C2) and wp1 > wz0 (positive C1);
    anything else has no positive-component realization.
    """
    if R1_fixed <= 0.0:
        raise Unrealizable("R1 must be positive")
    c2 = (1.0 / p.wz1 - 1.0 / p.wp0) / R1_fixed
    if c2 <= 0.0:
        raise Unrealizable("wz1 >= wp0 forces C2 <= 0")
    r3 = 1.0 / (p.wp0 * c2)
    c3 = 1.0 / (p.Gc0 * R1_fixed) - c2
    if c3 <= 0.0:
        raise Unrealizable("Gc0 too large for the chosen R1 (C3 <= 0)")
    ratio = p.wp1 / p.wz0 - 1.0
    if ratio <= 0.0:
        raise Unrealizable("wp1 <= wz0 forces C1 <= 0")
    c1 = c3 * ratio
    r2 = 1.0 / (p.wz0 * c1)
    return TypeIIIComponents(R1=R1_fixed, R2=r2, R3=r3, C1=c1, C2=c2, C3=c3)


# ---------------------------------------------------------------------------
# weighting functions and masks


@dataclass(frozen=True, eq=False)
class WeightPair:
    """Sensitivity weight W1 (one pole at s=0) and mask weight W2.

    W2 is improper by design; it is only ever evaluated pointwise on a
    frequency grid and never realized in state space.
    """

    W1: RationalTF
    W2: RationalTF
    Sp0: float
    Tp0: float
    zeta_s: float
    zeta_t: float
    omega_s: float
    omega_t: float


def build_weights(
    omega_sw: float,
    Sp0: float = 2.5,
    Tp0: float = 2.5,
    zeta_s: float = 0.3,
    zeta_t: float = 0.3,
) -> WeightPair:
    """W1 = (s^2 + 2 z ws s + ws^2) / (Sp0 s (s + 2 z ws)) with ws = 2 wsw;
    W2 = (s^2 + 2 z wt s + wt^2) / (Tp0 wt^2) with wt = wsw / 10."""
    if omega_sw <= 0.0:
        raise ValueError("omega_sw must be positive")
    ws = 2.0 * omega_sw
    wt = omega_sw / 10.0
    w1 = RationalTF(
        Polynomial([ws * ws, 2.0 * zeta_s * ws, 1.0]),
        Polynomial([0.0, Sp0 * 2.0 * zeta_s * ws, Sp0]),
    )
    w2 = RationalTF(
        Polynomial([wt * wt, 2.0 * zeta_t * wt, 1.0]),
        Polynomial([Tp0 * wt * wt]),
    )
    return WeightPair(w1, w2, Sp0, Tp0, zeta_s, zeta_t, ws, wt)


@dataclass(frozen=True)
class MaskEntry:
    m: int
    n: int
    omega: float
    bound: float


@dataclass(frozen=True)
class TMask:
    """Per-line upper bounds on |T| at the worst-case alias frequencies."""

    entries: tuple[MaskEntry, ...]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def t_mask(R_bar: float, V_pk: float, omega_sw: float, m_max: int = 5, n_max: int = 3) -> TMask:
    """|T(i (m - n/2) w_sw)| <= eps_{m,n} / D_{m,n} for each spectral line.

    Lines whose worst-case frequency falls below w_sw / 2 are omitted: the
    single-frequency reduction relies on |T| decreasing beyond w_sw / 2, and
    an integrator loop has |T(0)| = 1, so a DC-side bound would be vacuous
    or unsatisfiable.
    """
    if m_max < 1:
        raise ValueError("need m_max >= 1")
    entries = []
    for m in range(1, m_max + 1):
        for n in range(0, n_max + 1):
            factor = m - 0.5 * n
            if factor < 0.5:
                continue
            entries.append(
                MaskEntry(
                    m=m,
                    n=n,
                    omega=factor * omega_sw,
                    bound=epsilon_schedule(m, n) / pwm_bound(m, n, R_bar, V_pk),
                )
            )
    return TMask(tuple(entries))


# ---------------------------------------------------------------------------
# mixed-sensitivity objective


class MixedSensitivityValue(NamedTuple):
    value: float
    stable: bool


def mixed_sensitivity_objective(
    K: RationalTF,
    plant: RationalTF,
    Gf: float,
    w: WeightPair,
    grid: FrequencyGrid | None = None,
) -> MixedSensitivityValue:
    """max over the grid of sqrt(|W1 S|^2 + |W2 T|^2), S = 1/(1 + K plant Gf).

    An internally unstable loop reports +inf with stable=False. The DC and
    high-frequency limits are evaluated through the cancelled rational
    forms so that an integrator-free loop correctly blows up at DC.
    """
    if grid is None:
        grid = default_grid()
    loop = connect("series", K, plant) * Gf
    if not loop_is_stable(loop):
        return MixedSensitivityValue(math.inf, False)
    s_tf = RationalTF(loop.den, loop.den + loop.num).simplified()
    t_tf = RationalTF(loop.num, loop.den + loop.num).simplified()

    s = 1j * grid.omegas
    lv = eval_many(loop, s)
    sv = 1.0 / (1.0 + lv)
    tv = 1.0 - sv
    stacked = np.sqrt(
        np.abs(eval_many(w.W1, s) * sv) ** 2 + np.abs(eval_many(w.W2, s) * tv) ** 2
    )
    value = float(np.max(stacked))

    # DC candidate through the cancelled products
    w1s = connect("series", w.W1, s_tf)
    if abs(complex(w1s.den(0.0))) == 0.0:
        return MixedSensitivityValue(math.inf, True)
    dc = math.hypot(
        abs(complex(w1s.num(0.0)) / complex(w1s.den(0.0))),
        abs(complex(w.W2.num(0.0)) / complex(w.W2.den(0.0)))
        * abs(complex(t_tf.num(0.0)) / complex(t_tf.den(0.0))),
    )
    value = max(value, dc)

    # high-frequency candidate of the improper W2 against the T roll-off
    w2t = connect("series", w.W2, t_tf)
    if w2t.num.degree == w2t.den.degree:
        value = max(value, abs(w2t.num.coef[-1] / w2t.den.coef[-1]))
    elif w2t.num.degree > w2t.den.degree:
        return MixedSensitivityValue(math.inf, True)
    return MixedSensitivityValue(value, True)


# ---------------------------------------------------------------------------
# structured controller


@dataclass(frozen=True)
class StructuredController:
    """K(s) = G (s + omega_z)^2 / (s (s + p1) (s + p2))."""

    G: float
    omega_z: float
    p1: float
    p2: float
    gamma: float = math.nan

    def __post_init__(self) -> None:
        if self.p1 <= 0.0 or self.p2 <= 0.0:
            raise ValueError("poles must be strictly positive frequencies")

    def tf(self) -> RationalTF:
        num = self.G * Polynomial([self.omega_z, 1.0]) * Polynomial([self.omega_z, 1.0])
        den = Polynomial([0.0, 1.0]) * Polynomial([self.p1, 1.0]) * Polynomial([self.p2, 1.0])
        return RationalTF(num, den)

    def as_type3(self) -> TypeIIIParams:
        """Same structure as the classical network, written in its parameters."""
        gc0 = self.G * self.omega_z**2 / (self.p1 * self.p2)
        return TypeIIIParams(Gc0=gc0, wz0=self.omega_z, wz1=self.omega_z, wp0=self.p1, wp1=self.p2)


def _mask_satisfied(loop: RationalTF, mask: TMask) -> bool:
    for entry in mask:
        lv = complex(eval_many(loop, np.array([1j * entry.omega]))[0])
        if abs(lv / (1.0 + lv)) > entry.bound:
            return False
    return True


def tune_structured(
    plant: PlantMatrix,
    k_FF: float,
    w: WeightPair,
    mask: TMask,
    Gf: float = 1.0,
    p1: float | None = None,
    p2: float | None = None,
    grid: FrequencyGrid | None = None,
    points_per_decade: int = 10,
    gain_ratio_tol: float = 0.01,
) -> StructuredController:
    """Fix the structure, maximize the gain subject to the masks.

    Zeros sit (doubled) at the plant resonance; the poles default to the
    switching frequency and half of it. The gain is pushed to the largest
    value keeping every mask bound satisfied and the nominal loop stable:
    a log-spaced line search finds the feasible/infeasible bracket, then
    bisection refines the gain to 1 percent. The fast load response rewards
    bandwidth while the masks cap it, so feasibility-driven maximization is
    the right objective here.
    """
    omega_sw = plant.params.omega_sw
    p1 = omega_sw if p1 is None else p1
    p2 = 0.5 * omega_sw if p2 is None else p2
    plant_tf = plant.P11 * k_FF

    def candidate(G: float) -> RationalTF:
        return StructuredController(G, plant.omega_PS, p1, p2).tf()

    def feasible(G: float) -> bool:
        loop = connect("series", candidate(G), plant_tf) * Gf
        return loop_is_stable(loop) and _mask_satisfied(loop, mask)

    baseline = omega_sw
    lo_exp, hi_exp = math.log10(1e-3 * baseline), math.log10(1e6 * baseline)
    n_pts = int((hi_exp - lo_exp) * points_per_decade) + 1
    gains = np.logspace(lo_exp, hi_exp, n_pts)
    flags = np.array([feasible(g) for g in gains])
    if not flags.any():
        raise Infeasible("no gain in the search range satisfies the masks")

    i_best = int(np.max(np.flatnonzero(flags)))
    g_ok = float(gains[i_best])
    if i_best + 1 < len(gains):
        g_bad = float(gains[i_best + 1])
        while g_bad / g_ok > 1.0 + gain_ratio_tol:
            mid = math.sqrt(g_ok * g_bad)
            if feasible(mid):
                g_ok = mid
            else:
                g_bad = mid

    gamma = mixed_sensitivity_objective(candidate(g_ok), plant_tf, Gf, w, grid).value
    return StructuredController(G=g_ok, omega_z=plant.omega_PS, p1=p1, p2=p2, gamma=gamma)


def traditional_controller(
    plant: PlantMatrix,
    k_FF: float,
    Gf: float = 1.0,
    crossover: float | None = None,
) -> TypeIIIParams:
    """Classical placement: zeros at the resonance, poles at w_sw/2 and
    min(w_ESR, w_sw/2), gain normalized for unit loop magnitude at the
    requested crossover (default w_sw / 10)."""
    omega_sw = plant.params.omega_sw
    wc = omega_sw / 10.0 if crossover is None else crossover
    wp0 = omega_sw / 2.0
    wp1 = min(plant.omega_ESR, omega_sw / 2.0)
    probe = TypeIIIParams(Gc0=1.0, wz0=plant.omega_PS, wz1=plant.omega_PS, wp0=wp0, wp1=wp1)
    loop_mag = abs(
        complex(eval_many(connect("series", probe.tf(), plant.P11 * (k_FF * Gf)), np.array([1j * wc]))[0])
    )
    return TypeIIIParams(
        Gc0=1.0 / loop_mag, wz0=plant.omega_PS, wz1=plant.omega_PS, wp0=wp0, wp1=wp1
    )
