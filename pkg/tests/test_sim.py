import math

import numpy as np
import pytest
from scipy.signal import butter, filtfilt

from buckdr.buck import UncertaintyBox, build_plant, default_params
from buckdr.design import StructuredController
from buckdr.sim import (
    HypothesisViolated,
    LoadProfile,
    Metrics,
    NumericalBlowup,
    SimConfig,
    SimTrace,
    build_scheme,
    metrics,
    monte_carlo,
    pwm_spectrum_check,
    simulate,
)

STEP_TIME = 2.5e-3
P_H = 1e6


@pytest.fixture(scope="module")
def bench(nominal):
    # paper-style operating point: 1 A static load from 5 ohm at 20 V
    return default_params(V_in=20.0, R_L=5.0)


@pytest.fixture(scope="module")
def bench_plant(bench):
    return build_plant(bench)


@pytest.fixture(scope="module")
def load8():
    return LoadProfile(step_amplitude=8.0, step_slope=1e6, step_time=STEP_TIME)


@pytest.fixture(scope="module")
def cfg_avg():
    return SimConfig(t_end=4e-3, mode="averaged", dt=4e-8)


@pytest.fixture(scope="module")
def cfg_sw():
    return SimConfig(t_end=4e-3, mode="switched", steps_per_period=200)


def run(bench, bench_plant, tuned, kind, cfg, load, p_H=P_H):
    scheme = build_scheme(kind, bench_plant, bench.k_FF, p_H)
    return simulate(bench, tuned, scheme, cfg, load)


class TestConfigValidation:
    def test_mode_checked(self):
        with pytest.raises(ValueError):
            SimConfig(t_end=1e-3, mode="spice")

    def test_steps_per_period_floor(self):
        with pytest.raises(ValueError):
            SimConfig(t_end=1e-3, mode="switched", steps_per_period=20)

    def test_load_validation(self):
        with pytest.raises(ValueError):
            LoadProfile(step_amplitude=1.0, step_slope=0.0, step_time=1e-3)

    def test_window_past_step(self, bench, bench_plant, tuned):
        cfg = SimConfig(t_end=STEP_TIME + 1e-6, mode="averaged")
        with pytest.raises(ValueError):
            run(bench, bench_plant, tuned, "none", cfg, LoadProfile(1.0, 1e6, STEP_TIME))


class TestAveragedMode:
    def test_zero_steady_state_error(self, bench, bench_plant, tuned):
        cfg = SimConfig(t_end=5e-3, mode="averaged", dt=4e-8)
        tr = run(bench, bench_plant, tuned, "none", cfg,
                 LoadProfile(step_amplitude=0.0, step_slope=1e6, step_time=STEP_TIME))
        assert abs(tr.v_o[-1] - bench.V_o_target) < 1e-6

    def test_disturbance_rejected_at_dc_with_lec(self, bench, bench_plant, tuned, load8):
        cfg = SimConfig(t_end=5e-3, mode="averaged", dt=4e-8)
        tr = run(bench, bench_plant, tuned, "lec", cfg, load8)
        assert abs(tr.v_o[-1] - bench.V_o_target) < 1e-3

    def test_dc_rejection_independent_of_outer_gain(self, bench, bench_plant, tuned, load8):
        # the high-pass factor on the disturbance path zeroes the DC error
        # on its own; halving the outer gain must not change that
        cfg = SimConfig(t_end=5e-3, mode="averaged", dt=4e-8)
        half = StructuredController(0.5 * tuned.G, tuned.omega_z, tuned.p1, tuned.p2)
        scheme = build_scheme("lec", bench_plant, bench.k_FF, P_H)
        tr = simulate(bench, half, scheme, cfg, load8)
        assert abs(tr.v_o[-1] - bench.V_o_target) < 1e-3

    def test_duty_recorded_as_continuous(self, bench, bench_plant, tuned, cfg_avg, load8):
        tr = run(bench, bench_plant, tuned, "none", cfg_avg, load8)
        assert np.all((tr.d >= 0.0) & (tr.d <= 1.0))


class TestSwitchedMode:
    def test_steady_duty_and_mean_output(self, bench, bench_plant, tuned, cfg_sw):
        tr = run(bench, bench_plant, tuned, "none", cfg_sw,
                 LoadProfile(step_amplitude=0.0, step_slope=1e6, step_time=STEP_TIME))
        sel = tr.t >= 3.8e-3
        d_c = bench.V_o_target / bench.V_in
        assert tr.d[sel].mean() == pytest.approx(d_c, rel=0.02)
        ripple = tr.v_o[sel].max() - tr.v_o[sel].min()
        assert abs(tr.v_o[sel].mean() - bench.V_o_target) < ripple

    def test_comparator_consistency(self, bench, bench_plant, tuned, cfg_sw, load8):
        tr = run(bench, bench_plant, tuned, "none", cfg_sw, load8)
        expected = (tr.v_c_tot >= tr.v_saw).astype(float)
        assert np.array_equal(tr.d, expected)

    def test_matches_averaged_after_lowpass(self, bench, bench_plant, tuned, load8):
        h = 1.0 / bench.f_sw / 200
        tr_sw = run(bench, bench_plant, tuned, "none",
                    SimConfig(t_end=4e-3, mode="switched", steps_per_period=200), load8)
        tr_av = run(bench, bench_plant, tuned, "none",
                    SimConfig(t_end=4e-3, mode="averaged", dt=h), load8)
        fc = bench.omega_sw / 10 / (2 * math.pi)
        b, a = butter(2, fc / (0.5 / h))
        filtered = filtfilt(b, a, tr_sw.v_o)
        skip = np.searchsorted(tr_sw.t, 2e-4)  # zero-phase filter warmup
        diff = np.max(np.abs(filtered[skip:] - tr_av.v_o[skip:]))
        assert diff < 0.01 * bench.V_o_target

    def test_energy_consistency(self, bench, bench_plant, tuned, cfg_sw, load8):
        tr = run(bench, bench_plant, tuned, "none", cfg_sw, load8)
        sel = tr.t > 3.8e-3
        spp = 200
        i_l = tr.i_L[sel]
        n = len(i_l) // spp * spp
        per_period = i_l[:n].reshape(-1, spp).mean(axis=1)
        expected = bench.V_o_target / bench.R_L + 8.0
        assert per_period.mean() == pytest.approx(expected, rel=0.02)

    def test_grid_refinement_convergence(self, bench, bench_plant, tuned, load8):
        vals = []
        for spp in (200, 400):
            cfg = SimConfig(t_end=4e-3, mode="switched", steps_per_period=spp)
            tr = run(bench, bench_plant, tuned, "none", cfg, load8)
            vals.append(metrics(tr, bench.V_o_target, bench.V_pk, STEP_TIME).undershoot_pct)
        assert abs(vals[0] - vals[1]) / vals[1] < 0.02


class TestMetrics:
    def _trace(self, v_o, v_c=None, t=None):
        n = len(v_o)
        t = np.linspace(0, 1e-3, n) if t is None else t
        z = np.zeros(n)
        v_c = z if v_c is None else v_c
        return SimTrace(t=t, v_o=np.asarray(v_o, dtype=float), v_c_tot=v_c, v_inj=z,
                        v_saw=z, v_sw=z, i_L=z, i_out_hat=z, i_out_true=z, d=z)

    def test_constant_trace_all_zero(self):
        m = metrics(self._trace(np.full(100, 5.0)), 5.0, 0.667)
        assert m == Metrics(0.0, 0.0, 0.0, 0.0, 0.0)

    def test_dip_percentages(self):
        v = np.full(1000, 5.0)
        v[500] = 4.93
        assert metrics(self._trace(v), 5.0, 0.667).undershoot_pct == pytest.approx(1.4)
        v[500] = 4.982
        assert metrics(self._trace(v), 5.0, 0.667).undershoot_pct == pytest.approx(0.36)

    def test_saturation_counting(self):
        vc = np.zeros(100)
        vc[:10] = 0.7  # above a 0.667 V ramp amplitude
        vc[10:15] = -0.01
        m = metrics(self._trace(np.full(100, 5.0), v_c=vc), 5.0, 0.667)
        assert m.saturation_fraction == pytest.approx(0.15)

    def test_settling_time(self):
        v = np.full(1000, 5.0)
        v[100:300] = 4.7  # outside the 2 percent band
        t = np.linspace(0, 1e-3, 1000)
        m = metrics(self._trace(v, t=t), 5.0, 0.667)
        assert m.settling_time == pytest.approx(t[299], rel=1e-9)


class TestSchemes:
    def test_all_kinds_run(self, bench, bench_plant, tuned, cfg_avg, load8):
        for kind in ("none", "lec", "dob", "uio"):
            tr = run(bench, bench_plant, tuned, kind, cfg_avg, load8)
            assert np.all(np.isfinite(tr.v_o))

    def test_undershoot_orderings(self, bench, bench_plant, tuned, cfg_avg, load8):
        u = {}
        for kind in ("none", "lec", "dob", "uio"):
            tr = run(bench, bench_plant, tuned, kind, cfg_avg, load8)
            u[kind] = metrics(tr, bench.V_o_target, bench.V_pk, STEP_TIME).undershoot_pct
        assert u["lec"] < u["none"]
        assert u["dob"] < u["none"]
        assert u["uio"] < u["none"]
        # among the three schemes the observer is the weakest performer
        assert u["uio"] > u["lec"] and u["uio"] > u["dob"]

    def test_determinism_bit_identical(self, bench, bench_plant, tuned, cfg_avg, load8):
        a = run(bench, bench_plant, tuned, "lec", cfg_avg, load8)
        b = run(bench, bench_plant, tuned, "lec", cfg_avg, load8)
        for name in SimTrace.COLUMNS:
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_blowup_guard(self, bench, bench_plant, tuned, load8):
        # a compensator pole far beyond the step-size stability limit makes
        # RK4 diverge; the guard must catch it and report the time
        cfg = SimConfig(t_end=4e-3, mode="averaged", dt=4e-8)
        with pytest.raises(NumericalBlowup) as exc:
            run(bench, bench_plant, tuned, "lec", cfg, load8, p_H=1e9)
        assert 0.0 < exc.value.t < 4e-3


class TestMonteCarlo:
    def test_single_run_zero_width_degenerates(self, bench, bench_plant, tuned, load8):
        box = UncertaintyBox(
            C=(bench.C, bench.C), L=(bench.L, bench.L), R_C=(bench.R_C, bench.R_C),
            R_i=(bench.R_i, bench.R_i), R_on=(bench.R_on, bench.R_on), R_L=(5.0, 5.0),
        )
        cfg = SimConfig(t_end=4e-3, mode="averaged", dt=4e-8)
        res = monte_carlo(box, bench, tuned, ["lec"], 1, seed=3, cfg=cfg, load=load8,
                          fix_R_L=5.0, fix_V_in=20.0)
        env = res["lec"].envelopes["v_o"]
        assert np.array_equal(env["min"], env["max"])
        assert np.array_equal(env["min"], env["mean"])

    def test_study_orderings(self, box, bench, tuned, load8):
        cfg = SimConfig(t_end=4e-3, mode="averaged", dt=4e-8)
        res = monte_carlo(box, bench, tuned, ["none", "lec", "dob"], 8, seed=7,
                          cfg=cfg, load=load8, fix_R_L=5.0, fix_V_in=20.0)
        assert res["lec"].metrics["undershoot_pct"]["mean"] < res["none"].metrics["undershoot_pct"]["mean"]
        assert res["dob"].metrics["undershoot_pct"]["mean"] < res["none"].metrics["undershoot_pct"]["mean"]
        for kind in ("none", "lec", "dob"):
            assert not res[kind].failures

    def test_envelope_ordering_invariant(self, box, bench, tuned, load8):
        cfg = SimConfig(t_end=4e-3, mode="averaged", dt=4e-8)
        res = monte_carlo(box, bench, tuned, ["lec"], 5, seed=9, cfg=cfg, load=load8,
                          fix_R_L=5.0, fix_V_in=20.0)
        env = res["lec"].envelopes["v_o"]
        assert np.all(env["min"] <= env["mean"] + 1e-15)
        assert np.all(env["mean"] <= env["max"] + 1e-15)

    def test_summary_determinism(self, box, bench, tuned, load8):
        cfg = SimConfig(t_end=4e-3, mode="averaged", dt=4e-8)
        kw = dict(cfg=cfg, load=load8, fix_R_L=5.0, fix_V_in=20.0)
        a = monte_carlo(box, bench, tuned, ["lec"], 3, seed=5, **kw)
        b = monte_carlo(box, bench, tuned, ["lec"], 3, seed=5, **kw)
        assert a["lec"].metrics == b["lec"].metrics
        assert np.array_equal(a["lec"].envelopes["v_o"]["mean"], b["lec"].envelopes["v_o"]["mean"])


class TestPwmSpectrum:
    V_PK = 20.0 / 30.0
    W_SW = 2 * math.pi * 5e5

    def test_unmodulated_square_wave(self):
        rep = pwm_spectrum_check((0.5 * self.V_PK, 0.0, self.W_SW / 20, 0.3),
                                 (self.V_PK, self.W_SW), n_periods=64)
        assert rep.dc_measured == pytest.approx(0.5, rel=1e-9)
        for ln in rep.lines:
            if ln.n == 0:
                classic = abs(1 - np.exp(-2j * math.pi * ln.m * 0.5)) / (ln.m * math.pi)
                assert ln.measured == pytest.approx(classic, abs=1e-9)
            else:
                assert ln.measured < 1e-9

    def test_fundamental_bin(self):
        rep = pwm_spectrum_check(
            (0.5 * self.V_PK, 0.05 * self.V_PK, self.W_SW / 20, 0.0),
            (self.V_PK, self.W_SW),
        )
        assert rep.fundamental_measured == pytest.approx(0.05, rel=0.02)
        assert rep.fundamental_expected == pytest.approx(0.05)

    def test_sidebands_bounded_and_match_oracle(self):
        rep = pwm_spectrum_check(
            (0.45 * self.V_PK, 0.1 * self.V_PK, (7 / 64) * self.W_SW, 1.3),
            (self.V_PK, self.W_SW),
        )
        assert rep.dc_ok and rep.fundamental_ok and rep.bounds_ok and rep.oracle_ok

    def test_hypothesis_guards(self):
        with pytest.raises(HypothesisViolated):
            pwm_spectrum_check((0.9 * self.V_PK, 0.2 * self.V_PK, self.W_SW / 10, 0.0),
                               (self.V_PK, self.W_SW))
        with pytest.raises(HypothesisViolated):
            pwm_spectrum_check((0.5 * self.V_PK, 0.1 * self.V_PK, 2 * self.W_SW, 0.0),
                               (self.V_PK, self.W_SW))
