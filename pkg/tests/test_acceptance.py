"""Acceptance suite: one test per exit criterion, each printing a verdict
line. Run with `pytest tests/test_acceptance.py -v -s` to see the lines."""

import math
import time

import numpy as np
import pytest

from buckdr.buck import build_plant, default_params, sample_params
from buckdr.cli import export_json
from buckdr.lti import eval_many, ss_frequency_response
from buckdr.robust import (
    check_condition,
    lambda_envelope,
    n_lower_bound,
    sampled_stability_scan,
    theorem1_check,
)
from buckdr.schemes import build_lec, build_none, build_uio, g1, g2
from buckdr.sim import LoadProfile, SimConfig, metrics, monte_carlo, pwm_spectrum_check, simulate

PH_STUDY = 1e6
UIO_LAMBDAS = (-1e6, -1e6, -0.95e6)


def verdict(n, ok, detail):
    print(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def bench():
    return default_params(V_in=20.0, R_L=5.0)


@pytest.fixture(scope="module")
def load_step():
    return LoadProfile(step_amplitude=8.0, step_slope=1e6, step_time=2.5e-3)


@pytest.fixture(scope="module")
def mc_summary(box, bench, tuned, load_step):
    cfg = SimConfig(t_end=5e-3, mode="averaged", dt=4e-8)
    started = time.monotonic()
    res = monte_carlo(
        box, bench, tuned, ["none", "lec", "dob"], 50, seed=2024,
        cfg=cfg, load=load_step, p_H=PH_STUDY, uio_lambdas=UIO_LAMBDAS,
        fix_R_L=5.0, fix_V_in=20.0,
    )
    return res, time.monotonic() - started


def summary_json(res):
    payload = {
        kind: {name: s.metrics[name] for name in s.metrics} for kind, s in res.items()
    }
    return export_json(payload)


def test_01_delta_p_identity(nominal, box):
    started = time.monotonic()
    w = np.logspace(1, 9, 50)
    s = 1j * w
    worst = 0.0
    for seed in range(1000):
        p = sample_params(box, seed, nominal)
        plant = build_plant(p)
        p11 = eval_many(plant.P11, s)
        delta = p11 * p11 - eval_many(plant.P12, s) * eval_many(plant.P21, s)
        worst = max(worst, float(np.max(np.abs(delta - p11) / np.abs(p11))))
    elapsed = time.monotonic() - started
    verdict(
        1,
        worst <= 1e-9 and elapsed < 10.0,
        f"determinant identity worst rel err {worst:.3e} (<=1e-9), {elapsed:.1f} s (<10 s)",
    )


def test_02_g1_g2_closed_forms(nominal, box):
    w = np.logspace(1, 9, 50)
    s = 1j * w
    worst1 = worst2 = 0.0
    for seed in range(100):
        p = sample_params(box, seed, nominal)
        plant = build_plant(p)
        p11 = eval_many(plant.P11, s)
        r1 = eval_many(plant.P21, s) / p11
        d1 = eval_many(g1(plant), s)
        worst1 = max(worst1, float(np.max(np.abs(r1 - d1) / np.abs(d1))))
        r2 = eval_many(plant.P12, s) / p11
        d2 = eval_many(g2(p, check=False), s)
        worst2 = max(worst2, float(np.max(np.abs(r2 - d2) / np.abs(d2))))
    verdict(
        2,
        worst1 <= 1e-9 and worst2 <= 1e-9,
        f"estimator ratios worst rel err {max(worst1, worst2):.3e} (<=1e-9)",
    )


def test_03_inner_loop_identity(nominal, box, grid):
    worst = 0.0
    for seed in range(100):
        p = sample_params(box, seed, nominal)
        plant = build_plant(p)
        lec = build_lec(plant, p.k_FF, PH_STUDY)
        worst = max(worst, theorem1_check(plant, lec, p.k_FF, grid))
    verdict(3, worst <= 1e-8, f"inner-loop identity worst rel err {worst:.3e} (<=1e-8)")


def test_04_observer_structure(nominal, box, grid):
    worst_eig = worst_resp = 0.0
    ranks_ok = True
    for seed in range(100):
        p = sample_params(box, seed, nominal)
        plant = build_plant(p)
        real, _ = build_uio(plant, UIO_LAMBDAS, p.k_FF, PH_STUDY)
        got = np.sort(np.linalg.eigvals(real.A_cl).real)
        want = np.sort(np.array(UIO_LAMBDAS))
        worst_eig = max(worst_eig, float(np.max(np.abs(got - want) / np.abs(want))))
        ranks_ok = ranks_ok and real.observability_rank == 2 and real.reduced.n_states == 2
        for j in range(3):
            full = ss_frequency_response(real.full, grid.omegas, in_index=j)
            red = ss_frequency_response(real.reduced, grid.omegas, in_index=j)
            scale = np.maximum(np.abs(full), 1e-12)
            worst_resp = max(worst_resp, float(np.max(np.abs(full - red) / scale)))
    verdict(
        4,
        worst_eig <= 1e-6 and ranks_ok and worst_resp <= 1e-8,
        f"spectrum err {worst_eig:.2e} (<=1e-6), rank-2 everywhere: {ranks_ok}, "
        f"reduction err {worst_resp:.2e} (<=1e-8)",
    )


def test_05_pwm_spectral_bounds(bench):
    started = time.monotonic()
    rng = np.random.default_rng(42)
    v_pk = bench.V_pk
    w_sw = bench.omega_sw
    odd_k = [3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25]
    all_ok = True
    worst_line = 0.0
    for _ in range(20):
        r0 = rng.uniform(0.35, 0.65) * v_pk
        r1 = rng.uniform(0.02, 0.15) * v_pk
        k = int(rng.choice(odd_k))
        rep = pwm_spectrum_check(
            (r0, r1, (k / 64) * w_sw, rng.uniform(0, 2 * math.pi)), (v_pk, w_sw)
        )
        all_ok = all_ok and rep.dc_ok and rep.fundamental_ok and rep.bounds_ok and rep.oracle_ok
        worst_line = max(
            worst_line,
            max(abs(ln.measured - ln.oracle) / max(ln.oracle, 1e-12) for ln in rep.lines),
        )
    elapsed = time.monotonic() - started
    verdict(
        5,
        all_ok and elapsed < 60.0,
        f"20 admissible draws pass (fundamental 2%, bounds, oracle worst {worst_line:.2e}), "
        f"{elapsed:.1f} s (<60 s)",
    )


def test_06_tuned_controller_masks(tuned, plant, nominal, mask):
    from buckdr.lti import connect

    loop = connect("series", tuned.tf(), plant.P11 * nominal.k_FF)
    margins = []
    for e in mask:
        lv = complex(eval_many(loop, np.array([1j * e.omega]))[0])
        margins.append(e.bound - abs(lv / (1 + lv)))
    lv_sw = complex(eval_many(loop, np.array([1j * nominal.omega_sw]))[0])
    t_sw = abs(lv_sw / (1 + lv_sw))
    verdict(
        6,
        min(margins) > 0 and t_sw <= 1.5708e-2,
        f"all {len(margins)} mask margins positive (min {min(margins):.3e}), "
        f"|T(i w_sw)| = {t_sw:.4e} (<=1.5708e-2)",
    )


def test_07_robust_stability_condition(box, nominal, tuned, grid):
    lam = lambda_envelope(box, nominal, grid, budget=200, seed=1)
    ncurve = n_lower_bound(
        box, nominal, tuned.tf(), (nominal.k_FF, nominal.k_FF), grid, budget=200, seed=2
    )
    report = check_condition(lam, ncurve, nominal, PH_STUDY)
    verdict(
        7,
        report.condition_holds,
        f"sufficient condition at p_H=1e6: margin {report.condition_margin:.4e} (>0)",
    )


@pytest.fixture(scope="module")
def scan_pair(box, nominal, tuned, plant):
    started = time.monotonic()
    bare = sampled_stability_scan(box, nominal, tuned.tf(), build_none(), 500, seed=77)
    lec = build_lec(plant, nominal.k_FF, PH_STUDY)
    with_lec = sampled_stability_scan(box, nominal, tuned.tf(), lec, 500, seed=78)
    return bare, with_lec, time.monotonic() - started


def test_08_sampled_stability_scan(scan_pair):
    bare, with_lec, elapsed = scan_pair
    verdict(
        8,
        bare.stable_fraction == 1.0 and with_lec.stable_fraction == 1.0 and elapsed < 120.0,
        f"500-sample scans stable: bare {bare.stable_fraction:.3f}, "
        f"lec {with_lec.stable_fraction:.3f}, {elapsed:.1f} s (<2 min)",
    )


def test_09_monte_carlo_study(mc_summary, bench):
    res, elapsed = mc_summary
    u_none = res["none"].metrics["undershoot_pct"]["mean"]
    u_lec = res["lec"].metrics["undershoot_pct"]["mean"]
    u_dob = res["dob"].metrics["undershoot_pct"]["mean"]
    sse_lec = max(abs(m.steady_state_error) for m in res["lec"].per_run)
    ok = (
        u_lec < u_none
        and u_dob < u_none
        and sse_lec < 1e-3
        and elapsed < 300.0
        and not any(res[k].failures for k in res)
    )
    verdict(
        9,
        ok,
        f"50 runs: undershoot lec {u_lec:.3f}% / dob {u_dob:.3f}% < none {u_none:.3f}%, "
        f"lec |sse| max {sse_lec:.2e} V (<1 mV), {elapsed:.0f} s (<5 min)",
    )


def test_10_hardware_echo_ratio(bench, tuned):
    plant = build_plant(bench)
    cfg = SimConfig(t_end=4e-3, mode="switched", steps_per_period=200)
    load4 = LoadProfile(step_amplitude=4.0, step_slope=1e6, step_time=2.5e-3)
    u = {}
    for kind, scheme in (("none", build_none()), ("lec", build_lec(plant, bench.k_FF, PH_STUDY))):
        tr = simulate(bench, tuned, scheme, cfg, load4)
        u[kind] = metrics(tr, bench.V_o_target, bench.V_pk, t_start=2.5e-3).undershoot_pct
    ratio = u["lec"] / u["none"]
    verdict(
        10,
        ratio <= 0.5,
        f"4 A switched step: undershoot lec {u['lec']:.3f}% / none {u['none']:.3f}% "
        f"= ratio {ratio:.3f} (<=0.5)",
    )


def test_11_determinism(box, nominal, tuned, plant, bench, load_step, mc_summary, scan_pair):
    bare, with_lec, _ = scan_pair
    rerun_bare = sampled_stability_scan(box, nominal, tuned.tf(), build_none(), 500, seed=77)
    lec = build_lec(plant, nominal.k_FF, PH_STUDY)
    rerun_lec = sampled_stability_scan(box, nominal, tuned.tf(), lec, 500, seed=78)
    scan_json_a = export_json(
        {"bare": bare.stable_fraction, "lec": with_lec.stable_fraction,
         "worst": [bare.worst_sample.R_L, with_lec.worst_sample.R_L]}
    )
    scan_json_b = export_json(
        {"bare": rerun_bare.stable_fraction, "lec": rerun_lec.stable_fraction,
         "worst": [rerun_bare.worst_sample.R_L, rerun_lec.worst_sample.R_L]}
    )
    res, _ = mc_summary
    cfg = SimConfig(t_end=5e-3, mode="averaged", dt=4e-8)
    rerun = monte_carlo(
        box, bench, tuned, ["none", "lec", "dob"], 50, seed=2024,
        cfg=cfg, load=load_step, p_H=PH_STUDY, uio_lambdas=UIO_LAMBDAS,
        fix_R_L=5.0, fix_V_in=20.0,
    )
    mc_identical = summary_json(res) == summary_json(rerun)
    verdict(
        11,
        scan_json_a == scan_json_b and mc_identical,
        f"repeated scans identical: {scan_json_a == scan_json_b}, "
        f"repeated study summary bit-identical: {mc_identical}",
    )
