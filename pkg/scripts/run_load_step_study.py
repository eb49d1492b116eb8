#!/usr/bin/env python3
"""Seeded 50-run load-step study: 1 A static load, 8 A step at 1e6 A/s.

Compares the uncompensated loop against the three disturbance-rejection
schemes on uniformly sampled component values. Pass --switched to run the
comparator-level simulation instead of the averaged model (slower).
"""

import sys
import time

from buckdr.buck import build_plant, default_box, default_params
from buckdr.design import build_weights, t_mask, tune_structured
from buckdr.sim import LoadProfile, SimConfig, monte_carlo

N_RUNS = 50
SEED = 2024
P_H = 1e6


def main():
    mode = "switched" if "--switched" in sys.argv[1:] else "averaged"
    params = default_params(V_in=20.0, R_L=5.0)
    box = default_box(default_params())
    plant = build_plant(params)
    weights = build_weights(params.omega_sw)
    mask = t_mask(0.1 * params.V_pk, params.V_pk, params.omega_sw)
    controller = tune_structured(plant, params.k_FF, weights, mask)

    cfg = SimConfig(t_end=5e-3, mode=mode, dt=4e-8, steps_per_period=200)
    load = LoadProfile(step_amplitude=8.0, step_slope=1e6, step_time=2.5e-3)
    started = time.monotonic()
    results = monte_carlo(
        box, params, controller, ["none", "lec", "dob", "uio"], N_RUNS, SEED,
        cfg, load, p_H=P_H, fix_R_L=5.0, fix_V_in=20.0,
    )
    print(f"{N_RUNS} runs x 4 schemes, {mode} mode, {time.monotonic() - started:.0f} s\n")
    header = f"{'scheme':8s} {'undershoot %':>22s} {'settling us':>16s} {'sat frac':>10s} {'|sse| V':>10s}"
    print(header)
    for kind, s in results.items():
        u = s.metrics["undershoot_pct"]
        st = s.metrics["settling_time"]
        sat = s.metrics["saturation_fraction"]
        sse = max(abs(m.steady_state_error) for m in s.per_run)
        print(
            f"{kind:8s} {u['mean']:7.3f} [{u['min']:6.3f},{u['max']:6.3f}]"
            f" {st['mean'] * 1e6:9.1f} {sat['max']:10.5f} {sse:10.2e}"
        )
        if s.failures:
            print(f"         {len(s.failures)} failed runs: {s.failures}")


if __name__ == "__main__":
    main()
