#!/usr/bin/env python3
"""Robustness study on the reference uncertainty box.

Checks the inner-loop identity, builds the mismatch and sensitivity
envelopes, evaluates the sufficient condition over a sweep of compensator
poles, and runs 500-sample stability scans with and without the
load-estimation scheme.
"""

import math

from buckdr.buck import build_plant, default_box, default_params
from buckdr.design import build_weights, t_mask, tune_structured
from buckdr.lti import default_grid
from buckdr.robust import (
    check_condition,
    critical_p_h,
    lambda_envelope,
    n_lower_bound,
    sampled_stability_scan,
    theorem1_check,
)
from buckdr.schemes import build_lec, build_none

P_H = 1e6
N_SAMPLES = 500
SEED = 77


def main():
    params = default_params()
    box = default_box(params)
    plant = build_plant(params)
    grid = default_grid()
    weights = build_weights(params.omega_sw)
    mask = t_mask(0.1 * params.V_pk, params.V_pk, params.omega_sw)
    controller = tune_structured(plant, params.k_FF, weights, mask)

    lec = build_lec(plant, params.k_FF, P_H)
    err = theorem1_check(plant, lec, params.k_FF, grid)
    print(f"inner-loop identity on matched parameters: max rel err {err:.3e}")

    lam = lambda_envelope(box, params, grid, budget=200, seed=1)
    ncurve = n_lower_bound(
        box, params, controller.tf(), (params.k_FF, params.k_FF), grid, budget=200, seed=2
    )
    print("\nsufficient condition (sampled evidence, not a certificate):")
    for p_h in (1e4, 1e5, 1e6, 1e7, 1e9):
        rep = check_condition(lam, ncurve, params, p_h)
        tag = "pass" if rep.condition_holds else "VIOLATED"
        print(f"  p_H = {p_h:.0e} rad/s: margin {rep.condition_margin:+.4e} ({tag})")
    p_star = critical_p_h(lam, ncurve, params)
    if math.isinf(p_star):
        print("  no violation up to 1e12 rad/s for this box")
    else:
        print(f"  critical pole: {p_star:.4e} rad/s")

    print(f"\nstability scans ({N_SAMPLES} samples):")
    for label, scheme in (("bare loop", build_none()), ("with load estimator", lec)):
        rep = sampled_stability_scan(box, params, controller.tf(), scheme, N_SAMPLES, SEED)
        print(f"  {label}: stable fraction {rep.stable_fraction:.3f}")


if __name__ == "__main__":
    main()
