#!/usr/bin/env python3
"""Build the reference plant and tune the structured controller.

Prints the derived plant frequencies, the tuned gain and its
mixed-sensitivity objective, the mask margins, and an RC network
realizing the controller with R1 = 10 kOhm.
"""

import numpy as np

from buckdr.buck import build_plant, ccm_load_interval, default_box, default_params
from buckdr.design import build_weights, components_from_params, t_mask, tune_structured
from buckdr.lti import connect, eval_many


def main():
    params = default_params()
    box = default_box(params)
    plant = build_plant(params)
    ivl = ccm_load_interval(params, box)
    print(f"plant: w_ESR = {plant.omega_ESR:.4e} rad/s, w_PS = {plant.omega_PS:.4e} rad/s, "
          f"zeta_PS = {plant.zeta_PS:.4f}")
    print(f"CCM load interval: [{ivl.lo:.4f}, {ivl.hi:.4f}] ohm (nominal {ivl.nominal:.4f})")

    weights = build_weights(params.omega_sw)
    mask = t_mask(0.1 * params.V_pk, params.V_pk, params.omega_sw)
    controller = tune_structured(plant, params.k_FF, weights, mask)
    print(f"\ntuned gain G = {controller.G:.6e}, objective gamma = {controller.gamma:.2f}")
    print(f"zeros (double) at {controller.omega_z:.4e} rad/s, "
          f"poles at 0, {controller.p2:.4e}, {controller.p1:.4e} rad/s")

    loop = connect("series", controller.tf(), plant.P11 * params.k_FF)
    print("\nmask margins:")
    for e in mask:
        lv = complex(eval_many(loop, np.array([1j * e.omega]))[0])
        t_mag = abs(lv / (1 + lv))
        print(f"  (m={e.m}, n={e.n}) at {e.omega:.3e} rad/s: "
              f"|T| = {t_mag:.3e} <= {e.bound:.3e} (margin {e.bound - t_mag:.2e})")

    comps = components_from_params(controller.as_type3(), R1_fixed=10e3)
    print("\nRC network (R1 fixed at 10 kOhm):")
    for name in ("R1", "R2", "R3"):
        print(f"  {name} = {getattr(comps, name):.4e} ohm")
    for name in ("C1", "C2", "C3"):
        print(f"  {name} = {getattr(comps, name):.4e} F")


if __name__ == "__main__":
    main()
