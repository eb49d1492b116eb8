"""Command-line front end: model / design / scheme / analyze / simulate /
montecarlo, each emitting CSV + JSON artifacts plus a hash manifest.

Exit codes: 0 success, 2 configuration or validation error, 3 completed
analysis whose verdict is negative (condition violated, unstable samples,
or a failed run); 3 means "ran fine, found a problem", which CI can tell
apart from "could not run".
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .buck import build_plant, ccm_load_interval
from .config import ConfigError, Scenario, load_params, load_scenario
from .design import (
    build_weights,
    components_from_params,
    t_mask,
    tune_structured,
)
from .lti import default_grid, eval_many
from .robust import check_condition, lambda_envelope, n_lower_bound, sampled_stability_scan
from .schemes import build_none
from .sim import LoadProfile, SimConfig, build_scheme, metrics, monte_carlo, simulate

OUTPUT_DIR_ENV = "BUCKDR_OUT"

MONTECARLO_SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["n_runs", "seed", "mode", "schemes"],
    "properties": {
        "n_runs": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "mode": {"enum": ["switched", "averaged"]},
        "schemes": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["metrics", "n_failures"],
                "properties": {
                    "n_failures": {"type": "integer", "minimum": 0},
                    "metrics": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["mean", "min", "max"],
                            "properties": {
                                "mean": {"type": "number"},
                                "min": {"type": "number"},
                                "max": {"type": "number"},
                            },
                        },
                    },
                },
            },
        },
    },
}


class ReportBundle:
    """Collects emitted files and finishes with a content-hash manifest."""

    def __init__(self, out_dir: Path, command: str, argv: list[str], inputs: list[Path]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.argv = list(argv)
        self.inputs = {str(p): _sha256_file(p) for p in inputs}
        self.outputs: dict[str, str] = {}

    def write_text(self, name: str, text: str) -> None:
        data = text.encode()
        (self.out_dir / name).write_bytes(data)
        self.outputs[name] = hashlib.sha256(data).hexdigest()

    def write_json(self, name: str, obj) -> None:
        self.write_text(name, export_json(obj))

    def write_csv(self, name: str, header: list[str], columns: list[np.ndarray]) -> None:
        self.write_text(name, export_csv(header, columns))

    def finalize(self, extra: dict | None = None) -> None:
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "versions": {
                "buckdr": __version__,
                "numpy": np.__version__,
                "python": ".".join(map(str, sys.version_info[:3])),
            },
        }
        if extra:
            manifest.update(extra)
        self.write_text("manifest.json", export_json(manifest))


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def export_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def export_csv(header: list[str], columns: list[np.ndarray]) -> str:
    """CSV with a header row and >= 9 significant digits in scientific
    notation; empty column sets yield a header-only file."""
    lines = [",".join(header)]
    if columns:
        n = len(columns[0])
        for col in columns:
            if len(col) != n:
                raise ValueError("all columns must have equal length")
        for i in range(n):
            lines.append(",".join(f"{float(c[i]):.9e}" for c in columns))
    return "\n".join(lines) + "\n"


def _tf_dict(tf) -> dict:
    return {"num": list(map(float, tf.num.coef)), "den": list(map(float, tf.den.coef))}


def _scenario_from_args(args) -> Scenario:
    overrides = {}
    for key in ("p_H", "t_end", "seed", "n_runs", "n_samples", "budget", "mode", "scheme"):
        val = getattr(args, key.lower(), None)
        if val is not None:
            overrides[key] = val
    if args.scenario:
        return load_scenario(args.scenario, overrides)
    if not args.params:
        raise ConfigError("<cli>", 0, "need --params or --scenario")
    return Scenario(params_file=args.params, values=overrides)


def _design_for(params, plant, scenario: Scenario):
    r_bar_frac = scenario.get("R_bar_frac", 0.1)
    mask = t_mask(
        r_bar_frac * params.V_pk,
        params.V_pk,
        params.omega_sw,
        m_max=int(scenario.get("m_max", 5)),
        n_max=int(scenario.get("n_max", 3)),
    )
    weights = build_weights(params.omega_sw)
    controller = tune_structured(plant, params.k_FF, weights, mask, Gf=scenario.get("Gf", 1.0))
    return controller, weights, mask


def _load_profile(scenario: Scenario) -> LoadProfile:
    return LoadProfile(
        step_amplitude=scenario.get("step_amplitude", 8.0),
        step_slope=scenario.get("step_slope", 1e6),
        step_time=scenario.get("step_time", 2.5e-3),
    )


def _sim_config(scenario: Scenario, mode: str) -> SimConfig:
    return SimConfig(
        t_end=scenario.get("t_end", 4e-3),
        mode=mode,
        steps_per_period=int(scenario.get("steps_per_period", 200)),
        dt=scenario.get("dt", 4e-8),
        soft_start=scenario.get("soft_start", 2e-3),
    )


def _uio_lambdas(scenario: Scenario):
    return (
        scenario.get("lambda_1", -1e6),
        scenario.get("lambda_2", -1e6),
        scenario.get("lambda_3", -0.95e6),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_model(args, bundle: ReportBundle, scenario: Scenario) -> int:
    params, box = load_params(scenario.params_file)
    plant = build_plant(params)
    ivl = ccm_load_interval(params, box)
    bundle.write_json(
        "model.json",
        {
            "alpha": list(plant.alpha),
            "omega_ESR": plant.omega_ESR,
            "omega_PS": plant.omega_PS,
            "zeta_PS": plant.zeta_PS,
            "R_i_prime": plant.R_i_prime,
            "ccm_interval": {"lo": ivl.lo, "hi": ivl.hi, "nominal": ivl.nominal},
            "P11": _tf_dict(plant.P11),
            "P12": _tf_dict(plant.P12),
            "P21": _tf_dict(plant.P21),
        },
    )
    bundle.finalize()
    print(f"omega_ESR = {plant.omega_ESR:.6e} rad/s, omega_PS = {plant.omega_PS:.6e} rad/s")
    print(f"zeta_PS = {plant.zeta_PS:.6f}, CCM R_L in [{ivl.lo:.4f}, {ivl.hi:.4f}] ohm")
    return 0


def cmd_design(args, bundle: ReportBundle, scenario: Scenario) -> int:
    params, _ = load_params(scenario.params_file)
    plant = build_plant(params)
    controller, weights, mask = _design_for(params, plant, scenario)
    ktf = controller.tf()
    comp = components_from_params(controller.as_type3(), R1_fixed=args.r1)
    grid = default_grid()
    s = 1j * grid.omegas
    lv = eval_many(ktf, s) * params.k_FF * eval_many(plant.P11, s)
    sv = 1.0 / (1.0 + lv)
    mask_rows = []
    for e in mask:
        le = complex(eval_many(ktf, np.array([1j * e.omega]))[0]) * params.k_FF * complex(
            eval_many(plant.P11, np.array([1j * e.omega]))[0]
        )
        t_mag = abs(le / (1.0 + le))
        mask_rows.append((e.m, e.n, e.omega, e.bound, t_mag, e.bound - t_mag))
    bundle.write_json(
        "controller.json",
        {
            "G": controller.G,
            "omega_z": controller.omega_z,
            "p1": controller.p1,
            "p2": controller.p2,
            "gamma": controller.gamma,
            "tf": _tf_dict(ktf),
            "type3": {k: getattr(controller.as_type3(), k) for k in ("Gc0", "wz0", "wz1", "wp0", "wp1")},
            "components": {k: getattr(comp, k) for k in ("R1", "R2", "R3", "C1", "C2", "C3")},
            "mask_satisfied": all(r[5] > 0 for r in mask_rows),
        },
    )
    bundle.write_csv(
        "masks.csv",
        ["m", "n", "omega", "bound", "T_mag", "margin"],
        [np.array([r[i] for r in mask_rows]) for i in range(6)],
    )
    # mask bounds appear on their own rows of the Bode table
    omega_all = np.sort(np.concatenate([grid.omegas, [e.omega for e in mask]]))
    s_all = 1j * omega_all
    lv_all = eval_many(ktf, s_all) * params.k_FF * eval_many(plant.P11, s_all)
    sv_all = 1.0 / (1.0 + lv_all)
    mask_col = np.full(len(omega_all), math.nan)
    for e in mask:
        idx = np.searchsorted(omega_all, e.omega)
        mask_col[idx] = min(e.bound, mask_col[idx]) if not math.isnan(mask_col[idx]) else e.bound
    bundle.write_csv(
        "bode.csv",
        ["omega", "S_mag", "T_mag", "K_mag", "mask_bound"],
        [omega_all, np.abs(sv_all), np.abs(1 - sv_all), np.abs(eval_many(ktf, s_all)), mask_col],
    )
    bundle.finalize()
    print(f"G = {controller.G:.6e}, gamma = {controller.gamma:.4f}")
    return 0


def cmd_scheme(args, bundle: ReportBundle, scenario: Scenario) -> int:
    params, _ = load_params(scenario.params_file)
    plant = build_plant(params)
    kind = scenario.get("scheme", "lec")
    p_h = scenario.get("p_H", 1e6)
    scheme = build_scheme(kind, plant, params.k_FF, p_h, _uio_lambdas(scenario))
    grid = default_grid()
    s = 1j * grid.omegas
    payload = {
        "kind": scheme.kind,
        "p_H": scheme.p_H,
        "inputs": list(scheme.inputs),
        "estimator": [_tf_dict(g) for g in scheme.estimator],
        "compensator": _tf_dict(scheme.compensator),
    }
    bundle.write_json("scheme.json", payload)
    for name, tf in zip(scheme.inputs, scheme.estimator):
        vals = eval_many(tf, s)
        bundle.write_csv(
            f"bode_estimator_{name}.csv",
            ["omega", "mag", "phase_rad"],
            [grid.omegas, np.abs(vals), np.angle(vals)],
        )
    vals = eval_many(scheme.compensator, s)
    bundle.write_csv(
        "bode_compensator.csv",
        ["omega", "mag", "phase_rad"],
        [grid.omegas, np.abs(vals), np.angle(vals)],
    )
    bundle.finalize()
    print(f"{scheme.kind}: {len(scheme.estimator)} estimator channel(s), p_H = {scheme.p_H:.3e}")
    return 0


def cmd_analyze(args, bundle: ReportBundle, scenario: Scenario) -> int:
    params, box = load_params(scenario.params_file)
    plant = build_plant(params)
    controller, _, _ = _design_for(params, plant, scenario)
    grid = default_grid()
    p_h = scenario.get("p_H", 1e6)
    budget = int(scenario.get("budget", 200))
    seed = int(scenario.get("seed", 0))
    n_samples = int(scenario.get("n_samples", 500))
    kind = scenario.get("scheme", "lec")

    from .robust import w_r_magnitude

    lam = lambda_envelope(box, params, grid, budget=budget, seed=seed)
    ncurve = n_lower_bound(
        box, params, controller.tf(), (params.k_FF, params.k_FF), grid, budget=budget, seed=seed + 1
    )
    report = check_condition(lam, ncurve, params, p_h)
    wr = w_r_magnitude(params, lam.values, p_h, grid.omegas)
    bundle.write_csv(
        "condition.csv",
        ["omega", "W_r_mag", "N", "margin"],
        [grid.omegas, wr, ncurve.values, ncurve.values - wr],
    )
    scheme = build_scheme(kind, plant, params.k_FF, p_h, _uio_lambdas(scenario))
    scan_bare = sampled_stability_scan(box, params, controller.tf(), build_none(), n_samples, seed)
    scan_scheme = sampled_stability_scan(box, params, controller.tf(), scheme, n_samples, seed)
    verdict_ok = (
        report.condition_holds
        and scan_bare.stable_fraction == 1.0
        and scan_scheme.stable_fraction == 1.0
    )
    bundle.write_json(
        "analysis.json",
        {
            "p_H": p_h,
            "condition_margin": report.condition_margin,
            "condition_holds": report.condition_holds,
            "first_violation_omega": report.first_violation_omega,
            "scan": {
                "none": {
                    "stable_fraction": scan_bare.stable_fraction,
                    "worst_sample": _params_dict(scan_bare.worst_sample),
                },
                kind: {
                    "stable_fraction": scan_scheme.stable_fraction,
                    "worst_sample": _params_dict(scan_scheme.worst_sample),
                },
            },
            "n_samples": n_samples,
            "seed": seed,
            "note": "sampled evidence, not a certificate",
        },
    )
    bundle.finalize(extra={"seed": seed})
    print(
        f"condition margin = {report.condition_margin:.6g} ({'pass' if report.condition_holds else 'FAIL'}), "
        f"stable fractions: none={scan_bare.stable_fraction:.3f}, {kind}={scan_scheme.stable_fraction:.3f}"
    )
    return 0 if verdict_ok else 3


def _params_dict(p) -> dict | None:
    if p is None:
        return None
    return {k: getattr(p, k) for k in ("C", "L", "R_C", "R_i", "R_on", "R_L")}


def cmd_simulate(args, bundle: ReportBundle, scenario: Scenario) -> int:
    params, _ = load_params(scenario.params_file)
    plant = build_plant(params)
    controller, _, _ = _design_for(params, plant, scenario)
    kind = scenario.get("scheme", "lec")
    mode = scenario.get("mode", "averaged")
    p_h = scenario.get("p_H", 1e6)
    scheme = build_scheme(kind, plant, params.k_FF, p_h, _uio_lambdas(scenario))
    cfg = _sim_config(scenario, mode)
    load = _load_profile(scenario)
    trace = simulate(params, controller, scheme, cfg, load)
    m = metrics(trace, params.V_o_target, params.V_pk, t_start=load.step_time)
    bundle.write_csv(
        "run.csv",
        ["t", "v_o", "i_L", "v_c_tot", "v_inj", "d", "i_out_true", "i_out_hat"],
        [trace.t, trace.v_o, trace.i_L, trace.v_c_tot, trace.v_inj, trace.d,
         trace.i_out_true, trace.i_out_hat],
    )
    bundle.write_json(
        "metrics.json",
        {"mode": mode, "scheme": kind, **{k: getattr(m, k) for k in m.FIELDS}},
    )
    bundle.finalize()
    print(
        f"{kind}/{mode}: undershoot {m.undershoot_pct:.3f}%, settling {m.settling_time:.3e} s, "
        f"saturation {m.saturation_fraction:.4f}"
    )
    return 0


def cmd_montecarlo(args, bundle: ReportBundle, scenario: Scenario) -> int:
    params, box = load_params(scenario.params_file)
    plant = build_plant(params)
    controller, _, _ = _design_for(params, plant, scenario)
    mode = scenario.get("mode", "averaged")
    p_h = scenario.get("p_H", 1e6)
    n_runs = int(scenario.get("n_runs", 50))
    seed = int(scenario.get("seed", 0))
    schemes = [s.strip() for s in args.schemes.split(",")]
    cfg = _sim_config(scenario, mode)
    load = _load_profile(scenario)
    summaries = monte_carlo(
        box,
        params,
        controller,
        schemes,
        n_runs,
        seed,
        cfg,
        load,
        p_H=p_h,
        uio_lambdas=_uio_lambdas(scenario),
        fix_R_L=scenario.get("R_L_fixed", params.R_L),
        fix_V_in=scenario.get("V_in_fixed", params.V_in),
    )
    payload = {"n_runs": n_runs, "seed": seed, "mode": mode, "schemes": {}}
    any_failures = False
    for kind, s in summaries.items():
        payload["schemes"][kind] = {
            "metrics": s.metrics,
            "n_failures": len(s.failures),
        }
        any_failures = any_failures or bool(s.failures)
        if s.envelopes:
            bundle.write_csv(
                f"envelope_{kind}.csv",
                ["t", "v_o_min", "v_o_mean", "v_o_max", "v_c_min", "v_c_mean", "v_c_max"],
                [
                    s.envelope_t,
                    s.envelopes["v_o"]["min"],
                    s.envelopes["v_o"]["mean"],
                    s.envelopes["v_o"]["max"],
                    s.envelopes["v_c_tot"]["min"],
                    s.envelopes["v_c_tot"]["mean"],
                    s.envelopes["v_c_tot"]["max"],
                ],
            )
    bundle.write_json("summary.json", payload)
    bundle.finalize(extra={"seed": seed})
    for kind, s in summaries.items():
        u = s.metrics["undershoot_pct"]
        print(f"{kind}: undershoot mean {u['mean']:.3f}% (min {u['min']:.3f}, max {u['max']:.3f})")
    return 3 if any_failures else 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buckdr",
        description="Design and verification toolkit for voltage-mode buck converters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--params", help="parameter file (flat key = value)")
        p.add_argument("--scenario", help="scenario file naming a params_file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)

    p_model = sub.add_parser("model", help="plant coefficients and CCM interval")
    common(p_model)

    p_design = sub.add_parser("design", help="tune the structured controller")
    common(p_design)
    p_design.add_argument("--r1", type=float, default=10e3, help="fixed R1 for the network values")

    p_scheme = sub.add_parser("scheme", help="build a disturbance-rejection scheme")
    common(p_scheme)
    p_scheme.add_argument("--scheme", dest="scheme", choices=["dob", "uio", "lec"], default=None)
    p_scheme.add_argument("--p-h", dest="p_h", type=float, default=None)

    p_an = sub.add_parser("analyze", help="robust-stability condition and sampled scan")
    common(p_an)
    p_an.add_argument("--scheme", dest="scheme", choices=["dob", "uio", "lec"], default=None)
    p_an.add_argument("--p-h", dest="p_h", type=float, default=None)
    p_an.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    p_an.add_argument("--budget", type=int, default=None)

    p_sim = sub.add_parser("simulate", help="one time-domain run")
    common(p_sim)
    p_sim.add_argument("--scheme", dest="scheme", choices=["none", "dob", "uio", "lec"], default=None)
    p_sim.add_argument("--mode", choices=["switched", "averaged"], default=None)
    p_sim.add_argument("--p-h", dest="p_h", type=float, default=None)
    p_sim.add_argument("--t-end", dest="t_end", type=float, default=None)

    p_mc = sub.add_parser("montecarlo", help="seeded load-step study")
    common(p_mc)
    p_mc.add_argument("--schemes", default="none,lec,dob,uio", help="comma-separated kinds")
    p_mc.add_argument("--mode", choices=["switched", "averaged"], default=None)
    p_mc.add_argument("--n-runs", dest="n_runs", type=int, default=None)
    p_mc.add_argument("--p-h", dest="p_h", type=float, default=None)
    return parser


_HANDLERS = {
    "model": cmd_model,
    "design": cmd_design,
    "scheme": cmd_scheme,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scenario = _scenario_from_args(args)
        inputs = [Path(scenario.params_file)]
        if args.scenario:
            inputs.append(Path(args.scenario))
        for p in inputs:
            if not p.exists():
                raise ConfigError(p, 0, "file not found")
        out_dir = args.out or os.environ.get(OUTPUT_DIR_ENV) or "buckdr_out"
        bundle = ReportBundle(Path(out_dir), args.command, argv, inputs)
        return _HANDLERS[args.command](args, bundle, scenario)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
