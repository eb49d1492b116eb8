"""Flat key-value configuration files.

One `name = value` pair per line, `#` comments, values either plain
numbers (scientific notation welcome) or numbers with an SI magnitude
suffix (p, n, u, m, k, M, G). Parameter files mirror the component-value
and uncertainty field names; scenario files add load-profile and
simulation keys and point at a parameter file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .buck import BuckParams, UncertaintyBox, ccm_load_interval

# suffixes concatenate as decimal exponents so "6.5m" parses to exactly
# the same float as the literal 6.5e-3
SI_SUFFIX = {
    "p": "e-12",
    "n": "e-9",
    "u": "e-6",
    "m": "e-3",
    "k": "e3",
    "M": "e6",
    "G": "e9",
}

_NUMBER = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+))\s*([pnumkMG])?$|^([+-]?(?:\d+\.?\d*|\.\d+)[eE][+-]?\d+)$")


class ConfigError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


PARAM_KEYS = {
    "C",
    "L",
    "R_C",
    "R_i",
    "R_on",
    "R_L",
    "f_sw",
    "k_FF",
    "V_in",
    "V_in_max",
    "V_o_target",
    "I_max",
}
BOX_KEYS = {
    "C_unc_pct",
    "L_unc_pct",
    "R_C_unc_pct",
    "R_i_unc_pct",
    "R_on_unc_pct",
    "R_L_lo",
    "R_L_hi",
}
SCENARIO_KEYS = {
    "params_file",
    "mode",
    "scheme",
    "p_H",
    "lambda_1",
    "lambda_2",
    "lambda_3",
    "t_end",
    "dt",
    "steps_per_period",
    "soft_start",
    "step_time",
    "step_amplitude",
    "step_slope",
    "n_runs",
    "n_samples",
    "budget",
    "seed",
    "R_L_fixed",
    "V_in_fixed",
    "Gf",
    "m_max",
    "n_max",
    "R_bar_frac",
}
_STRING_KEYS = {"params_file", "mode", "scheme"}


def parse_value(token: str):
    m = _NUMBER.match(token.strip())
    if m is None:
        return token.strip()
    if m.group(3) is not None:
        return float(m.group(3))
    return float(m.group(1) + (SI_SUFFIX[m.group(2)] if m.group(2) else ""))


def read_kv_file(path, allowed: set[str]) -> dict:
    """Parse one flat file, rejecting unknown keys with their line number."""
    out: dict = {}
    text = Path(path).read_text()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(path, line_no, f"expected 'name = value', got {raw!r}")
        key, _, tok = line.partition("=")
        key = key.strip()
        if key not in allowed:
            raise ConfigError(path, line_no, f"unknown key {key!r}")
        if key in out:
            raise ConfigError(path, line_no, f"duplicate key {key!r}")
        value = parse_value(tok)
        if key in _STRING_KEYS and not isinstance(value, str):
            value = tok.strip()
        if key not in _STRING_KEYS and isinstance(value, str):
            raise ConfigError(path, line_no, f"{key!r} needs a numeric value, got {tok.strip()!r}")
        out[key] = value
    return out


def load_params(path) -> tuple[BuckParams, UncertaintyBox]:
    """Parameter file -> component values plus their uncertainty box.

    R_L defaults to the midpoint of the CCM interval, and its box entry to
    the full interval, unless R_L / R_L_lo / R_L_hi override them.
    """
    raw = read_kv_file(path, PARAM_KEYS | BOX_KEYS)
    missing = (PARAM_KEYS - {"R_L", "V_in"}) - set(raw)
    if missing:
        raise ConfigError(path, 0, f"missing keys: {sorted(missing)}")
    fracs = {
        name: raw.get(f"{name}_unc_pct", default) / 100.0
        for name, default in (("C", 10.0), ("L", 20.0), ("R_C", 15.0), ("R_i", 15.0), ("R_on", 15.0))
    }
    probe = BuckParams(
        R_L=raw["V_o_target"] / raw["I_max"],
        V_in=raw.get("V_in", raw["V_in_max"]),
        **{k: raw[k] for k in PARAM_KEYS - {"R_L", "V_in"}},
    )
    l_lo = (1.0 - fracs["L"]) * probe.L
    ivl = ccm_load_interval(probe, None)
    hi_ccm = 2.0 * l_lo * probe.f_sw / (1.0 - probe.V_o_target / probe.V_in_max)
    r_l_lo = raw.get("R_L_lo", ivl.lo)
    r_l_hi = raw.get("R_L_hi", hi_ccm)
    params = probe.replace(R_L=raw.get("R_L", 0.5 * (r_l_lo + r_l_hi)))
    box = UncertaintyBox(
        C=((1 - fracs["C"]) * params.C, (1 + fracs["C"]) * params.C),
        L=((1 - fracs["L"]) * params.L, (1 + fracs["L"]) * params.L),
        R_C=((1 - fracs["R_C"]) * params.R_C, (1 + fracs["R_C"]) * params.R_C),
        R_i=((1 - fracs["R_i"]) * params.R_i, (1 + fracs["R_i"]) * params.R_i),
        R_on=((1 - fracs["R_on"]) * params.R_on, (1 + fracs["R_on"]) * params.R_on),
        R_L=(r_l_lo, r_l_hi),
    )
    return params, box


@dataclass(frozen=True)
class Scenario:
    """A parsed scenario file plus command-line overrides."""

    params_file: str
    values: dict = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.values.get(key, default)


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    raw = read_kv_file(path, SCENARIO_KEYS)
    if "params_file" not in raw:
        raise ConfigError(path, 0, "scenario must name a params_file")
    params_path = Path(path).parent / raw.pop("params_file")
    if overrides:
        unknown = set(overrides) - SCENARIO_KEYS
        if unknown:
            raise ConfigError(path, 0, f"unknown override keys: {sorted(unknown)}")
        raw.update(overrides)
    return Scenario(params_file=str(params_path), values=raw)
