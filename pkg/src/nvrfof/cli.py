"""
Command-line front end.

    nvrfof simulate     write a synthetic spectrum CSV
    nvrfof fit          fit a spectrum CSV, write FitResult JSON
    nvrfof link         RFoF link budget / efficiency, write LinkResult JSON
    nvrfof sweep-field  simulate+fit a field sweep into a directory
    nvrfof sweep-power  simulate+fit a power sweep into a directory

Settings are resolved as command defaults < --preset < --config JSON <
individual flags. A relative --config path that does not exist is looked
up in $NVRFOF_CONFIG_DIR; without --config, $NVRFOF_CONFIG_DIR/<command>.json
is used when present.

Exit codes: 0 success, 2 usage or input error, 1 internal error.
"""

import argparse
import json
import math
import os
import sys

from . import spin
from .errors import DegenerateFitError, InvalidInputError
from .fitting import FitConfig, detect_peaks, dumps, fit_lorentzians, write_json
from .link import link_from_config
from .spectrum import DriveParameters, atomic_write_text, read_spectrum, spectrum_to_csv, synthesize_spectrum, write_spectrum
from .sweeps import PRESETS, field_values, parse_direction, run_field_sweep, run_power_sweep

CONFIG_DIR_ENV = "NVRFOF_CONFIG_DIR"

SPECTRUM_KEYS = {
    "d_mhz": float,
    "e_mhz": float,
    "gamma_e": float,
    "field_gauss": float,
    "direction": str,
    "b_vector": str,
    "p_rf_dbm": float,
    "p_sat_mw": float,
    "c_inf": float,
    "fwhm0_mhz": float,
    "f_start_mhz": float,
    "f_stop_mhz": float,
    "points": int,
    "noise_sigma": float,
}
FIT_KEYS = {
    "n_lines": str,
    "max_iterations": int,
    "convergence_tol": float,
    "peak_threshold": float,
}
LINK_KEYS = {
    k: float
    for k in (
        "p_opt_pd_mw", "p_opt_pd_dbm", "p_rf_ant_dbm", "p_rf_ant_mw", "p_laser_mw", "p_laser_dbm",
        "insertion_loss", "v_pi", "v_rf", "modulation_index", "bias_phase", "responsivity",
        "load_impedance", "cable_loss_db",
    )
}
SWEEP_KEYS = {"range": str, "step": float, "jobs": int}
FIELD_SWEEP_KEYS = {**SPECTRUM_KEYS, **FIT_KEYS, **SWEEP_KEYS, "fields_gauss": list}
POWER_SWEEP_KEYS = {**SPECTRUM_KEYS, **FIT_KEYS, **SWEEP_KEYS, "powers_dbm": list}

COMMAND_KEYS = {
    "simulate": SPECTRUM_KEYS,
    "fit": FIT_KEYS,
    "link": LINK_KEYS,
    "sweep-field": FIELD_SWEEP_KEYS,
    "sweep-power": POWER_SWEEP_KEYS,
}
DEFAULT_PRESET = {"simulate": "fig2-coax", "sweep-field": "fig3-rfof", "sweep-power": "fig2-coax"}
BASE_DEFAULTS = {
    "d_mhz": 2870.0,
    "e_mhz": 0.0,
    "gamma_e": 2.8,
    "n_lines": "auto",
    "max_iterations": 200,
    "convergence_tol": 1e-9,
    "step": 4.0,
    "jobs": 1,
}
NOISE_DEFAULT = {"simulate": 0.001, "sweep-field": 0.0, "sweep-power": 0.0}


class UsageError(Exception):
    """Bad command line; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag(key):
    return "--" + key.replace("_", "-")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of key/value settings")
    common.add_argument("--out", help="output path (directory for sweeps)")
    common.add_argument("--seed", help="integer seed for all stochastic output")

    parser = _Parser(prog="nvrfof", description="RFoF-driven NV ODMR simulation and analysis")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for command, keys in COMMAND_KEYS.items():
        p = sub.add_parser(command, parents=[common])
        if command in DEFAULT_PRESET:
            p.add_argument("--preset", choices=sorted(PRESETS))
        if command == "fit":
            p.add_argument("input", help="spectrum CSV")
        for key in keys:
            if keys[key] is list:
                p.add_argument(_flag(key), dest=key, help="comma-separated values")
            else:
                p.add_argument(_flag(key), dest=key)
    return parser


# --- settings --------------------------------------------------------------------


def _coerce(key, value, kind):
    try:
        if kind is list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return [float(v) for v in value]
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("not an integer")
            return int(value)
        if kind is float:
            out = float(value)
            if math.isnan(out):
                raise ValueError("NaN")
            return out
        return value if isinstance(value, str) else str(value)
    except (TypeError, ValueError):
        raise InvalidInputError(f"{key}: invalid value {value!r}") from None


def _load_config(command, path):
    env_dir = os.environ.get(CONFIG_DIR_ENV)
    if path is None:
        if not env_dir:
            return {}
        path = os.path.join(env_dir, f"{command}.json")
        if not os.path.exists(path):
            return {}
    elif not os.path.exists(path) and env_dir and not os.path.isabs(path):
        path = os.path.join(env_dir, path)
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise InvalidInputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config {path}: invalid JSON at line {exc.lineno}") from None
    if not isinstance(cfg, dict):
        raise InvalidInputError(f"config {path}: expected a JSON object")
    return cfg


def resolve_settings(command, args):
    """Merge defaults, preset, config file and flags into one typed dict."""
    keys = COMMAND_KEYS[command]
    merged = {k: v for k, v in BASE_DEFAULTS.items() if k in keys}
    if command in NOISE_DEFAULT:
        merged["noise_sigma"] = NOISE_DEFAULT[command]
    preset = getattr(args, "preset", None) or DEFAULT_PRESET.get(command)
    if preset:
        merged.update({k: v for k, v in PRESETS[preset].items() if k in keys})

    cfg = _load_config(command, args.config)
    unknown = sorted(set(cfg) - set(keys) - {"seed"})
    if unknown:
        raise InvalidInputError("unknown config key(s): " + ", ".join(unknown))
    merged.update(cfg)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value

    seed = merged.pop("seed", 0)
    if args.seed is not None:
        seed = args.seed
    settings = {k: _coerce(k, v, keys[k]) for k, v in merged.items() if v is not None}
    settings["seed"] = _coerce("seed", seed, int)
    return settings


def _nv_params(s):
    try:
        return spin.NVParameters(s["d_mhz"], s["e_mhz"], s["gamma_e"])
    except InvalidInputError as exc:
        raise InvalidInputError(f"d_mhz/e_mhz/gamma_e: {exc}") from None


def _field(s):
    if "b_vector" in s:
        vec = parse_direction(s["b_vector"]) if s["b_vector"] not in ("0", "0,0,0") else (0.0, 0.0, 0.0)
        return spin.FieldVector(*vec)
    if s["field_gauss"] < 0:
        raise InvalidInputError("field_gauss: must be >= 0")
    return spin.FieldVector.along(parse_direction(s["direction"]), s["field_gauss"])


def _drive(s, p_rf=None):
    try:
        return DriveParameters(
            s["p_rf_dbm"] if p_rf is None else p_rf, s["p_sat_mw"], s["c_inf"], s["fwhm0_mhz"]
        )
    except InvalidInputError as exc:
        raise InvalidInputError(f"p_rf_dbm/p_sat_mw/c_inf/fwhm0_mhz: {exc}") from None


def _grid(s):
    if s["points"] < 2:
        raise InvalidInputError("points: grid requires >= 2 points")
    if not s["f_stop_mhz"] > s["f_start_mhz"]:
        raise InvalidInputError("f_start_mhz/f_stop_mhz: grid requires f_start < f_stop")
    return s["f_start_mhz"], s["f_stop_mhz"], s["points"]


def _noise(s):
    if not s["noise_sigma"] >= 0:
        raise InvalidInputError("noise_sigma: must be >= 0")
    return s["noise_sigma"]


def _fit_config(s):
    n = s.get("n_lines", "auto")
    if n != "auto":
        n = _coerce("n_lines", n, int)
    try:
        return FitConfig(n, s["max_iterations"], s["convergence_tol"], s.get("peak_threshold"))
    except InvalidInputError as exc:
        raise InvalidInputError(f"n_lines/max_iterations/convergence_tol/peak_threshold: {exc}") from None


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


# --- commands --------------------------------------------------------------------


def cmd_simulate(args):
    s = resolve_settings("simulate", args)
    spec = synthesize_spectrum(_nv_params(s), _field(s), _drive(s), _grid(s), _noise(s), s["seed"])
    _emit(spectrum_to_csv(spec), args.out)
    return 0


def cmd_fit(args):
    s = resolve_settings("fit", args)
    config = _fit_config(s)
    try:
        spectrum = read_spectrum(args.input)
    except FileNotFoundError:
        raise InvalidInputError(f"input file not found: {args.input}") from None
    except IsADirectoryError:
        raise InvalidInputError(f"input is a directory: {args.input}") from None
    guesses = detect_peaks(spectrum, config)
    if not guesses:
        raise InvalidInputError("no resonances detected")
    result = fit_lorentzians(spectrum, config, guesses)
    _emit(dumps(result), args.out)
    return 0


def cmd_link(args):
    s = resolve_settings("link", args)
    s.pop("seed")
    result = link_from_config(s)
    doc = result.to_dict()
    doc["mode"] = "endpoint" if result.modulation_index is None else "forward"
    _emit(dumps(doc), args.out)
    return 0


def _sweep_points(s, list_key):
    if "range" in s:
        parts = s["range"].split(":")
        try:
            start, stop = float(parts[0]), float(parts[1])
        except (IndexError, ValueError):
            raise InvalidInputError(f"range: expected 'start:stop', got {s['range']!r}") from None
        if len(parts) != 2 or not stop > start:
            raise InvalidInputError(f"range: must be ascending 'start:stop', got {s['range']!r}")
        return field_values(start, stop, s["step"])
    values = s[list_key]
    if len(values) < 2:
        raise InvalidInputError(f"{list_key}: a sweep needs >= 2 points")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidInputError(f"{list_key}: values must be strictly ascending")
    return values


def _write_sweep(out, spectra, fits, sweep):
    if out is None:
        raise InvalidInputError("out: sweeps need an output directory (--out)")
    os.makedirs(out, exist_ok=True)
    for k, (spec, fit) in enumerate(zip(spectra, fits)):
        write_spectrum(os.path.join(out, f"spectrum_{k:03d}.csv"), spec)
        write_json(os.path.join(out, f"fit_{k:03d}.json"), fit)
    write_json(os.path.join(out, "sweep.json"), sweep)
    print(dumps(sweep), end="")


def cmd_sweep_field(args):
    s = resolve_settings("sweep-field", args)
    fields = _sweep_points(s, "fields_gauss")
    if s["jobs"] < 1:
        raise InvalidInputError("jobs: must be >= 1")
    spectra, fits, sweep = run_field_sweep(
        fields, s.get("b_vector", s["direction"]), _drive(s), _grid(s), _nv_params(s), _noise(s),
        s["seed"], _fit_config(s), s["jobs"],
    )
    _write_sweep(args.out, spectra, fits, sweep)
    return 0


def cmd_sweep_power(args):
    s = resolve_settings("sweep-power", args)
    powers = _sweep_points(s, "powers_dbm")
    if s["jobs"] < 1:
        raise InvalidInputError("jobs: must be >= 1")
    spectra, fits, sweep = run_power_sweep(
        powers, _field(s), _drive(s), _grid(s), _nv_params(s), _noise(s),
        s["seed"], _fit_config(s), s["jobs"],
    )
    _write_sweep(args.out, spectra, fits, sweep)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "link": cmd_link,
    "sweep-field": cmd_sweep_field,
    "sweep-power": cmd_sweep_power,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nvrfof: error: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, DegenerateFitError) as exc:
        print(f"nvrfof: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"nvrfof: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"nvrfof: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
