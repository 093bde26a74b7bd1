"""
Command-line front end.

    qst-fidelity point --omega-j 0.04 --delta 0.8 --gamma-h 0.8 --spin-up 1 --spin-down 0
    qst-fidelity fig3 --output fig3.csv
    qst-fidelity oracle-check --spin-up 1 --spin-down 0

Every option may also come from a ``--config`` file of ``key = value``
lines (``#`` starts a comment); keys are the long option names with
underscores.  Command-line flags take precedence.

Exit status: 0 on success, 1 on usage or validation errors, 2 on I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__, analytic, sweep, timedomain
from .core import DeviceParams, SpinState, ValidationError, to_pm_basis, validate

SUBCOMMANDS = ("point", "sweep2d", "sweep-gamma", "oracle-check", "fig2", "fig3")
ORACLE_TOLERANCE = 2e-3

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

# option name -> (type, default); every entry is settable from a config file
OPTIONS = {
    "omega_e": ("float", 0.0),
    "omega_1": ("float", 0.0),
    "omega_2": ("float", 0.0),
    "omega_j": ("float", 0.04),
    "delta": ("complex", 0.8),
    "gamma_h": ("float", 0.8),
    "spin_up": ("complex", None),
    "spin_down": ("complex", None),
    "beta_plus": ("complex", None),
    "beta_minus": ("complex", None),
    "normalize": ("bool", False),
    "engine": ("str", "analytic"),
    "method": ("str", "residue"),
    "format": ("str", None),
    "output": ("str", None),
    "levels": ("int", timedomain.DEFAULT_LEVELS),
    "bandwidth": ("float", timedomain.DEFAULT_BANDWIDTH),
    "t_final": ("float", None),
    "dt": ("float", None),
    "x_axis": ("str", None),
    "y_axis": ("str", None),
    "gamma_min": ("float", 0.05),
    "gamma_max": ("float", 5.0),
    "count": ("int", None),
    "scale": ("str", "log"),
    "optimize": ("bool", False),
    "tol": ("float", 1e-3),
    "workers": ("int", None),
}


class UsageError(Exception):
    pass


def parse_complex(text: str, key: str = "value") -> complex:
    """Parse ``"re"`` or ``"re,im"``."""
    parts = [p.strip() for p in str(text).split(",")]
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise UsageError(f"malformed complex literal for {key}: {text!r} (expected 're' or 're,im')")


def _convert(key: str, raw):
    kind = OPTIONS[key][0]
    if raw is None or not isinstance(raw, str):
        return raw
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise UsageError(f"invalid {kind} for {key}: {raw!r}") from None
    if kind == "complex":
        return parse_complex(raw, key)
    return raw.strip()


def read_config(path: str) -> dict:
    """Parse a ``key = value`` config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise OSError(f"cannot read config file {path}: {exc.strerror}") from exc
    values = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, value)
    return values


@dataclass
class RunConfig:
    command: str
    params: DeviceParams
    spin: SpinState
    engine: str = "analytic"
    method: str = "residue"
    format: str = "json"
    output: str | None = None
    options: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qst-fidelity", description="Photon-to-spin transfer fidelity in a double quantum dot.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file; flags override it")
        for key, (kind, _) in OPTIONS.items():
            flag = "--" + key.replace("_", "-")
            if kind == "bool":
                p.add_argument(flag, action="store_const", const=True, default=None)
            else:
                p.add_argument(flag, default=None, metavar=key.upper())
    return parser


def _spin_from(values: dict) -> SpinState | None:
    z = [values.get("spin_up"), values.get("spin_down")]
    x = [values.get("beta_plus"), values.get("beta_minus")]
    has_z, has_x = any(v is not None for v in z), any(v is not None for v in x)
    if has_z and has_x:
        raise UsageError("give the spin either as --spin-up/--spin-down or as --beta-plus/--beta-minus, not both")
    if not (has_z or has_x):
        return None
    pair = z if has_z else x
    names = ("--spin-up", "--spin-down") if has_z else ("--beta-plus", "--beta-minus")
    for v, n in zip(pair, names):
        if v is None:
            raise UsageError(f"missing {n}")
    norm = bool(values.get("normalize"))
    if has_z:
        return to_pm_basis(pair[0], pair[1], auto_normalize=norm)
    return SpinState.normalized(*pair) if norm else SpinState(*pair)


def parse_config(argv: list[str], config_path: str | None = None) -> RunConfig:
    """Combine defaults, an optional config file and command-line flags."""
    args = build_parser().parse_args(argv)
    values = {k: default for k, (_, default) in OPTIONS.items()}
    path = config_path or args.config
    if path:
        values.update(read_config(path))
    for key in OPTIONS:
        raw = getattr(args, key)
        if raw is not None:
            values[key] = _convert(key, raw)

    spin = _spin_from(values)
    if spin is None:
        if args.command in ("fig2", "fig3"):
            spin = SpinState.up()
        else:
            raise UsageError("missing spin state: give --spin-up/--spin-down or --beta-plus/--beta-minus")

    params = DeviceParams(
        omega_e=values["omega_e"], omega_1=values["omega_1"], omega_2=values["omega_2"],
        omega_j=values["omega_j"], delta=values["delta"], gamma_h=values["gamma_h"],
    )
    if values["engine"] not in sweep.ENGINES:
        raise UsageError(f"unknown engine {values['engine']!r}; expected one of {sweep.ENGINES}")
    if values["method"] not in ("residue", "quadrature"):
        raise UsageError(f"unknown method {values['method']!r}")
    fmt = values["format"] or ("json" if args.command in ("point", "oracle-check") else "csv")
    if fmt not in ("csv", "json"):
        raise UsageError(f"unknown format {fmt!r}; expected csv or json")
    if args.command == "sweep2d" and not (values["x_axis"] and values["y_axis"]):
        raise UsageError("sweep2d needs --x-axis and --y-axis")
    return RunConfig(
        command=args.command, params=params, spin=spin, engine=values["engine"],
        method=values["method"], format=fmt, output=values["output"], options=values,
    )


def parse_axis(text: str, flag: str) -> sweep.Axis:
    """``name:start:stop:count[:linear|log][:rel]``."""
    parts = text.split(":")
    if len(parts) < 4:
        raise UsageError(f"{flag}: expected name:start:stop:count[:scale][:rel], got {text!r}")
    try:
        start, stop, count = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise UsageError(f"{flag}: bad number in {text!r}") from None
    scale, relative = "linear", False
    for extra in parts[4:]:
        if extra in ("linear", "log"):
            scale = extra
        elif extra == "rel":
            relative = True
        else:
            raise UsageError(f"{flag}: unknown axis modifier {extra!r}")
    return sweep.Axis(parts[0], start, stop, count, scale, relative)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def to_csv(result: sweep.SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.columns)
    for rec in result.records:
        writer.writerow([_fmt(rec.get(c)) for c in result.columns])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def to_json(result: sweep.SweepResult, extra: dict | None = None) -> str:
    payload = {"metadata": result.metadata, "columns": result.columns, "records": result.records}
    if extra:
        payload.update(extra)
    return json.dumps(_json_safe(payload), indent=2, allow_nan=False) + "\n"


def load_json(path: str) -> sweep.SweepResult:
    """Read back a result written by :func:`emit` in JSON format."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return sweep.SweepResult(columns=data["columns"], records=data["records"], metadata=data["metadata"])


def emit(result: sweep.SweepResult, fmt: str, path: str | None, extra: dict | None = None) -> None:
    text = to_csv(result) if fmt == "csv" else to_json(result, extra)
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _param_record(params: DeviceParams) -> dict:
    d = complex(params.delta)
    return {
        "omega_e": float(params.omega_e), "omega_1": float(params.omega_1), "omega_2": float(params.omega_2),
        "omega_j": float(params.omega_j), "delta_re": d.real, "delta_im": d.imag, "gamma_h": float(params.gamma_h),
    }


def _metadata(cfg: RunConfig, **extra) -> dict:
    meta = {
        "command": cfg.command,
        "engine": cfg.engine,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "spin": {
            "beta_plus": [cfg.spin.beta_plus.real, cfg.spin.beta_plus.imag],
            "beta_minus": [cfg.spin.beta_minus.real, cfg.spin.beta_minus.imag],
        },
    }
    meta.update(extra)
    return meta


def _td_options(cfg: RunConfig) -> sweep.TimeDomainOptions:
    o = cfg.options
    return sweep.TimeDomainOptions(levels=o["levels"], bandwidth=o["bandwidth"], t_final=o["t_final"], dt=o["dt"])


def run_point(cfg: RunConfig):
    params = validate(cfg.params)
    rec = _param_record(params)
    if cfg.engine == "analytic":
        ints = analytic.overlap_integrals(params, cfg.method)
        rec["fidelity"] = analytic.fidelity(params, cfg.spin, cfg.method)
        rec["re_i_pm"], rec["im_i_pm"] = ints.i_pm.real, ints.i_pm.imag
    else:
        res = sweep.timedomain_point(params, cfg.spin, _td_options(cfg))
        rec["fidelity"] = res.fidelity
        rec["re_i_pm"], rec["im_i_pm"] = res.i_pm.real, res.i_pm.imag
        rec.update(fidelity_escaped=res.fidelity_escaped, dot_population=res.dot_population,
                   t_final=res.t_final, dt=res.dt)
    result = sweep.SweepResult(list(rec), [rec], _metadata(cfg, method=cfg.method))
    return result, {"fidelity": rec["fidelity"]}


def run_oracle_check(cfg: RunConfig):
    params = validate(cfg.params)
    f_an = analytic.fidelity(params, cfg.spin)
    res = sweep.timedomain_point(params, cfg.spin, _td_options(cfg))
    diff = abs(res.fidelity - f_an)
    rec = _param_record(params)
    rec.update(
        fidelity_analytic=f_an, fidelity_timedomain=res.fidelity, abs_difference=diff,
        dot_population=res.dot_population, t_final=res.t_final, dt=res.dt,
        levels=cfg.options["levels"], bandwidth=cfg.options["bandwidth"],
        within_tolerance=diff <= ORACLE_TOLERANCE,
    )
    meta = _metadata(cfg, tolerance=ORACLE_TOLERANCE)
    meta["engine"] = "analytic+timedomain"
    return sweep.SweepResult(list(rec), [rec], meta), None


def run_sweep_command(cfg: RunConfig):
    o = cfg.options
    optimum = None
    if cfg.command == "fig3":
        spec = sweep.fig3_spec(cfg.engine, cfg.params, cfg.spin)
    elif cfg.command == "fig2":
        spec = sweep.fig2_spec(cfg.engine, cfg.params, cfg.spin, count=o["count"] or 41)
    elif cfg.command == "sweep-gamma":
        axis = sweep.Axis("gamma_h", o["gamma_min"], o["gamma_max"], o["count"] or 100, o["scale"])
        spec = sweep.SweepSpec((axis,), cfg.params, cfg.spin, cfg.engine, _td_options(cfg))
        if o["optimize"]:
            optimum = sweep.find_optimal_gamma(cfg.params, cfg.spin, (o["gamma_min"], o["gamma_max"]), o["tol"])
    else:
        axes = (parse_axis(o["x_axis"], "--x-axis"), parse_axis(o["y_axis"], "--y-axis"))
        spec = sweep.SweepSpec(axes, cfg.params, cfg.spin, cfg.engine, _td_options(cfg))
    if cfg.command in ("fig2", "fig3") and cfg.engine == "timedomain":
        spec = sweep.SweepSpec(spec.axes, spec.baseline, spec.spin, spec.engine, _td_options(cfg))
    result = sweep.run_sweep(spec, workers=o["workers"])
    result.metadata["command"] = cfg.command
    if optimum is not None:
        result.metadata["optimum"] = {
            "gamma_h": optimum.gamma, "fidelity": optimum.fidelity, "unimodal": optimum.unimodal,
            "flat": optimum.flat, "converged": optimum.converged,
        }
    return result, None


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        if cfg.command == "point":
            result, extra = run_point(cfg)
        elif cfg.command == "oracle-check":
            result, extra = run_oracle_check(cfg)
        else:
            result, extra = run_sweep_command(cfg)
    except (UsageError, ValidationError) as exc:
        print(f"qst-fidelity: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except timedomain.IntegrationError as exc:
        print(f"qst-fidelity: integration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"qst-fidelity: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        emit(result, cfg.format, cfg.output, extra)
    except OSError as exc:
        print(f"qst-fidelity: I/O error: cannot write {cfg.output}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
