"""Command-line front end: one JSON config in, trajectories, field tables and reports out.

Exit codes: 0 success, 1 verification failure, 2 config or domain error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np
from scipy.interpolate import RectBivariateSpline

from . import diagnostics
from .errors import ConfigError, DomainError, IntegrationError, QuadratureError
from .families import PARAMETER_NAMES, Variant, family_from_dict, fields
from .residual import (
    SOLID_CORE_SOURCES,
    Grid,
    default_grid,
    discriminate_solid_core_source,
    residual_sweep,
)
from .scaling_ode import detect_blowup

EXIT_OK, EXIT_VERIFY_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family"],
    "properties": {
        "family": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variant", "N", "lam", "alpha", "a0", "a1"],
            "properties": {
                "variant": {"enum": [v.value for v in Variant]},
                "N": {"type": "integer", "minimum": 1},
                **{name: _NUM for name in PARAMETER_NAMES if name not in ("N", "t_end", "rel_tol", "abs_tol")},
                "t_end": _POS,
                "rel_tol": _POS,
                "abs_tol": _POS,
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_min": _NUM,
                "t_max": _NUM,
                "r_min": _NUM,
                "r_max": _NUM,
                "n_t": {"type": "integer", "minimum": 2},
                "n_r": {"type": "integer", "minimum": 2},
                "fd_step": _POS,
            },
        },
        "solve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tol": _POS, "time_cap": _POS},
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "threshold": _POS,
                "source": {"enum": list(SOLID_CORE_SOURCES)},
                "discriminate_sources": {"type": "boolean"},
            },
        },
        "mass": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t": {"type": "number", "minimum": 0},
                "quad_tol": _POS,
                "r_max": {"type": ["number", "null"]},
                "coefficient_mode": {"enum": list(diagnostics.COEFFICIENT_MODES)},
            },
        },
        "blowup": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "exponent": _NUM,
                "n_samples": {"type": "integer", "minimum": 3},
                "tol": _POS,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"type": "string"}, "format": {"enum": ["csv", "json"]}},
        },
    },
}


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}") from exc
    return cfg


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if not isinstance(v, int) else v for v in row])
    return buf.getvalue()


def _grid(family, cfg):
    g = dict(cfg.get("grid", {}))
    fd = g.pop("fd_step", 1e-4)
    base = default_grid(family, g.get("n_t", 16), g.get("n_r", 16), fd)
    return Grid(
        g.get("t_min", base.t_min),
        g.get("t_max", base.t_max),
        g.get("r_min", base.r_min),
        g.get("r_max", base.r_max),
        g.get("n_t", base.n_t),
        g.get("n_r", base.n_r),
        fd,
        fd,
    )


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_solve(cfg, args):
    family = family_from_dict(cfg["family"])
    opts = cfg.get("solve", {})
    report = detect_blowup(family.ode, opts.get("time_cap", family.t_end), opts.get("tol", 1e-10),
                           family.rel_tol, family.abs_tol)
    traj = family.trajectory
    if args.format == "json":
        doc = {
            "family": cfg["family"],
            "trajectory": {
                "status": traj.status.value,
                "t": traj.t.tolist(),
                "a": traj.a.tolist(),
                "adot": traj.adot.tolist(),
            },
            "blowup": report.to_dict(),
        }
        _emit(_dumps(doc), args.output)
    else:
        table = _csv(("t", "a", "adot"), zip(traj.t, traj.a, traj.adot))
        _emit(table, args.output)
        if args.output is not None:
            Path(str(args.output) + ".blowup.json").write_text(_dumps(report.to_dict()))
    return EXIT_OK


def field_table(family, grid):
    """Rows (t, r, rho, u[, support]) on the tensor grid; rho is 0 outside the support."""
    T, R = grid.nodes()
    T, R = T.ravel(), R.ravel()
    if family.variant is Variant.SOLID_CORE_2D:
        keep = R > family.r0
        T, R = T[keep], R[keep]
    rho, u, support = fields(family, T, R)
    compact = family.variant is Variant.PRESSURELESS_THETA_NE1
    rho = np.where(support, rho, 0.0)
    if compact:
        return ("t", "r", "rho", "u", "support"), [
            (t, r, p, v, int(s)) for t, r, p, v, s in zip(T, R, rho, u, support)
        ]
    return ("t", "r", "rho", "u"), list(zip(T, R, rho, u))


def cmd_fields(cfg, args):
    family = family_from_dict(cfg["family"])
    header, rows = field_table(family, _grid(family, cfg))
    if args.format == "json":
        _emit(_dumps({name: [row[i] for row in rows] for i, name in enumerate(header)}),
              args.output)
    else:
        _emit(_csv(header, rows), args.output)
    return EXIT_OK


def sampler_from_table(path):
    """Quintic-spline sampler built from a ``t,r,rho,u`` table on a tensor grid."""
    try:
        with open(path) as fh:
            reader = csv.DictReader(fh)
            rows = [(float(d["t"]), float(d["r"]), float(d["rho"]), float(d["u"])) for d in reader]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: unreadable field table: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: empty field table")
    data = np.array(rows)
    ts, rs = np.unique(data[:, 0]), np.unique(data[:, 1])
    if len(ts) * len(rs) != len(data):
        raise ConfigError(f"{path}: rows do not form a tensor grid")
    order = np.lexsort((data[:, 1], data[:, 0]))
    data = data[order]
    shape = (len(ts), len(rs))
    k = min(5, len(ts) - 1, len(rs) - 1)
    rho = RectBivariateSpline(ts, rs, data[:, 2].reshape(shape), kx=k, ky=k)
    u = RectBivariateSpline(ts, rs, data[:, 3].reshape(shape), kx=k, ky=k)
    t_lo, t_hi, r_lo, r_hi = ts[0], ts[-1], rs[0], rs[-1]

    def sample(t, r):
        t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
        if t.min() < t_lo or t.max() > t_hi or r.min() < r_lo or r.max() > r_hi:
            raise DomainError(f"sample outside the table range t in [{t_lo!r}, {t_hi!r}], "
                              f"r in [{r_lo!r}, {r_hi!r}]")
        return rho.ev(t, r), u.ev(t, r)

    return sample


def cmd_verify(cfg, args):
    family = family_from_dict(cfg["family"])
    opts = cfg.get("verify", {})
    threshold = args.threshold if args.threshold is not None else opts.get("threshold", 1e-6)
    grid = _grid(family, cfg)
    sampler = sampler_from_table(args.fields_file) if args.fields_file else None
    source = opts.get("source", "pressure")
    report = residual_sweep(family, grid, sampler=sampler, corruption=args.negative_control,
                            source=source)
    ok = report.passes(threshold)
    doc = {"report": report.to_dict(), "threshold": threshold, "passed": ok,
           "negative_control": args.negative_control,
           "sampler": "table" if args.fields_file else "family"}
    if family.variant is Variant.SOLID_CORE_2D and opts.get("discriminate_sources", False):
        doc["source_discrimination"] = discriminate_solid_core_source(family, grid, threshold)
    _emit(_dumps(doc), args.output)
    if not ok:
        print(f"verification failed: scaled residuals mass={report.max_scaled_mass!r} "
              f"momentum={report.max_scaled_momentum!r} exceed {threshold!r}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VERIFY_FAIL


def cmd_mass(cfg, args):
    family = family_from_dict(cfg["family"])
    opts = cfg.get("mass", {})
    mode = opts.get("coefficient_mode", "standard")
    result = diagnostics.total_mass(family, opts.get("t", 0.0), opts.get("quad_tol", 1e-10),
                                    opts.get("r_max"), mode)
    doc = {"mass": result.to_dict(), "coefficient_mode": mode,
           "surface_coefficients": diagnostics.compare_surface_coefficients(family.N)}
    _emit(_dumps(doc), args.output)
    return EXIT_OK


def cmd_blowup(cfg, args):
    family = family_from_dict(cfg["family"])
    opts = cfg.get("blowup", {})
    est = diagnostics.blowup_rate_estimate(family, opts.get("exponent", family.N - 0.5),
                                           opts.get("n_samples", 40), opts.get("tol", 1e-10))
    if args.format == "csv":
        _emit(est.products_csv(), args.output)
    else:
        _emit(_dumps(est.to_dict()), args.output)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "fields": cmd_fields,
    "verify": cmd_verify,
    "mass": cmd_mass,
    "blowup": cmd_blowup,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="radialns", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON run configuration")
        p.add_argument("-o", "--output", default=None, help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        if name == "verify":
            p.add_argument("--threshold", type=float, default=None)
            p.add_argument("--negative-control", choices=("exponent", "exp_profile"), default=None,
                           help="verify deliberately corrupted fields")
            p.add_argument("--fields-file", default=None,
                           help="verify a t,r,rho,u table instead of the closed form")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = cfg.get("output", {})
        if args.output is None:
            args.output = out.get("path")
        if args.format is None:
            args.format = out.get("format", "json" if args.command in ("verify", "mass") else "csv")
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, QuadratureError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception as exc:  # the exit-code contract covers unexpected failures too
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
