"""
Command-line front end.

Every subcommand validates its arguments, writes the fully resolved
configuration to ``<out>/config.json`` and then runs. Re-running with
``emupscale --config <out>/config.json`` repeats the run with identical
outputs (timings in ``stats.json`` aside).

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io as eio
from .em1d import LoopLoopSurvey, hz_secondary_many, log_to_layered_model, read_well_log, parse_well_log
from .linsolve import ConvergenceError, SingularMatrixError

log = logging.getLogger("emupscale")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

COMMANDS = ("forward1d", "upscale1d", "forward3d", "upscale3d", "compare3d", "synth")
# keys of the parsed namespace that are not part of a run configuration
_INTERNAL = {"config", "func", "log_level"}


class InvalidInput(ValueError):
    """Raised for arguments that fail validation."""


# ------------------------------------------------------------------ helpers
def _positive(name, values):
    for v in np.atleast_1d(values):
        if not float(v) > 0:
            raise InvalidInput(f"{name} must be positive, got {v}")


def _survey(cfg):
    if cfg.get("survey"):
        d = eio.read_json(cfg["survey"])
        if cfg.get("frequencies"):
            d["frequencies"] = cfg["frequencies"]
        return LoopLoopSurvey.from_dict(d)
    return LoopLoopSurvey(cfg["height"], cfg["separation"], tuple(cfg["frequencies"]))


def _loop(cfg):
    from .forward3d import LoopSource

    x0, x1, y0, y1, z = cfg["loop"]
    return LoopSource((x0, x1), (y0, y1), z)


def _receivers(cfg):
    from .forward3d import ReceiverGrid

    x0, x1, y0, y1, z, d = cfg["receivers"]
    return ReceiverGrid.regular((x0, x1), (y0, y1), z, d)


def _fine_3d(cfg):
    mesh = eio.read_mesh(cfg["mesh"])
    model = eio.read_model(cfg["model"])
    if len(model) != mesh.n_cells:
        raise InvalidInput(f"model has {len(model)} cells, mesh has {mesh.n_cells}")
    return mesh, model


def _ftag(f):
    return f"{f:g}Hz"


# ------------------------------------------------------------- subcommands
def cmd_synth(cfg, out):
    from . import synth

    if cfg["kind"] == "log":
        spec = synth.LogSpec(
            n_samples=cfg["n_samples"],
            spacing=cfg["spacing"],
            top=0.5 * cfg["spacing"],
            median=cfg["median"],
            std_log10=cfg["std_log10"],
            correlation_length=cfg["correlation_length"],
            decades=cfg["decades"],
        )
        depth, sigma = synth.lognormal_log(spec, seed=cfg["seed"])
        eio.write_table(
            out / "log.csv",
            ("depth_m", "conductivity_S_per_m"),
            [{"depth_m": d, "conductivity_S_per_m": s} for d, s in zip(depth, sigma)],
        )
        return {"samples": int(depth.size)}
    from .mesh import build_uniform_mesh

    mesh = build_uniform_mesh(cfg["n"], cfg["h"], cfg["origin"])
    prisms = [
        synth.Prism((p[0], p[2], p[4]), (p[1], p[3], p[5]), p[6]) for p in (cfg["prism"] or [])
    ]
    spec = synth.BlockModelSpec(cfg["background"], tuple(prisms), cfg["surface"], cfg["air"])
    sigma = synth.block_model(mesh, spec, jitter=cfg["jitter"], seed=cfg["seed"])
    eio.write_mesh(out / "mesh.json", mesh)
    eio.write_model(out / "model.json", sigma)
    return {"cells": mesh.n_cells, "min": float(sigma.min()), "max": float(sigma.max())}


def cmd_forward1d(cfg, out):
    model, _ = read_well_log(cfg["log"])
    survey = _survey(cfg)
    d = hz_secondary_many(model, survey)
    rows = [
        {"frequency": f, "re_percent": v.real, "im_percent": v.imag, "magnitude_percent": abs(v)}
        for f, v in zip(survey.frequencies, d)
    ]
    eio.write_table(out / "data.csv", ("frequency", "re_percent", "im_percent", "magnitude_percent"), rows)
    eio.write_json(out / "data.json", {"survey": survey.to_dict(), "data": rows})
    return {"frequencies": len(rows)}


def cmd_upscale1d(cfg, out):
    from .upscale1d import (
        AVERAGE_METHODS,
        CoarseLayering,
        average_upscale,
        average_values,
        data_relative_error,
        upscale_log,
    )

    with open(cfg["log"], newline="") as fh:
        depth, sigma = parse_well_log(fh.read())
    fine, logged = log_to_layered_model(depth, sigma)
    try:
        layering = CoarseLayering.uniform(logged[0], logged[1], cfg["coarse_thickness"])
    except ValueError as err:
        raise InvalidInput(f"logged interval {logged[0]:g}-{logged[1]:g} m: {err}") from None
    survey = _survey(cfg)
    freqs = survey.frequencies
    d_fine = hz_secondary_many(fine, survey)
    avg = {m: average_upscale(fine, layering, m) for m in AVERAGE_METHODS}
    d_avg = {m: hz_secondary_many(avg[m], survey) for m in AVERAGE_METHODS}
    models, reports = upscale_log(fine, layering, survey)
    columns = ("frequency", "model", "magnitude_percent", "relative_error_percent", "n_layers")
    all_rows = []
    for n, f in enumerate(freqs):
        d_up = hz_secondary_many(models[n], survey, [f])[0]
        rows = [
            {"frequency": f, "model": "fine", "magnitude_percent": abs(d_fine[n]),
             "relative_error_percent": 0.0, "n_layers": fine.n_layers}
        ]
        for m in AVERAGE_METHODS:
            rows.append({"frequency": f, "model": m, "magnitude_percent": abs(d_avg[m][n]),
                         "relative_error_percent": data_relative_error(d_fine[n], d_avg[m][n]),
                         "n_layers": layering.n_layers})
        rows.append({"frequency": f, "model": "upscaled", "magnitude_percent": abs(d_up),
                     "relative_error_percent": data_relative_error(d_fine[n], d_up),
                     "n_layers": layering.n_layers})
        eio.write_table(out / f"table_{_ftag(f)}.csv", columns, rows)
        all_rows.extend(rows)
        layer_rows = []
        for k in range(layering.n_layers):
            idx, w = layering.fine_members(fine, k)
            r = {"layer": k, "top_m": layering.boundaries[k], "bottom_m": layering.boundaries[k + 1]}
            for m in AVERAGE_METHODS:
                r[m] = average_values(fine.conductivities[idx], w, m)
            r["upscaled"] = reports[n][k].sigma
            r["misfit"] = reports[n][k].misfit
            r["converged"] = reports[n][k].converged
            layer_rows.append(r)
        eio.write_table(
            out / f"coarse_model_{_ftag(f)}.csv",
            ("layer", "top_m", "bottom_m", *AVERAGE_METHODS, "upscaled", "misfit", "converged"),
            layer_rows,
        )
    eio.write_table(out / "table.csv", columns, all_rows)
    return {"frequencies": len(freqs), "coarse_layers": layering.n_layers}


def cmd_forward3d(cfg, out):
    from .forward3d import forward3d, interpolate_B, write_receiver_csv

    mesh, model = _fine_3d(cfg)
    src, rx = _loop(cfg), _receivers(cfg)
    for f in cfg["frequencies"]:
        res = forward3d(mesh, model, src, f, backend=cfg["backend"])
        B = interpolate_B(mesh, res.b, rx.locations)
        write_receiver_csv(out / f"receivers_{_ftag(f)}.csv", rx.locations, B, f)
    return {"receivers": rx.n_receivers, "edges": mesh.n_edges}


def _upscale_cfg(cfg, frequency, padding):
    from .upscale3d import UpscaleConfig

    return UpscaleConfig(
        frequency=frequency,
        padding=padding,
        kind=cfg["kind"],
        max_iter=cfg["max_iter"],
        gtol=cfg["gtol"],
        backend=cfg["backend"],
    )


def cmd_upscale3d(cfg, out):
    from .upscale3d import upscale_model

    mesh, model = _fine_3d(cfg)
    ucfg = _upscale_cfg(cfg, cfg["frequency"], cfg["padding"])
    t0 = time.perf_counter()
    res = upscale_model(mesh, model, tuple(cfg["factor"]), ucfg, workers=cfg["workers"],
                        on_failure=cfg["on_failure"])
    wall = time.perf_counter() - t0
    eio.write_mesh(out / "coarse_mesh.json", res.coarse_mesh)
    eio.write_model(out / "tensors.json", res.model.params())
    cols = ("cell", "status", "iterations", "initial_misfit", "final_misfit", "gradient_ratio", "converged")
    eio.write_table(
        out / "reports.csv",
        cols,
        [
            {"cell": r.k, "status": r.status, "iterations": r.iterations, "initial_misfit": r.initial_misfit,
             "final_misfit": r.final_misfit, "gradient_ratio": r.gradient_ratio, "converged": r.converged}
            for r in res.reports
        ],
    )
    stats = {"wall_seconds": wall, "workers": cfg["workers"], "coarse_cells": res.coarse_mesh.n_cells,
             "not_converged": sum(not r.converged for r in res.reports)}
    eio.write_json(out / "stats.json", stats)
    return stats


def cmd_compare3d(cfg, out):
    from .forward3d import compare_coarse_models, write_receiver_csv

    mesh, model = _fine_3d(cfg)
    src, rx = _loop(cfg), _receivers(cfg)
    t0 = time.perf_counter()
    rows, reports, fields = compare_coarse_models(
        mesh, model, tuple(cfg["factor"]), src, rx, cfg["frequencies"], paddings=cfg["paddings"],
        kind=cfg["kind"], background=cfg["background"], surface=cfg["surface"], workers=cfg["workers"],
        backend=cfg["backend"], upscale_options={"max_iter": cfg["max_iter"], "gtol": cfg["gtol"]},
    )
    cols = ("frequency", "model", "delta_B_percent", "delta_B_fine_denominator_percent", "n_cells", "n_edges")
    eio.write_table(out / "delta_B.csv", cols, rows)
    for f in cfg["frequencies"]:
        eio.write_table(out / f"delta_B_{_ftag(f)}.csv", cols, [r for r in rows if r["frequency"] == f])
    for (f, name), dB in fields.items():
        write_receiver_csv(out / f"secondary_{name}_{_ftag(f)}.csv", rx.locations, dB, f)
    for (f, p), res in reports.items():
        eio.write_model(out / f"tensors_p{p}_{_ftag(f)}.json", res.model.params())
    stats = {"wall_seconds": time.perf_counter() - t0, "workers": cfg["workers"]}
    eio.write_json(out / "stats.json", stats)
    return {"rows": len(rows)}


# ------------------------------------------------------------------ parser
def _add_common(p):
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--log-level", default="WARNING", help="logging level (default: WARNING)")


def _add_survey1d(p):
    p.add_argument("--log", required=True, help="well-log CSV with columns depth_m,conductivity_S_per_m")
    p.add_argument("--survey", help="survey JSON {height, separation, frequencies, moment}")
    p.add_argument("--height", type=float, default=40.0, help="dipole height above ground, m (default: 40)")
    p.add_argument("--separation", type=float, default=8.1, help="dipole separation, m (default: 8.1)")
    p.add_argument("--frequencies", type=float, nargs="+", help="frequencies, Hz (default: 300)")


def _add_3d_inputs(p):
    p.add_argument("--mesh", required=True, help='mesh JSON {"n": [..], "h": [..], "origin": [..]} (m)')
    p.add_argument("--model", required=True, help="cell conductivities, S/m (.json or .bin)")
    p.add_argument("--backend", default="auto", choices=("auto", "pardiso", "superlu"),
                   help="sparse direct solver (default: auto)")


def _add_survey3d(p):
    p.add_argument("--loop", type=float, nargs=5, metavar=("X0", "X1", "Y0", "Y1", "Z"),
                   default=[200.0, 1400.0, 400.0, 1200.0, 1200.0],
                   help="horizontal loop corners and elevation, m")
    p.add_argument("--receivers", type=float, nargs=6, metavar=("X0", "X1", "Y0", "Y1", "Z", "DX"),
                   default=[300.0, 1300.0, 500.0, 1100.0, 1225.0, 50.0],
                   help="receiver grid extent, elevation and spacing, m")


def _add_upscale(p):
    p.add_argument("--factor", type=int, nargs=3, default=[4, 4, 4], help="coarsening factor per axis")
    p.add_argument("--kind", default="B", choices=("E", "B"), help="local data: total E or total B (default: B)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
    p.add_argument("--max-iter", type=int, default=50, help="Gauss-Newton iterations per cell")
    p.add_argument("--gtol", type=float, default=1e-8, help="relative gradient tolerance")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="emupscale",
        description="Upscale electrical conductivity models and compare EM responses. "
        "Units: conductivity S/m, lengths m, frequencies Hz.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="re-run from a config.json written by an earlier run")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic well log or 3D block model")
    _add_common(p)
    p.add_argument("--kind", choices=("log", "block"), default="log")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-samples", type=int, default=320, help="log samples (default: 320)")
    p.add_argument("--spacing", type=float, default=0.25, help="log sample spacing, m (default: 0.25)")
    p.add_argument("--median", type=float, default=1e-2, help="median log conductivity, S/m")
    p.add_argument("--std-log10", type=float, default=0.8, help="standard deviation of log10(sigma)")
    p.add_argument("--correlation-length", type=float, default=1.0, help="log correlation length, m")
    p.add_argument("--decades", type=float, default=4.0, help="width of the allowed log10 range")
    p.add_argument("--n", type=int, nargs=3, default=[32, 32, 32], help="block model cells per axis")
    p.add_argument("--h", type=float, nargs=3, default=[50.0, 50.0, 50.0], help="cell widths, m")
    p.add_argument("--origin", type=float, nargs=3, default=[0.0, 0.0, 0.0], help="mesh origin, m")
    p.add_argument("--background", type=float, default=4.5e-3, help="background conductivity, S/m")
    p.add_argument("--prism", type=float, nargs=7, action="append",
                   metavar=("X0", "X1", "Y0", "Y1", "Z0", "Z1", "SIGMA"),
                   help="conductive prism (m, S/m); repeatable")
    p.add_argument("--surface", type=float, default=None, help="air-earth interface elevation, m")
    p.add_argument("--air", type=float, default=1e-8, help="air conductivity, S/m (default: 1e-8)")
    p.add_argument("--jitter", type=float, default=0.0, help="log10 noise on earth cells")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("forward1d", help="loop-loop H-field data over a layered earth from a well log")
    _add_common(p)
    _add_survey1d(p)
    p.set_defaults(func=cmd_forward1d)

    p = sub.add_parser("upscale1d", help="optimized and averaged coarse layers for a well log")
    _add_common(p)
    _add_survey1d(p)
    p.add_argument("--coarse-thickness", type=float, default=10.0, help="coarse layer thickness, m")
    p.set_defaults(func=cmd_upscale1d)

    p = sub.add_parser("forward3d", help="3D loop-source simulation, B at receivers")
    _add_common(p)
    _add_3d_inputs(p)
    _add_survey3d(p)
    p.add_argument("--frequencies", type=float, nargs="+", default=[1.0, 20.0], help="Hz")
    p.set_defaults(func=cmd_forward3d)

    p = sub.add_parser("upscale3d", help="SPD tensor per coarse cell")
    _add_common(p)
    _add_3d_inputs(p)
    _add_upscale(p)
    p.add_argument("--frequency", type=float, default=1.0, help="Hz (default: 1)")
    p.add_argument("--padding", type=int, default=4, help="fine padding cells per side (default: 4)")
    p.add_argument("--on-failure", choices=("raise", "average"), default="raise",
                   help="abort, or fall back to the arithmetic average for failed cells")
    p.set_defaults(func=cmd_upscale3d)

    p = sub.add_parser("compare3d", help="secondary-field errors of averaged and upscaled coarse models")
    _add_common(p)
    _add_3d_inputs(p)
    _add_survey3d(p)
    _add_upscale(p)
    p.add_argument("--frequencies", type=float, nargs="+", default=[1.0, 20.0], help="Hz")
    p.add_argument("--paddings", type=int, nargs="+", default=[4, 8], help="padding sizes to compare")
    p.add_argument("--background", type=float, default=0.01,
                   help="uniform earth conductivity of the reference for secondary fields, S/m")
    p.add_argument("--surface", type=float, default=None,
                   help="air-earth interface elevation of the reference model, m")
    p.set_defaults(func=cmd_compare3d)
    return parser


def _validate(cfg):
    cmd = cfg["command"]
    if cmd in ("forward1d", "upscale1d"):
        if not cfg.get("survey") and not cfg.get("frequencies"):
            cfg["frequencies"] = [300.0]
        if cfg.get("frequencies"):
            _positive("frequencies", cfg["frequencies"])
        _positive("height and separation", [cfg["height"], cfg["separation"]])
        if cmd == "upscale1d":
            _positive("coarse thickness", cfg["coarse_thickness"])
    if cmd in ("forward3d", "compare3d"):
        _positive("frequencies", cfg["frequencies"])
        _positive("receiver spacing", cfg["receivers"][5])
    if cmd in ("upscale3d", "compare3d"):
        if any(int(f) < 1 for f in cfg["factor"]):
            raise InvalidInput(f"coarsening factors must be positive, got {cfg['factor']}")
        if cfg["workers"] < 1 or cfg["max_iter"] < 1:
            raise InvalidInput("workers and max-iter must be at least 1")
        _positive("gtol", cfg["gtol"])
    if cmd == "upscale3d":
        _positive("frequency", cfg["frequency"])
        if cfg["padding"] < 0:
            raise InvalidInput("padding must be non-negative")
    if cmd == "compare3d" and any(p < 0 for p in cfg["paddings"]):
        raise InvalidInput("paddings must be non-negative")
    if cmd == "synth":
        if cfg["n_samples"] < 2:
            raise InvalidInput("a log needs at least two samples")
        _positive("spacing, median, background and air", [cfg["spacing"], cfg["median"], cfg["background"], cfg["air"]])
        if cfg["std_log10"] < 0 or cfg["jitter"] < 0:
            raise InvalidInput("std-log10 and jitter must be non-negative")
        for p in cfg["prism"] or []:
            _positive("prism conductivity", p[6])
    for key in ("log", "survey", "mesh", "model"):
        if cfg.get(key) and not Path(cfg[key]).is_file():
            raise InvalidInput(f"--{key}: no such file {cfg[key]}")


def _parse(argv):
    parser = build_parser()
    # --config is looked at first: the stored command decides which
    # subparser the remaining flags (e.g. a new --out) belong to
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config is None:
        return parser, parser.parse_args(argv)
    try:
        stored = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as err:
        parser.error(f"cannot read config {known.config}: {err}")
    cmd = stored.get("command") if isinstance(stored, dict) else None
    if cmd not in COMMANDS:
        parser.error(f"config {known.config} has no valid 'command'")
    if cmd not in rest:
        rest = [cmd] + rest
    # stored values become defaults; explicit flags still override them
    sub = parser._subparsers._group_actions[0].choices[cmd]
    stored = {k: v for k, v in stored.items() if k not in ("command", "version")}
    sub.set_defaults(**stored)
    for action in sub._actions:
        if action.dest in stored:
            action.required = False
    return parser, parser.parse_args(rest)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, args = _parse(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_INVALID
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = {k: v for k, v in vars(args).items() if k not in _INTERNAL}
    try:
        _validate(cfg)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        eio.write_json(out / "config.json", {**cfg, "version": __version__})
        summary = args.func(cfg, out)
    except (InvalidInput, ValueError, KeyError, FileNotFoundError) as err:
        print(f"emupscale {args.command}: error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (SingularMatrixError, ConvergenceError, ArithmeticError, MemoryError, RuntimeError) as err:
        print(f"emupscale {args.command}: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps({"command": args.command, "out": str(out), **(summary or {})}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
