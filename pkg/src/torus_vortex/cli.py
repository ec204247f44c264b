"""Command line entry point: ``torus-vortex <command> [config.json] [flags]``.

Exit codes: 0 ok, 1 check failure, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .dynamics import (
    OdeParams,
    StopReason,
    dissipation_residual,
    four_vortex_config,
    integrate,
    symmetric_2v,
    symmetric_4v,
    two_vortex_config,
    write_trajectory_csv,
    xi_drift,
)
from .energy import default_q0, renormalized_W
from .errors import ConfigError, CoreUnresolved, TorusVortexError
from .fields import initial_data, nudge_to_grid, save_field
from .green import GreenTable, eval_F, load_or_build, load_table, save_table
from .output import atomic_write, csv_text, fmt, trajectory_svg, write_json
from .pde import PdeParams, compare_to_ode, run
from .torus import VortexConfiguration, min_image_diff

log = logging.getLogger("torus_vortex")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

# --------------------------------------------------------------------------
# configuration schema

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_GREEN = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_table": {"type": "integer", "minimum": 256},
        "cutoff_radius": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25},
        "cache_path": {"type": "string"},
    },
}
_VORTICES = {
    "type": "array",
    "minItems": 2,
    "items": {
        "type": "object",
        "additionalProperties": False,
        "required": ["x", "y", "d"],
        "properties": {"x": _NUM, "y": _NUM, "d": {"enum": [1, -1]}},
    },
}
_Q0 = {
    "oneOf": [
        {"const": "auto"},
        {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
    ]
}
_COMMON = {
    "lambda": _NUM,
    "dt": _POS,
    "t_max": {"type": "number", "minimum": 0},
    "output_dir": {"type": "string"},
    "green": _GREEN,
}


def _schema(command, required, **props):
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["command", *required],
        "properties": {"command": {"const": command}, **_COMMON, **props},
    }


SCHEMAS = {
    "ode": _schema(
        "ode",
        ["lambda", "dt", "t_max", "vortices"],
        vortices=_VORTICES,
        q0=_Q0,
        collision_stop_radius=_POS,
        sample_stride={"type": "integer", "minimum": 1},
    ),
    "sym": _schema(
        "sym",
        ["mode", "alpha0", "beta0", "lambda", "dt", "t_max"],
        mode={"enum": ["2v", "4v"]},
        alpha0=_NUM,
        beta0=_NUM,
        collision_stop_radius=_POS,
        sample_stride={"type": "integer", "minimum": 1},
    ),
    "pde": _schema(
        "pde",
        ["lambda", "epsilon", "grid_n", "dt", "t_max", "vortices"],
        vortices=_VORTICES,
        q0=_Q0,
        epsilon={"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        grid_n={"type": "integer", "minimum": 16},
        track_stride={"type": "integer", "minimum": 1},
        ode_dt=_POS,
    ),
    "compare": _schema(
        "compare",
        ["lambda", "epsilon_list", "grid_n", "dt", "t_max", "vortices"],
        vortices=_VORTICES,
        q0=_Q0,
        epsilon_list={
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        },
        grid_n={"type": "integer", "minimum": 16},
        track_stride={"type": "integer", "minimum": 1},
    ),
}


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def load_config(path, command) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno})", str(path)) from exc
    validate_config(cfg, command)
    return cfg


def validate_config(cfg, command) -> None:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object", "$")
    if cfg.get("command", command) != command:
        raise ConfigError(f"expected command {command!r}", "$.command")
    err = jsonschema.exceptions.best_match(
        jsonschema.Draft202012Validator(SCHEMAS[command]).iter_errors(cfg)
    )
    if err is not None:
        raise ConfigError(err.message, _json_path(err.absolute_path))
    if command in ("pde", "compare") and cfg["grid_n"] & (cfg["grid_n"] - 1):
        raise ConfigError("grid_n must be a power of two", "$.grid_n")
    if command == "compare":
        eps = cfg["epsilon_list"]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilon_list must be decreasing", "$.epsilon_list")


def configuration_from(cfg) -> VortexConfiguration:
    pos = np.array([[v["x"], v["y"]] for v in cfg["vortices"]], dtype=float)
    deg = np.array([v["d"] for v in cfg["vortices"]], dtype=int)
    if deg.sum() != 0:
        raise ConfigError("degrees must sum to zero on the torus", "$.vortices")
    if len(deg) % 2:
        raise ConfigError("need an even number of vortices", "$.vortices")
    q0 = cfg.get("q0", "auto")
    q = default_q0(pos, deg) if q0 == "auto" else np.array(q0, dtype=float)
    try:
        return VortexConfiguration(pos, deg, q)
    except ValueError as exc:
        raise ConfigError(str(exc), "$.q0" if "q is not" in str(exc) else "$.vortices") from exc


# --------------------------------------------------------------------------
# shared plumbing


def _git_describe() -> str:
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() or "unknown"


def _table(cfg, args) -> GreenTable:
    g = dict(cfg.get("green", {})) if cfg else {}
    cache = args.green_cache or g.get("cache_path")
    return load_or_build(
        n_table=g.get("n_table", 1024), cutoff_radius=g.get("cutoff_radius", 0.25), cache_path=cache
    )


def _out_dir(cfg, args) -> Path:
    out = Path(args.out or cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out, cfg, started, **extra):
    doc = {
        "config": cfg,
        "version": __version__,
        "git_describe": _git_describe(),
        "wall_time_s": time.perf_counter() - started,
        **extra,
    }
    write_json(out / "manifest.json", doc)


def _pairs_1based(pairs):
    return [[int(a) + 1, int(b) + 1] for a, b in pairs]


def _approach_bearings(rec):
    """Direction (degrees, counter-clockwise from +x) of a_k - a_j for each
    colliding pair (j, k) at the collision sample."""
    c = rec.final
    out = []
    for j, k in rec.collision_pairs:
        d = min_image_diff(c.positions[k], c.positions[j])
        out.append(float(np.degrees(np.arctan2(d[1], d[0])) % 360.0))
    return out


def _wrapped_paths(rec):
    pos = np.array([c.positions for c in rec.configurations])
    return [pos[:, j] for j in range(pos.shape[1])]


def _run_summary(rec):
    return {
        "stop_reason": rec.stop_reason.value,
        "final_time": rec.times[-1],
        "samples": len(rec.times),
        "collision_pairs": _pairs_1based(rec.collision_pairs),
        "approach_bearing_deg": _approach_bearings(rec),
        "xi_drift": xi_drift(rec),
        "dissipation_residual": dissipation_residual(rec),
    }


def _ode_params(cfg, lam=None):
    return OdeParams(
        lam=cfg["lambda"] if lam is None else lam,
        dt=cfg["dt"],
        t_max=cfg["t_max"],
        collision_stop_radius=cfg.get("collision_stop_radius", 1e-3),
        sample_stride=cfg.get("sample_stride", 1),
    )


# --------------------------------------------------------------------------
# commands


def cmd_ode(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config, "ode")
    c = configuration_from(cfg)
    p = _ode_params(cfg)
    t = _table(cfg, args)
    out = _out_dir(cfg, args)
    rec = integrate(c, t, p)
    write_trajectory_csv(rec, out / "trajectory.csv")
    atomic_write(
        out / "trajectory.svg",
        trajectory_svg(_wrapped_paths(rec), c.degrees, f"lambda={p.lam}"),
    )
    _manifest(out, cfg, started, **_run_summary(rec))
    print(f"{rec.stop_reason.value} at t={rec.times[-1]:.6g}; wrote {out}")
    return EXIT_RUNTIME if rec.stop_reason is StopReason.STEP_FAILURE else EXIT_OK


def cmd_sym(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config, "sym")
    p = _ode_params(cfg)
    a0, b0, lam = cfg["alpha0"], cfg["beta0"], cfg["lambda"]
    t = _table(cfg, args)
    out = _out_dir(cfg, args)
    if cfg["mode"] == "2v":
        reduced, c0 = symmetric_2v(a0, b0, lam, p, t), two_vortex_config(a0, b0)
    else:
        reduced, c0 = symmetric_4v(a0, b0, lam, p, t), four_vortex_config(a0, b0)
    write_trajectory_csv(reduced, out / "reduced.csv")
    extra = {"reduced": _run_summary(reduced)}
    overlays = ()
    if args.check_full:
        full = integrate(c0, t, p)
        write_trajectory_csv(full, out / "full.csv")
        extra["full"] = _run_summary(full)
        extra["max_deviation"] = _max_deviation(reduced, full)
        overlays = ((_wrapped_paths(full), c0.degrees),)
        print(f"max deviation reduced vs full: {extra['max_deviation']:.3e}")
    atomic_write(
        out / "sym.svg",
        trajectory_svg(
            _wrapped_paths(reduced), c0.degrees, f"{cfg['mode']} lambda={lam}", overlays
        ),
    )
    _manifest(out, cfg, started, **extra)
    pairs = extra["reduced"]["collision_pairs"]
    print(f"{reduced.stop_reason.value} at t={reduced.times[-1]:.6g}; pairs {pairs}; wrote {out}")
    return EXIT_RUNTIME if reduced.stop_reason is StopReason.STEP_FAILURE else EXIT_OK


def _max_deviation(a, b) -> float:
    ta, tb = np.array(a.times), np.array(b.times)
    la, lb = a.lifted, b.lifted
    t_end = min(ta[-1], tb[-1])
    keep = ta <= t_end
    dev = 0.0
    for j in range(la.shape[1]):
        for i in range(2):
            dev = max(dev, float(np.max(np.abs(np.interp(ta[keep], tb, lb[:, j, i]) - la[keep, j, i]))))
    return dev


def cmd_pde(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config, "pde")
    n, eps = cfg["grid_n"], cfg["epsilon"]
    c = nudge_to_grid(configuration_from(cfg), n)
    t = _table(cfg, args)
    out = _out_dir(cfg, args)
    try:
        u0 = initial_data(c, t, eps, n)
    except CoreUnresolved as exc:
        raise ConfigError(str(exc), "$.epsilon") from exc
    p = PdeParams(
        eps=eps, lam=cfg["lambda"], n=n, dt=cfg["dt"], t_max=cfg["t_max"],
        track_stride=cfg.get("track_stride", 100),
    )
    save_field(out / "initial.tvf", u0, eps)
    res = run(u0, p)
    save_field(out / "final.tvf", res.final, eps)
    rows = []
    for j, path in enumerate(res.paths, start=1):
        rows += [(fmt(tt), str(j), fmt(x), fmt(y), str(path.degree))
                 for tt, (x, y) in zip(path.times, path.positions)]
    rows.sort(key=lambda r: (float(r[0]), int(r[1])))
    atomic_write(out / "tracking.csv", csv_text(["t", "j", "x", "y", "degree"], rows))
    atomic_write(
        out / "energy.csv",
        csv_text(["t", "E"], [(fmt(a), fmt(b)) for a, b in zip(res.times, res.energies)]),
    )
    ode = integrate(c, t, OdeParams(lam=p.lam, dt=cfg.get("ode_dt", 1e-4), t_max=p.t_max))
    atomic_write(
        out / "pde.svg",
        trajectory_svg(
            [np.array(path.positions) for path in res.paths],
            [path.degree for path in res.paths],
            f"eps={eps} lambda={p.lam}",
            overlays=((_wrapped_paths(ode), c.degrees),),
        ),
    )
    E = np.array(res.energies)
    _manifest(
        out, cfg, started,
        k_eps=p.k_eps,
        nudged_positions=c.positions,
        nudged_q=c.q,
        tracked=res.tracked,
        energy_max_increase=float(np.max(np.diff(E), initial=0.0)),
        energy_initial=E[0],
        ode_stop_reason=ode.stop_reason.value,
    )
    print(f"PDE run to t={res.times[-1]:.6g}; tracked={res.tracked}; wrote {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config, "compare")
    n = cfg["grid_n"]
    for i, eps in enumerate(cfg["epsilon_list"]):
        if eps < 2.0 / n:
            raise ConfigError(f"eps={eps} below two grid spacings", f"$.epsilon_list[{i}]")
    c = configuration_from(cfg)
    t = _table(cfg, args)
    out = _out_dir(cfg, args)
    rows = compare_to_ode(
        c, t, cfg["lambda"], cfg["epsilon_list"], cfg["t_max"], n=n, dt=cfg["dt"],
        track_stride=cfg.get("track_stride", 100),
    )
    atomic_write(
        out / "compare.csv",
        csv_text(["eps", "n", "dt", "max_err"], [(fmt(r.eps), str(r.n), fmt(r.dt), fmt(r.max_err)) for r in rows]),
    )
    _manifest(out, cfg, started, rows=[r.__dict__ for r in rows])
    for r in rows:
        print(f"eps={r.eps:.6g} n={r.n} dt={r.dt:.3g} max_err={r.max_err:.4g}")
    return EXIT_OK


def cmd_green(args) -> int:
    if not args.green_cache:
        raise ConfigError("green needs --green-cache PATH", "--green-cache")
    path = Path(args.green_cache)
    if path.exists():
        t = load_table(path)
        action = "loaded"
    else:
        from .green import build_table

        t = build_table()
        save_table(t, path)
        action = "built"
    print(f"{action} {path}")
    print(f"n_table        {t.n_table}")
    print(f"cutoff_radius  {t.cutoff_radius}")
    print(f"mean_shift     {fmt(t.mean_shift)}")
    print(f"F(0.5, 0.5)    {fmt(eval_F(t, [0.5, 0.5]))}")
    print(f"F - log r at 0 {fmt(t.regular_part_at_origin)}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_checks

    try:
        if args.green_cache and Path(args.green_cache).exists():
            t = load_table(args.green_cache)
        else:
            t = load_or_build(n_table=256 if args.quick else 1024, cache_path=args.green_cache)
    except (ValueError, OSError) as exc:
        print(f"FAIL green cache unreadable: {exc}")
        return EXIT_CHECK
    results = run_checks(t, quick=args.quick)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  {'measured':>12}  {'tolerance':>10}  status")
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {r.measured:>12.3e}  {r.tolerance:>10.1e}  {status}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {
    "selftest": cmd_selftest,
    "ode": cmd_ode,
    "sym": cmd_sym,
    "pde": cmd_pde,
    "compare": cmd_compare,
    "green": cmd_green,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="torus-vortex", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name in ("ode", "sym", "pde", "compare"):
            sp.add_argument("config", help="JSON run configuration")
            sp.add_argument("--out", help="output directory (overrides output_dir)")
        if name == "selftest":
            sp.add_argument("--quick", action="store_true", help="reduced suite on a 256 table")
        if name == "sym":
            sp.add_argument("--check-full", action="store_true", help="also run the full system")
        sp.add_argument("--green-cache", help="Green table cache file")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TorusVortexError, OSError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
