"""``shapeflow`` command-line entry point.

Exit codes: 0 success, 2 bad arguments or invalid input data, 3 I/O or
parse failure, 4 the evolution aborted (outputs for the completed
iterations are still written).
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

from . import __version__, kernels
from .curvature import curvature_field
from .errors import ParseError, ShapeflowError, ValidationError
from .flow import FlowConfig, Termination, run
from .levelset import (DEFAULT_BOUNDS, DEFAULT_N, AnalyticSource, GridSource, GridSpec, NoiseSpec,
                       Phantom, add_noise, empirical_snr_db, rasterize, read_sdf1, write_sdf1)
from .mcubes import marching_cubes, mc_report, surface_metrics
from .mesh import read_obj, vertex_normals, write_obj, write_ply

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_ABORT = 0, 2, 3, 4
MANIFEST_VERSION = 1


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.prog}: {message}", EXIT_ARGS)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _load_grid(path):
    try:
        return read_sdf1(path)
    except OSError as exc:
        raise CliError(f"cannot read grid {path}: {exc.strerror or exc}", EXIT_IO) from None
    except ParseError as exc:
        raise CliError(f"cannot parse grid {path}: {exc}", EXIT_IO) from None


def _load_mesh(path):
    try:
        return read_obj(path)
    except OSError as exc:
        raise CliError(f"cannot read mesh {path}: {exc.strerror or exc}", EXIT_IO) from None
    except ParseError as exc:
        raise CliError(f"cannot parse mesh {path}: {exc}", EXIT_IO) from None
    except ValidationError as exc:
        raise CliError(f"invalid mesh {path}: {exc}", EXIT_ARGS) from None


def _apply_threads(n):
    env = os.environ.get("SHAPEFLOW_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise CliError(f"SHAPEFLOW_THREADS must be an integer, got {env!r}", EXIT_ARGS) from None
    if n is not None:
        if n < 1:
            raise CliError("thread count must be >= 1", EXIT_ARGS)
        kernels.set_threads(n)


def _finite(x):
    return float(x) if math.isfinite(x) else None


def _clean(obj):
    """JSON-safe copy: NaN/inf become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, float):
        return _finite(obj)
    return obj


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_phantom(args):
    try:
        phantom = Phantom.parse(args.shape)
        spec = GridSpec.cube(args.n, args.min, args.max)
        noise = None
        if args.noise:
            if args.snr is None:
                raise CliError("--noise needs --snr", EXIT_ARGS)
            noise = NoiseSpec(args.noise, args.snr, args.seed)
    except (ValueError, ValidationError) as exc:
        raise CliError(str(exc), EXIT_ARGS) from None
    clean = rasterize(phantom, spec)
    grid = add_noise(clean, noise) if noise else clean
    try:
        write_sdf1(grid, args.output, encoding=args.encoding)
    except OSError as exc:
        raise CliError(f"cannot write {args.output}: {exc.strerror or exc}", EXIT_IO) from None
    if noise:
        print(f"empirical SNR {empirical_snr_db(clean, grid):.3f} dB", file=sys.stderr)
    return EXIT_OK


def _evolve_settings(args):
    """Resolve CLI flags (or a manifest) into (config dict, source dict)."""
    if args.manifest:
        try:
            m = json.loads(Path(args.manifest).read_text())
        except OSError as exc:
            raise CliError(f"cannot read manifest: {exc.strerror or exc}", EXIT_IO) from None
        except json.JSONDecodeError as exc:
            raise CliError(f"cannot parse manifest: {exc}", EXIT_IO) from None
        if m.get("command") != "evolve":
            raise CliError("manifest does not describe an evolve run", EXIT_ARGS)
        return m["config"], m["source"]
    if (args.grid is None) == (args.analytic is None):
        raise CliError("exactly one of --grid and --analytic is required", EXIT_ARGS)
    config = dict(alpha=args.alpha, beta=args.beta, dt=args.dt, max_iters=args.iters,
                  rel_energy_tol=args.tol, initial_radius=args.radius, subdiv=args.subdiv,
                  export_every=args.export_every, energy_threshold=args.energy_threshold)
    if args.analytic is not None:
        source = {"kind": "analytic", "shape": args.analytic}
    else:
        source = {"kind": "grid", "path": str(args.grid)}
    return config, source


def cmd_evolve(args):
    if args.out is None:
        raise CliError("--out is required", EXIT_ARGS)
    cfg_dict, source = _evolve_settings(args)
    try:
        config = FlowConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_ARGS) from None

    if source["kind"] == "analytic":
        try:
            src = AnalyticSource(Phantom.parse(source["shape"]))
        except ValueError as exc:
            raise CliError(str(exc), EXIT_ARGS) from None
    else:
        grid = _load_grid(source["path"])
        digest = _sha256(source["path"])
        if source.get("sha256") not in (None, digest):
            print(f"warning: {source['path']} differs from the manifest's input", file=sys.stderr)
        source = {**source, "sha256": digest}
        src = GridSource(grid)

    prefix = str(args.out)
    try:
        Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory: {exc.strerror or exc}", EXIT_IO) from None
    outputs = {k: f"{prefix}{ext}" for k, ext in
               (("mesh", ".obj"), ("curvature", ".curv.ply"), ("energy", ".energy.csv"),
                ("manifest", ".manifest"))}

    def snapshot(it, mesh):
        write_obj(mesh, f"{prefix}.{it:05d}.obj")

    result = run(config, src, on_snapshot=snapshot if config.export_every else None)

    curv = curvature_field(result.mesh, vertex_normals(result.mesh, strict=False), strict=False)
    try:
        write_obj(result.mesh, outputs["mesh"])
        write_ply(result.mesh, curv.H, outputs["curvature"])
        result.trace.write_csv(outputs["energy"])
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "tool": "shapeflow",
            "version": __version__,
            "command": "evolve",
            "config": config.to_dict(),
            "source": source,
            "outputs": outputs,
            "termination": result.termination.value,
            "diagnostic": result.diagnostic,
            "iterations": len(result.trace),
        }
        _write_json(manifest, outputs["manifest"])
    except OSError as exc:
        raise CliError(f"cannot write outputs: {exc.strerror or exc}", EXIT_IO) from None

    if result.termination is Termination.ABORTED:
        print(f"aborted: {result.diagnostic}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def cmd_mcubes(args):
    grid = _load_grid(args.grid)
    surface = marching_cubes(grid, args.iso)
    if surface.empty:
        print(f"warning: no crossing of iso={args.iso}; writing an empty mesh", file=sys.stderr)
    try:
        write_obj(surface.mesh, args.output)
        if args.report:
            report = mc_report(surface, GridSource(grid, margin=0)) if not surface.empty else {
                "vertex_count": 0, "face_count": 0}
            report["iso"] = surface.iso
            _write_json(_clean(report), args.report)
    except OSError as exc:
        raise CliError(f"cannot write outputs: {exc.strerror or exc}", EXIT_IO) from None
    return EXIT_OK


def cmd_curvature(args):
    mesh = _load_mesh(args.mesh)
    curv = curvature_field(mesh, vertex_normals(mesh, strict=False), strict=False)
    try:
        write_ply(mesh, curv.H, args.output)
    except OSError as exc:
        raise CliError(f"cannot write {args.output}: {exc.strerror or exc}", EXIT_IO) from None
    return EXIT_OK


def cmd_metrics(args):
    if (args.grid is None) == (args.analytic is None):
        raise CliError("exactly one of --grid and --analytic is required", EXIT_ARGS)
    mesh = _load_mesh(args.mesh)
    if args.grid is not None:
        src = GridSource(_load_grid(args.grid), margin=0)
    else:
        try:
            src = AnalyticSource(Phantom.parse(args.analytic))
        except ValueError as exc:
            raise CliError(str(exc), EXIT_ARGS) from None
    try:
        metrics = surface_metrics(mesh, src)
    except ShapeflowError as exc:
        raise CliError(f"cannot evaluate the field on this mesh: {exc}", EXIT_ARGS) from None
    text = json.dumps(_clean(metrics), indent=2, sort_keys=True) + "\n"
    if args.output:
        try:
            Path(args.output).write_text(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.output}: {exc.strerror or exc}", EXIT_IO) from None
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    p = _Parser(prog="shapeflow", description="Surface reconstruction from level-set grids.")
    p.add_argument("--version", action="version", version=f"shapeflow {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="cap worker threads (SHAPEFLOW_THREADS overrides)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ph = sub.add_parser("phantom", help="rasterize a test shape to an SDF1 grid")
    ph.add_argument("--shape", required=True, choices=[x.value for x in Phantom])
    ph.add_argument("--n", type=_positive_int, default=DEFAULT_N, help="nodes per axis (default %(default)s)")
    ph.add_argument("--min", type=float, default=DEFAULT_BOUNDS[0], help="lower bound on every axis")
    ph.add_argument("--max", type=float, default=DEFAULT_BOUNDS[1], help="upper bound on every axis")
    ph.add_argument("--noise", choices=["gaussian", "uniform"], help="add noise (needs --snr)")
    ph.add_argument("--snr", type=float, help="target signal-to-noise ratio in dB")
    ph.add_argument("--seed", type=int, default=0, help="noise seed")
    ph.add_argument("--encoding", choices=["le64", "ascii"], default="le64")
    ph.add_argument("-o", "--output", required=True, help="SDF1 file to write")
    ph.set_defaults(func=cmd_phantom)

    d = FlowConfig()
    ev = sub.add_parser("evolve", help="evolve a sphere onto the zero level set")
    src = ev.add_mutually_exclusive_group()
    src.add_argument("--grid", help="SDF1 grid to reconstruct")
    src.add_argument("--analytic", choices=[x.value for x in Phantom], help="use an exact test shape instead of a grid")
    ev.add_argument("--manifest", help="re-run the configuration stored in a manifest")
    ev.add_argument("--alpha", type=float, default=d.alpha, help="weight of the phi^2 term")
    ev.add_argument("--beta", type=float, default=d.beta, help="weight of the tangential smoothing term")
    ev.add_argument("--dt", type=float, default=d.dt, help="step size")
    ev.add_argument("--iters", type=int, default=d.max_iters, help="iteration budget")
    ev.add_argument("--subdiv", type=int, default=d.subdiv, help="icosphere subdivision level")
    ev.add_argument("--radius", type=float, default=d.initial_radius, help="starting sphere radius")
    ev.add_argument("--tol", type=float, default=d.rel_energy_tol, help="stop when the relative energy change is this small")
    ev.add_argument("--export-every", type=int, default=d.export_every, help="write PREFIX.NNNNN.obj every K iterations")
    ev.add_argument("--energy-threshold", type=float, default=None, help="also stop once the energy drops below this")
    ev.add_argument("--out", help="output prefix")
    ev.set_defaults(func=cmd_evolve)

    mc = sub.add_parser("mcubes", help="marching-cubes baseline")
    mc.add_argument("--grid", required=True)
    mc.add_argument("--iso", type=float, default=0.0, help="level to extract")
    mc.add_argument("-o", "--output", required=True)
    mc.add_argument("--report", help="also write a JSON quality report here")
    mc.set_defaults(func=cmd_mcubes)

    cu = sub.add_parser("curvature", help="per-vertex mean curvature as PLY quality")
    cu.add_argument("--mesh", required=True)
    cu.add_argument("-o", "--output", required=True)
    cu.set_defaults(func=cmd_curvature)

    me = sub.add_parser("metrics", help="distance and curvature summary as JSON")
    me.add_argument("--mesh", required=True)
    me.add_argument("--grid")
    me.add_argument("--analytic", choices=[x.value for x in Phantom])
    me.add_argument("-o", "--output", help="JSON file (default: stdout)")
    me.set_defaults(func=cmd_metrics)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        _apply_threads(args.threads)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
