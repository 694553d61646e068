"""Command-line front end.

Subcommands mirror the pipeline stages so each is runnable standalone from
prior artifacts: check, find-gain, explore, approx, optimize, pipeline, plot.
Exit codes: 0 success, 1 infeasible/failed verdict, 2 usage or parse errors.
"""

import argparse
import os
import sys

import numpy as np

from . import io as pio
from .certify import PassivityMode, certify_gain, find_passivating_gain
from .errors import (
    DimensionUnsupported,
    EmptyRegion,
    Infeasible,
    PassLqrError,
    PlantFormatError,
    SeedNotPassivating,
)
from .flow import FlowConfig, evaluate_cost, integrate_flow
from .linalg import unvec_gain
from .pipeline import (
    ATLAS_FILE,
    LEDGER_FILE,
    POLYTOPE_FILE,
    TRAJECTORY_FILE,
    PipelineOptions,
    run_pipeline,
)
from .polytope import inscribe_polytope
from .region import ExploreConfig, explore

_VERDICT_ERRORS = (Infeasible, SeedNotPassivating, EmptyRegion)
_USAGE_ERRORS = (PlantFormatError, DimensionUnsupported)


def _workers():
    base = os.cpu_count() or 1
    cap = os.environ.get("SYNTH_THREADS")
    if cap:
        try:
            base = min(base, max(1, int(cap)))
        except ValueError:
            raise PlantFormatError(f"SYNTH_THREADS must be an integer, got {cap!r}")
    return base


def _parse_box(text, d):
    """'lo..hi,lo..hi' with one lo..hi range per gain dimension."""
    parts = text.split(",")
    if len(parts) != d:
        raise PlantFormatError(f"--box needs {d} comma-separated lo..hi ranges, got {len(parts)}")
    box = np.zeros((d, 2))
    for i, part in enumerate(parts):
        if ".." not in part:
            raise PlantFormatError(f"--box range {part!r} must look like lo..hi")
        lo, _, hi = part.partition("..")
        try:
            box[i] = [float(lo), float(hi)]
        except ValueError as exc:
            raise PlantFormatError(f"--box range {part!r}: {exc}") from exc
        if box[i, 0] >= box[i, 1]:
            raise PlantFormatError(f"--box range {part!r} needs lo < hi")
    return box


def _load_plant_mode(args):
    plant, mode = pio.load_plant(args.plant)
    if getattr(args, "mode", None):
        mode = PassivityMode(kind=args.mode)
    return plant, mode


def cmd_check(args):
    plant, mode = _load_plant_mode(args)
    gain = pio.parse_gain_text(args.gain, plant.m, plant.n)
    try:
        cert = certify_gain(plant, gain, mode, seed=args.seed)
    except Infeasible as exc:
        print(f"FAIL gain does not certify ({mode.kind}); "
              f"best normalized lambda_max = {exc.best_lambda_max:.6g}")
        return 1
    print(f"PASS gain certifies ({mode.kind})")
    print(f"  normalized lambda_max = {cert.lambda_max_constraint:.6g}  "
          f"lambda_min(P) = {cert.lambda_min_P:.6g}  "
          f"equality residual = {cert.equality_residual:.3g}")
    print(f"  P = {pio.format_array(cert.P)}")
    return 0


def cmd_find_gain(args):
    plant, mode = _load_plant_mode(args)
    pair = find_passivating_gain(plant, mode, seed=args.seed)
    print(f"K = {pio.format_array(pair.K)}")
    print(f"Z = {pio.format_array(pair.Z)}")
    print(f"W = {pio.format_array(pair.W)}")
    return 0


def cmd_explore(args):
    plant, mode = _load_plant_mode(args)
    d = plant.m * plant.n
    seed_gain = pio.parse_gain_text(args.seed_gain, plant.m, plant.n)
    box = _parse_box(args.box, d) if args.box else None
    region = explore(plant, mode, ExploreConfig(
        seed_gain=seed_gain, edge=args.edge, max_cubes=args.max_cubes,
        search_box=box, seed=args.seed, workers=_workers()))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, ATLAS_FILE)
    pio.save_region(path, region, mode)
    print(f"verified {len(region.cubes)} cubes ({len(region.rejected)} rejected) -> {path}")
    return 0


def cmd_approx(args):
    plant, _ = _load_plant_mode(args)
    region, _ = pio.load_region(args.atlas)

    def score(kvec):
        try:
            return evaluate_cost(plant, unvec_gain(kvec, plant.m, plant.n)).f_K
        except PassLqrError:
            return float("inf")

    polytope = inscribe_polytope(region, score)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, POLYTOPE_FILE)
    pio.save_polytope(path, polytope)
    print(f"inscribed box with center {pio.format_array(polytope.chebyshev_center)} -> {path}")
    return 0


def cmd_optimize(args):
    plant, _ = _load_plant_mode(args)
    polytope = pio.load_polytope(args.polytope)
    start = pio.parse_gain_text(args.start, plant.m, plant.n) if args.start \
        else unvec_gain(polytope.chebyshev_center, plant.m, plant.n)
    traj = integrate_flow(plant, polytope, start,
                          FlowConfig(alpha=args.alpha, tol_grad=args.tol))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, TRAJECTORY_FILE)
    pio.save_trajectory(path, traj, plant.m, plant.n)
    final = traj.samples[-1]
    print(f"{traj.termination}: K = {pio.format_array(traj.terminal_gain)} "
          f"f = {final.f:.9g} |M grad| = {final.proj_grad_norm:.3g} -> {path}")
    return 0 if traj.termination != "step_collapse" else 1


def cmd_pipeline(args):
    plant, mode = _load_plant_mode(args)
    d = plant.m * plant.n
    box = _parse_box(args.box, d) if args.box else None
    seed_gain = pio.parse_gain_text(args.seed_gain, plant.m, plant.n) if args.seed_gain else None
    options = PipelineOptions(edge=args.edge, search_box=box, max_cubes=args.max_cubes,
                              seed=args.seed, alpha=args.alpha, tol_grad=args.tol,
                              workers=_workers(), seed_gain=seed_gain)
    ledger, artifacts = run_pipeline(plant, mode, options, out_dir=args.out,
                                     plant_file=args.plant)
    if ledger.already_passive:
        print("optimal gain already passivates; pipeline short-circuited")
    else:
        print(f"pipeline done: {ledger.n_cubes} cubes, termination {ledger.termination}")
    print(f"K* = {pio.format_array(ledger.k_star)}  f* = {ledger.f_star:.9g}")
    print(f"K^ = {pio.format_array(ledger.k_hat)}  f^ = {ledger.f_hat:.9g}")
    print(f"ledger -> {os.path.join(args.out, LEDGER_FILE)}")
    if args.plot:
        out = _plot_from_ledger(os.path.join(args.out, LEDGER_FILE), args.out,
                                resolution=args.raster,
                                passivity_resolution=args.passivity_raster,
                                draw_passivity=not args.no_raster,
                                window=None, seed=args.seed)
        print(f"figure -> {out}")
    return 0


def _resolve(path, base_dir):
    if os.path.isabs(path) or os.path.exists(path):
        return path
    return os.path.join(base_dir, path)


def _plot_from_ledger(ledger_path, out_dir, resolution, passivity_resolution,
                      draw_passivity, window, seed):
    from .plotting import render_figure

    ledger = pio.load_ledger(ledger_path)
    base = os.path.dirname(os.path.abspath(ledger_path))
    plant, mode = pio.load_plant(_resolve(ledger["plant_file"], base))
    region = polytope = None
    trajectories = []
    if ledger.get("atlas_file"):
        region, _ = pio.load_region(_resolve(ledger["atlas_file"], base))
    if ledger.get("polytope_file"):
        polytope = pio.load_polytope(_resolve(ledger["polytope_file"], base))
    if ledger.get("trajectory_file"):
        trajectories.append(pio.load_trajectory(_resolve(ledger["trajectory_file"], base)))
    k_star = pio.parse_array(ledger["k_star"], field="k_star") if "k_star" in ledger else None
    f_star = float(ledger["f_star"]) if "f_star" in ledger else None
    window_arr = np.asarray(window, dtype=float) if window is not None else None
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, "figure.svg")
    return render_figure(plant, mode, out_path, region=region, polytope=polytope,
                         trajectories=trajectories, k_star=k_star, f_star=f_star,
                         window=window_arr, resolution=resolution,
                         passivity_resolution=passivity_resolution,
                         draw_passivity=draw_passivity, seed=seed, workers=_workers())


def cmd_plot(args):
    window = _parse_box(args.window, 2) if args.window else None
    out_dir = args.out or os.path.dirname(os.path.abspath(args.ledger))
    out = _plot_from_ledger(args.ledger, out_dir, resolution=args.raster,
                            passivity_resolution=args.passivity_raster,
                            draw_passivity=not args.no_raster, window=window, seed=args.seed)
    print(f"figure -> {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="passlqr",
        description="Passivity-constrained LQR synthesis: certify gains, map the "
                    "passivating region, inscribe a convex box and optimize inside it.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, plant=True):
        if plant:
            p.add_argument("--plant", required=True, help="plant description file")
            p.add_argument("--mode", choices=["strict", "nonstrict"],
                           help="override the mode given in the plant file")
        p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")

    p = sub.add_parser("check", help="certify one gain")
    add_common(p)
    p.add_argument("--gain", required=True, help="inline gain, e.g. '[[-0.5, 0]]'")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("find-gain", help="find any passivating gain")
    add_common(p)
    p.set_defaults(func=cmd_find_gain)

    p = sub.add_parser("explore", help="grow the certified cube atlas")
    add_common(p)
    p.add_argument("--seed-gain", required=True, help="inline passivating seed gain")
    p.add_argument("--edge", type=float, default=0.4, help="cube edge length (default 0.4)")
    p.add_argument("--box", help="search box, lo..hi per dimension, comma separated")
    p.add_argument("--max-cubes", type=int, default=400)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("approx", help="inscribe a box polytope in an atlas")
    add_common(p)
    p.add_argument("--atlas", required=True, help="atlas file from 'explore'")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("optimize", help="projected gradient flow inside a polytope")
    add_common(p)
    p.add_argument("--polytope", required=True, help="polytope file from 'approx'")
    p.add_argument("--start", help="inline start gain (default: polytope center)")
    p.add_argument("--alpha", type=float, default=1.0, help="learning rate")
    p.add_argument("--tol", type=float, default=None, help="projected-gradient tolerance")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("pipeline", help="run all stages and write a ledger")
    add_common(p)
    p.add_argument("--edge", type=float, default=0.4)
    p.add_argument("--box", help="search box, lo..hi per dimension, comma separated")
    p.add_argument("--seed-gain", help="inline seed gain (default: automatic)")
    p.add_argument("--max-cubes", type=int, default=400)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--plot", action="store_true", help="also render figure.svg")
    p.add_argument("--raster", type=int, default=201, help="stability/cost raster resolution")
    p.add_argument("--passivity-raster", type=int, default=81,
                   help="certification raster resolution (slower; default 81)")
    p.add_argument("--no-raster", action="store_true", help="skip the passivity raster")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("plot", help="render the figure for a finished run")
    p.add_argument("--ledger", required=True, help="ledger file from 'pipeline'")
    p.add_argument("--out", help="output directory (default: ledger directory)")
    p.add_argument("--raster", type=int, default=201, help="stability/cost raster resolution")
    p.add_argument("--passivity-raster", type=int, default=81,
                   help="certification raster resolution (slower; default 81)")
    p.add_argument("--no-raster", action="store_true", help="skip the passivity raster")
    p.add_argument("--window", help="plot window, lo..hi per axis, comma separated")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_plot)

    return parser


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"note: {message}", file=sys.stderr)


def main(argv=None):
    import warnings
    warnings.showwarning = _show_warning
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (*_USAGE_ERRORS, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _VERDICT_ERRORS as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    except PassLqrError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
