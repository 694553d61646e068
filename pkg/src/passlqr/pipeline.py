"""End-to-end synthesis run: precheck, seed, explore, inscribe, optimize, persist.

Stages either short-circuit (optimal gain already passivates) or chain:
a feasible seed gain is found, the certified cube atlas is grown around it,
a box is inscribed, and the projected gradient flow is integrated from the
box center.  Every stage's artifact is written before the next stage runs,
so a failed run keeps its partial outputs.
"""

import hashlib
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import io as pio
from .certify import certify_gain, find_passivating_gain, PassivityMode
from .errors import Infeasible, NotStabilizing, PassLqrError, Rejected, SeedNotPassivating
from .flow import FlowConfig, evaluate_cost, integrate_flow
from .linalg import unvec_gain, vec_gain
from .polytope import inscribe_polytope
from .region import ExploreConfig, GainCube, explore, precheck_optimal, verify_cube

ATLAS_FILE = "atlas.csv"
POLYTOPE_FILE = "polytope.txt"
TRAJECTORY_FILE = "trajectory.csv"
LEDGER_FILE = "ledger.txt"


@dataclass
class PipelineOptions:
    edge: float = 0.4
    search_box: np.ndarray = None
    max_cubes: int = 400
    seed: int = 0
    alpha: float = 1.0
    tol_grad: float = None
    workers: int = 1
    seed_gain: np.ndarray = None     # overrides the automatic seed


@dataclass
class RunLedger:
    plant_file: str
    plant_name: str
    mode: str
    seed: int
    config_hash: str
    run_hash: str = ""
    already_passive: bool = False
    k_star: np.ndarray = None
    f_star: float = float("nan")
    seed_gain: np.ndarray = None
    edge: float = float("nan")
    search_box: np.ndarray = None
    n_cubes: int = 0
    n_rejected: int = 0
    k_hat: np.ndarray = None
    f_hat: float = float("nan")
    termination: str = ""
    cert_lambda_max: float = float("nan")
    cert_lambda_min_P: float = float("nan")
    atlas_file: str = ""
    polytope_file: str = ""
    trajectory_file: str = ""
    timings: dict = field(default_factory=dict)

    def as_pairs(self):
        pairs = [
            ("plant_file", self.plant_file),
            ("plant_name", self.plant_name),
            ("mode", self.mode),
            ("seed", str(self.seed)),
            ("config_hash", self.config_hash),
            ("run_hash", self.run_hash),
            ("already_passive", self.already_passive),
            ("k_star", self.k_star),
            ("f_star", self.f_star),
        ]
        if not self.already_passive:
            pairs += [
                ("seed_gain", self.seed_gain),
                ("edge", self.edge),
                ("search_box", self.search_box),
                ("n_cubes", str(self.n_cubes)),
                ("n_rejected", str(self.n_rejected)),
                ("atlas_file", self.atlas_file),
                ("polytope_file", self.polytope_file),
                ("trajectory_file", self.trajectory_file),
                ("termination", self.termination),
            ]
        pairs += [
            ("k_hat", self.k_hat),
            ("f_hat", self.f_hat),
            ("cert_lambda_max", self.cert_lambda_max),
            ("cert_lambda_min_P", self.cert_lambda_min_P),
        ]
        pairs += [(f"timing_{k}_s", pio.format_float(v)) for k, v in sorted(self.timings.items())]
        return pairs


def _hash_text(*parts):
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


def _config_text(plant, mode, options):
    box = "auto" if options.search_box is None else pio.format_array(options.search_box)
    seed_gain = "auto" if options.seed_gain is None else pio.format_array(options.seed_gain)
    return "|".join([
        pio.plant_to_text(plant, mode),
        pio.format_float(options.edge), box, str(options.max_cubes), str(options.seed),
        pio.format_float(options.alpha),
        "auto" if options.tol_grad is None else pio.format_float(options.tol_grad),
        seed_gain,
    ])


def _seed_cube_verifies(plant, mode, anchor, edge, seed):
    cube = GainCube(center=np.asarray(anchor, dtype=float), edge=edge, coord=(0,) * anchor.size)
    try:
        verify_cube(plant, cube, mode, seed=seed)
        return True
    except Rejected:
        return False


def _pick_seed_gain(plant, mode, options, box, candidate):
    """Exploration seed whose whole cube certifies: try the candidate gain,
    its componentwise clamp into the box, then a lattice scan of the box
    ordered by LQR cost (the interesting area sits near the optimal gain)."""
    half = 0.5 * options.edge
    lo, hi = box[:, 0] + half, box[:, 1] - half
    if np.any(lo > hi):
        raise SeedNotPassivating("search box is smaller than one cube")
    trials = [candidate]
    clamped = np.clip(candidate, lo, hi)
    if np.any(clamped != candidate):
        trials.append(clamped)
    d = plant.m * plant.n
    for divisions in (5, 9) if d <= 2 else (3,):
        axes = [np.linspace(lo[i], hi[i], divisions) for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)

        def cost(kvec):
            try:
                return evaluate_cost(plant, unvec_gain(kvec, plant.m, plant.n)).f_K
            except NotStabilizing:
                return float("inf")

        costs = [cost(pt) for pt in points]
        order = np.argsort(costs, kind="stable")
        trials.extend(points[idx] for idx in order[:40] if np.isfinite(costs[idx]))
    for trial in trials:
        if np.all(trial >= lo - 1e-12) and np.all(trial <= hi + 1e-12) \
                and _seed_cube_verifies(plant, mode, trial, options.edge, options.seed):
            return unvec_gain(trial, plant.m, plant.n)
    raise SeedNotPassivating(
        "no seed cube inside the search box could be verified; "
        "widen the box, reduce --edge, or pass --seed-gain explicitly")


def run_pipeline(plant, mode, options=None, out_dir=None, plant_file=""):
    """Run all stages; artifacts land in `out_dir` (created when given)."""
    options = options or PipelineOptions()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    ledger = RunLedger(
        plant_file=plant_file, plant_name=plant.name, mode=mode.kind, seed=options.seed,
        config_hash=_hash_text(_config_text(plant, mode, options)),
    )
    artifacts = {}
    hash_parts = [_config_text(plant, mode, options)]

    t0 = time.perf_counter()
    pre = precheck_optimal(plant, mode, seed=options.seed)
    ledger.timings["precheck"] = time.perf_counter() - t0
    ledger.k_star = pre.gain
    ledger.f_star = pre.cost

    if pre.already_passive:
        ledger.already_passive = True
        ledger.k_hat = pre.gain
        ledger.f_hat = pre.cost
        ledger.cert_lambda_max = pre.certificate.lambda_max_constraint
        ledger.cert_lambda_min_P = pre.certificate.lambda_min_P
        _finalize(ledger, hash_parts, out_dir)
        return ledger, artifacts

    if options.search_box is not None:
        box = np.asarray(options.search_box, dtype=float)
    else:
        box = None   # fixed after the seed is known

    t0 = time.perf_counter()
    if options.seed_gain is not None:
        candidate = vec_gain(np.asarray(options.seed_gain, dtype=float))
        certify_gain(plant, unvec_gain(candidate, plant.m, plant.n), mode, seed=options.seed)
    else:
        # also establishes feasibility of the passivation problem
        try:
            pair = find_passivating_gain(plant, PassivityMode.strict(), seed=options.seed)
        except (Infeasible, PassLqrError):
            pair = find_passivating_gain(plant, mode, seed=options.seed)
        candidate = vec_gain(pair.K)
    if box is None:
        box = np.column_stack([candidate - 10.0 * options.edge,
                               candidate + 10.0 * options.edge])
    seed_gain = _pick_seed_gain(plant, mode, options, box, candidate)
    ledger.timings["seed"] = time.perf_counter() - t0
    ledger.seed_gain = seed_gain
    ledger.edge = options.edge
    ledger.search_box = box

    t0 = time.perf_counter()
    region = explore(plant, mode, ExploreConfig(
        seed_gain=seed_gain, edge=options.edge, max_cubes=options.max_cubes,
        search_box=box, seed=options.seed, workers=options.workers))
    ledger.timings["explore"] = time.perf_counter() - t0
    ledger.n_cubes = len(region.cubes)
    ledger.n_rejected = len(region.rejected)
    artifacts["region"] = region
    atlas_text = pio.region_to_text(region, mode)
    hash_parts.append(atlas_text)
    if out_dir is not None:
        with open(os.path.join(out_dir, ATLAS_FILE), "w", encoding="utf-8") as fh:
            fh.write(atlas_text)
        ledger.atlas_file = ATLAS_FILE

    def score(kvec):
        try:
            return evaluate_cost(plant, unvec_gain(kvec, plant.m, plant.n)).f_K
        except NotStabilizing:
            return float("inf")

    t0 = time.perf_counter()
    polytope = inscribe_polytope(region, score)
    ledger.timings["approx"] = time.perf_counter() - t0
    artifacts["polytope"] = polytope
    poly_text = pio.polytope_to_text(polytope)
    hash_parts.append(poly_text)
    if out_dir is not None:
        with open(os.path.join(out_dir, POLYTOPE_FILE), "w", encoding="utf-8") as fh:
            fh.write(poly_text)
        ledger.polytope_file = POLYTOPE_FILE

    t0 = time.perf_counter()
    flow_cfg = FlowConfig(alpha=options.alpha, tol_grad=options.tol_grad)
    traj = integrate_flow(plant, polytope,
                          unvec_gain(polytope.chebyshev_center, plant.m, plant.n), flow_cfg)
    ledger.timings["optimize"] = time.perf_counter() - t0
    artifacts["trajectory"] = traj
    traj_text = pio.trajectory_to_text(traj, plant.m, plant.n)
    hash_parts.append(traj_text)
    if out_dir is not None:
        with open(os.path.join(out_dir, TRAJECTORY_FILE), "w", encoding="utf-8") as fh:
            fh.write(traj_text)
        ledger.trajectory_file = TRAJECTORY_FILE

    ledger.k_hat = traj.terminal_gain
    ledger.f_hat = traj.samples[-1].f
    ledger.termination = traj.termination
    cert = certify_gain(plant, traj.terminal_gain, mode, seed=options.seed)
    ledger.cert_lambda_max = cert.lambda_max_constraint
    ledger.cert_lambda_min_P = cert.lambda_min_P

    _finalize(ledger, hash_parts, out_dir)
    return ledger, artifacts


def _finalize(ledger, hash_parts, out_dir):
    hash_parts.append(pio.format_array(ledger.k_hat) if ledger.k_hat is not None else "none")
    hash_parts.append(pio.format_float(ledger.f_hat))
    ledger.run_hash = _hash_text(*hash_parts)
    if out_dir is not None:
        with open(os.path.join(out_dir, LEDGER_FILE), "w", encoding="utf-8") as fh:
            fh.write(pio.ledger_to_text(ledger))
