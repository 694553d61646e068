"""Flood-fill exploration of gain space: a union of certified hypercubes.

A cube is verified by finding one storage matrix that certifies all of its
vertices; the constraint block is affine in the gain, so the same matrix then
certifies every gain inside the cube.  Exploration grows the verified set
breadth-first over face-adjacent grid cells anchored at a passivating seed.
"""

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .certify import certify_common, certify_gain
from .errors import EmptyRegion, Infeasible, Rejected, SeedNotPassivating, TooManyVertices
from .linalg import solve_care, unvec_gain, vec_gain

_MAX_GAIN_DIM = 8


@dataclass(frozen=True)
class GainCube:
    """Axis-aligned cube in vectorized gain space, optionally certified."""

    center: np.ndarray
    edge: float
    certificate: object = None
    coord: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).ravel())
        if self.edge <= 0.0:
            raise ValueError(f"cube edge must be positive, got {self.edge}")

    def vertices(self):
        """All 2^d corners, deterministic order."""
        half = 0.5 * self.edge
        d = self.center.size
        return np.array([self.center + half * np.array(signs)
                         for signs in itertools.product((-1.0, 1.0), repeat=d)])

    def contains(self, k, tol=0.0):
        k = np.asarray(k, dtype=float).ravel()
        return bool(np.all(np.abs(k - self.center) <= 0.5 * self.edge + tol))


@dataclass
class RejectedCube:
    center: np.ndarray
    best_lambda_max: float


@dataclass
class VerifiedRegion:
    cubes: list
    grid_anchor: np.ndarray
    edge: float
    rejected: list = field(default_factory=list)

    @property
    def coords(self):
        return {c.coord for c in self.cubes}

    def cube_at(self, coord):
        for c in self.cubes:
            if c.coord == tuple(coord):
                return c
        return None

    def center_of(self, coord):
        return self.grid_anchor + self.edge * np.asarray(coord, dtype=float)


@dataclass
class ExploreConfig:
    seed_gain: np.ndarray
    edge: float
    max_cubes: int = 400
    search_box: np.ndarray = None   # (d, 2) rows of [lo, hi]; default seed +/- 10*edge
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class PrecheckResult:
    already_passive: bool
    gain: np.ndarray
    certificate: object
    X_star: np.ndarray

    @property
    def cost(self):
        return float(np.trace(self.X_star))


def _cube_seed(base_seed, coord):
    """Stable per-cube RNG seed, independent of evaluation order."""
    parts = [int(base_seed)]
    for c in coord:
        parts.append(2 * c if c >= 0 else -2 * c - 1)
    return parts


def verify_cube(plant, cube, mode, seed=0, budget=None, diagnose=False):
    """Certify all vertices of `cube` with one storage matrix.

    Returns a new `GainCube` carrying the certificate; raises `Rejected` on
    failure (with per-vertex reports when `diagnose` is set) and
    `TooManyVertices` for gain dimension above 8.
    """
    d = plant.m * plant.n
    if cube.center.size != d:
        raise ValueError(f"cube center has dimension {cube.center.size}, expected {d}")
    if d > _MAX_GAIN_DIM:
        raise TooManyVertices(f"gain dimension {d} gives {2 ** d} vertices; limit is {2 ** _MAX_GAIN_DIM}")
    gains = [unvec_gain(v, plant.m, plant.n) for v in cube.vertices()]
    try:
        cert = certify_common(plant, gains, mode, seed=seed, budget=budget)
    except Infeasible as exc:
        reports = {}
        if diagnose:
            for v in cube.vertices():
                try:
                    certify_gain(plant, unvec_gain(v, plant.m, plant.n), mode, seed=seed,
                                 budget=budget)
                    reports[tuple(float(x) for x in v)] = True
                except Infeasible:
                    reports[tuple(float(x) for x in v)] = False
        raise Rejected(center=cube.center, best_lambda_max=exc.best_lambda_max,
                       vertex_reports=reports) from exc
    return GainCube(center=cube.center, edge=cube.edge, certificate=cert, coord=cube.coord)


def _verify_worker(args):
    plant, center, edge, coord, mode, seed = args
    cube = GainCube(center=center, edge=edge, coord=coord)
    try:
        verified = verify_cube(plant, cube, mode, seed=seed)
        return coord, True, verified
    except Rejected as exc:
        return coord, False, exc.best_lambda_max


def explore(plant, mode, config):
    """Breadth-first flood fill of certified cubes from a passivating seed.

    The grid is anchored so the seed gain is a cube center.  Each
    face-adjacent neighbor of a verified cube is tested exactly once; cubes
    leaving the search box are skipped.  Results are merged by grid
    coordinate, so the outcome is independent of worker count.
    """
    anchor = vec_gain(config.seed_gain)
    d = plant.m * plant.n
    if anchor.size != d:
        raise ValueError(f"seed gain has dimension {anchor.size}, expected {d}")
    edge = float(config.edge)
    if edge <= 0.0:
        raise ValueError("edge must be positive")

    try:
        certify_gain(plant, unvec_gain(anchor, plant.m, plant.n), mode, seed=config.seed)
    except Infeasible as exc:
        raise SeedNotPassivating(f"seed gain {anchor} does not certify: {exc}") from exc

    box = np.asarray(config.search_box, dtype=float) if config.search_box is not None \
        else np.column_stack([anchor - 10.0 * edge, anchor + 10.0 * edge])
    if box.shape != (d, 2) or np.any(box[:, 0] >= box[:, 1]):
        raise ValueError(f"search box must be ({d}, 2) with lo < hi")

    tol = 1e-12 * (1.0 + np.abs(box).max())

    def in_box(coord):
        center = anchor + edge * np.asarray(coord, dtype=float)
        return bool(np.all(center - 0.5 * edge >= box[:, 0] - tol)
                    and np.all(center + 0.5 * edge <= box[:, 1] + tol))

    origin = (0,) * d
    if not in_box(origin):
        raise ValueError("seed cube does not fit inside the search box")

    verified = {}
    rejected = []
    visited = {origin}
    frontier = [origin]
    executor = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        first_level = True
        while frontier and len(verified) < config.max_cubes:
            frontier.sort()
            tasks = [(plant, anchor + edge * np.asarray(c, dtype=float), edge, c, mode,
                      _cube_seed(config.seed, c)) for c in frontier]
            if executor is None:
                results = map(_verify_worker, tasks)
            else:
                results = executor.map(_verify_worker, tasks)
            outcomes = dict()
            for coord, ok, payload in results:
                outcomes[coord] = (ok, payload)
            next_frontier = []
            for coord in frontier:
                if len(verified) >= config.max_cubes:
                    break
                ok, payload = outcomes[coord]
                if ok:
                    verified[coord] = payload
                    for axis in range(d):
                        for delta in (-1, 1):
                            nb = tuple(c + (delta if i == axis else 0)
                                       for i, c in enumerate(coord))
                            if nb not in visited and in_box(nb):
                                visited.add(nb)
                                next_frontier.append(nb)
                elif first_level and coord == origin:
                    # seed cube failed: retry once with per-vertex diagnostics
                    cube = GainCube(center=anchor.copy(), edge=edge, coord=origin)
                    try:
                        retried = verify_cube(plant, cube, mode,
                                              seed=_cube_seed(config.seed, origin), diagnose=True)
                    except Rejected as exc:
                        raise EmptyRegion(
                            f"seed cube rejected; vertex reports: {exc.vertex_reports}") from exc
                    verified[origin] = retried
                    for axis in range(d):
                        for delta in (-1, 1):
                            nb = tuple(1 * delta if i == axis else 0 for i in range(d))
                            if nb not in visited and in_box(nb):
                                visited.add(nb)
                                next_frontier.append(nb)
                else:
                    rejected.append(RejectedCube(
                        center=anchor + edge * np.asarray(coord, dtype=float),
                        best_lambda_max=payload))
            frontier = next_frontier
            first_level = False
    finally:
        if executor is not None:
            executor.shutdown()

    cubes = [verified[c] for c in sorted(verified)]
    return VerifiedRegion(cubes=cubes, grid_anchor=anchor, edge=edge, rejected=rejected)


def precheck_optimal(plant, mode, seed=0):
    """Solve the unconstrained LQR problem and test whether K* already passivates.

    When it does, the whole pipeline short-circuits: K* is both optimal and
    certified.  CARE errors propagate.
    """
    X_star, K_star = solve_care(plant.A, plant.B_u, plant.Q, plant.R)
    try:
        cert = certify_gain(plant, K_star, mode, seed=seed)
    except Infeasible:
        return PrecheckResult(already_passive=False, gain=K_star, certificate=None, X_star=X_star)
    return PrecheckResult(already_passive=True, gain=K_star, certificate=cert, X_star=X_star)
