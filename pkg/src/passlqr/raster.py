"""Grid classification of gain space for plots and region studies (m*n = 2)."""

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .certify import certify_gain
from .errors import Infeasible, NotStabilizing
from .flow import evaluate_cost
from .linalg import unvec_gain


def stability_grid(plant, k1_values, k2_values):
    """Spectral abscissa of A - B_u K on the grid; shape (len(k1), len(k2))."""
    k1 = np.asarray(k1_values, dtype=float)
    k2 = np.asarray(k2_values, dtype=float)
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    # A_K is affine in the two vectorized gain components
    M1 = plant.B_u @ unvec_gain(np.array([1.0, 0.0]), plant.m, plant.n)
    M2 = plant.B_u @ unvec_gain(np.array([0.0, 1.0]), plant.m, plant.n)
    mats = plant.A[None, None] - K1[..., None, None] * M1 - K2[..., None, None] * M2
    eigs = np.linalg.eigvals(mats.reshape(-1, plant.n, plant.n))
    return eigs.real.max(axis=1).reshape(K1.shape)


def cost_grid(plant, k1_values, k2_values):
    """LQR cost on the grid; non-stabilizing gains get NaN."""
    out = np.full((len(k1_values), len(k2_values)), np.nan)
    for i, k1 in enumerate(k1_values):
        for j, k2 in enumerate(k2_values):
            try:
                out[i, j] = evaluate_cost(
                    plant, unvec_gain(np.array([k1, k2]), plant.m, plant.n)).f_K
            except NotStabilizing:
                continue
    return out


def _passivity_row(args):
    plant, mode, k1, k2_values, seed = args
    row = np.zeros(len(k2_values), dtype=bool)
    warm = None
    for j, k2 in enumerate(k2_values):
        gain = unvec_gain(np.array([k1, k2]), plant.m, plant.n)
        try:
            cert = certify_gain(plant, gain, mode, seed=seed, initial_P=warm)
            row[j] = True
            warm = cert.P
        except Infeasible:
            row[j] = False
    return row


def passivity_grid(plant, mode, k1_values, k2_values, seed=0, workers=1):
    """Boolean certification raster.  Rows share a warm start left to right,
    so the result is identical for any worker count (workers split whole rows)."""
    tasks = [(plant, mode, float(k1), np.asarray(k2_values, dtype=float), seed)
             for k1 in k1_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_passivity_row, tasks))
    else:
        rows = [_passivity_row(t) for t in tasks]
    return np.stack(rows, axis=0)
