"""Convex inner approximation of the verified region and the flow's projection.

The inner approximation is an axis-aligned box grown greedily over the
verified grid cells: exact coverage is a set-membership check, no geometry
tolerance enters.  The projection operator follows the tangent-cone formula

    M(k) = I - G' F(k)^-1 G,      F(k) = 2 diag(g(k)) + G G',

for the constraint description g(k) = G k + h >= 0.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateF, DimensionMismatch, EmptyRegion, InfeasibleStart

_FACE_SHRINK = 1e-6     # fraction of the grid edge removed from every face
_ACTIVE_RTOL = 1e-9
_F_MIN_EIG = 1e-12


@dataclass(frozen=True)
class GainPolytope:
    """Bounded polytope { k : G k + h >= 0 } with a distinguished center."""

    G: np.ndarray
    h: np.ndarray
    chebyshev_center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "G", np.atleast_2d(np.asarray(self.G, dtype=float)))
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float).ravel())
        object.__setattr__(self, "chebyshev_center",
                           np.asarray(self.chebyshev_center, dtype=float).ravel())
        if self.G.shape[0] != self.h.size:
            raise DimensionMismatch(f"G has {self.G.shape[0]} rows but h has {self.h.size} entries")
        if self.G.shape[1] != self.chebyshev_center.size:
            raise DimensionMismatch("center dimension does not match G columns")

    @property
    def dim(self):
        return self.G.shape[1]

    @property
    def n_rows(self):
        return self.G.shape[0]

    def evaluate(self, k):
        k = np.asarray(k, dtype=float).ravel()
        if k.size != self.dim:
            raise DimensionMismatch(f"point has dimension {k.size}, expected {self.dim}")
        return self.G @ k + self.h

    def contains(self, k, tol=0.0):
        return bool(np.all(self.evaluate(k) >= -tol))


@dataclass(frozen=True)
class ProjectionOperator:
    point: np.ndarray
    M_matrix: np.ndarray
    F_matrix: np.ndarray


def box_polytope(lo, hi):
    """Axis-aligned box as a polytope; rows ordered (+e1, -e1, +e2, -e2, ...)."""
    lo = np.asarray(lo, dtype=float).ravel()
    hi = np.asarray(hi, dtype=float).ravel()
    if lo.size != hi.size or np.any(lo >= hi):
        raise ValueError("box needs lo < hi componentwise")
    d = lo.size
    G = np.zeros((2 * d, d))
    h = np.zeros(2 * d)
    for i in range(d):
        G[2 * i, i] = 1.0
        h[2 * i] = -lo[i]          # g = k_i - lo_i
        G[2 * i + 1, i] = -1.0
        h[2 * i + 1] = hi[i]       # g = hi_i - k_i
    return GainPolytope(G=G, h=h, chebyshev_center=0.5 * (lo + hi))


def constraints_at(polytope, k):
    """Constraint values and indices of (near-)active rows at k."""
    g = polytope.evaluate(k)
    tol = _ACTIVE_RTOL * (1.0 + np.abs(polytope.h).max())
    active = [int(i) for i in np.flatnonzero(np.abs(g) <= tol)]
    return g, active


def projection_operator(polytope, k):
    """Tangent-cone projection matrix at a feasible point.

    Raises `InfeasibleStart` when g(k) < -1e-9 and `DegenerateF` when F loses
    positive definiteness (LICQ failure).  F is inverted through a Cholesky
    factorization with a 1e-12 ridge retry.
    """
    k = np.asarray(k, dtype=float).ravel()
    g = polytope.evaluate(k)
    if np.any(g < -1e-9 * (1.0 + np.abs(polytope.h).max())):
        raise InfeasibleStart(f"point violates constraints by {float(g.min()):.3e}")
    G = polytope.G
    F = 2.0 * np.diag(g) + G @ G.T
    f_min = float(np.linalg.eigvalsh(F)[0])
    if f_min < _F_MIN_EIG:
        raise DegenerateF(f"lambda_min(F) = {f_min:.3e} at k = {k}")
    try:
        L = np.linalg.cholesky(F)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(F + _F_MIN_EIG * np.eye(F.shape[0]))
    Finv_G = np.linalg.solve(L.T, np.linalg.solve(L, G))
    M = np.eye(polytope.dim) - G.T @ Finv_G
    M = 0.5 * (M + M.T)
    return ProjectionOperator(point=k, M_matrix=M, F_matrix=F)


def _grow_box(start, cells, d):
    """Greedy face-by-face growth of a cell-index box inside `cells`.

    The box is [lo, hi) in cell indices.  Faces are visited round-robin; an
    extension is kept when the whole new slab of cells is verified.
    """
    lo = list(start)
    hi = [c + 1 for c in start]

    def slab_ok(axis, index):
        ranges = [range(lo[i], hi[i]) if i != axis else (index,) for i in range(d)]
        return all(c in cells for c in itertools.product(*ranges))

    while True:
        grew = False
        for axis in range(d):
            if slab_ok(axis, hi[axis]):
                hi[axis] += 1
                grew = True
            if slab_ok(axis, lo[axis] - 1):
                lo[axis] -= 1
                grew = True
        if not grew:
            return tuple(lo), tuple(hi)


def inscribe_polytope(region, score):
    """Largest-scoring axis-aligned box inside the verified union.

    A candidate box is grown greedily from every verified cube; among the
    saturated candidates the one whose (Chebyshev) center minimizes `score`
    is returned, shrunk by 1e-6 of the grid edge per face so it is strictly
    inside the union.  Coverage is re-checked cell-exactly.
    """
    if not region.cubes:
        raise EmptyRegion("cannot inscribe a polytope in an empty region")
    cells = region.coords
    d = region.grid_anchor.size
    edge = region.edge

    candidates = {}
    for coord in sorted(cells):
        box = _grow_box(coord, cells, d)
        candidates[box] = True
    best = None
    for lo_idx, hi_idx in sorted(candidates):
        lo = region.grid_anchor + edge * np.asarray(lo_idx, dtype=float) - 0.5 * edge
        hi = region.grid_anchor + edge * (np.asarray(hi_idx, dtype=float) - 1.0) + 0.5 * edge
        center = 0.5 * (lo + hi)
        value = float(score(center))
        volume = float(np.prod(hi - lo))
        key = (value, -volume, lo_idx, hi_idx)
        if best is None or key < best[0]:
            best = (key, lo_idx, hi_idx, lo, hi)

    _, lo_idx, hi_idx, lo, hi = best
    for c in itertools.product(*[range(lo_idx[i], hi_idx[i]) for i in range(d)]):
        if c not in cells:
            raise EmptyRegion(f"internal error: cell {c} of the chosen box is not verified")
    delta = _FACE_SHRINK * edge
    return box_polytope(lo + delta, hi - delta)
