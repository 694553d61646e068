"""Self-contained feasibility engine for small affine matrix-inequality problems.

Problems have the form

    find theta  such that  lambda_max(B_j(theta)) <= target  for all blocks j
                 and       lambda_min(P(theta))   >= eps_pd,

where every B_j and P is affine in theta.  Both sides are convex in theta, so
the engine minimizes the (normalized) worst constraint eigenvalue by gradient
descent on a log-sum-exp smoothing of lambda_max, annealing the smoothing
temperature, with a logarithmic barrier keeping P positive definite.

Exhausting the restart/iteration budget yields a heuristic "no": the best
achieved value is reported but nothing is proved infeasible.
"""

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible

_TEMPERATURES = (1e-1, 1e-2, 1e-3, 1e-4)
_STALL_WINDOW = 40
_STALL_RTOL = 1e-11
_BARRIER_WEIGHT = 1e-9


@dataclass(frozen=True)
class SearchBudget:
    """Restart/iteration caps; `max_iters` is the per-restart total across temperatures."""

    restarts: int = 5
    max_iters: int = 2000

    @property
    def iters_per_stage(self):
        return max(1, self.max_iters // len(_TEMPERATURES))


@dataclass
class AffineLmiProblem:
    """Affine constraint family, already normalized by the caller's scale.

    blocks0 : (J, k, k)  constant parts of the J constraint blocks
    blocks1 : (q, J, k, k)  per-parameter parts (theta has length q)
    pd0     : (r, r)     constant part of the matrix kept positive definite
    pd1     : (q, r, r)  per-parameter parts
    """

    blocks0: np.ndarray
    blocks1: np.ndarray
    pd0: np.ndarray
    pd1: np.ndarray
    eps_pd: float = 1e-8

    def __post_init__(self):
        self.blocks0 = np.asarray(self.blocks0, dtype=float)
        self.blocks1 = np.asarray(self.blocks1, dtype=float)
        self.pd0 = np.asarray(self.pd0, dtype=float)
        self.pd1 = np.asarray(self.pd1, dtype=float)

    @property
    def dim(self):
        return self.blocks1.shape[0]

    def blocks_at(self, theta):
        if self.dim == 0:
            return self.blocks0
        return self.blocks0 + np.tensordot(theta, self.blocks1, axes=(0, 0))

    def pd_at(self, theta):
        if self.dim == 0:
            return self.pd0
        return self.pd0 + np.tensordot(theta, self.pd1, axes=(0, 0))

    def worst_eigenvalue(self, theta):
        return float(np.linalg.eigvalsh(self.blocks_at(theta))[..., -1].max())

    def min_pd_eigenvalue(self, theta):
        return float(np.linalg.eigvalsh(self.pd_at(theta))[0])


@dataclass
class FeasibilityResult:
    theta: np.ndarray
    worst_eigenvalue: float
    min_pd_eigenvalue: float
    success: bool
    iterations: int = 0
    restarts_used: int = 0


def _smoothed_max(values, tau):
    """tau * log sum exp(values / tau), stable."""
    top = values.max()
    return top + tau * np.log(np.exp((values - top) / tau).sum())


def _softmax(values, tau):
    shifted = (values - values.max()) / tau
    w = np.exp(shifted)
    return w / w.sum()


class _Descent:
    """Gradient descent state for one restart of one problem."""

    def __init__(self, problem, target):
        self.pb = problem
        self.target = target

    def objective_parts(self, theta):
        blocks = self.pb.blocks_at(theta)
        eigs, vecs = np.linalg.eigh(blocks)
        pd_eigs, pd_vecs = np.linalg.eigh(self.pb.pd_at(theta))
        return blocks, eigs, vecs, pd_eigs, pd_vecs

    def value(self, theta, tau):
        """Smoothed objective; +inf outside the barrier domain."""
        eigs = np.linalg.eigvalsh(self.pb.blocks_at(theta))
        pd_min = float(np.linalg.eigvalsh(self.pb.pd_at(theta))[0])
        if pd_min <= self.pb.eps_pd:
            return np.inf, eigs.max(), pd_min
        smoothed = _smoothed_max(eigs.ravel(), tau)
        smoothed -= _BARRIER_WEIGHT * np.log(pd_min - self.pb.eps_pd)
        return smoothed, float(eigs.max()), pd_min

    def gradient(self, theta, tau):
        _, eigs, vecs, pd_eigs, pd_vecs = self.objective_parts(theta)
        w = _softmax(eigs.ravel(), tau).reshape(eigs.shape)  # (J, k)
        # d lambda_e / d theta_i = v_e' B_i v_e; weight-sum over all eigenvalues
        grad = np.einsum("jke,ijkl,jle,je->i", vecs, self.pb.blocks1, vecs, w, optimize=True)
        pd_min = pd_eigs[0]
        if pd_min > self.pb.eps_pd:
            u = pd_vecs[:, 0]
            grad -= _BARRIER_WEIGHT / (pd_min - self.pb.eps_pd) * np.einsum(
                "k,ikl,l->i", u, self.pb.pd1, u, optimize=True)
        return grad


def _phase_one(problem, theta, max_iters=400):
    """Push lambda_min(P(theta)) above a working margin; returns (theta, ok)."""
    margin = max(10.0 * problem.eps_pd, 1e-6)
    if problem.dim == 0:
        return theta, problem.min_pd_eigenvalue(theta) >= problem.eps_pd
    # minimize lambda_max(-P): gradient from the top eigenvector of -P
    step = 1.0
    best = -np.inf
    stall = 0
    for _ in range(max_iters):
        pd = problem.pd_at(theta)
        eigs, vecs = np.linalg.eigh(pd)
        lam_min = eigs[0]
        if lam_min >= margin:
            return theta, True
        if lam_min <= best + abs(best) * 1e-12 + 1e-15:
            stall += 1
            if stall > _STALL_WINDOW:
                break
        else:
            best = lam_min
            stall = 0
        u = vecs[:, 0]
        grad = np.einsum("k,ikl,l->i", u, problem.pd1, u, optimize=True)  # d lam_min / d theta
        gnorm = np.linalg.norm(grad)
        if gnorm < 1e-15:
            break
        direction = grad / gnorm
        # backtracking ascent on lambda_min
        improved = False
        for _ in range(30):
            cand = theta + step * direction
            if problem.min_pd_eigenvalue(cand) > lam_min + 0.1 * step * gnorm:
                theta = cand
                step *= 1.5
                improved = True
                break
            step *= 0.5
        if not improved:
            step = max(step, 1e-14)
    return theta, problem.min_pd_eigenvalue(theta) >= problem.eps_pd


def solve_feasibility(problem, target, budget=None, rng=None, initial=None, validator=None):
    """Drive the worst normalized constraint eigenvalue down to `target`.

    `validator(theta)`, when given, must also pass for success (used to
    re-check candidates in un-normalized coordinates).  Raises `Infeasible`
    with the best achieved value after the budget is spent; two consecutive
    restarts stalling at the same value end the search early, since the
    subproblem is convex and the stall point is then its global minimum.
    """
    budget = budget or SearchBudget()
    rng = rng or np.random.default_rng(0)
    desc = _Descent(problem, target)

    best_val = np.inf
    best_min_pd = -np.inf
    prev_stall_val = None
    total_iters = 0

    for restart in range(budget.restarts):
        if problem.dim == 0:
            theta = np.zeros(0)
        elif restart == 0:
            theta = np.zeros(problem.dim) if initial is None else np.asarray(initial, dtype=float)
        else:
            sigma = 10.0 ** (restart - 2)
            theta = rng.normal(scale=sigma, size=problem.dim)

        theta, ok = _phase_one(problem, theta)
        if not ok:
            best_min_pd = max(best_min_pd, problem.min_pd_eigenvalue(theta))
            continue

        worst = problem.worst_eigenvalue(theta)
        if worst <= target and (validator is None or validator(theta)):
            return FeasibilityResult(theta, worst, problem.min_pd_eigenvalue(theta), True,
                                     total_iters, restart + 1)

        step = 1.0
        restart_best = worst
        for tau in _TEMPERATURES:
            stall = 0
            val, worst, _ = desc.value(theta, tau)
            for _ in range(budget.iters_per_stage):
                total_iters += 1
                grad = desc.gradient(theta, tau)
                gnorm = np.linalg.norm(grad)
                if gnorm < 1e-16:
                    break
                direction = -grad / gnorm
                accepted = False
                for _ in range(25):
                    cand = theta + step * direction
                    cand_val, cand_worst, cand_pd = desc.value(cand, tau)
                    if cand_val < val - 1e-4 * step * gnorm:
                        theta, val, worst = cand, cand_val, cand_worst
                        step *= 1.3
                        accepted = True
                        if cand_worst <= target and cand_pd >= problem.eps_pd and \
                                (validator is None or validator(theta)):
                            return FeasibilityResult(theta, cand_worst, cand_pd, True,
                                                     total_iters, restart + 1)
                        break
                    step *= 0.5
                if not accepted:
                    # full backtrack failure: numerically at this stage's minimum
                    step = 1e-2
                    break
                if worst >= restart_best - _STALL_RTOL * (1.0 + abs(restart_best)):
                    stall += 1
                else:
                    restart_best = worst
                    stall = 0
                if stall > _STALL_WINDOW:
                    break
        if restart_best < best_val:
            best_val = restart_best
            best_min_pd = max(best_min_pd, problem.min_pd_eigenvalue(theta))
        # convex subproblem: identical stalls across restarts are the global minimum
        if prev_stall_val is not None and abs(restart_best - prev_stall_val) \
                <= 1e-9 * (1.0 + abs(prev_stall_val)):
            break
        prev_stall_val = restart_best

    raise Infeasible(best_lambda_max=best_val if np.isfinite(best_val) else np.inf)


def symmetric_basis(n):
    """Orthonormal-free basis E_ij (i <= j) of symmetric n x n matrices."""
    basis = []
    for i in range(n):
        for j in range(i, n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            e[j, i] = 1.0
            basis.append(e)
    return np.array(basis)


def affine_symmetric_solutions(coeff_map, rhs, n, tol=1e-9):
    """Affine solution set of a linear constraint on a symmetric unknown.

    `coeff_map(E)` maps a symmetric basis matrix to the constraint's
    left-hand side (any fixed output shape); `rhs` is the target.  Returns
    (particular, nullspace_matrices) or None when the system is inconsistent.
    """
    basis = symmetric_basis(n)
    cols = [coeff_map(E).ravel() for E in basis]
    Amat = np.column_stack(cols) if cols else np.zeros((rhs.size, 0))
    b = np.asarray(rhs, dtype=float).ravel()
    sol, _, _, _ = np.linalg.lstsq(Amat, b, rcond=None)
    scale = 1.0 + np.linalg.norm(b) + np.linalg.norm(Amat, "fro")
    if np.linalg.norm(Amat @ sol - b) > tol * scale:
        return None
    particular = np.tensordot(sol, basis, axes=(0, 0))
    # nullspace of Amat via SVD
    u, s, vt = np.linalg.svd(Amat)
    rank = int((s > 1e-12 * (s[0] if s.size else 1.0)).sum())
    null_cols = vt[rank:].T
    null_mats = np.array([np.tensordot(null_cols[:, i], basis, axes=(0, 0))
                          for i in range(null_cols.shape[1])])
    if null_mats.size == 0:
        null_mats = np.zeros((0, n, n))
    return particular, null_mats
