"""Gain-parametrized LQR cost, its gradient, and the projected gradient flow.

For a stabilizing gain K the cost is f(K) = tr(X_K) with

    0 = (A - B_u K)' X_K + X_K (A - B_u K) + Q + K' R K,
    0 = (A - B_u K) Y_K + Y_K (A - B_u K)' + I,
    grad f = 2 (R K - B_u' X_K) Y_K.

The flow integrates vec(dK/dt) = -alpha * M(vec K) vec(grad f) with classical
fourth-order steps; steps that leave the polytope, destabilize, or increase
the cost beyond integrator tolerance are halved.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleStart, NotStabilizing
from .linalg import solve_lyapunov, spectral_abscissa, unvec_gain, vec_gain
from .polytope import projection_operator

_COST_SLACK = 1e-9      # permitted per-step cost increase (integrator tolerance)
_FEAS_SLACK = 1e-9


@dataclass(frozen=True)
class CostEvaluation:
    K: np.ndarray
    X_K: np.ndarray
    Y_K: np.ndarray
    f_K: float
    grad: np.ndarray


@dataclass(frozen=True)
class FlowConfig:
    alpha: float = 1.0
    h0: float = 1e-2
    tol_grad: float = None      # default 1e-8 * (1 + f(K0)), set at flow start
    max_time: float = 1e4
    min_step: float = 1e-12
    record_every: int = 1

    def __post_init__(self):
        if self.alpha <= 0 or self.h0 <= 0 or self.max_time <= 0 or self.min_step <= 0:
            raise ValueError("flow configuration entries must be positive")


@dataclass(frozen=True)
class FlowSample:
    t: float
    k: np.ndarray
    f: float
    proj_grad_norm: float
    min_g: float


@dataclass
class FlowTrajectory:
    samples: list
    terminal_gain: np.ndarray
    termination: str    # 'converged' | 'max_time' | 'step_collapse'

    @property
    def terminal_cost(self):
        return self.samples[-1].f


def evaluate_cost(plant, K):
    """Cost, Lyapunov pair and gradient at K; raises `NotStabilizing` otherwise."""
    K = np.asarray(K, dtype=float).reshape(plant.m, plant.n)
    A_K = plant.closed_loop(K)
    abscissa = spectral_abscissa(A_K)
    if abscissa >= -1e-12:
        raise NotStabilizing(abscissa, f"gain does not stabilize (abscissa {abscissa:.3e}); "
                                       "the LQR cost is unbounded")
    X = solve_lyapunov(A_K, plant.Q + K.T @ plant.R @ K)
    Y = solve_lyapunov(A_K.T, np.eye(plant.n))
    grad = 2.0 * (plant.R @ K - plant.B_u.T @ X) @ Y
    return CostEvaluation(K=K, X_K=X, Y_K=Y, f_K=float(np.trace(X)), grad=grad)


def _field(plant, polytope, kvec, alpha):
    """Flow vector field at vec(K); also returns cost, |M grad| and min g."""
    K = unvec_gain(kvec, plant.m, plant.n)
    ev = evaluate_cost(plant, K)
    gvec = vec_gain(ev.grad)
    if polytope is None:
        proj = gvec
        min_g = np.inf
    else:
        op = projection_operator(polytope, kvec)
        proj = op.M_matrix @ gvec
        min_g = float(polytope.evaluate(kvec).min())
    return -alpha * proj, ev.f_K, float(np.linalg.norm(proj)), min_g


def projected_step_direction(plant, polytope, K, alpha=1.0):
    """-alpha * unvec(M(vec K) vec(grad f)); descent is guaranteed by M >= 0."""
    kvec = vec_gain(np.asarray(K, dtype=float).reshape(plant.m, plant.n))
    direction, _, _, _ = _field(plant, polytope, kvec, alpha)
    return unvec_gain(direction, plant.m, plant.n)


def integrate_flow(plant, polytope, K0, config=None):
    """Run the projected gradient flow from a strictly interior stabilizing gain.

    `polytope=None` integrates the unconstrained flow (whole-space baseline).
    Classical RK4 with step halving on any of: infeasible stage/endpoint,
    non-Hurwitz gain, or a cost increase beyond the integrator tolerance.
    Termination: 'converged' when |M grad| <= tol_grad, 'max_time' at
    config.max_time, 'step_collapse' when halving passes below min_step.
    """
    config = config or FlowConfig()
    kvec = vec_gain(np.asarray(K0, dtype=float).reshape(plant.m, plant.n))
    if polytope is not None:
        g0 = polytope.evaluate(kvec)
        if np.any(g0 <= 0.0):
            raise InfeasibleStart(f"start must satisfy g > 0 componentwise, got min g = {g0.min():.3e}")
    try:
        deriv, f, pg_norm, min_g = _field(plant, polytope, kvec, config.alpha)
    except NotStabilizing as exc:
        raise InfeasibleStart(f"start gain is not stabilizing: {exc}") from exc

    tol_grad = config.tol_grad if config.tol_grad is not None else 1e-8 * (1.0 + f)
    samples = [FlowSample(t=0.0, k=kvec.copy(), f=f, proj_grad_norm=pg_norm, min_g=min_g)]
    t = 0.0
    h = config.h0
    streak = 0
    step_count = 0

    while True:
        if pg_norm <= tol_grad:
            termination = "converged"
            break
        if t >= config.max_time:
            termination = "max_time"
            break
        h = min(h, config.max_time - t)
        try:
            k1 = deriv
            k2, _, _, _ = _field(plant, polytope, kvec + 0.5 * h * k1, config.alpha)
            k3, _, _, _ = _field(plant, polytope, kvec + 0.5 * h * k2, config.alpha)
            k4, _, _, _ = _field(plant, polytope, kvec + h * k3, config.alpha)
            cand = kvec + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            cand_deriv, cand_f, cand_pg, cand_min_g = _field(plant, polytope, cand, config.alpha)
            ok = cand_f <= f + _COST_SLACK and cand_min_g >= -_FEAS_SLACK
        except (NotStabilizing, InfeasibleStart):
            ok = False
        if not ok:
            streak = 0
            h *= 0.5
            if h < config.min_step:
                # partial trajectory is preserved; callers treat this as failure
                termination = "step_collapse"
                break
            continue
        t += h
        kvec, deriv, f, pg_norm, min_g = cand, cand_deriv, cand_f, cand_pg, cand_min_g
        step_count += 1
        if step_count % config.record_every == 0:
            samples.append(FlowSample(t=t, k=kvec.copy(), f=f, proj_grad_norm=pg_norm, min_g=min_g))
        streak += 1
        if streak >= 5:
            h = min(2.0 * h, 10.0 * config.h0)
            streak = 0

    if samples[-1].t != t:
        samples.append(FlowSample(t=t, k=kvec.copy(), f=f, proj_grad_norm=pg_norm, min_g=min_g))
    return FlowTrajectory(samples=samples,
                          terminal_gain=unvec_gain(kvec, plant.m, plant.n),
                          termination=termination)
