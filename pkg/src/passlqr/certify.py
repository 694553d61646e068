"""KYP-based passivity certification of state-feedback gains.

A gain K (strictly) passivates the closed loop (A - B_u K, B_d, C, D) when a
storage matrix P > 0 exists with

    D != 0:  [[A_K' P + P A_K,  P B_d - C'], [B_d' P - C,  -D - D']]  <=(s)  0
    D == 0:   A_K' P + P A_K  <=(s)  0   and   B_d' P = C.

Certification parameterizes the symmetric unknown over an affine family (the
D = 0 equality is eliminated exactly) and runs the feasibility engine; every
returned certificate is re-validated by fresh eigensolves, independent of
optimizer state.  Constraint eigenvalues are normalized by 1 + ||A||_F so
the mode margins are portable across plants.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EqualityInconsistent, Infeasible
from .feasibility import (
    AffineLmiProblem,
    affine_symmetric_solutions,
    solve_feasibility,
    symmetric_basis,
)
from .linalg import symmetrize

EPS_STORAGE = 1e-8          # lambda_min(P) floor
EQUALITY_TOL = 1e-7         # ||B_d' P - C||_F ceiling for D = 0


@dataclass(frozen=True)
class PassivityMode:
    """Strict or nonstrict certification with its numeric margins."""

    kind: str = "nonstrict"
    strict_margin: float = 1e-6
    nonstrict_slack: float = 1e-7

    def __post_init__(self):
        if self.kind not in ("strict", "nonstrict"):
            raise ValueError(f"mode kind must be 'strict' or 'nonstrict', got {self.kind!r}")
        if self.strict_margin <= 0.0 or self.nonstrict_slack < 0.0:
            raise ValueError("strict_margin must be > 0 and nonstrict_slack >= 0")

    @property
    def is_strict(self):
        return self.kind == "strict"

    @property
    def threshold(self):
        """Upper bound on the normalized worst constraint eigenvalue."""
        return -self.strict_margin if self.is_strict else self.nonstrict_slack

    @classmethod
    def strict(cls, margin=1e-6):
        return cls(kind="strict", strict_margin=margin)

    @classmethod
    def nonstrict(cls, slack=1e-7):
        return cls(kind="nonstrict", nonstrict_slack=slack)


@dataclass(frozen=True)
class PassivityCertificate:
    P: np.ndarray
    mode: PassivityMode
    lambda_max_constraint: float     # normalized by `scale`
    lambda_min_P: float
    equality_residual: float
    scale: float


@dataclass(frozen=True)
class FeasiblePair:
    Z: np.ndarray
    W: np.ndarray
    K: np.ndarray


def constraint_scale(plant):
    return 1.0 + np.linalg.norm(plant.A, "fro")


def kyp_block(plant, K, P):
    """Constraint block of the closed loop under gain K with storage matrix P.

    For D = 0 only the A_K' P + P A_K block is returned; the linear equality
    B_d' P = C is handled separately (see `equality_residual`).
    """
    P = np.asarray(P, dtype=float)
    if P.shape != (plant.n, plant.n):
        raise DimensionMismatch(f"P must be {plant.n}x{plant.n}, got {P.shape}")
    A_K = plant.closed_loop(K)
    top = A_K.T @ P + P @ A_K
    if plant.feedthrough_is_zero:
        return symmetrize(top)
    off = P @ plant.B_d - plant.C.T
    return np.block([[symmetrize(top), off], [off.T, -plant.D - plant.D.T]])


def equality_residual(plant, P):
    if not plant.feedthrough_is_zero:
        return 0.0
    return float(np.linalg.norm(plant.B_d.T @ np.asarray(P, dtype=float) - plant.C, "fro"))


def _check_closed_loop_assumptions(plant, K):
    """Warn when (A_K, B_d) controllability or (A_K, C) observability is near-degenerate."""
    A_K = plant.closed_loop(K)
    n = plant.n
    scale = 1.0 + np.linalg.norm(A_K, "fro")
    for lam in np.linalg.eigvals(A_K):
        shifted = A_K - lam * np.eye(n)
        s_c = np.linalg.svd(np.hstack([shifted, plant.B_d]), compute_uv=False)[n - 1]
        s_o = np.linalg.svd(np.vstack([shifted, plant.C]), compute_uv=False)[n - 1]
        if s_c <= 1e-9 * scale:
            warnings.warn(f"(A_K, B_d) nearly uncontrollable at eigenvalue {lam:.4g}; "
                          "the storage function may not be unique", stacklevel=3)
        if s_o <= 1e-9 * scale:
            warnings.warn(f"(A_K, C) nearly unobservable at eigenvalue {lam:.4g}; "
                          "the storage function may not be unique", stacklevel=3)


def validate_certificate(plant, K, P, mode, eps_pd=EPS_STORAGE, check_assumptions=False):
    """Independent certificate check: fresh eigensolves of the assembled block.

    Returns a `PassivityCertificate` on success, raises `Infeasible` with the
    achieved margin otherwise.  Never trusts optimizer state.
    """
    P = symmetrize(np.asarray(P, dtype=float))
    scale = constraint_scale(plant)
    lam_max = float(np.linalg.eigvalsh(kyp_block(plant, K, P))[-1]) / scale
    lam_min_p = float(np.linalg.eigvalsh(P)[0])
    eq_res = equality_residual(plant, P)
    ok = lam_max <= mode.threshold and lam_min_p >= eps_pd and eq_res <= EQUALITY_TOL
    if not ok:
        raise Infeasible(
            best_lambda_max=lam_max,
            msg=(f"certificate invalid: normalized lambda_max {lam_max:.3e} "
                 f"(threshold {mode.threshold:.3e}), lambda_min(P) {lam_min_p:.3e}, "
                 f"equality residual {eq_res:.3e}"))
    if check_assumptions:
        _check_closed_loop_assumptions(plant, K)
    return PassivityCertificate(P=P, mode=mode, lambda_max_constraint=lam_max,
                                lambda_min_P=lam_min_p, equality_residual=eq_res, scale=scale)


def _storage_family(plant):
    """Affine parameterization of admissible storage matrices P.

    D = 0: particular solution of B_d' P = C plus a basis of its nullspace
    within symmetric matrices.  D != 0: the full symmetric basis.
    Raises EqualityInconsistent when the D = 0 equality has no solution.
    """
    n = plant.n
    if plant.feedthrough_is_zero:
        sol = affine_symmetric_solutions(lambda E: plant.B_d.T @ E, plant.C, n)
        if sol is None:
            raise EqualityInconsistent("B_d' P = C has no symmetric solution")
        return sol
    return np.zeros((n, n)), symmetric_basis(n)


def _p_coordinates(P, particular, family):
    """Least-squares coordinates of P in the affine family (warm starts)."""
    q = family.shape[0]
    if q == 0:
        return np.zeros(0)
    Amat = family.reshape(q, -1).T
    theta, _, _, _ = np.linalg.lstsq(Amat, (P - particular).ravel(), rcond=None)
    return theta


def _certify_problem(plant, gains, particular, family):
    """Stacked constraint blocks, one per gain, over the storage family."""
    scale = constraint_scale(plant)
    n, p = plant.n, plant.p
    q = family.shape[0]
    closed = [plant.closed_loop(K) for K in gains]
    if plant.feedthrough_is_zero:
        blocks0 = np.stack([symmetrize(A_K.T @ particular + particular @ A_K) for A_K in closed])
        blocks1 = np.zeros((q, len(closed), n, n))
        for i, N in enumerate(family):
            for j, A_K in enumerate(closed):
                blocks1[i, j] = symmetrize(A_K.T @ N + N @ A_K)
    else:
        k = n + p
        dd = -plant.D - plant.D.T
        blocks0 = np.zeros((len(closed), k, k))
        blocks1 = np.zeros((q, len(closed), k, k))
        for j, A_K in enumerate(closed):
            blocks0[j, :n, :n] = symmetrize(A_K.T @ particular + particular @ A_K)
            off = particular @ plant.B_d - plant.C.T
            blocks0[j, :n, n:] = off
            blocks0[j, n:, :n] = off.T
            blocks0[j, n:, n:] = dd
            for i, N in enumerate(family):
                blocks1[i, j, :n, :n] = symmetrize(A_K.T @ N + N @ A_K)
                blocks1[i, j, :n, n:] = N @ plant.B_d
                blocks1[i, j, n:, :n] = (N @ plant.B_d).T
    return AffineLmiProblem(blocks0=blocks0 / scale, blocks1=blocks1 / scale,
                            pd0=particular, pd1=family, eps_pd=EPS_STORAGE)


def _gain_list(plant, gains):
    out = []
    for K in gains:
        K = np.asarray(K, dtype=float)
        if K.shape != (plant.m, plant.n):
            raise DimensionMismatch(f"gain must have shape {(plant.m, plant.n)}, got {K.shape}")
        out.append(K)
    return out


def certify_common(plant, gains, mode, seed=0, budget=None, initial_P=None):
    """One storage matrix certifying every gain in `gains` simultaneously."""
    gains = _gain_list(plant, gains)
    if not gains:
        raise ValueError("gain list must be nonempty")
    # passivity implies marginal stability: a clearly unstable closed loop
    # cannot be certified, so skip the search outright
    scale = constraint_scale(plant)
    for K in gains:
        abscissa = float(np.max(np.linalg.eigvals(plant.closed_loop(K)).real))
        if abscissa > 1e-9 * scale:
            raise Infeasible(msg=f"closed loop unstable (spectral abscissa {abscissa:.3e})")
    particular, family = _storage_family(plant)
    problem = _certify_problem(plant, gains, particular, family)

    def assemble(theta):
        return symmetrize(particular + np.tensordot(theta, family, axes=(0, 0))) \
            if family.shape[0] else particular.copy()

    def validator(theta):
        P = assemble(theta)
        try:
            for K in gains:
                validate_certificate(plant, K, P, mode)
            return True
        except Infeasible:
            return False

    initial = _p_coordinates(symmetrize(np.asarray(initial_P, dtype=float)), particular, family) \
        if initial_P is not None else None
    result = solve_feasibility(problem, mode.threshold, budget=budget,
                               rng=np.random.default_rng(seed), initial=initial,
                               validator=validator)
    P = assemble(result.theta)
    certs = [validate_certificate(plant, K, P, mode, check_assumptions=(i == 0))
             for i, K in enumerate(gains)]
    worst = max(c.lambda_max_constraint for c in certs)
    return PassivityCertificate(P=P, mode=mode, lambda_max_constraint=worst,
                                lambda_min_P=certs[0].lambda_min_P,
                                equality_residual=max(c.equality_residual for c in certs),
                                scale=certs[0].scale)


def certify_gain(plant, K, mode, seed=0, budget=None, initial_P=None):
    """Certificate for a single gain, or `Infeasible` after the search budget."""
    return certify_common(plant, [K], mode, seed=seed, budget=budget, initial_P=initial_P)


def find_passivating_gain(plant, mode, seed=0, budget=None):
    """Feasible (Z, W) of the convexified condition; the gain is K = W Z^-1.

    D != 0 uses the full block in (Z, W); D = 0 eliminates B_d' = C Z exactly
    and constrains Z A' + A Z - W' B_u' - B_u W.  The returned gain is
    re-certified with P = Z^-1 through the independent validator.
    """
    n, m, p = plant.n, plant.m, plant.p
    scale = constraint_scale(plant)
    if plant.feedthrough_is_zero:
        sol = affine_symmetric_solutions(lambda E: plant.C @ E, plant.B_d.T, n)
        if sol is None:
            raise EqualityInconsistent("B_d' = C Z has no symmetric solution")
        z_part, z_family = sol
    else:
        z_part, z_family = np.zeros((n, n)), symmetric_basis(n)
    qz = z_family.shape[0]
    w_family = np.zeros((m * n, m, n))
    for i in range(m * n):
        w_family[i].flat[i] = 1.0
    q = qz + m * n

    def zw_at(theta):
        Z = z_part + (np.tensordot(theta[:qz], z_family, axes=(0, 0)) if qz else 0.0)
        W = np.tensordot(theta[qz:], w_family, axes=(0, 0))
        return symmetrize(Z), W

    k = n if plant.feedthrough_is_zero else n + p

    def block_for(Z, W):
        top = symmetrize(Z @ plant.A.T + plant.A @ Z - W.T @ plant.B_u.T - plant.B_u @ W)
        if plant.feedthrough_is_zero:
            return top
        off = plant.B_d - Z @ plant.C.T
        return np.block([[top, off], [off.T, -plant.D - plant.D.T]])

    blocks0 = block_for(z_part, np.zeros((m, n)))[None, :, :]
    blocks1 = np.zeros((q, 1, k, k))
    for i in range(qz):
        blocks1[i, 0] = block_for(z_part + z_family[i], np.zeros((m, n))) - blocks0[0]
    for i in range(m * n):
        blocks1[qz + i, 0] = block_for(z_part, w_family[i]) - blocks0[0]
    problem = AffineLmiProblem(blocks0=blocks0 / scale, blocks1=blocks1 / scale,
                               pd0=z_part,
                               pd1=np.concatenate([z_family, np.zeros((m * n, n, n))]),
                               eps_pd=EPS_STORAGE)

    def validator(theta):
        Z, W = zw_at(theta)
        if np.linalg.eigvalsh(Z)[0] < EPS_STORAGE:
            return False
        Z_inv = np.linalg.solve(Z, np.eye(n))
        try:
            validate_certificate(plant, W @ Z_inv, symmetrize(Z_inv), mode)
            return True
        except Infeasible:
            return False

    result = solve_feasibility(problem, mode.threshold, budget=budget,
                               rng=np.random.default_rng(seed), validator=validator)
    Z, W = zw_at(result.theta)
    Z_inv = np.linalg.solve(Z, np.eye(n))
    K = W @ Z_inv
    validate_certificate(plant, K, symmetrize(Z_inv), mode, check_assumptions=True)
    return FeasiblePair(Z=Z, W=W, K=K)
