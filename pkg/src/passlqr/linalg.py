"""Dense small-matrix kernels: spectra, Lyapunov equations and the CARE.

Everything here targets desk-scale systems (n <= 64).  The Lyapunov solver
uses the Kronecker vectorization of the equation; the Riccati solver is a
Newton iteration whose every step reuses that Lyapunov solver.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NonSquare,
    NotDetectable,
    NotHurwitz,
    NotStabilizable,
    SingularSystem,
)

# Strict inequalities in eigenvalue tests need a numeric margin.
HURWITZ_TOL = 1e-12

_MAX_LYAP_DIM = 64


def vec_gain(K):
    """Column-stacked vectorization of a gain matrix."""
    return np.asarray(K, dtype=float).flatten(order="F")


def unvec_gain(k, m, n):
    """Inverse of `vec_gain` for an (m, n) gain."""
    k = np.asarray(k, dtype=float)
    if k.size != m * n:
        raise DimensionMismatch(f"vector of length {k.size} cannot fill a {m}x{n} gain")
    return k.reshape((m, n), order="F")


def symmetrize(X):
    return 0.5 * (X + X.T)


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: np.ndarray
    spectral_abscissa: float
    min_eigenvalue_sym: float

    @property
    def is_hurwitz(self):
        return self.spectral_abscissa < -HURWITZ_TOL


def spectral_summary(A):
    """Eigenvalues, spectral abscissa, and (for symmetric input) the smallest eigenvalue."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {A.shape}")
    eigs = np.linalg.eigvals(A)
    abscissa = float(np.max(eigs.real))
    if np.allclose(A, A.T, atol=1e-12 * (1.0 + np.abs(A).max())):
        min_sym = float(np.linalg.eigvalsh(A)[0])
    else:
        min_sym = float("nan")
    return SpectralSummary(eigenvalues=eigs, spectral_abscissa=abscissa, min_eigenvalue_sym=min_sym)


def spectral_abscissa(A):
    A = np.asarray(A, dtype=float)
    return float(np.max(np.linalg.eigvals(A).real))


def is_hurwitz(A):
    return spectral_abscissa(A) < -HURWITZ_TOL


def solve_lyapunov(A_cl, Qrhs):
    """Solve A_cl' X + X A_cl + Qrhs = 0 for symmetric X, A_cl Hurwitz.

    Dense solve of the vectorized system (I (x) A_cl' + A_cl' (x) I) vec X = -vec Qrhs.
    """
    A_cl = np.asarray(A_cl, dtype=float)
    Qrhs = np.asarray(Qrhs, dtype=float)
    n = A_cl.shape[0]
    if A_cl.shape != (n, n):
        raise NonSquare(f"A_cl must be square, got {A_cl.shape}")
    if Qrhs.shape != (n, n):
        raise DimensionMismatch(f"Qrhs must be {n}x{n}, got {Qrhs.shape}")
    if n > _MAX_LYAP_DIM:
        raise DimensionMismatch(f"dense vectorization solve supports n <= {_MAX_LYAP_DIM}, got n = {n}")
    if not np.allclose(Qrhs, Qrhs.T, atol=1e-10 * (1.0 + np.abs(Qrhs).max())):
        raise DimensionMismatch("Qrhs must be symmetric")
    abscissa = spectral_abscissa(A_cl)
    if abscissa >= -HURWITZ_TOL:
        raise NotHurwitz(abscissa)

    eye = np.eye(n)
    L = np.kron(eye, A_cl.T) + np.kron(A_cl.T, eye)
    try:
        x = np.linalg.solve(L, -Qrhs.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"vectorized Lyapunov system is singular: {exc}") from exc
    X = symmetrize(x.reshape((n, n), order="F"))

    resid = np.linalg.norm(A_cl.T @ X + X @ A_cl + Qrhs, "fro")
    bound = 1e-10 * (1.0 + np.linalg.norm(A_cl, "fro") * np.linalg.norm(X, "fro")
                     + np.linalg.norm(Qrhs, "fro"))
    if resid > bound:
        raise SingularSystem(f"Lyapunov residual {resid:.3e} exceeds tolerance {bound:.3e}")
    return X


def _sqrtm_psd(Q):
    """Symmetric square root of a PSD matrix (tiny negative eigenvalues clipped)."""
    w, V = np.linalg.eigh(np.asarray(Q, dtype=float))
    w = np.clip(w, 0.0, None)
    return V @ np.diag(np.sqrt(w)) @ V.T


def _pbh_rank_deficient(A, M, stacked, tol_re=-1e-9):
    """Return an eigenvalue of A at which the PBH matrix loses rank, or None.

    `stacked=False` tests [A - lam I, M] (stabilizability with M = B);
    `stacked=True` tests [A - lam I; M] (detectability with M = sqrt(Q)).
    Only eigenvalues with real part >= tol_re are examined.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    scale = 1.0 + np.linalg.norm(A, "fro") + np.linalg.norm(M, "fro")
    for lam in np.linalg.eigvals(A):
        if lam.real < tol_re:
            continue
        shifted = A - lam * np.eye(n)
        block = np.vstack([shifted, M]) if stacked else np.hstack([shifted, M])
        s = np.linalg.svd(block, compute_uv=False)
        if s[n - 1] <= 1e-9 * scale:
            return lam
    return None


def pbh_stabilizable(A, B):
    return _pbh_rank_deficient(A, np.asarray(B, dtype=float), stacked=False) is None


def pbh_detectable(A, C):
    return _pbh_rank_deficient(A, np.asarray(C, dtype=float), stacked=True) is None


def _bass_initial_gain(A, B_u, R_inv):
    """Stabilizing seed gain for the Newton iteration.

    Solves (A + beta I) Z + Z (A + beta I)' = 2 B R^-1 B' + ridge for Z > 0
    and returns K0 = R^-1 B' Z^-1.  The shift starts at the prescribed
    2*max(0, abscissa(A)) + 1 and is escalated until -(A + beta I) is stable
    and the seed verifiably stabilizes; very stable open-loop modes make the
    small shift insufficient.
    """
    n = A.shape[0]
    abscissa = spectral_abscissa(A)
    if abscissa < -HURWITZ_TOL:
        return np.zeros((B_u.shape[1], n))
    rhs_core = 2.0 * B_u @ R_inv @ B_u.T
    beta = 2.0 * max(0.0, abscissa) + 1.0
    needed = float(np.max(-np.linalg.eigvals(A).real))  # -(A + beta I) Hurwitz requires beta > this
    for _ in range(8):
        if beta > needed + HURWITZ_TOL:
            ridge = 1e-12 * (1.0 + np.linalg.norm(rhs_core, "fro"))
            try:
                Z = solve_lyapunov(-(A + beta * np.eye(n)).T, rhs_core + ridge * np.eye(n))
                K0 = R_inv @ B_u.T @ np.linalg.solve(Z, np.eye(n))
                if is_hurwitz(A - B_u @ K0):
                    return K0
            except (NotHurwitz, SingularSystem, np.linalg.LinAlgError):
                pass
        beta = 2.0 * beta + 1.0 + max(0.0, needed)
    raise NoConvergence("could not construct a stabilizing initial gain")


def solve_care(A, B_u, Q, R, max_iter=60, rtol=1e-9):
    """Stabilizing solution of A'X + XA - X B_u R^-1 B_u' X + Q = 0.

    Returns (X, K) with K = R^-1 B_u' X and A - B_u K Hurwitz.  Newton
    iteration: each step solves one Lyapunov equation for the current
    closed loop; the seed gain comes from `_bass_initial_gain`.
    """
    A = np.asarray(A, dtype=float)
    B_u = np.atleast_2d(np.asarray(B_u, dtype=float))
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or B_u.shape[0] != n or Q.shape != (n, n) or R.shape != (B_u.shape[1],) * 2:
        raise DimensionMismatch("inconsistent CARE dimensions")

    lam = _pbh_rank_deficient(A, B_u, stacked=False)
    if lam is not None:
        raise NotStabilizable(f"(A, B_u) fails the PBH test at eigenvalue {lam:.6g}")
    lam = _pbh_rank_deficient(A, _sqrtm_psd(Q), stacked=True)
    if lam is not None:
        raise NotDetectable(f"(A, sqrt(Q)) fails the PBH test at eigenvalue {lam:.6g}")

    R_inv = np.linalg.solve(R, np.eye(R.shape[0]))
    K = _bass_initial_gain(A, B_u, R_inv)
    X = None
    scale_q = 1.0 + np.linalg.norm(Q, "fro")
    for _ in range(max_iter):
        A_cl = A - B_u @ K
        X = solve_lyapunov(A_cl, Q + K.T @ R @ K)
        K_next = R_inv @ B_u.T @ X
        step = np.linalg.norm(K_next - K, "fro") / (1.0 + np.linalg.norm(K, "fro"))
        K = K_next
        resid = np.linalg.norm(A.T @ X + X @ A - X @ B_u @ R_inv @ B_u.T @ X + Q, "fro")
        denom = scale_q + 2.0 * np.linalg.norm(A, "fro") * np.linalg.norm(X, "fro") \
            + np.linalg.norm(X @ B_u @ R_inv @ B_u.T @ X, "fro")
        if resid <= rtol * denom and step <= 1e-10:
            break
    else:
        raise NoConvergence(f"Newton iteration stalled (relative residual {resid / denom:.3e})")

    if not is_hurwitz(A - B_u @ K):
        raise NoConvergence("Riccati iterate lost closed-loop stability")
    return symmetrize(X), K
