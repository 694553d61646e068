"""Plant container: LTI system with a control port, a disturbance port and LQR weights.

    dx/dt = A x + B_u u + B_d d
        y = C x + D d

State feedback u = -K x closes the loop to (A - B_u K, B_d, C, D).  The LQR
weights (Q, R) penalize the disturbance-free response.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, PlantFormatError

_SYM_TOL = 1e-10


def _as_matrix(x, name):
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D array, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise PlantFormatError(f"{name} contains non-finite entries", field=name)
    return a


def _check_symmetric(a, name):
    if not np.allclose(a, a.T, atol=_SYM_TOL * (1.0 + np.abs(a).max())):
        raise PlantFormatError(f"{name} must be symmetric", field=name)


@dataclass(frozen=True)
class LtiPlant:
    """Immutable plant description; all matrices are validated on construction."""

    A: np.ndarray
    B_u: np.ndarray
    B_d: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A, "A"))
        object.__setattr__(self, "B_u", _as_matrix(self.B_u, "B_u"))
        object.__setattr__(self, "B_d", _as_matrix(self.B_d, "B_d"))
        object.__setattr__(self, "C", _as_matrix(self.C, "C"))
        object.__setattr__(self, "D", _as_matrix(self.D, "D"))
        object.__setattr__(self, "Q", _as_matrix(self.Q, "Q"))
        object.__setattr__(self, "R", _as_matrix(self.R, "R"))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        m = self.B_u.shape[1]
        p = self.B_d.shape[1]
        checks = [
            (self.B_u.shape, (n, m), "B_u"),
            (self.B_d.shape, (n, p), "B_d"),
            (self.C.shape, (p, n), "C"),
            (self.D.shape, (p, p), "D"),
            (self.Q.shape, (n, n), "Q"),
            (self.R.shape, (m, m), "R"),
        ]
        for got, want, nm in checks:
            if got != want:
                raise DimensionMismatch(f"{nm} must have shape {want}, got {got}")
        _check_symmetric(self.Q, "Q")
        _check_symmetric(self.R, "R")
        q_eigs = np.linalg.eigvalsh(self.Q)
        if q_eigs.min() < -1e-10 * (1.0 + abs(q_eigs).max()):
            raise PlantFormatError("Q must be positive semidefinite", field="Q")
        r_eigs = np.linalg.eigvalsh(self.R)
        if r_eigs.min() <= 0.0:
            raise PlantFormatError("R must be positive definite", field="R")
        for a in (self.A, self.B_u, self.B_d, self.C, self.D, self.Q, self.R):
            a.setflags(write=False)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B_u.shape[1]

    @property
    def p(self):
        return self.B_d.shape[1]

    @property
    def feedthrough_is_zero(self):
        return bool(np.all(self.D == 0.0))

    def closed_loop(self, K):
        """A - B_u K for a gain K of shape (m, n)."""
        K = np.asarray(K, dtype=float)
        if K.shape != (self.m, self.n):
            raise DimensionMismatch(f"gain must have shape {(self.m, self.n)}, got {K.shape}")
        return self.A - self.B_u @ K

    def as_dict(self):
        return {
            "A": self.A, "B_u": self.B_u, "B_d": self.B_d,
            "C": self.C, "D": self.D, "Q": self.Q, "R": self.R,
        }
