"""Matrix-normal log-density and sampling.

A random P x R matrix X is matrix-normal with mean M, row covariance
Sigma (P x P) and column covariance Psi (R x R) exactly when vec(X) is
multivariate normal with mean vec(M) and covariance kron(Psi, Sigma).
The log-density is

    -(PR/2) log(2 pi) - (R/2) log|Sigma| - (P/2) log|Psi|
    - (1/2) tr[Sigma^-1 (X - M) Psi^-1 (X - M)']

and is evaluated in log space throughout; the raw density is never
materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DecompositionError

LOG_2PI = np.log(2.0 * np.pi)
_SYM_TOL = 1e-12


@dataclass(frozen=True)
class MatNormParams:
    """Mean matrix plus row/column covariances of one matrix-normal law."""

    M: np.ndarray
    Sigma: np.ndarray
    Psi: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        Sigma = np.asarray(self.Sigma, dtype=float)
        Psi = np.asarray(self.Psi, dtype=float)
        if M.ndim != 2:
            raise ValueError("M must be a P x R matrix")
        P, R = M.shape
        if Sigma.shape != (P, P):
            raise ValueError(f"Sigma must be {P} x {P}, got {Sigma.shape}")
        if Psi.shape != (R, R):
            raise ValueError(f"Psi must be {R} x {R}, got {Psi.shape}")
        for name, mat in (("Sigma", Sigma), ("Psi", Psi)):
            if np.max(np.abs(mat - mat.T)) > _SYM_TOL * max(1.0, np.max(np.abs(mat))):
                raise ValueError(f"{name} is not symmetric")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "Psi", Psi)

    @property
    def P(self) -> int:
        return self.M.shape[0]

    @property
    def R(self) -> int:
        return self.M.shape[1]


def _cholesky(mat: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise DecompositionError(f"{name} is not positive definite") from None


def _chol_inv_logdet(mat: np.ndarray, name: str) -> tuple[np.ndarray, float]:
    """Inverse of the lower Cholesky factor and the log-determinant."""
    L = _cholesky(mat, name)
    L_inv = solve_triangular(L, np.eye(L.shape[0]), lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return L_inv, logdet


def log_density_stack(Xs: np.ndarray, M: np.ndarray, Sigma: np.ndarray,
                      Psi: np.ndarray) -> np.ndarray:
    """Log-density of a stack of matrices under one parameter set.

    Parameters
    ----------
    Xs : ndarray, shape (..., P, R)
    M, Sigma, Psi : ndarray
        Mean, row covariance and column covariance.

    Returns
    -------
    ndarray with the leading shape of ``Xs``.
    """
    Xs = np.asarray(Xs, dtype=float)
    P, R = M.shape
    LS_inv, logdet_S = _chol_inv_logdet(Sigma, "Sigma")
    LP_inv, logdet_P = _chol_inv_logdet(Psi, "Psi")
    Xc = Xs - M
    # tr[S^-1 Xc P^-1 Xc'] == || LS^-1 Xc LP^-T ||_F^2
    half = np.einsum("pq,...qr->...pr", LS_inv, Xc)
    whitened = np.einsum("...pr,sr->...ps", half, LP_inv)
    quad = np.einsum("...ps,...ps->...", whitened, whitened)
    return -0.5 * (P * R * LOG_2PI + R * logdet_S + P * logdet_P + quad)


def log_density(X: np.ndarray, params: MatNormParams) -> float:
    """Log-density of one P x R matrix."""
    X = np.asarray(X, dtype=float)
    if X.shape != (params.P, params.R):
        raise ValueError(f"X must be {params.P} x {params.R}, got {X.shape}")
    return float(log_density_stack(X, params.M, params.Sigma, params.Psi))


def sample(params: MatNormParams, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from the matrix-normal law as M + A Z B' with A A' = Sigma, B B' = Psi.

    ``size=None`` returns one (P, R) matrix; an integer returns a
    (size, P, R) stack.  Deterministic given the generator state.
    """
    A = _cholesky(params.Sigma, "Sigma")
    B = _cholesky(params.Psi, "Psi")
    shape = (params.P, params.R) if size is None else (size, params.P, params.R)
    Z = rng.standard_normal(shape)
    return params.M + np.einsum("pq,...qr,sr->...ps", A, Z, B)
