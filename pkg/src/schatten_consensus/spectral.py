"""Spectral diagnostics for symmetric weight matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYM_TOL = 1e-9
STOCH_TOL = 1e-9
CONV_MARGIN = 1e-12
RHO_TOL = 1e-9


class SpectralError(ValueError):
    pass


def _check_symmetric(M: np.ndarray, tol: float = SYM_TOL) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if np.abs(M - M.T).max(initial=0.0) > tol * scale:
        raise SpectralError("matrix is not symmetric")
    return M


def symmetric_eigenvalues(M) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, largest first."""
    M = _check_symmetric(M)
    return np.linalg.eigvalsh(M)[::-1]


def second_largest_modulus(eigenvalues: np.ndarray) -> float:
    lam = np.asarray(eigenvalues)
    if lam.size < 2:
        return 0.0
    return float(max(lam[1], -lam[-1]))


def mu(W) -> float:
    """max(lambda_2, -lambda_n): the asymptotic convergence factor."""
    return second_largest_modulus(symmetric_eigenvalues(W))


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray = field(repr=False)
    mu: float
    rho: float
    gap: float
    tau: float

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])


def spectral_report(W) -> SpectralReport:
    lam = symmetric_eigenvalues(W)
    m = second_largest_modulus(lam)
    rho = float(max(lam[0], -lam[-1]))
    tau = rho if rho - 1.0 > RHO_TOL else m
    return SpectralReport(lam, m, rho, 1.0 - m, tau)


def trace_power(W, p: int, method: str = "matmul") -> float:
    """Tr(W^p) for even ``p``, by repeated products or from the spectrum."""
    if not isinstance(p, (int, np.integer)) or p < 2 or p % 2:
        raise SpectralError(f"p must be an even integer >= 2, got {p!r}")
    W = _check_symmetric(W)
    if method == "eig":
        return float(np.sum(symmetric_eigenvalues(W) ** p))
    if method != "matmul":
        raise ValueError(f"unknown method {method!r}")
    half = np.linalg.matrix_power(W, p // 2)
    # Tr(A A) = sum(A * A^T) and W^(p/2) is symmetric
    return float(np.sum(half * half))


def schatten_norm(M, p: int) -> float:
    """(sum sigma_i^p)^(1/p) over the singular values of ``M``."""
    if p < 1:
        raise SpectralError("p must be >= 1")
    M = np.asarray(M, dtype=float)
    try:
        sigma = np.abs(symmetric_eigenvalues(M))
    except SpectralError:
        sigma = np.linalg.svd(M, compute_uv=False)
    return float(np.sum(sigma ** p) ** (1.0 / p))


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reasons: tuple[str, ...] = ()

    def __bool__(self):
        return self.ok


def check_convergent(W) -> Verdict:
    """Test the three average-consensus conditions on ``W``.

    Column sums and row sums must equal one, and the spectral radius of
    ``W - 11^T/n`` must be strictly below one.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    reasons = []
    col = np.abs(W.sum(axis=0) - 1.0).max()
    row = np.abs(W.sum(axis=1) - 1.0).max()
    if col > STOCH_TOL:
        reasons.append(f"column sums deviate from 1 by {col:.3g}")
    if row > STOCH_TOL:
        reasons.append(f"row sums deviate from 1 by {row:.3g}")
    D = W - np.full((n, n), 1.0 / n)
    if np.abs(D - D.T).max() <= SYM_TOL:
        r = float(np.abs(np.linalg.eigvalsh((D + D.T) / 2)).max())
    else:
        r = float(np.abs(np.linalg.eigvals(D)).max())
    if not r < 1.0 - CONV_MARGIN:
        reasons.append(f"spectral radius of W - J is {r:.12g} (needs < 1)")
    return Verdict(not reasons, tuple(reasons))
