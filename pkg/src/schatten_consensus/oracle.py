"""Numeric reference for the fastest symmetric weight design on small graphs.

Minimises ``f(w) = ||W(w) - 11^T/n||_2`` over ``w`` in ``[-1, 1]^m``.

Two stages.  First a smoothed surrogate, ``t log sum exp(+-lambda_k / t)`` over
the eigenvalues of ``W(w) - J``, is minimised with L-BFGS-B for a decreasing
sequence of ``t``; the surrogate overestimates ``f`` by at most ``t log(2n)``.
This runs from several starting points and keeps the best.

Second, a level bundle method polishes the best point.  ``f`` is convex, and
for any unit eigenvector ``u`` of ``W(w) - J`` the affine function
``w' -> +-u^T (W(w') - J) u`` is a global minorant touching ``f`` at ``w``.
A linear programme over these cuts gives a certified lower bound; each step
projects the incumbent onto a level set of the cut model.  The result carries
the best value found and the lower bound, so the true optimum is bracketed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import logsumexp

from .graph import Graph, is_connected
from .weights import local_degree_weights, max_degree_weights, weights_to_matrix

MAX_NODES = 12
SMOOTHING = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


class OracleError(RuntimeError):
    pass


@dataclass
class OracleResult:
    w: np.ndarray
    mu: float
    lower_bound: float
    iterations: int

    @property
    def gap(self) -> float:
        return self.mu - self.lower_bound


class _Bundle:
    def __init__(self, g: Graph, cap: int):
        self.g = g
        a, b = g.endpoints
        self.a, self.b = a, b
        self.G = np.zeros((0, g.m))
        self.c = np.zeros(0)
        self.cap = cap
        self.n = g.n

    def evaluate(self, w, add_cuts=True, eig_tol=1e-6):
        """``f(w)``; cuts are added for every eigenvalue within ``eig_tol`` of it."""
        M = weights_to_matrix(self.g, w) - 1.0 / self.n
        lam, U = np.linalg.eigh(M)
        f = max(lam[-1], -lam[0])
        if add_cuts:
            rows, consts = [], []
            for k in range(len(lam)):
                if lam[k] >= f - eig_tol:
                    sign = 1.0
                elif -lam[k] >= f - eig_tol:
                    sign = -1.0
                else:
                    continue
                u = U[:, k]
                # u^T (I - J) u - sum_l w_l (u_a - u_b)^2
                s = (u[self.a] - u[self.b]) ** 2
                base = 1.0 - u.sum() ** 2 / self.n
                rows.append(-sign * s)
                consts.append(sign * base)
            self.G = np.vstack([self.G, rows])[-self.cap:]
            self.c = np.concatenate([self.c, consts])[-self.cap:]
        return float(f)

    def lower_bound(self) -> tuple[float, np.ndarray]:
        m = self.G.shape[1]
        # variables (w, t): minimise t s.t. G w + c <= t
        A = np.hstack([self.G, -np.ones((len(self.c), 1))])
        cost = np.zeros(m + 1)
        cost[-1] = 1.0
        bounds = [(-1.0, 1.0)] * m + [(None, None)]
        res = linprog(cost, A_ub=A, b_ub=-self.c, bounds=bounds, method="highs")
        if res.status != 0:
            raise OracleError(f"lower-bound LP failed: {res.message}")
        return float(res.fun), res.x[:m]

    def project(self, center: np.ndarray, level: float) -> np.ndarray:
        """Closest point to ``center`` in the box with every cut at most ``level``."""
        G, h = self.G, level - self.c

        def neg_dual(lam):
            x = np.clip(center - G.T @ lam, -1.0, 1.0)
            r = G @ x - h
            val = 0.5 * np.sum((x - center) ** 2) + lam @ r
            return -val, -r

        lam0 = np.zeros(len(h))
        res = minimize(neg_dual, lam0, jac=True, method="L-BFGS-B",
                       bounds=[(0.0, None)] * len(h),
                       options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
        return np.clip(center - G.T @ res.x, -1.0, 1.0)


def _spectral_norm(g: Graph, w) -> float:
    lam = np.linalg.eigvalsh(weights_to_matrix(g, w) - 1.0 / g.n)
    return float(max(lam[-1], -lam[0]))


def smoothed_descent(g: Graph, w0, ts=SMOOTHING, maxiter: int = 5000) -> np.ndarray:
    """Minimise the log-sum-exp surrogate of ``f`` for each smoothing level in turn."""
    a, b = g.endpoints
    n = g.n
    w = np.asarray(w0, dtype=float).copy()
    for t in ts:
        def fun(x):
            lam, U = np.linalg.eigh(weights_to_matrix(g, x) - 1.0 / n)
            z = np.concatenate([lam, -lam]) / t
            lse = logsumexp(z)
            pi = np.exp(z - lse)
            # d lambda_k / d w_l = -(U_ak - U_bk)^2
            D = (U[a, :] - U[b, :]) ** 2
            return t * lse, -(D @ (pi[:n] - pi[n:]))

        res = minimize(fun, w, jac=True, method="L-BFGS-B", bounds=[(-1.0, 1.0)] * g.m,
                       options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12})
        w = res.x
    return w


def solve_fdla_bundle(
    g: Graph,
    w0,
    tol: float = 1e-7,
    max_iter: int = 300,
    alpha: float = 0.3,
) -> OracleResult:
    """Level bundle method from ``w0``; see the module docstring."""
    bundle = _Bundle(g, cap=max(50, 8 * g.m))
    best_w = np.asarray(w0, dtype=float).copy()
    best_f = bundle.evaluate(best_w, eig_tol=1e-3)
    lb = -np.inf
    it = 0
    while it < max_iter:
        it += 1
        model_lb, _ = bundle.lower_bound()
        lb = max(lb, model_lb)
        if best_f - lb <= tol:
            break
        level = lb + alpha * (best_f - lb)
        x = bundle.project(best_w, level)
        f = bundle.evaluate(x)
        if f < best_f:
            best_w, best_f = x.copy(), f
    return OracleResult(best_w, float(best_f), float(min(lb, best_f)), it)


def solve_fdla(
    g: Graph,
    restarts: int = 3,
    seed=0,
    tol: float = 1e-7,
    max_iter: int = 300,
    max_nodes: int = MAX_NODES,
    smoothing=SMOOTHING,
) -> OracleResult:
    """Smoothed multi-start descent followed by bundle polishing.

    Starting points are LD, then MD, then uniform random vectors in
    ``[0, 1/max_degree]``.  ``max_iter`` bounds the polishing iterations.
    """
    if g.n > max_nodes:
        raise OracleError(f"oracle limited to {max_nodes} nodes, got {g.n}")
    if not is_connected(g):
        raise OracleError("graph must be connected")
    if g.n == 1:
        return OracleResult(np.zeros(0), 0.0, 0.0, 0)
    rng = np.random.default_rng(seed)
    starts = [local_degree_weights(g), max_degree_weights(g)]
    while len(starts) < restarts:
        starts.append(rng.uniform(0.0, 1.0 / g.max_degree, g.m))
    best_w, best_f = None, np.inf
    for w0 in starts[: max(restarts, 1)]:
        w = smoothed_descent(g, w0, smoothing)
        f = _spectral_norm(g, w)
        if f < best_f:
            best_w, best_f = w, f
    return solve_fdla_bundle(g, best_w, tol=tol, max_iter=max_iter)


def fdla_oracle_small(g: Graph, restarts: int = 3, seed=0, **kw):
    """``(w, mu)`` of the fastest symmetric weight design of a small graph.

    ``mu`` is the best value found, an upper bound on the optimum; use
    :func:`solve_fdla` for the matching certified lower bound.
    """
    res = solve_fdla(g, restarts=restarts, seed=seed, **kw)
    return res.w, res.mu
