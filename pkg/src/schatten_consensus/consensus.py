"""Synchronous average consensus and joint consensus/optimisation (JCO)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, is_connected
from .protocol import MessageLog, distributed_round, init_views, views_to_weights
from .schatten import (
    StepSchedule,
    _check_p,
    _gradient_from_power,
    messages_per_round,
    power_minus_one,
    project_box,
)
from .weights import local_degree_weights, weights_to_matrix

DEFAULT_THRESHOLD = 1e-3
DEFAULT_MAX_ITER = 10**6


def consensus_step(W, x) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    if W.shape != (x.size, x.size):
        raise ValueError(f"W is {W.shape} but x has {x.size} entries")
    return W @ x


@dataclass
class ErrorTrace:
    """Normalised error ``e(k) = ||x(k) - xbar|| / ||x(0) - xbar||``.

    ``conv_time`` is the first ``k`` with ``e(k) < threshold`` or ``inf``.
    """

    errors: list[float]
    threshold: float
    conv_time: float = math.inf
    sums: list[float] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return math.isfinite(self.conv_time)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "e_k"])
        for k, e in enumerate(self.errors):
            writer.writerow([k, repr(float(e))])

    def rate(self, tail: int | None = None) -> float:
        """Per-step decay factor fitted by least squares on the tail of log e(k)."""
        e = np.asarray(self.errors)
        k = np.arange(e.size)
        ok = e > 0
        k, e = k[ok], e[ok]
        if tail is not None:
            k, e = k[-tail:], e[-tail:]
        if k.size < 2:
            raise ValueError("need at least two positive errors")
        slope = np.polyfit(k, np.log(e), 1)[0]
        return float(np.exp(slope))


def _start(x0):
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    xbar = x.mean()
    e0 = float(np.linalg.norm(x - xbar))
    return x, xbar, e0


def run_consensus(W, x0, threshold: float = DEFAULT_THRESHOLD, max_iter: int = DEFAULT_MAX_ITER):
    """Iterate ``x <- W x`` until ``e(k) < threshold`` or ``max_iter`` steps.

    Returns ``(x, trace)``.  The true average is used only for measurement.
    """
    W = np.asarray(W, dtype=float)
    x, xbar, e0 = _start(x0)
    trace = ErrorTrace([1.0 if e0 > 0 else 0.0], threshold, sums=[float(x.sum())])
    if e0 == 0.0:
        trace.errors[0] = 0.0
        trace.conv_time = 0
        return x, trace
    if 1.0 < threshold:
        trace.conv_time = 0
        return x, trace
    for k in range(1, max_iter + 1):
        x = W @ x
        e = float(np.linalg.norm(x - xbar)) / e0
        trace.errors.append(e)
        trace.sums.append(float(x.sum()))
        if e < threshold:
            trace.conv_time = k
            break
        if not math.isfinite(e):
            break
    return x, trace


@dataclass
class MessageTally:
    optimisation: int = 0
    averaging: int = 0

    @property
    def total(self) -> int:
        return self.optimisation + self.averaging


@dataclass
class JCOResult:
    x: np.ndarray
    trace: ErrorTrace
    w: np.ndarray
    messages: MessageTally
    log: MessageLog | None = None


def run_jco(
    g: Graph,
    p: int,
    w0=None,
    x0=None,
    threshold: float = DEFAULT_THRESHOLD,
    max_iter: int = 100_000,
    engine: str = "dense",
    sched: StepSchedule | None = None,
) -> JCOResult:
    """Interleave one gradient update and one averaging step per slot.

    At slot ``k`` the link weights move by ``-gamma(k) g`` with
    ``gamma(k) = 1 / (p (1 + k))`` and are clipped to ``[-1, 1]``; the state
    is then averaged once with the updated matrix.  ``engine="message"``
    runs the node-level protocol (slow, for checking); ``"dense"`` computes
    the same iterates with matrix algebra and the same message counts.
    """
    p = _check_p(p)
    if not is_connected(g):
        raise ValueError("JCO needs a connected graph")
    if engine not in ("dense", "message"):
        raise ValueError(f"unknown engine {engine!r}")
    sched = sched or StepSchedule.jco(p)
    w = local_degree_weights(g) if w0 is None else np.array(w0, dtype=float)
    if x0 is None:
        raise ValueError("x0 is required")
    x, xbar, e0 = _start(x0)
    trace = ErrorTrace([1.0 if e0 > 0 else 0.0], threshold, sums=[float(x.sum())])
    tally = MessageTally()
    log = MessageLog() if engine == "message" else None
    if e0 == 0.0:
        trace.conv_time = 0
        return JCOResult(x, trace, w, tally, log)
    per_opt = messages_per_round(g, p)
    per_avg = 2 * g.m
    for k in range(max_iter):
        if engine == "dense":
            W = weights_to_matrix(g, w)
            grad = _gradient_from_power(g, power_minus_one(W, p), p)
            w = project_box(w - sched(k) * grad)
        else:
            views = distributed_round(g, init_views(g, w), p, k, sched, log)
            w = views_to_weights(g, views)
        tally.optimisation += per_opt
        x = weights_to_matrix(g, w) @ x
        tally.averaging += per_avg
        e = float(np.linalg.norm(x - xbar)) / e0
        trace.errors.append(e)
        trace.sums.append(float(x.sum()))
        if e < threshold:
            trace.conv_time = k + 1
            break
        if not math.isfinite(e):
            break
    return JCOResult(x, trace, w, tally, log)


def uniform_initial_state(n: int, seed, low: float = 0.0, high: float = 100.0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(low, high, n)
