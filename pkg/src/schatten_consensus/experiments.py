"""Seeded experiment runs, message-overhead accounting and CSV output."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from .consensus import run_consensus, run_jco, uniform_initial_state
from .graph import Graph, GraphError, diameter, generate_er, generate_rgg, is_connected, read_edge_list
from .protocol import MessageLog, RoundMessage, distributed_optimize
from .schatten import StepSchedule, tm_optimize
from .spectral import mu as spectral_mu
from .weights import HEURISTICS, weights_to_matrix

GRAPH_STREAM = 0
X0_STREAM = 1
MAX_RESAMPLE = 1000
LOCAL_ALGORITHMS = ("MD", "LD", "TM2", "TM4")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """All knobs of an experiment; round-trips through a ``key = value`` file."""

    model: str = "rgg"  # rgg, er or file
    n: int = 100
    pr: float = 0.1
    radius: float = 0.1517
    graph: str = ""
    algorithms: tuple[str, ...] = ("MD", "LD", "OC", "TM2", "TM4")
    a: float | None = None
    b: float = 100.0
    gtol: float = 0.02
    max_iter: int = 100_000
    threshold: float = 1e-3
    consensus_max_iter: int = 10**6
    reps: int = 10
    seed: int = 0
    cycles: int = 10
    x0_low: float = 0.0
    x0_high: float = 100.0
    jco_schedule: str = "literal"  # literal: 1/(p(1+k)); optimizer: a/(b+k)
    agreement: float = 10.0
    delta: float | None = None
    out: str = "."

    def __post_init__(self):
        if isinstance(self.algorithms, str):
            self.algorithms = tuple(s.strip() for s in self.algorithms.split(",") if s.strip())
        for alg in self.algorithms:
            parse_algorithm(alg)
        if self.model not in ("rgg", "er", "file"):
            raise ConfigError(f"unknown graph model {self.model!r}")
        if self.model == "file" and not self.graph:
            raise ConfigError("model=file needs graph=<path>")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.jco_schedule not in ("literal", "optimizer"):
            raise ConfigError("jco_schedule must be 'literal' or 'optimizer'")

    def schedule(self, p: int) -> StepSchedule:
        return StepSchedule(self.a if self.a is not None else 10.0 / p, self.b)

    def jco_sched(self, p: int) -> StepSchedule:
        return StepSchedule.jco(p) if self.jco_schedule == "literal" else self.schedule(p)

    def rep_seed(self, r: int) -> int:
        return self.seed + r

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(v)
            lines.append(f"{f.name} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        vals: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            vals[key] = _coerce(kinds[key], val, key)
        vals.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**vals)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _coerce(kind: str, val: str, key: str):
    try:
        if val == "" and "None" in kind:
            return None
        if kind.startswith("int"):
            return int(val)
        if kind.startswith("float"):
            return float(val)
        if kind.startswith("tuple"):
            return tuple(s.strip() for s in val.split(",") if s.strip())
        return val
    except ValueError:
        raise ConfigError(f"bad value {val!r} for {key}") from None


def parse_algorithm(name: str) -> tuple[str, int | None, str | None]:
    """``MD``, ``LD``, ``OC``, ``TM<p>`` or ``JCO<p>-<LD|MD>``."""
    if name in HEURISTICS:
        return name, None, None
    if name.startswith("TM") and name[2:].isdigit():
        p = int(name[2:])
        if p < 2 or p % 2:
            raise ConfigError(f"{name}: p must be even and >= 2")
        return "TM", p, None
    if name.startswith("JCO"):
        head, _, init = name[3:].partition("-")
        if head.isdigit() and init in ("LD", "MD") and int(head) % 2 == 0 and int(head) >= 2:
            return "JCO", int(head), init
    raise ConfigError(f"unknown algorithm {name!r}")


def connected_graph(cfg: ExperimentConfig, seed: int) -> tuple[Graph, int]:
    """Graph for one replication, resampled until connected.

    Attempt ``t`` draws from ``SeedSequence([seed, GRAPH_STREAM, t])``.
    Returns the graph and the number of attempts used.
    """
    if cfg.model == "file":
        g = read_edge_list(cfg.graph)
        if not is_connected(g):
            raise GraphError(f"{cfg.graph} is not connected")
        return g, 1
    for t in range(MAX_RESAMPLE):
        ss = np.random.SeedSequence([seed, GRAPH_STREAM, t])
        if cfg.model == "er":
            g = generate_er(cfg.n, cfg.pr, ss)
        else:
            g = generate_rgg(cfg.n, cfg.radius, ss)
        if is_connected(g):
            return g, t + 1
    raise GraphError(f"no connected graph after {MAX_RESAMPLE} draws")


def initial_state(cfg: ExperimentConfig, n: int, seed: int) -> np.ndarray:
    return uniform_initial_state(n, np.random.SeedSequence([seed, X0_STREAM]), cfg.x0_low, cfg.x0_high)


def init_messages(g: Graph, algorithm: str, log: MessageLog | None = None, **tm_kw) -> int:
    """Messages needed to set up the weights of a local algorithm.

    MD runs a max-consensus on the degree for ``diameter`` rounds, LD has
    every node send its degree once, and TM counts every optimiser round.
    With ``log`` the messages are generated one by one and recorded.
    """
    kind, p, _ = parse_algorithm(algorithm)
    if kind == "MD":
        rounds = diameter(g)
        tag = "max_degree"
    elif kind == "LD":
        rounds = 1
        tag = "degree"
    elif kind == "TM":
        if log is not None:
            before = log.total
            distributed_optimize(g, p, log=log, **tm_kw)
            return log.total - before
        _, st = tm_optimize(g, p, **tm_kw)
        return st.messages
    else:
        raise ConfigError(f"{algorithm} is not a local algorithm")
    if log is not None:
        for k in range(rounds):
            for i in range(g.n):
                for j in g.neighbors[i]:
                    log.add(RoundMessage(k, 0, i, j, tag, 1))
    return rounds * 2 * g.m


def consensus_messages(g: Graph, iterations) -> float:
    """Every averaging iteration sends one value each way over every link."""
    return 2 * g.m * iterations


@dataclass
class RunRecord:
    seed: int
    algorithm: str
    mu: float
    conv_time: float
    msgs_total: float
    init_msgs: int = 0
    m: int = 0


def _conv_time(W, x0, cfg) -> float:
    if spectral_mu(W) >= 1.0 - 1e-12:
        # cannot reach the threshold from a generic start
        return math.inf
    _, tr = run_consensus(W, x0, cfg.threshold, cfg.consensus_max_iter)
    return tr.conv_time


def run_algorithm(g: Graph, alg: str, x0, cfg: ExperimentConfig, seed: int = 0) -> RunRecord:
    kind, p, init = parse_algorithm(alg)
    if kind in HEURISTICS:
        w = HEURISTICS[kind](g)
        W = weights_to_matrix(g, w)
        init_msgs = init_messages(g, kind) if kind != "OC" else 0
        ct = _conv_time(W, x0, cfg)
        return RunRecord(seed, alg, spectral_mu(W), ct, init_msgs + consensus_messages(g, ct), init_msgs, g.m)
    if kind == "TM":
        w, st = tm_optimize(g, p, cfg.schedule(p), cfg.gtol, cfg.max_iter)
        W = weights_to_matrix(g, w)
        ct = _conv_time(W, x0, cfg)
        return RunRecord(seed, alg, spectral_mu(W), ct, st.messages + consensus_messages(g, ct), st.messages, g.m)
    w0 = HEURISTICS[init](g)
    res = run_jco(g, p, w0, x0, cfg.threshold, cfg.max_iter, sched=cfg.jco_sched(p))
    init_msgs = init_messages(g, init)
    return RunRecord(
        seed, alg, spectral_mu(weights_to_matrix(g, res.w)), res.trace.conv_time,
        init_msgs + res.messages.total, init_msgs, g.m,
    )


def ci95(values) -> tuple[float, float]:
    """Mean and Student-t 95% half width (nan for a single value)."""
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    if v.size < 2 or not np.all(np.isfinite(v)):
        return mean, math.nan
    half = stats.t.ppf(0.975, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size)
    return mean, float(half)


@dataclass
class ComparisonResult:
    records: list[RunRecord]
    algorithms: tuple[str, ...]

    def values(self, alg: str, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.records if r.algorithm == alg], dtype=float)

    def summary(self, metrics=("mu", "conv_time", "msgs_total")) -> list[tuple]:
        rows = []
        for alg in self.algorithms:
            for metric in metrics:
                v = self.values(alg, metric)
                mean, half = ci95(v)
                rows.append((alg, metric, mean, half, v.size))
        return rows

    def summary_csv(self) -> str:
        return emit_csv(["algorithm", "metric", "mean", "ci95_half", "reps"], self.summary())

    def runs_csv(self) -> str:
        return emit_csv(
            ["seed", "algorithm", "mu", "conv_time", "msgs_total"],
            [(r.seed, r.algorithm, r.mu, r.conv_time, r.msgs_total) for r in self.records],
        )


def run_comparison(cfg: ExperimentConfig, graphs=None) -> ComparisonResult:
    """Every algorithm on every replication; replication ``r`` uses ``seed + r``."""
    records = []
    for r in range(cfg.reps):
        seed = cfg.rep_seed(r)
        g = graphs[r] if graphs is not None else connected_graph(cfg, seed)[0]
        x0 = initial_state(cfg, g.n, seed)
        for alg in cfg.algorithms:
            records.append(run_algorithm(g, alg, x0, cfg, seed))
    return ComparisonResult(records, tuple(cfg.algorithms))


@dataclass
class OverheadLedger:
    """Mean messages per link: set-up cost plus one consensus run per cycle."""

    init_per_link: dict[str, float]
    cycle_per_link: dict[str, float]
    cycles: int
    logged_total: dict[str, int] = field(default_factory=dict)

    def cumulative(self, alg: str, cycle: int) -> float:
        return self.init_per_link[alg] + cycle * self.cycle_per_link[alg]

    def rows(self) -> list[tuple]:
        return [
            (alg, c, self.cumulative(alg, c))
            for alg in self.init_per_link
            for c in range(self.cycles + 1)
        ]

    def crossover(self, alg: str, other: str) -> int | None:
        """First cycle (>= 1) from which ``alg`` is cheaper than ``other``; None if never."""
        first = None
        for c in range(1, self.cycles + 1):
            if self.cumulative(alg, c) < self.cumulative(other, c):
                if first is None:
                    first = c
            else:
                first = None
        return first

    def crossovers(self) -> dict[tuple[str, str], int | None]:
        algs = list(self.init_per_link)
        return {(a, b): self.crossover(a, b) for a in algs for b in algs if a != b}

    def csv(self) -> str:
        return emit_csv(["algorithm", "cycle", "msgs_per_link"], self.rows())


def run_overhead(cfg: ExperimentConfig, graphs=None, message_level: bool = False) -> OverheadLedger:
    """Per-link overhead of the local algorithms averaged over replications.

    With ``message_level`` the set-up phases run message by message and the
    ledger also stores the logged totals (slow for TM4 on large graphs).
    """
    algs = [a for a in cfg.algorithms if a in LOCAL_ALGORITHMS or parse_algorithm(a)[0] in ("MD", "LD", "TM")]
    init = {a: [] for a in algs}
    cyc = {a: [] for a in algs}
    logged = {a: 0 for a in algs}
    for r in range(cfg.reps):
        seed = cfg.rep_seed(r)
        g = graphs[r] if graphs is not None else connected_graph(cfg, seed)[0]
        x0 = initial_state(cfg, g.n, seed)
        for alg in algs:
            rec = run_algorithm(g, alg, x0, cfg, seed)
            if message_level:
                log = MessageLog()
                kind, p, _ = parse_algorithm(alg)
                kw = {}
                if kind == "TM":
                    kw = dict(sched=cfg.schedule(p), max_iter=cfg.max_iter)
                    # the distributed run stops on the local max rule
                    kw["gtol"] = cfg.gtol
                n_msgs = init_messages(g, alg, log, **kw)
                logged[alg] += log.total
                rec.init_msgs = n_msgs
            init[alg].append(rec.init_msgs / g.m)
            cyc[alg].append(consensus_messages(g, rec.conv_time) / g.m)
    return OverheadLedger(
        {a: float(np.mean(v)) for a, v in init.items()},
        {a: float(np.mean(v)) for a, v in cyc.items()},
        cfg.cycles,
        logged if message_level else {},
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


def emit_csv(header, rows, path=None) -> str:
    """Render rows with a fixed header; write to ``path`` when given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row {row!r} does not match header {header!r}")
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        path = Path(path)
        if path.parent and not path.parent.exists():
            os.makedirs(path.parent, exist_ok=True)
        path.write_text(text)
    return text
