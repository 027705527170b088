"""Command line entry point: ``schatten-consensus <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from .consensus import run_consensus, run_jco
from .graph import GraphError
from .robustness import Adversary, build_convergent, simulate_guarded_jco
from .schatten import write_trace_csv, tm_optimize
from .spectral import spectral_report
from .weights import HEURISTICS, read_weights_csv, weights_to_matrix, write_weights_csv


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("graph")
    g.add_argument("--graph", help="edge list file (u v per line)")
    g.add_argument("--model", choices=["rgg", "er"], help="random graph model")
    g.add_argument("--n", type=int)
    g.add_argument("--pr", type=float, help="ER link probability")
    g.add_argument("--radius", type=float, help="RGG connection radius")
    o = p.add_argument_group("run")
    o.add_argument("--p", type=int, default=2, help="even Schatten order")
    o.add_argument("--a", type=float, help="step size numerator (default 10/p)")
    o.add_argument("--b", type=float, help="step size offset (default 100)")
    o.add_argument("--gtol", type=float)
    o.add_argument("--threshold", type=float)
    o.add_argument("--reps", type=int)
    o.add_argument("--seed", type=int)
    o.add_argument("--cycles", type=int)
    o.add_argument("--out", help="output file or directory (default stdout / .)")
    o.add_argument("--config", help="key = value config file")


def _config(args) -> ex.ExperimentConfig:
    overrides = dict(
        n=args.n, pr=args.pr, radius=args.radius, a=args.a, b=args.b, gtol=args.gtol,
        threshold=args.threshold, reps=args.reps, seed=args.seed, cycles=args.cycles,
    )
    if args.graph:
        overrides.update(model="file", graph=args.graph)
    elif args.model:
        overrides["model"] = args.model
    if getattr(args, "algorithms", None):
        overrides["algorithms"] = args.algorithms
    if getattr(args, "jco_schedule", None):
        overrides["jco_schedule"] = args.jco_schedule
    if args.config:
        return ex.ExperimentConfig.load(args.config, **overrides)
    return ex.ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _graph(cfg):
    return ex.connected_graph(cfg, cfg.seed)[0]


def _write(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _weights(args, cfg, g):
    if getattr(args, "weights", None):
        with open(args.weights) as fh:
            return read_weights_csv(g, fh)
    alg = getattr(args, "algorithm", None) or f"TM{args.p}"
    kind, p, _ = ex.parse_algorithm(alg)
    if kind in HEURISTICS:
        return HEURISTICS[kind](g)
    return tm_optimize(g, p, cfg.schedule(p), cfg.gtol, cfg.max_iter)[0]


def cmd_gen(args, cfg):
    g = _graph(cfg)
    lines = [f"{g.label(i)} {g.label(j)}" for i, j in g.edges]
    _write("\n".join(lines) + "\n", args.out)
    print(f"n={g.n} m={g.m}", file=sys.stderr)


def cmd_optimize(args, cfg):
    g = _graph(cfg)
    w, st = tm_optimize(g, args.p, cfg.schedule(args.p), cfg.gtol, cfg.max_iter, record=bool(args.trace))
    if args.trace:
        with open(args.trace, "w") as fh:
            write_trace_csv(st, fh)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        write_weights_csv(g, w, out)
    finally:
        if args.out:
            out.close()
    rep = spectral_report(weights_to_matrix(g, w))
    print(f"mu={rep.mu:.6f} iterations={st.k} messages={st.messages} converged={st.converged}",
          file=sys.stderr)


def _x0(cfg, g):
    return ex.initial_state(cfg, g.n, cfg.seed)


def cmd_consensus(args, cfg):
    g = _graph(cfg)
    W = weights_to_matrix(g, _weights(args, cfg, g))
    _, tr = run_consensus(W, _x0(cfg, g), cfg.threshold, cfg.consensus_max_iter)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        tr.write_csv(out)
    finally:
        if args.out:
            out.close()
    print(f"conv_time={tr.conv_time}", file=sys.stderr)


def cmd_jco(args, cfg):
    g = _graph(cfg)
    w0 = HEURISTICS[args.init](g)
    res = run_jco(g, args.p, w0, _x0(cfg, g), cfg.threshold, cfg.max_iter, sched=cfg.jco_sched(args.p))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        res.trace.write_csv(out)
    finally:
        if args.out:
            out.close()
    print(f"conv_time={res.trace.conv_time} messages={res.messages.total}", file=sys.stderr)


def cmd_compare(args, cfg):
    res = ex.run_comparison(cfg)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs.csv").write_text(res.runs_csv())
    (out / "comparison.csv").write_text(res.summary_csv())
    sys.stdout.write(res.summary_csv())


def cmd_overhead(args, cfg):
    ledger = ex.run_overhead(cfg)
    _write(ledger.csv(), args.out)
    for (a, b), c in sorted(ledger.crossovers().items()):
        if c is not None:
            print(f"{a} cheaper than {b} from cycle {c}", file=sys.stderr)


def cmd_repair(args, cfg):
    g = _graph(cfg)
    W = weights_to_matrix(g, _weights(args, cfg, g))
    Wc = build_convergent(g, W, args.delta)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        a, b = g.endpoints
        write_weights_csv(g, Wc[a, b], out)
    finally:
        if args.out:
            out.close()
    print(f"mu_before={spectral_report(W).mu:.6f} mu_after={spectral_report(Wc).mu:.6f}", file=sys.stderr)


def _adversary(spec: str) -> tuple[int, Adversary]:
    # kind:node[:start[:target]]
    parts = spec.split(":")
    if len(parts) < 2:
        raise ValueError(f"bad adversary {spec!r}; use kind:node[:start[:target]]")
    kind, node = parts[0], int(parts[1])
    start = int(parts[2]) if len(parts) > 2 else 1
    target = int(parts[3]) if len(parts) > 3 else None
    if kind != "stubborn" and target is None:
        raise ValueError(f"{kind} needs a target neighbour")
    return node, Adversary(kind, start, target)


def cmd_detect(args, cfg):
    g = _graph(cfg)
    advs = dict(_adversary(s) for s in args.adversary or [])
    for node, adv in advs.items():
        if adv.target is not None and adv.target not in g.neighbors[node]:
            raise GraphError(f"{adv.target} is not a neighbour of {node}")
    run = simulate_guarded_jco(g, args.p, _x0(cfg, g), args.rounds, adversaries=advs,
                               sched=cfg.jco_sched(args.p))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        run.write_csv(out)
    finally:
        if args.out:
            out.close()
    print(f"declarations={len(run.events)} removed_links={len(run.removed)}", file=sys.stderr)


COMMANDS = {
    "gen": (cmd_gen, "generate a connected random graph (edge list)"),
    "optimize": (cmd_optimize, "run trace minimisation, write weights CSV"),
    "consensus": (cmd_consensus, "run averaging, write k,e_k trace"),
    "jco": (cmd_jco, "joint consensus and optimisation trace"),
    "compare": (cmd_compare, "replicated comparison of weight algorithms"),
    "overhead": (cmd_overhead, "message overhead ledger over consensus cycles"),
    "repair": (cmd_repair, "project weights onto a convergent matrix"),
    "detect": (cmd_detect, "JCO with misbehaviour detection, write event log"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schatten-consensus")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name in ("consensus", "repair"):
            p.add_argument("--weights", help="u,v,weight CSV (default: optimise)")
            p.add_argument("--algorithm", help="MD, LD, OC or TM<p> when no weights file")
        if name == "repair":
            p.add_argument("--delta", type=float, help="lower bound on link weights (default 1/(2n))")
        if name in ("compare", "overhead"):
            p.add_argument("--algorithms", help="comma separated, e.g. MD,LD,TM2,JCO4-LD")
        if name in ("jco", "detect", "compare"):
            p.add_argument("--jco-schedule", choices=["literal", "optimizer"],
                           help="1/(p(1+k)) or the optimiser's a/(b+k)")
        if name == "jco":
            p.add_argument("--init", choices=["LD", "MD"], default="LD")
        if name == "optimize":
            p.add_argument("--trace", help="write k,trace_p,mu,grad_norm,msgs_cumulative here")
        if name == "detect":
            p.add_argument("--rounds", type=int, default=200)
            p.add_argument("--adversary", action="append",
                           help="kind:node[:start[:target]], kind in stubborn, forge_estimate, forge_weight")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command][0](args, cfg)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
