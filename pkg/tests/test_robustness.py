import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schatten_consensus.graph import Graph, GraphError
from schatten_consensus.robustness import (
    Adversary,
    Bundle,
    NodeView,
    ProtocolFault,
    RepairError,
    RepairParams,
    barbell_search,
    build_convergent,
    clique_barbell,
    detect_misbehaving,
    parallel_consensus_guard,
    project_node_row,
    repair_report,
    simulate_guarded_jco,
    star_barbell,
    write_detection_csv,
)
from schatten_consensus.schatten import StepSchedule, tm_optimize
from schatten_consensus.spectral import check_convergent, mu
from schatten_consensus.weights import local_degree_weights, matrix_to_weights, weights_to_matrix

from conftest import complete, connected_graphs, grid_qp_row, random_connected


def test_repair_params():
    assert RepairParams.default(10).delta == 0.05
    with pytest.raises(RepairError):
        RepairParams(0.0)


def test_project_examples():
    assert project_node_row([0.4], 0.01) == pytest.approx([0.4])
    assert project_node_row([-0.2], 0.01) == pytest.approx([0.01])
    x = project_node_row([0.9, 0.8], 0.01)
    assert x == pytest.approx([0.55, 0.45], abs=1e-12)
    assert np.abs(x - grid_qp_row([0.9, 0.8], 0.01)).max() <= 1e-4


def test_project_infeasible():
    with pytest.raises(RepairError):
        project_node_row([0.1, 0.1, 0.1], 0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10**6))
def test_project_matches_grid_oracle(d, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1, 1, d)
    delta = rng.uniform(0.005, 0.2)
    x = project_node_row(w, delta)
    assert np.abs(x - grid_qp_row(w, delta)).max() <= 1e-4


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=8), st.floats(0.001, 0.1))
def test_project_feasible_and_idempotent(w, delta):
    x = project_node_row(w, delta)
    assert np.all(x >= delta) and x.sum() <= 1 + 1e-12
    assert np.abs(project_node_row(x, delta) - x).max() <= 1e-12


def test_build_fixed_point():
    g = random_connected(8, 3)
    w = local_degree_weights(g)
    W = weights_to_matrix(g, w)
    Wc = build_convergent(g, W, delta=0.01)
    assert np.allclose(matrix_to_weights(g, Wc), w, atol=1e-12)
    assert check_convergent(Wc)


def test_build_rejects_disconnected():
    g = Graph.from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(GraphError):
        build_convergent(g, np.eye(4))


def test_barbell_instance_repaired():
    g = star_barbell(4, 5)
    w, _ = tm_optimize(g, 2)
    bridge = g.index_of(0, 4)
    assert w[bridge] < 0 and w.min() == w[bridge]
    delta = RepairParams.default(g.n).delta
    rep = repair_report(g, weights_to_matrix(g, w))
    assert rep["mu_before"] >= 1 - 1e-9
    wc = matrix_to_weights(g, rep["W"])
    assert wc[bridge] == pytest.approx(delta)
    assert rep["mu_after"] < 1
    assert check_convergent(rep["W"])


def test_barbell_search_finds_star_instances():
    found = list(barbell_search(max_size=5, kinds=("star",)))
    assert found
    for g, w, bridge in found:
        assert w.min() <= 0
        assert check_convergent(build_convergent(g, weights_to_matrix(g, w)))
    # cliques keep a positive bridge
    assert not list(barbell_search(max_size=4, kinds=("clique",)))
    assert clique_barbell(3, 3).m == 7


@settings(max_examples=60, deadline=None)
@given(connected_graphs(min_n=2, max_n=10), st.integers(0, 10**6))
def test_build_invariants(g, seed):
    rng = np.random.default_rng(seed)
    W = weights_to_matrix(g, rng.uniform(-1.5, 1.5, g.m))
    delta = 1 / (2 * g.n)
    Wc = build_convergent(g, W)
    wc = matrix_to_weights(g, Wc)
    assert np.array_equal(Wc, Wc.T)
    assert np.allclose(Wc.sum(axis=1), 1)
    assert np.all(wc >= delta - 1e-15) and np.all(wc <= 1)
    assert np.all(np.diag(Wc) >= delta - 1e-12)
    assert mu(Wc) < 1


def _view(node, x, x_prev, weights, heard):
    return NodeView(node, x, x_prev, weights, dict(heard))


def test_detect_consistent_bundle():
    # node 1 with neighbours 0, 2; detector is node 0
    b = Bundle(1, 3, x=0.5 * 2 + 0.25 * 4 + 0.25 * 8, heard={0: 4.0, 2: 8.0}, weights={0: 0.25, 2: 0.25})
    v = _view(0, 0.0, 4.0, {1: 0.25}, {1: 2.0})
    assert detect_misbehaving(v, b) is None
    b.x += 1e-3
    assert detect_misbehaving(v, b) == "update"


def test_detect_each_check():
    base = dict(sender=1, round=3, heard={0: 4.0, 2: 8.0}, weights={0: 0.25, 2: 0.25})
    v = _view(0, 0.0, 4.0, {1: 0.25}, {1: 2.0})
    lie = Bundle(x=0.5 * 2 + 0.25 * 5 + 0.25 * 8, **{**base, "heard": {0: 5.0, 2: 8.0}})
    assert detect_misbehaving(v, lie) == "estimate"
    wl = {0: 0.3, 2: 0.25}
    forged_w = Bundle(x=(1 - 0.55) * 2 + 0.3 * 4 + 0.25 * 8, **{**base, "weights": wl})
    assert detect_misbehaving(v, forged_w) == "weight"


def test_detect_incomplete_bundle():
    v = _view(0, 0.0, 4.0, {1: 0.25}, {1: 2.0})
    with pytest.raises(ProtocolFault):
        detect_misbehaving(v, Bundle(1, 3, 1.0, None, {0: 0.25}))
    with pytest.raises(ProtocolFault):
        detect_misbehaving(_view(0, 0, 4.0, {1: 0.25}, {}), Bundle(1, 3, 1.0, {0: 4.0}, {0: 0.25}))


def _x0(n, seed):
    return np.random.default_rng(seed).uniform(0, 100, n)


@pytest.mark.parametrize("seed", range(5))
def test_honest_runs_never_declared(seed):
    g = random_connected(12, seed, 0.25)
    p = 2 + 2 * (seed % 2)
    run = simulate_guarded_jco(g, p, _x0(g.n, seed), 100, sched=StepSchedule.default(p))
    assert run.events == []
    assert np.isclose(run.x.sum(), _x0(g.n, seed).sum())


def test_no_false_positive_even_when_states_blow_up():
    # 1/(p(1+k)) pushes p=4 weights to the box corners on this graph
    g = random_connected(12, 1, 0.25)
    run = simulate_guarded_jco(g, 4, _x0(g.n, 1), 100)
    assert np.abs(run.x).max() > 1e6
    assert run.events == []


def test_stubborn_declared_by_all_neighbours():
    g = random_connected(10, 7, 0.3)
    bad = 3
    run = simulate_guarded_jco(g, 2, _x0(g.n, 1), 30, adversaries={bad: Adversary("stubborn", start=5)})
    first = [e for e in run.events if e.round == 5]
    assert {e.detector for e in first} == set(g.neighbors[bad])
    assert all(e.declared == bad and e.reason == "update" for e in first)
    assert all(e.declared == bad for e in run.events)
    assert run.removed == {tuple(sorted((bad, j))) for j in g.neighbors[bad]}


def test_forged_estimate_declared_by_target():
    g = random_connected(10, 8, 0.3)
    bad = 2
    target = g.neighbors[bad][0]
    adv = Adversary("forge_estimate", start=4, target=target, once=True)
    run = simulate_guarded_jco(g, 4, _x0(g.n, 2), 20, adversaries={bad: adv})
    assert [(e.round, e.detector, e.declared, e.reason) for e in run.events] == [(4, target, bad, "estimate")]


def test_forged_weight_declared_by_target():
    g = random_connected(10, 9, 0.3)
    bad = 5
    target = g.neighbors[bad][-1]
    adv = Adversary("forge_weight", start=3, target=target, amount=0.1, once=True)
    run = simulate_guarded_jco(g, 2, _x0(g.n, 3), 10, adversaries={bad: adv})
    hits = {(e.detector, e.reason) for e in run.events if e.round == 3}
    assert (target, "update") in hits or (target, "weight") in hits
    assert {e.declared for e in run.events} == {bad}


def test_honest_subgraph_keeps_agreeing():
    g = random_connected(10, 4, 0.4)
    bad = 0
    run = simulate_guarded_jco(g, 2, _x0(g.n, 4), 400, adversaries={bad: Adversary("stubborn", start=2)})
    honest = [i for i in range(g.n) if i != bad]
    spread = run.x[honest].max() - run.x[honest].min()
    assert spread < 1e-3 * 100


def test_detection_csv():
    g = random_connected(6, 1)
    run = simulate_guarded_jco(g, 2, _x0(6, 0), 5, adversaries={1: Adversary("stubborn", start=2)})
    buf = io.StringIO()
    write_detection_csv(run.events, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "round,detector,declared,reason"
    assert len(lines) == len(run.events) + 1


def test_guard_single_run_on_complete_graph():
    x0 = _x0(4, 5)
    res = parallel_consensus_guard(complete(4), 2, x0)
    assert not res.dual
    assert np.allclose(res.estimate, x0.mean(), atol=1e-3 * np.ptp(x0))


def test_guard_dual_run_on_barbell():
    g = star_barbell(4, 5)
    x0 = _x0(g.n, 6)
    res = parallel_consensus_guard(g, 2, x0, max_iter=5000)
    assert res.dual
    assert res.diverged == (res.mu_opt >= 1)
    assert res.diverged
    assert np.allclose(res.x_conv, x0.mean(), atol=1e-2 * np.ptp(x0))
    assert np.allclose(res.estimate, res.x_conv)
