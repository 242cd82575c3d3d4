import numpy as np
import pytest

from hyperadmm.errors import GraphFormatError, InfeasibleBalanceError, SizeMismatchError
from hyperadmm.graph import BipartiteGraph, GeneratorConfig, generate_bipartite, to_hypergraph
from hyperadmm.partition import (
    MAX_MACHINES,
    assignment_from_edges,
    expected_rf_random,
    fm_refine,
    hyper_parts,
    hypergraph_soed,
    metrics,
    part_capacity,
    partition_greedy,
    partition_hyper,
    partition_random,
    read_assignment,
    write_assignment,
)
from hyperadmm.partition.assignment import popcount


def check_assignment(g, a):
    """Edge owners lie in both endpoint replica sets, which hold nothing else."""
    subs = g.edge_subproblems()
    sub_sets = [set() for _ in range(g.num_subproblems)]
    con_sets = [set() for _ in range(g.num_consensus)]
    for e, m in enumerate(a.edge_owner.tolist()):
        sub_sets[subs[e]].add(m)
        con_sets[g.sub_adj[e]].add(m)
    for i in range(g.num_subproblems):
        assert a.sub_set(i) == sub_sets[i]
        assert int(a.sub_master[i]) in sub_sets[i]
    for l in range(g.num_consensus):
        assert a.con_set(l) == con_sets[l]
        assert int(a.con_master[l]) in con_sets[l]


@pytest.fixture(scope="module")
def mid_graph():
    return generate_bipartite(GeneratorConfig(2.2, 2.5, 3000, seed=4))


# ----- assignment and metrics --------------------------------------------------------


def test_star_split_metrics(star):
    a = assignment_from_edges(star, [0, 0, 1], 2, "random")
    m = metrics(star, a)
    assert m.replication_factor == 1.25
    assert a.con_set(0) == {0, 1}
    assert int(a.con_master[0]) == 0  # plurality of its edges


def test_plurality_master_tie_goes_low(star):
    a = assignment_from_edges(star, [2, 1, 1], 3, "greedy")
    assert int(a.con_master[0]) == 1
    a = assignment_from_edges(star, [2, 1, 0], 3, "greedy")
    assert int(a.con_master[0]) == 0


@pytest.mark.parametrize("scheme", ["random", "greedy", "hyper"])
def test_single_machine_metrics(small_graph, scheme):
    if scheme == "random":
        a = partition_random(small_graph, 1, seed=3)
    elif scheme == "greedy":
        a = partition_greedy(small_graph, 1)
    else:
        a = partition_hyper(to_hypergraph(small_graph), 1)
    m = metrics(small_graph, a)
    assert m.replication_factor == 1.0
    assert m.imbalance == 1.0
    if scheme == "hyper":
        assert m.soed == 0


def test_assignment_size_mismatch(small_graph, star):
    a = partition_random(star, 2)
    with pytest.raises(SizeMismatchError):
        metrics(small_graph, a)
    with pytest.raises(SizeMismatchError):
        assignment_from_edges(small_graph, [0, 1], 2, "random")


def test_machine_limit(star):
    with pytest.raises(ValueError):
        partition_random(star, MAX_MACHINES + 1)
    with pytest.raises(ValueError):
        partition_random(star, 0)


@pytest.mark.parametrize("scheme", ["random", "greedy", "hyper"])
def test_assignment_invariants(mid_graph, scheme):
    g = mid_graph
    if scheme == "random":
        a = partition_random(g, 8, seed=1)
    elif scheme == "greedy":
        a = partition_greedy(g, 8)
    else:
        a = partition_hyper(to_hypergraph(g), 8)
    check_assignment(g, a)


def test_assignment_io_round_trip(mid_graph, tmp_path):
    for a in (partition_random(mid_graph, 4, 2), partition_greedy(mid_graph, 4),
              partition_hyper(to_hypergraph(mid_graph), 4)):
        p = tmp_path / f"{a.scheme}.txt"
        write_assignment(mid_graph, a, p)
        assert read_assignment(mid_graph, p) == a


def test_assignment_read_errors(star, tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("assignment 2 random\n0 0 0\n1 0 1\n2 0 5\n")
    with pytest.raises(GraphFormatError) as err:
        read_assignment(star, p)
    assert err.value.line == 4
    p.write_text("assignment 2 random\n0 0 0\n1 0 1\n")
    with pytest.raises(GraphFormatError, match="no owner"):
        read_assignment(star, p)


# ----- random ---------------------------------------------------------------------------


def test_random_1000_edges():
    adj = [[l % 500] for l in range(1000)]
    g = BipartiteGraph.from_adjacency(adj, 500)
    assert g.num_edges == 1000
    counts = np.bincount(partition_random(g, 4, seed=7).edge_owner, minlength=4)
    assert np.all(np.abs(counts - 250) <= 3 * np.sqrt(1000 * 0.25 * 0.75))


def test_random_is_seeded(mid_graph):
    assert partition_random(mid_graph, 8, 3) == partition_random(mid_graph, 8, 3)
    assert partition_random(mid_graph, 8, 3) != partition_random(mid_graph, 8, 4)


def test_expected_rf_single_machine(mid_graph):
    assert expected_rf_random(mid_graph, 1) == 1.0


def test_expected_rf_star(star):
    # (3/4) * [(1 - (2/3)^3) + 3 * (1/3)] = 23/18
    assert expected_rf_random(star, 3) == pytest.approx(23 / 18, rel=1e-15)


def test_expected_rf_star_monte_carlo(star):
    rf = [metrics(star, partition_random(star, 3, s)).replication_factor for s in range(20000)]
    assert np.mean(rf) == pytest.approx(23 / 18, rel=0.01)


@pytest.mark.parametrize("M", [2, 8, 32])
def test_expected_rf_matches_random(mid_graph, M):
    rf = np.mean([metrics(mid_graph, partition_random(mid_graph, M, s)).replication_factor
                  for s in range(10)])
    assert rf == pytest.approx(expected_rf_random(mid_graph, M), rel=0.05)


# ----- greedy ----------------------------------------------------------------------------


def test_greedy_first_edge_machine_zero(mid_graph):
    assert partition_greedy(mid_graph, 8).edge_owner[0] == 0


GREEDY_CASE = [[0, 1], [2, 3], [0, 1], [0, 2, 3]]
#   edge:      e0 e1   e2 e3   e4 e5   e6 e7 e8
#   rule:       1  2    1  2    2  3    2  4  *


def test_greedy_hand_trace_union():
    g = BipartiteGraph.from_adjacency(GREEDY_CASE, 4)
    a = partition_greedy(g, 3, rule4="union")
    assert a.edge_owner.tolist() == [0, 0, 1, 1, 0, 0, 0, 1, 1]


def test_greedy_hand_trace_most_unassigned():
    g = BipartiteGraph.from_adjacency(GREEDY_CASE, 4)
    a = partition_greedy(g, 3, rule4="most_unassigned")
    assert a.edge_owner.tolist() == [0, 0, 1, 1, 0, 0, 0, 0, 1]
    assert a.meta["rule4"] == "most_unassigned"


def test_greedy_unknown_rule(star):
    with pytest.raises(ValueError):
        partition_greedy(star, 2, rule4="nope")


def test_greedy_deterministic(mid_graph):
    assert partition_greedy(mid_graph, 16) == partition_greedy(mid_graph, 16)


# ----- hyper -------------------------------------------------------------------------------


def test_hyper_never_cuts_subproblems(mid_graph):
    for M in (2, 5, 8, 32):
        a = partition_hyper(to_hypergraph(mid_graph), M, seed=1)
        assert np.all(popcount(a.sub_replicas) == 1)


@pytest.mark.parametrize("beta", [1.05, 1.1, 2.0])
def test_hyper_respects_balance(mid_graph, beta):
    M = 8
    a = partition_hyper(to_hypergraph(mid_graph), M, beta=beta)
    counts = np.bincount(a.sub_master, minlength=M)
    assert counts.max() <= beta * mid_graph.num_subproblems / M + 1e-9


def test_hyper_exact_balance():
    from hyperadmm.graph import Hypergraph

    rng = np.random.default_rng(0)
    h = Hypergraph.from_hyperedges(1000, [rng.choice(1000, 3, replace=False) for _ in range(1000)])
    parts = hyper_parts(h, 8, beta=1.0)
    assert np.bincount(parts, minlength=8).tolist() == [125] * 8


def test_hyper_exact_balance_needs_divisible_count(mid_graph):
    assert mid_graph.num_subproblems % 8 != 0
    with pytest.raises(InfeasibleBalanceError):
        partition_hyper(to_hypergraph(mid_graph), 8, beta=1.0)


def test_hyper_infeasible_balance(star):
    h = to_hypergraph(star)
    with pytest.raises(InfeasibleBalanceError):
        partition_hyper(h, 4)
    with pytest.raises(ValueError):
        partition_hyper(h, 3, beta=0.9)


def test_hyper_deterministic(mid_graph):
    h = to_hypergraph(mid_graph)
    assert partition_hyper(h, 8, seed=2) == partition_hyper(h, 8, seed=2)


def test_hyper_soed_rf_identity(mid_graph):
    g = mid_graph
    for M in (2, 4, 16):
        m = metrics(g, partition_hyper(to_hypergraph(g), M))
        assert m.replication_factor == pytest.approx(
            1 + (m.soed - m.cut_nets) / g.num_vertices, abs=1e-12)


def test_hyper_beats_other_schemes(mid_graph):
    g = mid_graph
    rf = {
        "hyper": metrics(g, partition_hyper(to_hypergraph(g), 16)).replication_factor,
        "greedy": metrics(g, partition_greedy(g, 16)).replication_factor,
        "random": metrics(g, partition_random(g, 16, 0)).replication_factor,
    }
    assert rf["hyper"] < rf["greedy"] < rf["random"]


def test_hyper_rf_grows_with_machines(mid_graph):
    h = to_hypergraph(mid_graph)
    rf = [metrics(mid_graph, partition_hyper(h, M)).replication_factor for M in (2, 4, 8, 16, 32)]
    assert all(b >= a for a, b in zip(rf, rf[1:]))


# ----- FM refinement -----------------------------------------------------------------------


def test_fm_keeps_optimal_partition():
    from hyperadmm.graph import Hypergraph

    # two triangles joined by nothing: the natural split has SOED 0
    h = Hypergraph.from_hyperedges(6, [[0, 1], [1, 2], [0, 2], [3, 4], [4, 5], [3, 5]])
    parts = np.array([0, 0, 0, 1, 1, 1])
    out = fm_refine(h, parts, 2, beta=1.0)
    assert hypergraph_soed(h, out, 2) == 0
    assert out.tolist() == parts.tolist()


def test_fm_monotone_on_random_starts():
    g = generate_bipartite(GeneratorConfig(2.4, 2.5, 80, seed=3))
    h = to_hypergraph(g)
    n = h.num_vertices
    assert n >= 100
    for seed in range(50):
        rng = np.random.default_rng(seed)
        k = 2 + seed % 3
        start = rng.permutation(np.arange(n) % k)
        out, history = fm_refine(h, start, k, beta=1.2, return_history=True)
        assert history[0] == hypergraph_soed(h, start, k)
        assert all(b <= a for a, b in zip(history, history[1:]))
        assert hypergraph_soed(h, out, k) == history[-1] <= history[0]
        assert np.bincount(out, minlength=k).max() <= part_capacity(n, k, 1.2)


def test_fm_rejects_infeasible_input():
    g = generate_bipartite(GeneratorConfig(2.4, 2.5, 40, seed=3))
    h = to_hypergraph(g)
    with pytest.raises(InfeasibleBalanceError):
        fm_refine(h, np.zeros(h.num_vertices, dtype=np.int64), 2, beta=1.5)


def test_fm_refines_assignment(mid_graph):
    h = to_hypergraph(mid_graph)
    a = partition_hyper(h, 4)
    b = fm_refine(h, a, 4)
    assert metrics(mid_graph, b).soed <= metrics(mid_graph, a).soed


def test_hyper_parts_twelve_vertex_optimum():
    from hyperadmm.graph import Hypergraph

    nets = [[0, 1, 2], [2, 3, 4, 5], [5, 6], [6, 7, 8], [8, 9, 10, 11], [11, 0]]
    h = Hypergraph.from_hyperedges(12, nets)
    best = min(
        hypergraph_soed(h, np.array([(mask >> v) & 1 for v in range(12)]), 2)
        for mask in range(1 << 12)
        if 6 <= bin(mask).count("1") <= 6
    )
    got = hypergraph_soed(h, hyper_parts(h, 2, beta=1.0), 2)
    assert got <= best + 1
