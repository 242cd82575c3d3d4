"""Property-based checks of the invariants every module promises."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hyperadmm.engine import build_cluster, superstep
from hyperadmm.errors import GenerationError, InfeasibleBalanceError
from hyperadmm.graph import (
    BipartiteGraph,
    GeneratorConfig,
    Hypergraph,
    generate_bipartite,
    read_graph,
    to_bipartite,
    to_hypergraph,
    write_graph,
)
from hyperadmm.partition import (
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
from hyperadmm.problems import (
    HingeSpec,
    QuadraticSpec,
    SimplexSpec,
    project_simplex,
    prox_hinge,
    prox_quadratic,
    prox_simplex,
    read_problem,
    write_problem,
)
from hyperadmm.problems.prox import augmented_objective

from conftest import random_qp

seeds = st.integers(0, 2**32 - 1)
finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def random_graph(seed, num_consensus=None):
    """Generated graph; tiny draws can be ungraphical, so step the seed until one works."""
    rng = np.random.default_rng(seed)
    C = num_consensus or int(rng.integers(3, 40))
    alpha, lam = float(rng.uniform(2.0, 2.8)), float(rng.uniform(1.5, 3.5))
    for t in range(100):
        try:
            return generate_bipartite(GeneratorConfig(alpha, lam, C, seed=seed + t))
        except GenerationError:
            continue
    raise AssertionError("no graph generated")


def random_hypergraph(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 60))
    m = int(rng.integers(1, 2 * n))
    nets = [rng.choice(n, size=int(rng.integers(2, min(6, n) + 1)), replace=False)
            for _ in range(m)]
    return Hypergraph.from_hyperedges(n, nets)


def random_spec(rng, kind):
    n = int(rng.integers(1, 6))
    slots = np.arange(n)
    if kind == "quad":
        B = rng.normal(size=(n, int(rng.integers(1, n + 1))))
        return QuadraticSpec(slots, B @ B.T, rng.normal(size=n))
    if kind == "hinge":
        return HingeSpec(slots, rng.uniform(0, 3), rng.normal(size=n), rng.normal(),
                         int(rng.integers(1, 3)))
    d = int(rng.integers(max(2, n), n + 3))
    return SimplexSpec(slots, d)


# ----- prox solvers ----------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["quad", "hinge", "simplex"])
def test_prox_local_minimality(kind):
    """1,000 instances, 100 perturbations of norm 1e-3 each."""
    rng = np.random.default_rng({"quad": 1, "hinge": 2, "simplex": 3}[kind])
    solver = {"quad": prox_quadratic, "hinge": prox_hinge, "simplex": prox_simplex}[kind]
    for _ in range(1000):
        spec = random_spec(rng, kind)
        n = spec.n
        lam, xhat, rho = rng.normal(size=n), rng.normal(size=n), rng.uniform(0.1, 3)
        x = solver(spec, lam, xhat, rho)
        f0 = augmented_objective(spec, x, lam, xhat, rho)
        assert np.isfinite(f0)
        d = rng.normal(size=(100, n))
        d *= 1e-3 / np.linalg.norm(d, axis=1, keepdims=True)
        if kind == "simplex":
            # keep the perturbations inside the feasible set's affine hull
            if not spec.capped:
                d -= d.mean(axis=1, keepdims=True)
        for dv in d:
            f1 = augmented_objective(spec, x + dv, lam, xhat, rho)
            assert f0 <= f1 + 1e-12 * max(1.0, abs(f0))


@given(seed=seeds, rho=st.floats(0.05, 10))
def test_quadratic_stationarity(seed, rho):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, "quad")
    lam, xhat = rng.normal(size=spec.n), rng.normal(size=spec.n)
    x = prox_quadratic(spec, lam, xhat, rho)
    grad = spec.Q @ x + spec.c + lam + rho * (x - xhat)
    scale = 1 + np.abs(spec.Q).sum() + np.abs(spec.c).sum() + np.abs(lam).sum() + rho
    assert np.max(np.abs(grad)) <= 1e-10 * scale


@given(seed=seeds, rho=st.floats(0.05, 10))
def test_hinge_case_consistency(seed, rho):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, "hinge")
    lam, xhat = rng.normal(size=spec.n), rng.normal(size=spec.n)
    x = prox_hinge(spec, lam, xhat, rho)
    z = xhat - lam / rho
    a, b, w = spec.a, spec.b, spec.weight
    s = a @ x + b
    tol = 1e-9 * (1 + np.abs(a).sum() * (1 + np.abs(z).sum()) + abs(b))
    if np.array_equal(x, z):
        # inactive branch (or w = 0)
        assert w == 0 or a @ z + b <= 0
    elif spec.power == 1 and np.allclose(x, z - (w / rho) * a, rtol=0, atol=1e-15):
        assert s >= -tol
    elif spec.power == 2:
        assert s >= -tol
    else:
        # projection onto the hinge's kink
        assert abs(s) <= tol
        # and the multiplier of the kink lies in [0, w]
        t = (a @ z + b) / (a @ a) * rho
        assert -tol <= t <= w + tol


@given(v=arrays(np.float64, st.integers(2, 12), elements=finite), capped=st.booleans())
def test_simplex_output_on_simplex(v, capped):
    x = project_simplex(v, capped)
    assert np.all(x >= 0)
    if capped:
        assert x.sum() <= 1 + 1e-12
    else:
        assert abs(x.sum() - 1) <= 1e-12


@given(v=arrays(np.float64, st.integers(2, 8), elements=finite))
def test_simplex_projection_is_closest(v):
    """Variational inequality: (v - x) . (y - x) <= 0 for every vertex y of the simplex."""
    x = project_simplex(v)
    for i in range(len(v)):
        y = np.zeros(len(v))
        y[i] = 1
        assert (v - x) @ (y - x) <= 1e-9 * (1 + np.abs(v).max())


# ----- engine identities --------------------------------------------------------------------


@settings(max_examples=25)
@given(seed=seeds, M=st.sampled_from([1, 2, 3, 8]), rho=st.sampled_from([0.1, 1.0, 3.0]))
def test_consensus_and_dual_identities(seed, M, rho):
    rng = np.random.default_rng(seed)
    p = random_qp(rng, int(rng.integers(5, 25)))
    g = p.graph
    s = build_cluster(g, partition_random(g, M, seed % 97), p, rho=rho)
    ptr, cptr = g.sub_ptr, g.con_ptr
    for _ in range(12):
        lam0 = s.lam.copy()
        active = s.active.copy()
        superstep(s)
        # every consensus value is the mean of its copies, summed in subproblem order
        for l in range(g.num_consensus):
            acc = 0.0
            for t in range(cptr[l], cptr[l + 1]):
                i, j = g.con_sub[t], g.con_slot[t]
                acc += s.x[ptr[i] + j]
            assert s.copy_sum[l] == acc
            assert s.X[l] == acc / (cptr[l + 1] - cptr[l])
        # dual step with the freshly averaged values, exactly
        edge_active = np.repeat(active, g.sub_degrees())
        expect = lam0 + rho * (s.x - s.X[g.sub_adj])
        assert np.array_equal(s.lam[edge_active], expect[edge_active])
        assert np.array_equal(s.lam[~edge_active], lam0[~edge_active])
        assert s.mirrors_consistent()


@settings(max_examples=15)
@given(seed=seeds)
def test_placement_invariance(seed):
    rng = np.random.default_rng(seed)
    p = random_qp(rng, int(rng.integers(5, 30)))
    g = p.graph
    runs = []
    for M in (1, 2, 5):
        for a in (partition_random(g, M, seed % 13), partition_greedy(g, M),
                  partition_hyper(to_hypergraph(g), M)):
            s = build_cluster(g, a, p)
            for _ in range(15):
                superstep(s)
            runs.append((s.x.copy(), s.lam.copy(), s.X.copy(),
                         [(r.frac_converged, r.max_primal, r.max_dual) for r in s.history]))
    for other in runs[1:]:
        assert np.array_equal(runs[0][0], other[0])
        assert np.array_equal(runs[0][1], other[1])
        assert np.array_equal(runs[0][2], other[2])
        assert runs[0][3] == other[3]


# ----- partitioners ---------------------------------------------------------------------------


@settings(max_examples=40)
@given(seed=seeds, M=st.integers(1, 12), beta=st.sampled_from([1.1, 1.5, 2.0, 3.0]))
def test_hyper_never_cuts_and_balances(seed, M, beta):
    g = random_graph(seed)
    if M > g.num_subproblems:
        return
    if part_capacity(g.num_subproblems, M, beta) * M < g.num_subproblems:
        with pytest.raises(InfeasibleBalanceError):
            partition_hyper(to_hypergraph(g), M, beta=beta)
        return
    a = partition_hyper(to_hypergraph(g), M, beta=beta, seed=seed % 5)
    assert np.all(popcount(a.sub_replicas) == 1)
    counts = np.bincount(a.sub_master, minlength=M)
    assert counts.max() <= beta * g.num_subproblems / M + 1e-9
    m = metrics(g, a)
    assert m.replication_factor == pytest.approx(
        1 + (m.soed - m.cut_nets) / g.num_vertices, abs=1e-12)


@settings(max_examples=40)
@given(seed=seeds, k=st.integers(2, 6), beta=st.sampled_from([1.1, 1.5, 2.0]))
def test_fm_monotone(seed, k, beta):
    h = random_hypergraph(seed)
    if k > h.num_vertices:
        return
    rng = np.random.default_rng(seed)
    cap = part_capacity(h.num_vertices, k, beta)
    if cap * k < h.num_vertices:
        return
    start = rng.permutation(np.arange(h.num_vertices) % k)
    assert np.bincount(start, minlength=k).max() <= cap
    out, history = fm_refine(h, start, k, beta=beta, return_history=True)
    assert history[0] == hypergraph_soed(h, start, k)
    assert all(b <= a for a, b in zip(history, history[1:]))
    assert hypergraph_soed(h, out, k) == history[-1]
    assert np.bincount(out, minlength=k).max() <= cap


@settings(max_examples=40)
@given(seed=seeds, M=st.integers(1, 20))
def test_replicas_cover_edges(seed, M):
    g = random_graph(seed)
    for a in (partition_random(g, M, seed), partition_greedy(g, M)):
        owner = a.edge_owner
        bit = np.uint64(1) << owner.astype(np.uint64)
        assert np.all(a.sub_replicas[g.edge_subproblems()] & bit)
        assert np.all(a.con_replicas[g.sub_adj] & bit)
        # no phantom replicas
        assert popcount(a.sub_replicas).sum() == len(set(zip(g.edge_subproblems().tolist(),
                                                              owner.tolist())))
        assert metrics(g, a).replication_factor >= 1


@settings(max_examples=20)
@given(seed=seeds, M=st.integers(2, 16))
def test_partitioners_deterministic(seed, M):
    g = random_graph(seed)
    assert partition_greedy(g, M) == partition_greedy(g, M)
    assert partition_random(g, M, seed) == partition_random(g, M, seed)
    if M <= g.num_subproblems:
        h = to_hypergraph(g)
        assert np.array_equal(hyper_parts(h, M, seed=seed % 7), hyper_parts(h, M, seed=seed % 7))


# ----- graphs and files ------------------------------------------------------------------------


@settings(max_examples=100)
@given(seed=seeds)
def test_generator_succeeds_or_reports(seed):
    rng = np.random.default_rng(seed)
    cfg = GeneratorConfig(float(rng.uniform(2.0, 2.8)), float(rng.uniform(1.5, 3.5)),
                          int(rng.integers(3, 40)), seed=seed)
    try:
        g = generate_bipartite(cfg)
    except GenerationError:
        return
    assert g.con_degrees().min() >= 2 and g.sub_degrees().min() >= 1


@settings(max_examples=100)
@given(seed=seeds)
def test_graph_invariants_and_round_trip(seed):
    g = random_graph(seed)
    assert g.sub_degrees().sum() == g.con_degrees().sum() == g.num_edges
    assert g.con_degrees().min() >= 2 and g.sub_degrees().min() >= 1
    assert to_bipartite(to_hypergraph(g)) == g
    assert g == random_graph(seed)


@settings(max_examples=30)
@given(seed=seeds, M=st.integers(1, 8))
def test_file_round_trips(tmp_path_factory, seed, M):
    d = tmp_path_factory.mktemp("io")
    rng = np.random.default_rng(seed)
    p = random_qp(rng, int(rng.integers(3, 15)))
    g = p.graph
    write_graph(g, d / "g.txt")
    assert read_graph(d / "g.txt") == g
    write_problem(p, d / "p.txt")
    assert read_problem(d / "p.txt", g) == p
    a = partition_random(g, M, seed)
    write_assignment(g, a, d / "a.txt")
    assert read_assignment(g, d / "a.txt") == a


@given(adj=st.lists(st.sets(st.integers(0, 5), min_size=1, max_size=4), min_size=2, max_size=10))
def test_from_adjacency_validates(adj):
    deg = np.zeros(6, dtype=int)
    for row in adj:
        for l in row:
            deg[l] += 1
    used = deg > 0
    C = 6
    if used.all() and deg.min() >= 2:
        g = BipartiteGraph.from_adjacency([sorted(r) for r in adj], C)
        assert g.num_edges == deg.sum()
    else:
        with pytest.raises(Exception):
            BipartiteGraph.from_adjacency([sorted(r) for r in adj], C)
