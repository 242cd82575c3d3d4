import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hyperadmm.graph import BipartiteGraph, GeneratorConfig, generate_bipartite
from hyperadmm.problems import Problem, QuadraticSpec

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture
def star():
    """One consensus node shared by three subproblems."""
    return BipartiteGraph.from_adjacency([[0], [0], [0]], 1)


@pytest.fixture
def small_graph():
    return generate_bipartite(GeneratorConfig(2.2, 2.0, 300, seed=3))


def toy_problem():
    """phi1 = (x - 1)^2, phi2 = (x - 3)^2 on one shared variable."""
    return Problem.from_specs([
        QuadraticSpec([0], [[2.0]], [-2.0]),
        QuadraticSpec([0], [[2.0]], [-6.0]),
    ])


def random_qp(rng, num_consensus=60, num_sub=None, max_deg=4, ridge=0.05):
    """Random convex QP whose subproblems each touch a few consensus variables.

    Every subproblem gets a small ridge so the whole problem is strictly convex.
    """
    if num_sub is None:
        num_sub = 2 * num_consensus
    adj = [[] for _ in range(num_sub)]
    # two guaranteed copies for every consensus variable
    for l in range(num_consensus):
        for i in rng.choice(num_sub, size=2, replace=False):
            if l not in adj[i]:
                adj[i].append(l)
    for i in range(num_sub):
        extra = int(rng.integers(0, max_deg))
        for l in rng.choice(num_consensus, size=extra, replace=False):
            if l not in adj[i] and len(adj[i]) < max_deg + 2:
                adj[i].append(int(l))
        if not adj[i]:
            adj[i].append(int(rng.integers(num_consensus)))
    specs = []
    for slots in adj:
        n = len(slots)
        B = rng.normal(size=(n, n))
        Q = B @ B.T / n + ridge * np.eye(n)
        specs.append(QuadraticSpec(sorted(slots), Q, rng.normal(size=n)))
    problem = Problem.from_specs(specs, num_consensus)
    return problem


def dense_qp_solution(problem):
    """Minimiser of sum_i phi_i(X[slots_i]) by one dense linear solve."""
    C = problem.graph.num_consensus
    H = np.zeros((C, C))
    g = np.zeros(C)
    for s in problem.specs:
        H[np.ix_(s.slots, s.slots)] += s.Q
        g[s.slots] += s.c
    X = np.linalg.solve(H, -g)
    return X, problem.objective(X)


# ----- acceptance report ---------------------------------------------------------------------


@pytest.fixture(scope="session")
def acceptance(request):
    """Records one PASS/FAIL line per acceptance criterion; printed at the end of the run."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines[number] = line
        print(line)
        return ok

    return record


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
