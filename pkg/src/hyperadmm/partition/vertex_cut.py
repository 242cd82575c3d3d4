"""Edge-placement vertex cuts: hash-style random placement and the greedy heuristic."""

from __future__ import annotations

import numpy as np
from numba import njit

from ..graph import BipartiteGraph
from .assignment import Assignment, assignment_from_edges, check_machines


def partition_random(g: BipartiteGraph, num_machines: int, seed: int = 0) -> Assignment:
    """Place every edge on an independent uniformly random machine."""
    check_machines(num_machines)
    rng = np.random.default_rng(seed)
    owner = rng.integers(0, num_machines, size=g.num_edges)
    return assignment_from_edges(g, owner, num_machines, "random", con_master="lowest",
                                 meta={"seed": seed})


def expected_rf_random(g: BipartiteGraph, num_machines: int) -> float:
    """Expected replication factor of :func:`partition_random` on ``g``.

    A vertex of degree ``d`` misses a given machine with probability
    ``(1 - 1/M)**d``, so it is expected on ``M (1 - (1 - 1/M)**d)`` machines.
    """
    M = num_machines
    if g.num_vertices == 0:
        return 1.0
    q = 1.0 - 1.0 / M
    deg = np.concatenate([g.con_degrees(), g.sub_degrees()]).astype(np.float64)
    return float(M / g.num_vertices * np.sum(1.0 - q ** deg))


@njit(cache=True)
def _least_loaded(cand, load, num_machines):
    best = -1
    for m in range(num_machines):
        if (cand >> np.uint64(m)) & np.uint64(1):
            if best < 0 or load[m] < load[best]:
                best = m
    return best


@njit(cache=True)
def _greedy_kernel(sub_ptr, sub_adj, con_deg, num_machines, by_unassigned):
    num_sub = len(sub_ptr) - 1
    owner = np.empty(len(sub_adj), dtype=np.int64)
    sub_mask = np.zeros(num_sub, dtype=np.uint64)
    con_mask = np.zeros(len(con_deg), dtype=np.uint64)
    load = np.zeros(num_machines, dtype=np.int64)
    sub_left = np.diff(sub_ptr)
    con_left = con_deg.copy()
    everyone = np.uint64(0)
    for m in range(num_machines):
        everyone |= np.uint64(1) << np.uint64(m)
    for i in range(num_sub):
        for e in range(sub_ptr[i], sub_ptr[i + 1]):
            l = sub_adj[e]
            au = sub_mask[i]
            av = con_mask[l]
            if au == 0 and av == 0:
                cand = everyone
            elif av == 0:
                cand = au
            elif au == 0:
                cand = av
            elif au & av:
                cand = au & av
            elif by_unassigned and sub_left[i] > con_left[l]:
                cand = au
            elif by_unassigned and con_left[l] > sub_left[i]:
                cand = av
            else:
                cand = au | av
            m = _least_loaded(cand, load, num_machines)
            owner[e] = m
            load[m] += 1
            bit = np.uint64(1) << np.uint64(m)
            sub_mask[i] |= bit
            con_mask[l] |= bit
            sub_left[i] -= 1
            con_left[l] -= 1
    return owner


GREEDY_RULES = ("union", "most_unassigned")


def partition_greedy(g: BipartiteGraph, num_machines: int, rule4: str = "union") -> Assignment:
    """Sequential greedy vertex cut.

    Edges are visited by ascending subproblem id, then slot.  For edge (u, v)
    the candidate machines are: every machine when neither endpoint is placed;
    the placed endpoint's machines when only one is; the intersection when the
    two sets overlap.  When both are placed on disjoint machines the candidates
    are ``A(u) | A(v)`` (``rule4="union"``) or the machines of the endpoint with
    more unassigned edges, both on a tie (``rule4="most_unassigned"``).  The
    least loaded candidate wins, lowest id on ties.
    """
    check_machines(num_machines)
    if rule4 not in GREEDY_RULES:
        raise ValueError(f"unknown greedy rule {rule4!r}; expected one of {GREEDY_RULES}")
    owner = _greedy_kernel(g.sub_ptr, g.sub_adj, g.con_degrees().astype(np.int64), num_machines,
                           rule4 == "most_unassigned")
    return assignment_from_edges(g, owner, num_machines, "greedy", con_master="plurality",
                                 meta={"rule4": rule4})
