"""Vertex-cut placements and the metrics used to compare them.

A placement owns every edge on exactly one machine.  Vertex replica sets are
derived from edge ownership and stored as uint64 bitmasks, so at most 64
machines are supported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from ..errors import GraphFormatError, SizeMismatchError
from ..graph import BipartiteGraph

MAX_MACHINES = 64
SCHEMES = ("random", "greedy", "hyper")


def check_machines(num_machines):
    if not 1 <= num_machines <= MAX_MACHINES:
        raise ValueError(f"number of machines must be in [1, {MAX_MACHINES}], got {num_machines}")


@njit(cache=True)
def _replica_masks(edge_sub, edge_con, owner, num_sub, num_con):
    sub_mask = np.zeros(num_sub, dtype=np.uint64)
    con_mask = np.zeros(num_con, dtype=np.uint64)
    one = np.uint64(1)
    for e in range(len(owner)):
        bit = one << np.uint64(owner[e])
        sub_mask[edge_sub[e]] |= bit
        con_mask[edge_con[e]] |= bit
    return sub_mask, con_mask


@njit(cache=True)
def _lowest_bit(masks):
    out = np.empty(len(masks), dtype=np.int64)
    for v in range(len(masks)):
        m = masks[v]
        b = 0
        while b < 64 and not (m >> np.uint64(b)) & np.uint64(1):
            b += 1
        out[v] = b if b < 64 else -1
    return out


@njit(cache=True)
def _plurality(ptr, edges, owner, num_machines):
    """Machine owning most of each vertex's edges; ties go to the lowest id."""
    n = len(ptr) - 1
    out = np.empty(n, dtype=np.int64)
    counts = np.zeros(num_machines, dtype=np.int64)
    for v in range(n):
        for k in range(ptr[v], ptr[v + 1]):
            counts[owner[edges[k]]] += 1
        best = 0
        for m in range(num_machines):
            if counts[m] > counts[best]:
                best = m
        out[v] = best
        for k in range(ptr[v], ptr[v + 1]):
            counts[owner[edges[k]]] = 0
    return out


def popcount(masks) -> np.ndarray:
    return np.bitwise_count(np.asarray(masks, dtype=np.uint64)).astype(np.int64)


def mask_to_set(mask) -> frozenset[int]:
    mask = int(mask)
    return frozenset(b for b in range(MAX_MACHINES) if mask >> b & 1)


@dataclass(frozen=True, eq=False)
class Assignment:
    """Edge placement plus derived replica sets A(v) and master replicas."""

    num_machines: int
    scheme: str
    edge_owner: np.ndarray
    sub_replicas: np.ndarray
    con_replicas: np.ndarray
    sub_master: np.ndarray
    con_master: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def num_edges(self) -> int:
        return len(self.edge_owner)

    def sub_set(self, i) -> frozenset[int]:
        return mask_to_set(self.sub_replicas[i])

    def con_set(self, l) -> frozenset[int]:
        return mask_to_set(self.con_replicas[l])

    def sub_machine(self) -> np.ndarray:
        """Single machine per subproblem; only defined when no subproblem is cut."""
        if np.any(popcount(self.sub_replicas) != 1):
            raise ValueError("some subproblems are replicated on several machines")
        return self.sub_master

    def matches(self, g: BipartiteGraph) -> bool:
        return (
            len(self.edge_owner) == g.num_edges
            and len(self.sub_replicas) == g.num_subproblems
            and len(self.con_replicas) == g.num_consensus
        )

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return (
            self.num_machines == other.num_machines
            and self.scheme == other.scheme
            and np.array_equal(self.edge_owner, other.edge_owner)
            and np.array_equal(self.sub_master, other.sub_master)
            and np.array_equal(self.con_master, other.con_master)
        )


def assignment_from_edges(g: BipartiteGraph, edge_owner, num_machines, scheme,
                          *, con_master="plurality", meta=None) -> Assignment:
    """Derive replica sets and masters from an edge -> machine map.

    Subproblem masters are the lowest machine in A(v).  Consensus masters are
    either the lowest machine (``"lowest"``) or the machine owning most of the
    consensus node's edges (``"plurality"``).
    """
    check_machines(num_machines)
    owner = np.ascontiguousarray(edge_owner, dtype=np.int64)
    if len(owner) != g.num_edges:
        raise SizeMismatchError(f"assignment has {len(owner)} edges, graph has {g.num_edges}")
    if len(owner) and (owner.min() < 0 or owner.max() >= num_machines):
        raise ValueError("edge owner outside [0, num_machines)")
    sub_mask, con_mask = _replica_masks(
        g.edge_subproblems(), g.sub_adj, owner, g.num_subproblems, g.num_consensus
    )
    sub_master = _lowest_bit(sub_mask)
    if con_master == "plurality":
        cmaster = _plurality(g.con_ptr, g.consensus_edges(), owner, num_machines)
    elif con_master == "lowest":
        cmaster = _lowest_bit(con_mask)
    else:
        raise ValueError(f"unknown master rule {con_master!r}")
    for a in (owner, sub_mask, con_mask, sub_master, cmaster):
        a.setflags(write=False)
    return Assignment(num_machines, scheme, owner, sub_mask, con_mask, sub_master, cmaster,
                      dict(meta or {}))


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class PartitionMetrics:
    scheme: str
    num_machines: int
    replication_factor: float
    soed: int | None
    cut_nets: int | None
    max_edges: int
    min_edges: int
    max_subproblems: int
    min_subproblems: int
    edge_imbalance: float
    sub_imbalance: float | None

    @property
    def imbalance(self) -> float:
        """Load ratio max/mean for the quantity the scheme balances."""
        if self.scheme == "hyper" and self.sub_imbalance is not None:
            return self.sub_imbalance
        return self.edge_imbalance

    def within_beta(self, beta) -> bool:
        return self.imbalance <= beta + 1e-12


def soed_from_masks(con_replicas) -> tuple[int, int]:
    """Sum of external degrees and number of cut nets from consensus replica sets.

    A net spanning ``k >= 2`` parts is external to each of them, so it adds
    ``k`` to the SOED; an uncut net adds nothing.
    """
    k = popcount(con_replicas)
    cut = k >= 2
    return int(k[cut].sum()), int(cut.sum())


def metrics(g: BipartiteGraph, a: Assignment) -> PartitionMetrics:
    if not a.matches(g):
        raise SizeMismatchError("assignment does not belong to this graph")
    M = a.num_machines
    sub_k = popcount(a.sub_replicas)
    con_k = popcount(a.con_replicas)
    total = int(sub_k.sum() + con_k.sum())
    rf = total / g.num_vertices if g.num_vertices else 1.0
    edges = np.bincount(a.edge_owner, minlength=M)
    mean_edges = g.num_edges / M
    uncut = bool(np.all(sub_k == 1))
    soed = cut = None
    max_s = min_s = 0
    sub_imb = None
    if uncut:
        subs = np.bincount(a.sub_master, minlength=M)
        max_s, min_s = int(subs.max()), int(subs.min())
        sub_imb = max_s / (g.num_subproblems / M) if g.num_subproblems else 1.0
        if a.scheme == "hyper":
            soed, cut = soed_from_masks(a.con_replicas)
    return PartitionMetrics(
        scheme=a.scheme,
        num_machines=M,
        replication_factor=rf,
        soed=soed,
        cut_nets=cut,
        max_edges=int(edges.max()),
        min_edges=int(edges.min()),
        max_subproblems=max_s,
        min_subproblems=min_s,
        edge_imbalance=float(edges.max() / mean_edges) if g.num_edges else 1.0,
        sub_imbalance=sub_imb,
    )


# --------------------------------------------------------------------------
# file I/O
#
#   assignment <M> <scheme>
#   <subproblem> <consensus> <machine>      one line per edge, edge-id order


def write_assignment(g: BipartiteGraph, a: Assignment, path) -> None:
    if not a.matches(g):
        raise SizeMismatchError("assignment does not belong to this graph")
    subs = g.edge_subproblems()
    lines = [f"assignment {a.num_machines} {a.scheme}"]
    lines.extend(
        f"{s} {c} {m}" for s, c, m in zip(subs.tolist(), g.sub_adj.tolist(), a.edge_owner.tolist())
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_assignment(g: BipartiteGraph, path) -> Assignment:
    with open(path, encoding="utf-8") as fh:
        lines = [(n, ln.strip()) for n, ln in enumerate(fh, start=1)]
    body = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    if not body:
        raise GraphFormatError("missing header", 1)
    n0, head = body[0]
    parts = head.split()
    if len(parts) != 3 or parts[0] != "assignment" or parts[2] not in SCHEMES:
        raise GraphFormatError("expected header 'assignment <M> <scheme>'", n0)
    try:
        M = int(parts[1])
    except ValueError:
        raise GraphFormatError("machine count is not an integer", n0) from None
    owner = np.full(g.num_edges, -1, dtype=np.int64)
    ptr = g.sub_ptr
    for n, ln in body[1:]:
        try:
            s, c, m = (int(t) for t in ln.split())
        except ValueError:
            raise GraphFormatError("expected '<subproblem> <consensus> <machine>'", n) from None
        if not 0 <= s < g.num_subproblems:
            raise GraphFormatError(f"subproblem {s} not in graph", n)
        row = g.sub_adj[ptr[s]:ptr[s + 1]]
        j = int(np.searchsorted(row, c))
        if j >= len(row) or row[j] != c:
            raise GraphFormatError(f"edge ({s}, {c}) not in graph", n)
        if not 0 <= m < M:
            raise GraphFormatError(f"machine {m} outside [0, {M})", n)
        owner[ptr[s] + j] = m
    if np.any(owner < 0):
        e = int(np.argmax(owner < 0))
        raise GraphFormatError(f"edge {e} has no owner", len(lines))
    rule = "lowest" if parts[2] == "random" else "plurality"
    return assignment_from_edges(g, owner, M, parts[2], con_master=rule)
