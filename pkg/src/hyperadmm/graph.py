"""
Bipartite computation graphs for consensus ADMM.

Subproblems (one per objective term) sit on one side, consensus variables on
the other.  Subproblem ``i`` depends on an ordered list of consensus ids; the
position ``j`` of a consensus id in that list is the subproblem's local slot,
so ``adjacency(i)[j]`` is the global entry that local coordinate ``j`` must
agree with.

Storage is CSR on both sides.  Edge ids are positions in the subproblem-side
array, i.e. edge ``sub_ptr[i] + j`` joins subproblem ``i`` to its slot ``j``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GenerationError, GraphFormatError, GraphValidationError

__all__ = [
    "BipartiteGraph",
    "Hypergraph",
    "GeneratorConfig",
    "DegreeStats",
    "generate_bipartite",
    "to_hypergraph",
    "to_bipartite",
    "read_graph",
    "write_graph",
    "degree_stats",
]


def _frozen(a, dtype=np.int64):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _reverse_index(sub_ptr, sub_adj, num_consensus):
    """Transpose the subproblem-side CSR, keeping ascending subproblem order."""
    num_sub = len(sub_ptr) - 1
    rows = np.repeat(np.arange(num_sub, dtype=np.int64), np.diff(sub_ptr))
    order = np.argsort(sub_adj, kind="stable")
    con_deg = np.bincount(sub_adj, minlength=num_consensus)
    con_ptr = np.zeros(num_consensus + 1, dtype=np.int64)
    np.cumsum(con_deg, out=con_ptr[1:])
    con_sub = rows[order]
    con_slot = order - sub_ptr[con_sub]
    return con_ptr, con_sub, con_slot


class BipartiteGraph:
    """Immutable bipartite graph G(S, C, E).

    Build one with :meth:`from_adjacency` or :meth:`from_csr`; both sort every
    subproblem's consensus list ascending, which fixes the slot mapping.
    """

    __slots__ = ("sub_ptr", "sub_adj", "con_ptr", "con_sub", "con_slot", "_num_consensus")

    def __init__(self, sub_ptr, sub_adj, num_consensus, *, validate=True):
        sub_ptr = np.asarray(sub_ptr, dtype=np.int64)
        sub_adj = np.asarray(sub_adj, dtype=np.int64)
        if len(sub_ptr) == 0 or sub_ptr[0] != 0 or sub_ptr[-1] != len(sub_adj):
            raise GraphValidationError("malformed subproblem pointer array")
        if np.any(np.diff(sub_ptr) < 0):
            raise GraphValidationError("subproblem pointer array is not monotone")
        if len(sub_adj) and (sub_adj.min() < 0 or sub_adj.max() >= num_consensus):
            raise GraphValidationError("consensus id out of range")
        rows = np.repeat(np.arange(len(sub_ptr) - 1), np.diff(sub_ptr))
        order = np.lexsort((sub_adj, rows))
        sub_adj = sub_adj[order]
        self._num_consensus = int(num_consensus)
        self.sub_ptr = _frozen(sub_ptr)
        self.sub_adj = _frozen(sub_adj)
        con_ptr, con_sub, con_slot = _reverse_index(self.sub_ptr, self.sub_adj, num_consensus)
        self.con_ptr = _frozen(con_ptr)
        self.con_sub = _frozen(con_sub)
        self.con_slot = _frozen(con_slot)
        if validate:
            self.validate()

    @classmethod
    def from_adjacency(cls, adjacency: Sequence[Iterable[int]], num_consensus=None, *, validate=True):
        rows = [np.asarray(list(r), dtype=np.int64) for r in adjacency]
        sub_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum([len(r) for r in rows], out=sub_ptr[1:])
        sub_adj = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        if num_consensus is None:
            num_consensus = int(sub_adj.max()) + 1 if len(sub_adj) else 0
        return cls(sub_ptr, sub_adj, num_consensus, validate=validate)

    @classmethod
    def from_csr(cls, sub_ptr, sub_adj, num_consensus, *, validate=True):
        return cls(sub_ptr, sub_adj, num_consensus, validate=validate)

    # sizes -----------------------------------------------------------------
    @property
    def num_subproblems(self) -> int:
        return len(self.sub_ptr) - 1

    @property
    def num_consensus(self) -> int:
        return self._num_consensus

    @property
    def num_edges(self) -> int:
        return len(self.sub_adj)

    @property
    def num_vertices(self) -> int:
        return self.num_subproblems + self.num_consensus

    def sub_degrees(self) -> np.ndarray:
        return np.diff(self.sub_ptr)

    def con_degrees(self) -> np.ndarray:
        return np.diff(self.con_ptr)

    def edge_subproblems(self) -> np.ndarray:
        """Subproblem endpoint of every edge, indexed by edge id."""
        return np.repeat(np.arange(self.num_subproblems, dtype=np.int64), self.sub_degrees())

    # neighbourhoods --------------------------------------------------------
    def adjacency(self, i: int) -> np.ndarray:
        """Consensus ids of subproblem ``i``; index ``j`` is local slot ``j``."""
        return self.sub_adj[self.sub_ptr[i]:self.sub_ptr[i + 1]]

    def reverse(self, l: int) -> list[tuple[int, int]]:
        """``(subproblem, slot)`` pairs holding a local copy of consensus ``l``."""
        lo, hi = self.con_ptr[l], self.con_ptr[l + 1]
        return list(zip(self.con_sub[lo:hi].tolist(), self.con_slot[lo:hi].tolist()))

    def consensus_edges(self) -> np.ndarray:
        """Edge ids grouped by consensus vertex (parallel to ``con_sub``)."""
        return self.sub_ptr[self.con_sub] + self.con_slot

    def adjacency_lists(self) -> list[list[int]]:
        return [self.adjacency(i).tolist() for i in range(self.num_subproblems)]

    # invariants ------------------------------------------------------------
    def validate(self) -> None:
        sdeg = self.sub_degrees()
        if len(sdeg) and sdeg.min() < 1:
            i = int(np.argmin(sdeg))
            raise GraphValidationError(f"subproblem {i} has degree 0 (need >= 1)")
        rows = self.edge_subproblems()
        dup = (np.diff(self.sub_adj) == 0) & (np.diff(rows) == 0)
        if np.any(dup):
            e = int(np.argmax(dup))
            raise GraphValidationError(
                f"duplicate edge between subproblem {int(rows[e])} and consensus {int(self.sub_adj[e])}"
            )
        cdeg = self.con_degrees()
        if len(cdeg) and cdeg.min() < 2:
            l = int(np.argmin(cdeg))
            raise GraphValidationError(f"consensus node {l} has degree {int(cdeg[l])} (need >= 2)")

    def __eq__(self, other):
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (
            self.num_consensus == other.num_consensus
            and np.array_equal(self.sub_ptr, other.sub_ptr)
            and np.array_equal(self.sub_adj, other.sub_adj)
        )

    def __hash__(self):
        return hash((self.num_consensus, self.sub_ptr.tobytes(), self.sub_adj.tobytes()))

    def __repr__(self):
        return (
            f"BipartiteGraph(|S|={self.num_subproblems}, |C|={self.num_consensus}, "
            f"|E|={self.num_edges})"
        )


class Hypergraph:
    """Hypergraph view H = (S, E_h): subproblems are vertices, consensus nodes nets.

    ``net_ptr``/``net_pins`` list the pins of every net; ``vtx_ptr``/``vtx_nets``
    list the nets of every vertex.  Pins are ascending inside a net.
    """

    __slots__ = ("num_vertices", "net_ptr", "net_pins", "vtx_ptr", "vtx_nets", "vertex_weights")

    def __init__(self, num_vertices, net_ptr, net_pins, vertex_weights=None):
        self.num_vertices = int(num_vertices)
        net_ptr = np.asarray(net_ptr, dtype=np.int64)
        net_pins = np.asarray(net_pins, dtype=np.int64)
        nets = np.repeat(np.arange(len(net_ptr) - 1, dtype=np.int64), np.diff(net_ptr))
        order = np.lexsort((net_pins, nets))
        net_pins = net_pins[order]
        self.net_ptr = _frozen(net_ptr)
        self.net_pins = _frozen(net_pins)
        vtx_ptr, vtx_nets, _ = _reverse_index(self.net_ptr, self.net_pins, self.num_vertices)
        self.vtx_ptr = _frozen(vtx_ptr)
        self.vtx_nets = _frozen(vtx_nets)
        if vertex_weights is None:
            vertex_weights = np.ones(self.num_vertices, dtype=np.int64)
        self.vertex_weights = _frozen(vertex_weights)

    @classmethod
    def from_hyperedges(cls, num_vertices, hyperedges, vertex_weights=None):
        pins = [np.asarray(sorted(set(e)), dtype=np.int64) for e in hyperedges]
        ptr = np.zeros(len(pins) + 1, dtype=np.int64)
        np.cumsum([len(p) for p in pins], out=ptr[1:])
        flat = np.concatenate(pins) if pins else np.zeros(0, dtype=np.int64)
        return cls(num_vertices, ptr, flat, vertex_weights)

    @property
    def num_nets(self) -> int:
        return len(self.net_ptr) - 1

    @property
    def num_pins(self) -> int:
        return len(self.net_pins)

    def pins(self, e: int) -> np.ndarray:
        return self.net_pins[self.net_ptr[e]:self.net_ptr[e + 1]]

    def nets(self, v: int) -> np.ndarray:
        return self.vtx_nets[self.vtx_ptr[v]:self.vtx_ptr[v + 1]]

    def hyperedges(self) -> list[set[int]]:
        return [set(self.pins(e).tolist()) for e in range(self.num_nets)]

    def __repr__(self):
        return f"Hypergraph(vertices={self.num_vertices}, nets={self.num_nets}, pins={self.num_pins})"


def to_hypergraph(g: BipartiteGraph) -> Hypergraph:
    """Each consensus node becomes a net over its neighbouring subproblems."""
    return Hypergraph(g.num_subproblems, g.con_ptr, g.con_sub)


def to_bipartite(h: Hypergraph, *, validate=True) -> BipartiteGraph:
    return BipartiteGraph.from_csr(h.vtx_ptr, h.vtx_nets, h.num_nets, validate=validate)


# --------------------------------------------------------------------------
# synthetic generation


@dataclass(frozen=True)
class GeneratorConfig:
    """Power-law consensus degrees, Poisson subproblem degrees.

    ``max_degree=None`` means ``min(num_consensus - 1, 100_000)``.
    """

    alpha: float
    lam: float
    num_consensus: int
    max_degree: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if self.num_consensus < 1:
            raise ValueError("num_consensus must be >= 1")
        if self.max_degree is not None and self.max_degree < 2:
            raise ValueError("max_degree must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def effective_max_degree(self) -> int:
        if self.max_degree is not None:
            return int(self.max_degree)
        return max(2, min(self.num_consensus - 1, 100_000))


def _sample_power_law(rng, alpha, kmax, size):
    support = np.arange(2, kmax + 1, dtype=np.float64)
    cdf = np.cumsum(support ** -alpha)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(idx, len(support) - 1).astype(np.int64) + 2


def _sample_poisson_positive(rng, lam, total, max_samples):
    """Zero-truncated Poisson draws until their sum reaches ``total``."""
    chunks = []
    drawn = 0
    acc = 0
    batch = max(1024, int(1.2 * total / max(lam, 1.0)))
    while acc < total:
        d = rng.poisson(lam, size=batch)
        d = d[d >= 1]
        chunks.append(d)
        drawn += len(d)
        acc += int(d.sum())
        if drawn - len(d) >= max_samples:
            break
    seq = np.concatenate(chunks).astype(np.int64)
    csum = np.cumsum(seq)
    n = int(np.searchsorted(csum, total, side="left")) + 1
    if n > max_samples or n > len(seq):
        raise GenerationError(
            f"could not match degree sum {total} within {max_samples} subproblem samples"
        )
    seq = seq[:n].copy()
    seq[-1] -= int(csum[n - 1]) - total
    return seq


def _graphical(con_deg, sub_deg) -> bool:
    """Gale-Ryser test: can the two degree sequences form a simple bipartite graph?"""
    a = np.sort(con_deg)[::-1]
    kk = np.arange(1, len(a) + 1)
    # sum_j min(b_j, k) for every k, from the histogram of b
    hist = np.bincount(np.minimum(sub_deg, len(a)), minlength=len(a) + 1)
    at_least = len(sub_deg) - np.cumsum(hist)[:-1]  # #{j : b_j >= k} for k = 1..len(a)
    return bool(np.all(np.cumsum(a) <= np.cumsum(at_least[:len(a)])[kk - 1]))


def _repair_duplicates(rng, sub_ptr, sub_adj, max_rounds):
    """Swap consensus endpoints until no subproblem sees the same consensus twice."""
    rows = np.repeat(np.arange(len(sub_ptr) - 1), np.diff(sub_ptr))
    num_edges = len(sub_adj)
    rounds = 0
    while True:
        order = np.lexsort((sub_adj, rows))
        s_rows, s_adj = rows[order], sub_adj[order]
        dup = (np.diff(s_adj) == 0) & (np.diff(s_rows) == 0)
        bad = order[1:][dup]
        if len(bad) == 0:
            return sub_adj
        rounds += 1
        if rounds > max_rounds:
            raise GenerationError(f"duplicate-edge repair did not finish in {max_rounds} rounds")
        for p in bad.tolist():
            i = rows[p]
            row_i = sub_adj[sub_ptr[i]:sub_ptr[i + 1]]
            for _ in range(64):
                q = int(rng.integers(num_edges))
                k = rows[q]
                if k == i:
                    continue
                row_k = sub_adj[sub_ptr[k]:sub_ptr[k + 1]]
                if sub_adj[q] in row_i or sub_adj[p] in row_k:
                    continue
                sub_adj[p], sub_adj[q] = sub_adj[q], sub_adj[p]
                break


def generate_bipartite(cfg: GeneratorConfig) -> BipartiteGraph:
    """Random bipartite graph with power-law consensus and Poisson subproblem degrees.

    Consensus degrees follow ``P(d) ~ d**-alpha`` on ``[2, max_degree]``;
    subproblem degrees follow Poisson(lam) conditioned on ``d >= 1``.  The
    subproblem sequence is drawn until its sum covers the consensus sum and the
    last draw is trimmed by the overshoot.  Stubs are paired by a random
    shuffle and duplicate pairs removed by endpoint swaps.
    """
    rng = np.random.default_rng(cfg.seed)
    con_deg = _sample_power_law(rng, cfg.alpha, cfg.effective_max_degree, cfg.num_consensus)
    total = int(con_deg.sum())
    sub_deg = _sample_poisson_positive(rng, cfg.lam, total, 10 * cfg.num_consensus)

    if not _graphical(con_deg, sub_deg):
        raise GenerationError("sampled degree sequences admit no simple bipartite graph")

    sub_ptr = np.zeros(len(sub_deg) + 1, dtype=np.int64)
    np.cumsum(sub_deg, out=sub_ptr[1:])
    stubs = np.repeat(np.arange(cfg.num_consensus, dtype=np.int64), con_deg)
    sub_adj = rng.permutation(stubs)
    sub_adj = _repair_duplicates(rng, sub_ptr, sub_adj, max_rounds=total)
    g = BipartiteGraph(sub_ptr, sub_adj, cfg.num_consensus, validate=False)
    g.validate()
    return g


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class DegreeStats:
    num_subproblems: int
    num_consensus: int
    num_edges: int
    sub_min: int
    sub_max: int
    sub_mean: float
    con_min: int
    con_max: int
    con_mean: float

    @property
    def ratio(self) -> float:
        """|S| / |C|."""
        return self.num_subproblems / self.num_consensus if self.num_consensus else float("inf")

    @property
    def num_vertices(self) -> int:
        return self.num_subproblems + self.num_consensus


def degree_stats(g: BipartiteGraph) -> DegreeStats:
    s, c = g.sub_degrees(), g.con_degrees()
    return DegreeStats(
        num_subproblems=g.num_subproblems,
        num_consensus=g.num_consensus,
        num_edges=g.num_edges,
        sub_min=int(s.min()) if len(s) else 0,
        sub_max=int(s.max()) if len(s) else 0,
        sub_mean=g.num_edges / len(s) if len(s) else 0.0,
        con_min=int(c.min()) if len(c) else 0,
        con_max=int(c.max()) if len(c) else 0,
        con_mean=g.num_edges / len(c) if len(c) else 0.0,
    )


# --------------------------------------------------------------------------
# file I/O
#
#   bipartite <|S|> <|C|> <|E|>
#   <ascending consensus ids of subproblem 0>
#   ...
# '#' lines are comments.


def write_graph(g: BipartiteGraph, path, header_comments: Sequence[str] = ()) -> None:
    g.validate()
    lines = [f"# {c}" for c in header_comments]
    lines.append(f"bipartite {g.num_subproblems} {g.num_consensus} {g.num_edges}")
    adj = g.sub_adj.tolist()
    ptr = g.sub_ptr.tolist()
    for i in range(g.num_subproblems):
        lines.append(" ".join(map(str, adj[ptr[i]:ptr[i + 1]])))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse_ints(text, lineno):
    try:
        return [int(tok) for tok in text.split()]
    except ValueError:
        raise GraphFormatError(f"expected integers, got {text.strip()!r}", lineno) from None


def read_graph(path: str | os.PathLike) -> BipartiteGraph:
    header = None
    rows = []
    lineno = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                continue
            if header is None:
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 4 or parts[0] != "bipartite":
                    raise GraphFormatError("expected header 'bipartite <S> <C> <E>'", lineno)
                header = _parse_ints(" ".join(parts[1:]), lineno)
                if min(header) < 0:
                    raise GraphFormatError("negative count in header", lineno)
                continue
            if len(rows) == header[0]:
                if line:
                    raise GraphFormatError(
                        f"more subproblem lines than the {header[0]} declared in the header", lineno
                    )
                continue
            ids = _parse_ints(line, lineno)
            for cid in ids:
                if not 0 <= cid < header[1]:
                    raise GraphFormatError(
                        f"consensus id {cid} outside [0, {header[1]})", lineno
                    )
            if any(b <= a for a, b in zip(ids, ids[1:])):
                raise GraphFormatError("consensus ids must be strictly ascending", lineno)
            rows.append(ids)
    if header is None:
        raise GraphFormatError("missing header", lineno or 1)
    if len(rows) != header[0]:
        raise GraphFormatError(
            f"header declares {header[0]} subproblems but file has {len(rows)}", lineno
        )
    num_edges = sum(len(r) for r in rows)
    if num_edges != header[2]:
        raise GraphFormatError(
            f"header declares {header[2]} edges but body has {num_edges}", lineno
        )
    return BipartiteGraph.from_adjacency(rows, header[1])
