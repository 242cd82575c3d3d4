"""Multilevel hypergraph partitioning of the subproblem side.

Cutting only consensus nodes of the bipartite graph is the same as cutting
nets of its hypergraph view, so every subproblem lands on exactly one machine
and a consensus node is replicated on the machines of its pins.

The partitioner is a recursive-bisection multilevel scheme:

* coarsening pairs vertices by heavy connectivity, rating a neighbour ``v`` of
  ``u`` by ``sum(w_e / (|e| - 1))`` over shared nets divided by the product of
  the two vertex weights; vertices only reachable through very large nets are
  paired with another pin of such a net;
* the coarsest hypergraph (at most ``max(2 * parts, 200)`` vertices) is bisected
  by greedy growth from random seeds, each try polished by FM;
* every level is refined by FM while projecting back;
* nets cut by a bisection are split between the two halves before recursing,
  and a final k-way FM pass runs on the full hypergraph.

Per-level imbalance is ``beta ** (1 / depth) - 1`` so the product over the
recursion never exceeds ``beta * |S| / M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import InfeasibleBalanceError
from ..graph import Hypergraph
from .assignment import Assignment, assignment_from_edges, check_machines
from .fm import (
    LAZY_NET_SIZE,
    _apply_move,
    _heap_remove,
    _heap_set,
    fm_run,
    part_capacity,
    pin_counts,
    soed_value,
)

# nets larger than this do not contribute to matching ratings
RATING_NET_SIZE = 256


@dataclass
class _Level:
    """Working hypergraph at one level of the hierarchy."""

    vw: np.ndarray
    net_ptr: np.ndarray
    net_pins: np.ndarray
    nw: np.ndarray
    vtx_ptr: np.ndarray
    vtx_nets: np.ndarray

    @property
    def n(self):
        return len(self.vw)

    @classmethod
    def build(cls, vw, net_ptr, net_pins, nw):
        n = len(vw)
        nets = np.repeat(np.arange(len(net_ptr) - 1, dtype=np.int64), np.diff(net_ptr))
        order = np.argsort(net_pins, kind="stable")
        deg = np.bincount(net_pins, minlength=n)
        vtx_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=vtx_ptr[1:])
        return cls(vw, net_ptr, net_pins, nw, vtx_ptr, np.ascontiguousarray(nets[order]))


# ----- coarsening ---------------------------------------------------------------


@njit(cache=True)
def _match(vw, vtx_ptr, vtx_nets, net_ptr, net_pins, nw, order, max_w, rating_size):
    n = len(vw)
    match = -np.ones(n, dtype=np.int64)
    score = np.zeros(n, dtype=np.float64)
    touched = np.empty(n, dtype=np.int64)
    pending = -np.ones(len(net_ptr) - 1, dtype=np.int64)
    for u in order:
        if match[u] >= 0:
            continue
        nt = 0
        for idx in range(vtx_ptr[u], vtx_ptr[u + 1]):
            e = vtx_nets[idx]
            size = net_ptr[e + 1] - net_ptr[e]
            if size > rating_size:
                continue
            r = nw[e] / (size - 1)
            for j in range(net_ptr[e], net_ptr[e + 1]):
                v = net_pins[j]
                if v == u or match[v] >= 0:
                    continue
                if score[v] == 0.0:
                    touched[nt] = v
                    nt += 1
                score[v] += r
        best = -1
        best_s = 0.0
        for t in range(nt):
            v = touched[t]
            if vw[u] + vw[v] <= max_w:
                s = score[v] / (vw[u] * vw[v])
                if s > best_s or (s == best_s and v < best):
                    best_s = s
                    best = v
            score[v] = 0.0
        if best < 0:
            for idx in range(vtx_ptr[u], vtx_ptr[u + 1]):
                e = vtx_nets[idx]
                if net_ptr[e + 1] - net_ptr[e] <= rating_size:
                    continue
                p = pending[e]
                if p >= 0 and p != u and match[p] < 0 and vw[u] + vw[p] <= max_w:
                    best = p
                    pending[e] = -1
                    break
            if best < 0:
                for idx in range(vtx_ptr[u], vtx_ptr[u + 1]):
                    e = vtx_nets[idx]
                    if net_ptr[e + 1] - net_ptr[e] > rating_size:
                        pending[e] = u
        if best >= 0:
            match[u] = best
            match[best] = u
    cmap = -np.ones(n, dtype=np.int64)
    nc = 0
    for v in range(n):
        if cmap[v] >= 0:
            continue
        cmap[v] = nc
        if match[v] >= 0:
            cmap[match[v]] = nc
        nc += 1
    return cmap, nc


@njit(cache=True)
def _contract_nets(cmap, nc, net_ptr, net_pins, nw):
    stamp = -np.ones(nc, dtype=np.int64)
    new_ptr = np.zeros(len(net_ptr), dtype=np.int64)
    new_pins = np.empty(len(net_pins), dtype=np.int64)
    new_nw = np.empty(len(nw), dtype=np.int64)
    hashes = np.empty(len(nw), dtype=np.int64)
    m = 0
    top = 0
    for e in range(len(net_ptr) - 1):
        start = top
        h = 0
        for j in range(net_ptr[e], net_ptr[e + 1]):
            c = cmap[net_pins[j]]
            if stamp[c] != e:
                stamp[c] = e
                new_pins[top] = c
                top += 1
                h += (c + 1) * 2654435761
        if top - start >= 2:
            new_nw[m] = nw[e]
            hashes[m] = h
            m += 1
            new_ptr[m] = top
        else:
            top = start
    return new_ptr[:m + 1].copy(), new_pins[:top].copy(), new_nw[:m].copy(), hashes[:m].copy()


@njit(cache=True)
def _merge_parallel(order, net_ptr, net_pins, nw, hashes, nc):
    """Fold nets with identical pin sets into one net of summed weight."""
    m = len(nw)
    keep = np.ones(m, dtype=np.uint8)
    mark = np.zeros(nc, dtype=np.int64)
    stamp = 0
    i = 0
    while i < m:
        e = order[i]
        j = i + 1
        size_e = net_ptr[e + 1] - net_ptr[e]
        while j < m:
            f = order[j]
            if hashes[f] != hashes[e] or net_ptr[f + 1] - net_ptr[f] != size_e:
                break
            j += 1
        if j - i > 1:
            for a in range(i, j):
                ea = order[a]
                if not keep[ea]:
                    continue
                stamp += 1
                for t in range(net_ptr[ea], net_ptr[ea + 1]):
                    mark[net_pins[t]] = stamp
                for b in range(a + 1, j):
                    eb = order[b]
                    if not keep[eb]:
                        continue
                    same = True
                    for t in range(net_ptr[eb], net_ptr[eb + 1]):
                        if mark[net_pins[t]] != stamp:
                            same = False
                            break
                    if same:
                        nw[ea] += nw[eb]
                        keep[eb] = 0
        i = j
    return keep


def _coarsen(level: _Level, rng, max_w):
    order = rng.permutation(level.n)
    cmap, nc = _match(level.vw, level.vtx_ptr, level.vtx_nets, level.net_ptr, level.net_pins,
                      level.nw, order, max_w, RATING_NET_SIZE)
    cvw = np.bincount(cmap, weights=level.vw, minlength=nc).astype(np.int64)
    ptr, pins, nw, hashes = _contract_nets(cmap, nc, level.net_ptr, level.net_pins, level.nw)
    sizes = np.diff(ptr)
    order = np.lexsort((sizes, hashes))
    keep = _merge_parallel(order, ptr, pins, nw, hashes, nc).astype(bool)
    if not keep.all():
        sizes = sizes[keep]
        new_ptr = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=new_ptr[1:])
        pin_keep = np.repeat(keep, np.diff(ptr))
        pins, nw, ptr = pins[pin_keep], nw[keep], new_ptr
    return _Level.build(cvw, ptr, pins, nw), cmap


# ----- initial bisection ----------------------------------------------------------


@njit(cache=True)
def _grow(seed_order, vw, maxw, target0, vtx_ptr, vtx_nets, net_ptr, net_pins, nw):
    """Greedy growth of side 0 from side 1 by best cut gain.

    Gains are kept incrementally: a net changes the gain of its pins only when
    it first reaches side 0 or when a single pin of it is left on side 1, so
    every net is scanned at most twice.
    """
    n = len(vw)
    part = np.ones(n, dtype=np.int64)
    partw = np.zeros(2, dtype=np.int64)
    partw[1] = vw.sum()
    phi, lam = pin_counts(net_ptr, net_pins, part, 2)
    gain = np.zeros(n, dtype=np.int64)
    for v in range(n):
        for idx in range(vtx_ptr[v], vtx_ptr[v + 1]):
            e = vtx_nets[idx]
            if phi[e, 1] == 1:
                gain[v] += nw[e]
            gain[v] -= nw[e]
    heap_v = np.empty(n, dtype=np.int64)
    heap_g = np.empty(n, dtype=np.int64)
    pos = -np.ones(n, dtype=np.int64)
    size = 0
    next_seed = 0
    while partw[0] < target0:
        if size == 0:
            while next_seed < n and part[seed_order[next_seed]] == 0:
                next_seed += 1
            if next_seed >= n:
                break
            size = _heap_set(heap_v, heap_g, pos, size, seed_order[next_seed], 0)
            next_seed += 1
        v = heap_v[0]
        size = _heap_remove(heap_v, heap_g, pos, size, v)
        if part[v] == 0 or partw[0] + vw[v] > maxw[0]:
            continue
        _apply_move(v, 1, 0, part, vw, partw, vtx_ptr, vtx_nets, phi, lam)
        for idx in range(vtx_ptr[v], vtx_ptr[v + 1]):
            e = vtx_nets[idx]
            first = phi[e, 0] == 1
            last = phi[e, 1] == 1
            if not (first or last):
                continue
            for j in range(net_ptr[e], net_ptr[e + 1]):
                u = net_pins[j]
                if part[u] != 1:
                    continue
                if first:
                    gain[u] += nw[e]
                if last:
                    gain[u] += nw[e]
                size = _heap_set(heap_v, heap_g, pos, size, u, gain[u])
    return part


def _initial_bisection(level: _Level, maxw, target0, rng, tries, fm_passes):
    best_part, best_cut = None, None
    W = int(level.vw.sum())
    for t in range(tries):
        seed_order = rng.permutation(level.n)
        if t % 2 == 0:
            part = _grow(seed_order, level.vw, maxw, target0, level.vtx_ptr, level.vtx_nets,
                         level.net_ptr, level.net_pins, level.nw)
        else:
            flipped = np.array([maxw[1], maxw[0]])
            part = 1 - _grow(seed_order, level.vw, flipped, W - target0, level.vtx_ptr,
                             level.vtx_nets, level.net_ptr, level.net_pins, level.nw)
        load0 = int(level.vw[part == 0].sum())
        if load0 > maxw[0] or W - load0 > maxw[1]:
            continue
        fm_run(part, 2, level.vw, maxw, level.vtx_ptr, level.vtx_nets, level.net_ptr,
               level.net_pins, level.nw, fm_passes, 32, max(100, level.n // 10), LAZY_NET_SIZE)
        _, lam = pin_counts(level.net_ptr, level.net_pins, part, 2)
        cut = int(soed_value(lam, level.nw))
        if best_cut is None or cut < best_cut:
            best_part, best_cut = part.copy(), cut
    if best_part is None:
        raise InfeasibleBalanceError("could not find a balanced initial bisection")
    return best_part


# ----- multilevel bisection -------------------------------------------------------


def _multilevel_bisect(level: _Level, maxw, target0, rng, *, stop_size, tries, fm_passes):
    W = int(level.vw.sum())
    if maxw[0] >= W:
        return np.zeros(level.n, dtype=np.int64)
    if maxw[1] >= W:
        return np.ones(level.n, dtype=np.int64)
    max_cluster = max(1, int(math.ceil(1.5 * W / stop_size)))
    max_cluster = min(max_cluster, int(min(maxw)) // 2 or 1)
    hierarchy = []
    cur = level
    while cur.n > stop_size:
        coarse, cmap = _coarsen(cur, rng, max_cluster)
        if coarse.n > 0.95 * cur.n:
            break
        hierarchy.append((cur, cmap))
        cur = coarse
    part = _initial_bisection(cur, maxw, target0, rng, tries, fm_passes)
    for fine, cmap in reversed(hierarchy):
        part = part[cmap]
        fm_run(part, 2, fine.vw, maxw, fine.vtx_ptr, fine.vtx_nets, fine.net_ptr, fine.net_pins,
               fine.nw, fm_passes, 16, max(100, fine.n // 100), LAZY_NET_SIZE)
    return part


@njit(cache=True)
def _split_nets(net_ptr, net_pins, nw, side, local_id, which):
    """Nets restricted to vertices on ``which``; nets left with < 2 pins are dropped."""
    new_ptr = np.zeros(len(net_ptr), dtype=np.int64)
    new_pins = np.empty(len(net_pins), dtype=np.int64)
    new_nw = np.empty(len(nw), dtype=np.int64)
    m = 0
    top = 0
    for e in range(len(net_ptr) - 1):
        start = top
        for j in range(net_ptr[e], net_ptr[e + 1]):
            v = net_pins[j]
            if side[v] == which:
                new_pins[top] = local_id[v]
                top += 1
        if top - start >= 2:
            new_nw[m] = nw[e]
            m += 1
            new_ptr[m] = top
        else:
            top = start
    return new_ptr[:m + 1].copy(), new_pins[:top].copy(), new_nw[:m].copy()


def _recursive_bisection(level, vertex_ids, k, first_part, eps, rng, out, opts):
    if k == 1 or level.n == 0:
        out[vertex_ids] = first_part
        return
    k0 = k // 2
    k1 = k - k0
    W = int(level.vw.sum())
    # never below the balanced share, or a child could be left with no feasible split
    maxw = np.array([
        max(int(math.floor((1 + eps) * W * k0 / k + 1e-9)), -(-W * k0 // k)),
        max(int(math.floor((1 + eps) * W * k1 / k + 1e-9)), -(-W * k1 // k)),
    ], dtype=np.int64)
    side = _multilevel_bisect(level, maxw, W * k0 // k, rng, **opts)
    for which, kk, offset in ((0, k0, first_part), (1, k1, first_part + k0)):
        mask = side == which
        ids = np.flatnonzero(mask)
        local = -np.ones(level.n, dtype=np.int64)
        local[ids] = np.arange(len(ids))
        ptr, pins, nw = _split_nets(level.net_ptr, level.net_pins, level.nw, side, local, which)
        sub = _Level.build(level.vw[ids], ptr, pins, nw)
        _recursive_bisection(sub, vertex_ids[ids], kk, offset, eps, rng, out, opts)


def _random_fill(vw, maxw, rng):
    """Random placement respecting ``maxw``: shuffled vertices, heaviest-first fit."""
    order = rng.permutation(len(vw))
    order = order[np.argsort(-vw[order], kind="stable")]
    load = np.zeros(len(maxw), dtype=np.int64)
    part = np.empty(len(vw), dtype=np.int64)
    for v in order:
        free = np.flatnonzero(load + vw[v] <= maxw)
        p = free[rng.integers(len(free))] if len(free) else int(np.argmin(load))
        part[v] = p
        load[p] += vw[v]
    return part


def hyper_parts(h: Hypergraph, num_parts: int, beta: float = 2.0, seed: int = 0, *,
                runs: int | None = None, fm_passes: int = 2,
                restarts: int | None = None) -> np.ndarray:
    """Vertex -> part array minimising the sum of external degrees.

    Each of ``runs`` recursive-bisection runs is followed by k-way FM.  Small
    hypergraphs (no coarsening needed) also get ``restarts`` k-way FM runs from
    random balanced placements, since the per-level bisection bound can rule
    out the best k-way layouts there.
    """
    check_machines(num_parts)
    if beta < 1:
        raise ValueError("beta must be >= 1")
    n = h.num_vertices
    vw = np.asarray(h.vertex_weights, dtype=np.int64)
    W = int(vw.sum())
    cap = part_capacity(W, num_parts, beta)
    if num_parts > n or cap < 1 or (n and cap < int(vw.max())) or cap * num_parts < W:
        raise InfeasibleBalanceError(
            f"cannot place {n} subproblems on {num_parts} machines with beta={beta}"
        )
    if num_parts == 1:
        return np.zeros(n, dtype=np.int64)
    depth = math.ceil(math.log2(num_parts))
    eps = beta ** (1.0 / depth) - 1.0
    if runs is None:
        runs = 8 if n <= 2000 else 1
    stop_size = max(2 * 2, 200)
    opts = dict(stop_size=stop_size, tries=8 if n > 2000 else 4, fm_passes=fm_passes)
    nw = np.ones(h.num_nets, dtype=np.int64)
    top = _Level.build(vw, np.asarray(h.net_ptr), np.asarray(h.net_pins), nw)
    maxw = np.full(num_parts, cap, dtype=np.int64)
    ss = np.random.SeedSequence(seed)
    if restarts is None:
        restarts = 16 if n <= stop_size and num_parts > 2 else 0
    best, best_soed = None, None
    for r, child in enumerate(ss.spawn(runs + restarts)):
        rng = np.random.default_rng(child)
        if r < runs:
            part = np.empty(n, dtype=np.int64)
            try:
                _recursive_bisection(top, np.arange(n), num_parts, 0, eps, rng, part, opts)
            except InfeasibleBalanceError:
                continue
        else:
            part = _random_fill(vw, maxw, rng)
        # rounding in the per-level bounds can overshoot the k-way bound
        if np.any(np.bincount(part, weights=vw, minlength=num_parts) > maxw):
            if r >= runs or best is not None:
                continue
            part = _random_fill(vw, maxw, rng)
            if np.any(np.bincount(part, weights=vw, minlength=num_parts) > maxw):
                continue
        fm_run(part, num_parts, vw, maxw, h.vtx_ptr, h.vtx_nets, h.net_ptr, h.net_pins, nw,
               1, 16, max(200, n // 50), LAZY_NET_SIZE, 0.002)
        _, lam = pin_counts(h.net_ptr, h.net_pins, part, num_parts)
        s = int(soed_value(lam, nw))
        if best_soed is None or s < best_soed:
            best, best_soed = part, s
    if best is None:
        raise InfeasibleBalanceError(
            f"no balanced placement of {n} subproblems on {num_parts} machines found"
        )
    return best


def assignment_from_parts(h: Hypergraph, parts, num_parts, meta=None) -> Assignment:
    """Vertex-cut placement induced by a subproblem partition."""
    from ..graph import to_bipartite

    g = to_bipartite(h, validate=False)
    owner = np.asarray(parts, dtype=np.int64)[g.edge_subproblems()]
    return assignment_from_edges(g, owner, num_parts, "hyper", con_master="plurality", meta=meta)


def partition_hyper(h: Hypergraph, num_machines: int, beta: float = 2.0, seed: int = 0,
                    **kwargs) -> Assignment:
    """Hypergraph-view vertex cut: subproblems are never replicated.

    Raises :class:`InfeasibleBalanceError` when ``num_machines > |S|`` or the
    per-machine bound ``beta * |S| / num_machines`` is below one subproblem.
    """
    parts = hyper_parts(h, num_machines, beta, seed, **kwargs)
    return assignment_from_parts(h, parts, num_machines,
                                 meta={"beta": beta, "seed": seed})
