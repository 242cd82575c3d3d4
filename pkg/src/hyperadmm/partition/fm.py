"""Fiduccia-Mattheyses refinement of hypergraph partitions under the SOED objective.

The sum of external degrees counts, for every part, the nets that touch it
without lying inside it.  A net of weight ``w`` spanning ``k`` parts therefore
contributes ``w * k`` when ``k >= 2`` and nothing otherwise.

Moves are single vertices.  Each unlocked boundary vertex sits in a max-heap
keyed by the gain of its best feasible move (ties: lowest vertex id, then
lowest target part).  A pass pops the best vertex, applies the move, locks the
vertex, and refreshes the gains of pins on nets whose pin distribution crossed
a critical count.  At the end of a pass the move sequence is rolled back to its
best prefix, so a pass never makes the partition worse.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import InfeasibleBalanceError
from ..graph import Hypergraph

# Pins of nets larger than this are not refreshed eagerly after a move; their
# stale heap keys are recomputed when popped.
LAZY_NET_SIZE = 1000


@njit(cache=True, inline="always")
def _soed_term(lam, w):
    return w * lam if lam >= 2 else 0


@njit(cache=True)
def pin_counts(net_ptr, net_pins, part, k):
    num_nets = len(net_ptr) - 1
    phi = np.zeros((num_nets, k), dtype=np.int64)
    lam = np.zeros(num_nets, dtype=np.int64)
    for e in range(num_nets):
        for idx in range(net_ptr[e], net_ptr[e + 1]):
            b = part[net_pins[idx]]
            if phi[e, b] == 0:
                lam[e] += 1
            phi[e, b] += 1
    return phi, lam


@njit(cache=True)
def soed_value(lam, nw):
    s = 0
    for e in range(len(lam)):
        s += _soed_term(lam[e], nw[e])
    return s


@njit(cache=True)
def _move_gain(v, a, b, vtx_ptr, vtx_nets, nw, phi, lam):
    g = 0
    for idx in range(vtx_ptr[v], vtx_ptr[v + 1]):
        e = vtx_nets[idx]
        L = lam[e]
        L2 = L
        if phi[e, a] == 1:
            L2 -= 1
        if phi[e, b] == 0:
            L2 += 1
        g += _soed_term(L, nw[e]) - _soed_term(L2, nw[e])
    return g


@njit(cache=True)
def _best_move(v, part, vw, partw, maxw, k, vtx_ptr, vtx_nets, nw, phi, lam, seen):
    """Best feasible target for ``v`` among parts its nets touch: (gain, part) or (0, -1)."""
    a = part[v]
    best_b = -1
    best_g = 0
    if k == 2:
        b = 1 - a
        if partw[b] + vw[v] <= maxw[b]:
            return _move_gain(v, a, b, vtx_ptr, vtx_nets, nw, phi, lam), b
        return 0, -1
    ncand = 0
    for idx in range(vtx_ptr[v], vtx_ptr[v + 1]):
        e = vtx_nets[idx]
        for b in range(k):
            if b != a and phi[e, b] > 0 and seen[b] == 0:
                seen[b] = 1
                ncand += 1
    if ncand == 0:
        return 0, -1
    for b in range(k):
        if seen[b] == 0:
            continue
        seen[b] = 0
        if partw[b] + vw[v] > maxw[b]:
            continue
        g = _move_gain(v, a, b, vtx_ptr, vtx_nets, nw, phi, lam)
        if best_b < 0 or g > best_g:
            best_g = g
            best_b = b
    return best_g, best_b


# ----- indexed binary max-heap ------------------------------------------------


@njit(cache=True, inline="always")
def _above(g1, v1, g2, v2):
    return g1 > g2 or (g1 == g2 and v1 < v2)


@njit(cache=True)
def _sift_up(heap_v, heap_g, pos, i):
    v = heap_v[i]
    g = heap_g[i]
    while i > 0:
        p = (i - 1) >> 1
        if _above(g, v, heap_g[p], heap_v[p]):
            heap_v[i] = heap_v[p]
            heap_g[i] = heap_g[p]
            pos[heap_v[i]] = i
            i = p
        else:
            break
    heap_v[i] = v
    heap_g[i] = g
    pos[v] = i


@njit(cache=True)
def _sift_down(heap_v, heap_g, pos, i, size):
    v = heap_v[i]
    g = heap_g[i]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        if c + 1 < size and _above(heap_g[c + 1], heap_v[c + 1], heap_g[c], heap_v[c]):
            c += 1
        if _above(heap_g[c], heap_v[c], g, v):
            heap_v[i] = heap_v[c]
            heap_g[i] = heap_g[c]
            pos[heap_v[i]] = i
            i = c
        else:
            break
    heap_v[i] = v
    heap_g[i] = g
    pos[v] = i


@njit(cache=True)
def _heap_set(heap_v, heap_g, pos, size, v, g):
    """Insert ``v`` or change its key; returns the new heap size."""
    i = pos[v]
    if i < 0:
        heap_v[size] = v
        heap_g[size] = g
        pos[v] = size
        _sift_up(heap_v, heap_g, pos, size)
        return size + 1
    old = heap_g[i]
    heap_g[i] = g
    if g > old:
        _sift_up(heap_v, heap_g, pos, i)
    else:
        _sift_down(heap_v, heap_g, pos, i, size)
    return size


@njit(cache=True)
def _heap_remove(heap_v, heap_g, pos, size, v):
    i = pos[v]
    if i < 0:
        return size
    size -= 1
    pos[v] = -1
    if i == size:
        return size
    heap_v[i] = heap_v[size]
    heap_g[i] = heap_g[size]
    pos[heap_v[i]] = i
    _sift_up(heap_v, heap_g, pos, i)
    _sift_down(heap_v, heap_g, pos, pos[heap_v[i]], size)
    return size


# ----- one pass ---------------------------------------------------------------


@njit(cache=True)
def _apply_move(v, a, b, part, vw, partw, vtx_ptr, vtx_nets, phi, lam):
    part[v] = b
    partw[a] -= vw[v]
    partw[b] += vw[v]
    for idx in range(vtx_ptr[v], vtx_ptr[v + 1]):
        e = vtx_nets[idx]
        phi[e, a] -= 1
        if phi[e, a] == 0:
            lam[e] -= 1
        if phi[e, b] == 0:
            lam[e] += 1
        phi[e, b] += 1


@njit(cache=True)
def fm_pass(part, k, vw, partw, maxw, vtx_ptr, vtx_nets, net_ptr, net_pins, nw, phi, lam,
            max_stall, lazy_size):
    """One FM pass; returns the SOED reduction it kept (>= 0)."""
    n = len(part)
    heap_v = np.empty(n, dtype=np.int64)
    heap_g = np.empty(n, dtype=np.int64)
    pos = -np.ones(n, dtype=np.int64)
    locked = np.zeros(n, dtype=np.uint8)
    seen = np.zeros(k, dtype=np.uint8)
    size = 0
    for v in range(n):
        boundary = False
        for idx in range(vtx_ptr[v], vtx_ptr[v + 1]):
            if lam[vtx_nets[idx]] >= 2:
                boundary = True
                break
        if boundary:
            g, b = _best_move(v, part, vw, partw, maxw, k, vtx_ptr, vtx_nets, nw, phi, lam, seen)
            if b >= 0:
                size = _heap_set(heap_v, heap_g, pos, size, v, g)

    moved_v = np.empty(n, dtype=np.int64)
    moved_from = np.empty(n, dtype=np.int64)
    nmoves = 0
    cur = 0
    best = 0
    best_n = 0
    stall = 0
    while size > 0:
        v = heap_v[0]
        key = heap_g[0]
        size = _heap_remove(heap_v, heap_g, pos, size, v)
        g, b = _best_move(v, part, vw, partw, maxw, k, vtx_ptr, vtx_nets, nw, phi, lam, seen)
        if b < 0:
            continue
        if g < key and size > 0 and _above(heap_g[0], heap_v[0], g, v):
            size = _heap_set(heap_v, heap_g, pos, size, v, g)
            continue
        a = part[v]
        _apply_move(v, a, b, part, vw, partw, vtx_ptr, vtx_nets, phi, lam)
        locked[v] = 1
        moved_v[nmoves] = v
        moved_from[nmoves] = a
        nmoves += 1
        cur -= g
        if cur < best:
            best = cur
            best_n = nmoves
            stall = 0
        else:
            stall += 1
            if stall > max_stall:
                break
        for idx in range(vtx_ptr[v], vtx_ptr[v + 1]):
            e = vtx_nets[idx]
            lo = net_ptr[e]
            hi = net_ptr[e + 1]
            if hi - lo > lazy_size:
                continue
            fa = phi[e, a]
            tb = phi[e, b]
            if fa > 1 and tb > 2:
                continue
            for j in range(lo, hi):
                u = net_pins[j]
                if locked[u]:
                    continue
                gu, bu = _best_move(u, part, vw, partw, maxw, k, vtx_ptr, vtx_nets, nw, phi, lam, seen)
                if bu < 0:
                    size = _heap_remove(heap_v, heap_g, pos, size, u)
                else:
                    size = _heap_set(heap_v, heap_g, pos, size, u, gu)
    for t in range(nmoves - 1, best_n - 1, -1):
        v = moved_v[t]
        _apply_move(v, part[v], moved_from[t], part, vw, partw, vtx_ptr, vtx_nets, phi, lam)
    return -best


@njit(cache=True, inline="always")
def _c2(n_own, n_other, w):
    """Gain contribution of one net to a two-way move, given pins on each side."""
    if n_other == 0:
        return 0 if n_own == 1 else -2 * w
    if n_own == 1:
        return 2 * w
    return 0


@njit(cache=True)
def fm_pass_bisect(part, vw, partw, maxw, vtx_ptr, vtx_nets, net_ptr, net_pins, nw, phi, lam,
                   max_stall):
    """Two-way FM pass with exact incremental gains; same contract as :func:`fm_pass`."""
    n = len(part)
    heap_v = np.empty(n, dtype=np.int64)
    heap_g = np.empty(n, dtype=np.int64)
    pos = -np.ones(n, dtype=np.int64)
    locked = np.zeros(n, dtype=np.uint8)
    gain = np.zeros(n, dtype=np.int64)
    size = 0
    for v in range(n):
        a = part[v]
        boundary = False
        for idx in range(vtx_ptr[v], vtx_ptr[v + 1]):
            e = vtx_nets[idx]
            gain[v] += _c2(phi[e, a], phi[e, 1 - a], nw[e])
            if lam[e] >= 2:
                boundary = True
        if boundary:
            size = _heap_set(heap_v, heap_g, pos, size, v, gain[v])

    moved_v = np.empty(n, dtype=np.int64)
    nmoves = 0
    cur = 0
    best = 0
    best_n = 0
    stall = 0
    while size > 0:
        v = heap_v[0]
        size = _heap_remove(heap_v, heap_g, pos, size, v)
        a = part[v]
        b = 1 - a
        if partw[b] + vw[v] > maxw[b]:
            continue
        g = gain[v]
        _apply_move(v, a, b, part, vw, partw, vtx_ptr, vtx_nets, phi, lam)
        locked[v] = 1
        moved_v[nmoves] = v
        nmoves += 1
        cur -= g
        if cur < best:
            best = cur
            best_n = nmoves
            stall = 0
        else:
            stall += 1
            if stall > max_stall:
                break
        for idx in range(vtx_ptr[v], vtx_ptr[v + 1]):
            e = vtx_nets[idx]
            fa = phi[e, a]
            tb = phi[e, b] - 1
            if fa > 1 and tb > 1:
                continue
            w = nw[e]
            da = _c2(fa, tb + 1, w) - _c2(fa + 1, tb, w)
            db = _c2(tb + 1, fa, w) - _c2(tb, fa + 1, w)
            if da == 0 and db == 0:
                continue
            for j in range(net_ptr[e], net_ptr[e + 1]):
                u = net_pins[j]
                if locked[u]:
                    continue
                d = da if part[u] == a else db
                if d == 0:
                    continue
                gain[u] += d
                size = _heap_set(heap_v, heap_g, pos, size, u, gain[u])
    for t in range(nmoves - 1, best_n - 1, -1):
        v = moved_v[t]
        _apply_move(v, part[v], 1 - part[v], part, vw, partw, vtx_ptr, vtx_nets, phi, lam)
    return -best


@njit(cache=True)
def fm_run(part, k, vw, maxw, vtx_ptr, vtx_nets, net_ptr, net_pins, nw,
           passes, max_passes, max_stall, lazy_size, min_rel=0.0):
    """Repeat passes until ``passes`` consecutive passes bring no improvement.

    With ``min_rel > 0`` a pass that removes less than that fraction of the
    current SOED also counts as bringing no improvement.
    """
    partw = np.zeros(k, dtype=np.int64)
    for v in range(len(part)):
        partw[part[v]] += vw[v]
    phi, lam = pin_counts(net_ptr, net_pins, part, k)
    idle = 0
    total = 0
    history = np.zeros(max_passes + 1, dtype=np.int64)
    history[0] = soed_value(lam, nw)
    done = 0
    for it in range(max_passes):
        if k == 2:
            gain = fm_pass_bisect(part, vw, partw, maxw, vtx_ptr, vtx_nets, net_ptr, net_pins,
                                  nw, phi, lam, max_stall)
        else:
            gain = fm_pass(part, k, vw, partw, maxw, vtx_ptr, vtx_nets, net_ptr, net_pins, nw,
                           phi, lam, max_stall, lazy_size)
        total += gain
        done += 1
        history[done] = history[done - 1] - gain
        if gain == 0 or gain < min_rel * history[done - 1]:
            idle += 1
            if idle >= passes:
                break
        else:
            idle = 0
    return total, history[:done + 1]


# ----- public API ---------------------------------------------------------------


def part_capacity(total_weight, num_parts, beta) -> int:
    return int(np.floor(beta * total_weight / num_parts + 1e-9))


def hypergraph_soed(h: Hypergraph, parts, num_parts, net_weights=None) -> int:
    parts = np.ascontiguousarray(parts, dtype=np.int64)
    nw = np.ones(h.num_nets, dtype=np.int64) if net_weights is None else net_weights
    _, lam = pin_counts(h.net_ptr, h.net_pins, parts, num_parts)
    return int(soed_value(lam, nw))


def fm_refine(h: Hypergraph, parts, num_parts, beta=2.0, passes=2, *, max_passes=64,
              max_stall=None, return_history=False):
    """Refine a vertex -> part array with k-way FM on the SOED objective.

    Every part may hold at most ``floor(beta * W / num_parts)`` vertex weight.
    ``parts`` must already satisfy that bound; the result does too, and its
    SOED is never larger than the input's.  Refinement stops after ``passes``
    consecutive passes without improvement (or ``max_passes`` in total).
    ``parts`` may also be an :class:`Assignment` built by ``partition_hyper``,
    in which case an :class:`Assignment` is returned.
    """
    from .assignment import Assignment

    assignment = None
    if isinstance(parts, Assignment):
        assignment = parts
        parts = assignment.sub_machine()
        num_parts = assignment.num_machines
    part = np.array(parts, dtype=np.int64, copy=True)
    if len(part) != h.num_vertices:
        raise ValueError("partition length does not match hypergraph")
    vw = np.asarray(h.vertex_weights, dtype=np.int64)
    cap = part_capacity(int(vw.sum()), num_parts, beta)
    maxw = np.full(num_parts, cap, dtype=np.int64)
    load = np.bincount(part, weights=vw, minlength=num_parts)
    if np.any(load > cap):
        raise InfeasibleBalanceError(
            f"input partition exceeds the balance bound {cap} (max load {int(load.max())})"
        )
    if max_stall is None:
        max_stall = max(200, h.num_vertices // 50)
    nw = np.ones(h.num_nets, dtype=np.int64)
    _, history = fm_run(part, num_parts, vw, maxw, h.vtx_ptr, h.vtx_nets, h.net_ptr, h.net_pins,
                        nw, passes, max_passes, max_stall, LAZY_NET_SIZE)
    if assignment is not None:
        from .hyper import assignment_from_parts

        part = assignment_from_parts(h, part, num_parts, meta=assignment.meta)
    if return_history:
        return part, [int(x) for x in history]
    return part
