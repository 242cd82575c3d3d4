"""Per-machine replica stores for simulated vertex-cut placement.

Every vertex ``v`` lives on the machines ``A(v)``; one of them holds the master
copy and the rest hold mirrors.  A store keeps one slot of ``width(v)`` values
per replica in a single flat array, ordered by (vertex, machine).  Syncing a
vertex copies its master data into every replica and costs ``|A(v)| - 1``
cross-machine messages carrying ``width(v)`` scalars each.
"""

from __future__ import annotations

import numpy as np

from ..partition.assignment import popcount


def _mask_bits(masks):
    """Vertex index and machine id for every set bit, ordered by (vertex, machine)."""
    masks = np.asarray(masks, dtype=np.uint64)
    bits = ((masks[:, None] >> np.arange(64, dtype=np.uint64)) & np.uint64(1)).astype(bool)
    vert, mach = np.nonzero(bits)
    return vert.astype(np.int64), mach.astype(np.int64)


class ReplicaStore:
    """Replicas of vertices whose master data is a flat array with ``ptr`` offsets.

    Vertex ``v`` owns ``master[ptr[v]:ptr[v + 1]]``; its width is
    ``ptr[v + 1] - ptr[v]``.
    """

    def __init__(self, masks, master_machine, ptr, num_machines):
        self.num_machines = int(num_machines)
        self.ptr = np.asarray(ptr, dtype=np.int64)
        self.master_machine = np.asarray(master_machine, dtype=np.int64)
        width = np.diff(self.ptr)
        self.count = popcount(masks)
        rep_vertex, rep_machine = _mask_bits(masks)
        self.rep_vertex = rep_vertex
        self.rep_machine = rep_machine
        self.rep_ptr = np.zeros(len(self.count) + 1, dtype=np.int64)
        np.cumsum(self.count, out=self.rep_ptr[1:])
        rep_width = width[rep_vertex]
        self.rep_off = np.zeros(len(rep_vertex) + 1, dtype=np.int64)
        np.cumsum(rep_width, out=self.rep_off[1:])
        # element-level maps used by sync
        self.elem_vertex = np.repeat(rep_vertex, rep_width)
        within = np.arange(len(self.elem_vertex)) - np.repeat(self.rep_off[:-1], rep_width)
        self.elem_src = self.ptr[self.elem_vertex] + within
        self.data = np.zeros(len(self.elem_vertex), dtype=np.float64)
        self.width = width
        self._mirror_msgs = self.count - 1

    def replica_index(self, v, machine) -> int:
        lo, hi = self.rep_ptr[v], self.rep_ptr[v + 1]
        j = np.searchsorted(self.rep_machine[lo:hi], machine)
        if j >= hi - lo or self.rep_machine[lo + j] != machine:
            raise KeyError(f"vertex {v} has no replica on machine {machine}")
        return int(lo + j)

    def element_index(self, vertices, machines, offsets):
        """Flat data index of component ``offsets`` of ``vertices`` on ``machines``."""
        vertices = np.asarray(vertices, dtype=np.int64)
        machines = np.asarray(machines, dtype=np.int64)
        # replicas of a vertex are sorted by machine, so a per-vertex rank lookup works
        key = vertices * self.num_machines + machines
        rep_key = self.rep_vertex * self.num_machines + self.rep_machine
        rep = np.searchsorted(rep_key, key)
        if np.any(rep >= len(rep_key)) or np.any(rep_key[np.minimum(rep, len(rep_key) - 1)] != key):
            raise KeyError("requested replica does not exist")
        return self.rep_off[rep] + np.asarray(offsets, dtype=np.int64)

    def machine_values(self, machine, v) -> np.ndarray:
        r = self.replica_index(v, machine)
        return self.data[self.rep_off[r]:self.rep_off[r + 1]]

    def sync(self, master, updated=None):
        """Copy master data to all replicas of updated vertices.

        Returns per-machine (messages, scalars) sent, attributed to each
        vertex's master machine.
        """
        M = self.num_machines
        if updated is None:
            self.data[:] = master[self.elem_src]
            upd = np.ones(len(self.count), dtype=bool)
        else:
            upd = np.asarray(updated, dtype=bool)
            sel = upd[self.elem_vertex]
            self.data[sel] = master[self.elem_src[sel]]
        msgs = self._mirror_msgs * upd
        scalars = msgs * self.width
        return (np.bincount(self.master_machine, weights=msgs, minlength=M).astype(np.int64),
                np.bincount(self.master_machine, weights=scalars, minlength=M).astype(np.int64))

    def consistent(self, master) -> bool:
        """True when every replica equals its master data."""
        return bool(np.array_equal(self.data, master[self.elem_src]))

    def per_machine_counts(self) -> np.ndarray:
        return np.bincount(self.rep_machine, minlength=self.num_machines)
