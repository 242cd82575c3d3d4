"""Synchronous gather-apply-scatter consensus ADMM on a simulated cluster.

One superstep runs, with a barrier between phases:

1. active subproblems gather their consensus values from the replicas on the
   machines that own their edges;
2. each active subproblem solves its proximal step
   ``x <- argmin phi(x) + lam . x + rho/2 ||x - xhat||^2``;
3. new ``x`` vectors are synced from subproblem masters to mirrors;
4. every consensus node with an active neighbour averages its local copies
   (summed in ascending subproblem order), measures its residuals and syncs
   the new value to its mirrors;
5. active subproblems read the new consensus values and update
   ``lam <- lam + rho (x - X)``;
6. unconverged consensus nodes notify their subproblems, which form the
   active set of the next superstep.

Placement only changes where values are read from, never what they are, so
the iterates are bitwise identical for every assignment.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import DivergenceError, SizeMismatchError
from ..graph import BipartiteGraph
from ..partition.assignment import Assignment
from ..problems.problem import Problem
from ..problems.prox import (
    prox_hinge_batch,
    prox_quadratic_batch,
    prox_simplex_batch,
    quadratic_inverse_batch,
)
from .replicas import ReplicaStore

CSV_COLUMNS = ("iter", "active_subproblems", "frac_converged", "max_primal", "max_dual",
               "cum_payload")


# ----- vertex views ---------------------------------------------------------------------


@dataclass(frozen=True)
class SubVertexState:
    x: np.ndarray
    lam: np.ndarray
    consensus_snapshot: np.ndarray
    spec: object
    active: bool


@dataclass(frozen=True)
class ConVertexState:
    value: float
    prev_value: float
    copy_sum: float
    copy_count: int
    primal_residual: float
    dual_residual: float
    converged: bool
    copies: tuple = ()


def local_residuals(copies, value, prev_value, rho):
    """(primal, dual) residuals of one consensus node."""
    copies = np.asarray(copies, dtype=np.float64)
    primal = math.sqrt(float(np.sum((copies - value) ** 2)))
    dual = rho * math.sqrt(len(copies)) * abs(value - prev_value)
    return primal, dual


def check_local_convergence(cv: ConVertexState, eps_primal=1e-4, eps_dual=1e-4, rho=1.0) -> bool:
    """Both residuals of ``cv`` below their tolerances, recomputed from its copies."""
    if cv.copy_count < 2 or len(cv.copies) != cv.copy_count:
        raise ValueError("local convergence needs the node's copies (at least two)")
    primal, dual = local_residuals(cv.copies, cv.value, cv.prev_value, rho)
    return primal < eps_primal and dual < eps_dual


# ----- batched subproblem groups --------------------------------------------------------


@dataclass
class _Group:
    kind: str
    subs: np.ndarray
    edges: np.ndarray  # (m, n) edge ids
    params: dict


def _build_groups(g: BipartiteGraph, problem: Problem, rho) -> list[_Group]:
    buckets: dict = {}
    for i, s in enumerate(problem.specs):
        key = (s.kind, s.n, s.kind == "simplex" and s.capped)
        buckets.setdefault(key, []).append(i)
    groups = []
    for (kind, n, _), ids in sorted(buckets.items()):
        subs = np.asarray(ids, dtype=np.int64)
        edges = g.sub_ptr[subs][:, None] + np.arange(n)
        specs = [problem.specs[i] for i in ids]
        if kind == "quad":
            Q = np.stack([s.Q for s in specs])
            params = {"inv": quadratic_inverse_batch(Q, rho), "c": np.stack([s.c for s in specs])}
        elif kind == "hinge":
            params = {
                "a": np.stack([s.a for s in specs]),
                "b": np.array([s.b for s in specs]),
                "w": np.array([s.weight for s in specs]),
                "power": np.array([s.power for s in specs]),
            }
        else:
            params = {"capped": np.array([s.capped for s in specs])}
        groups.append(_Group(kind, subs, edges, params))
    return groups


def _solve_group(grp: _Group, rows, lam, xhat, rho):
    p = grp.params
    if grp.kind == "quad":
        return prox_quadratic_batch(p["inv"][rows], p["c"][rows], lam, xhat, rho)
    if grp.kind == "hinge":
        return prox_hinge_batch(p["a"][rows], p["b"][rows], p["w"][rows], p["power"][rows],
                                lam, xhat, rho)
    return prox_simplex_batch(p["capped"][rows], lam, xhat, rho)


# ----- cluster state -------------------------------------------------------------------


@dataclass
class StepReport:
    step: int
    active_subproblems: int
    updated_consensus: int
    frac_converged: float
    max_primal: float
    max_dual: float
    messages: int
    scalars: int
    cum_payload: int
    cum_scalars: int


@dataclass(eq=False)
class ClusterState:
    """Everything one simulated cluster holds between supersteps."""

    graph: BipartiteGraph
    problem: Problem
    assignment: Assignment
    rho: float
    eps_primal: float
    eps_dual: float
    # subproblem side, edge-indexed
    x: np.ndarray
    lam: np.ndarray
    snapshot: np.ndarray
    active: np.ndarray
    # consensus side
    X: np.ndarray
    X_prev: np.ndarray
    copy_sum: np.ndarray
    primal: np.ndarray
    dual: np.ndarray
    converged: np.ndarray
    # replicas and routing
    sub_store: ReplicaStore
    con_store: ReplicaStore
    edge_con_elem: np.ndarray
    copy_elem: np.ndarray
    groups: list
    k: int = 0
    messages: np.ndarray = field(default=None)
    scalars: np.ndarray = field(default=None)
    history: list = field(default_factory=list)

    @property
    def num_machines(self) -> int:
        return self.assignment.num_machines

    @property
    def cum_payload(self) -> int:
        return int(self.messages.sum())

    def sub_vertex(self, i) -> SubVertexState:
        lo, hi = self.graph.sub_ptr[i], self.graph.sub_ptr[i + 1]
        return SubVertexState(self.x[lo:hi].copy(), self.lam[lo:hi].copy(),
                              self.snapshot[lo:hi].copy(), self.problem.specs[i],
                              bool(self.active[i]))

    def con_vertex(self, l) -> ConVertexState:
        lo, hi = self.graph.con_ptr[l], self.graph.con_ptr[l + 1]
        copies = self.sub_store.data[self.copy_elem[lo:hi]]
        return ConVertexState(float(self.X[l]), float(self.X_prev[l]), float(self.copy_sum[l]),
                              int(hi - lo), float(self.primal[l]), float(self.dual[l]),
                              bool(self.converged[l]), tuple(copies.tolist()))

    def mirrors_consistent(self) -> bool:
        return self.sub_store.consistent(self.x) and self.con_store.consistent(self.X)

    def local_objective(self) -> float:
        """Sum of subproblem objectives at their local copies."""
        ptr = self.graph.sub_ptr
        return float(sum(s.objective(self.x[ptr[i]:ptr[i + 1]])
                         for i, s in enumerate(self.problem.specs)))


def build_cluster(g: BipartiteGraph, assignment: Assignment, problem: Problem, rho=1.0,
                  eps_primal=1e-4, eps_dual=1e-4) -> ClusterState:
    """Zero-initialised cluster with every vertex active."""
    if rho <= 0:
        raise ValueError("rho must be > 0")
    if problem.graph.num_subproblems != g.num_subproblems or problem.graph != g:
        raise SizeMismatchError(
            f"problem has {problem.graph.num_subproblems} subproblems, graph has "
            f"{g.num_subproblems}"
        )
    if not assignment.matches(g):
        raise SizeMismatchError("assignment does not cover this graph")
    E, C, S = g.num_edges, g.num_consensus, g.num_subproblems
    M = assignment.num_machines
    owner = assignment.edge_owner
    sub_store = ReplicaStore(assignment.sub_replicas, assignment.sub_master, g.sub_ptr, M)
    con_store = ReplicaStore(assignment.con_replicas, assignment.con_master,
                             np.arange(C + 1, dtype=np.int64), M)
    # a subproblem reads consensus l from the replica on the machine owning edge (i, l)
    edge_con_elem = con_store.element_index(g.sub_adj, owner, np.zeros(E, dtype=np.int64))
    # consensus l reads copy (i, j) from the replica of i on the machine owning that edge
    cedges = g.consensus_edges()
    copy_elem = sub_store.element_index(g.con_sub, owner[cedges], g.con_slot)
    state = ClusterState(
        graph=g, problem=problem, assignment=assignment, rho=float(rho),
        eps_primal=float(eps_primal), eps_dual=float(eps_dual),
        x=np.zeros(E), lam=np.zeros(E), snapshot=np.zeros(E), active=np.ones(S, dtype=bool),
        X=np.zeros(C), X_prev=np.zeros(C), copy_sum=np.zeros(C),
        primal=np.full(C, np.inf), dual=np.full(C, np.inf), converged=np.zeros(C, dtype=bool),
        sub_store=sub_store, con_store=con_store, edge_con_elem=edge_con_elem,
        copy_elem=copy_elem, groups=_build_groups(g, problem, rho),
        messages=np.zeros(M, dtype=np.int64), scalars=np.zeros(M, dtype=np.int64),
    )
    sub_store.sync(state.x)
    con_store.sync(state.X)
    return state


# ----- superstep ------------------------------------------------------------------------


@njit(cache=True)
def _consensus_apply(con_ptr, copies, touched, X, X_prev, copy_sum, primal, dual, conv,
                     rho, eps_p, eps_d):
    bad = -1
    for l in range(len(touched)):
        if not touched[l]:
            continue
        lo = con_ptr[l]
        hi = con_ptr[l + 1]
        s = 0.0
        for t in range(lo, hi):
            s += copies[t]
        n = hi - lo
        v = s / n
        r = 0.0
        for t in range(lo, hi):
            d = copies[t] - v
            r += d * d
        X_prev[l] = X[l]
        X[l] = v
        copy_sum[l] = s
        primal[l] = math.sqrt(r)
        dual[l] = rho * math.sqrt(n) * abs(v - X_prev[l])
        conv[l] = primal[l] < eps_p and dual[l] < eps_d
        if bad < 0 and not math.isfinite(v):
            bad = l
    return bad


@njit(cache=True)
def _touched(sub_ptr, sub_adj, active, num_consensus):
    out = np.zeros(num_consensus, dtype=np.bool_)
    for i in range(len(active)):
        if active[i]:
            for e in range(sub_ptr[i], sub_ptr[i + 1]):
                out[sub_adj[e]] = True
    return out


@njit(cache=True)
def _notified(con_ptr, con_sub, converged, num_sub):
    out = np.zeros(num_sub, dtype=np.bool_)
    for l in range(len(converged)):
        if not converged[l]:
            for t in range(con_ptr[l], con_ptr[l + 1]):
                out[con_sub[t]] = True
    return out


def superstep(state: ClusterState) -> StepReport:
    g = state.graph
    k = state.k + 1
    rho = state.rho
    act = state.active
    n_active = int(act.sum())
    step_msgs = np.zeros(state.num_machines, dtype=np.int64)
    step_scalars = np.zeros(state.num_machines, dtype=np.int64)
    n_touched = 0
    if n_active:
        edge_act = np.repeat(act, g.sub_degrees())
        ea = np.flatnonzero(edge_act)
        # gather
        state.snapshot[ea] = state.con_store.data[state.edge_con_elem[ea]]
        # apply: proximal step
        for grp in state.groups:
            rows = act[grp.subs]
            if not rows.any():
                continue
            E = grp.edges[rows]
            xnew = _solve_group(grp, rows, state.lam[E], state.snapshot[E], rho)
            if not np.all(np.isfinite(xnew)):
                bad = int(grp.subs[rows][np.flatnonzero(~np.isfinite(xnew).all(axis=1))[0]])
                raise DivergenceError("subproblem", bad, k)
            state.x[E] = xnew
        m, s = state.sub_store.sync(state.x, act)
        step_msgs += m
        step_scalars += s
        # consensus gather/apply
        touched = _touched(g.sub_ptr, g.sub_adj, act, g.num_consensus)
        n_touched = int(touched.sum())
        copies = state.sub_store.data[state.copy_elem]
        bad = _consensus_apply(g.con_ptr, copies, touched, state.X, state.X_prev,
                               state.copy_sum, state.primal, state.dual, state.converged,
                               rho, state.eps_primal, state.eps_dual)
        if bad >= 0:
            raise DivergenceError("consensus", int(bad), k)
        m, s = state.con_store.sync(state.X, touched)
        step_msgs += m
        step_scalars += s
        # dual update against the freshly averaged consensus values
        state.lam[ea] += rho * (state.x[ea] - state.con_store.data[state.edge_con_elem[ea]])
        # scatter: notifications
        state.active = _notified(g.con_ptr, g.con_sub, state.converged, g.num_subproblems)
    state.k = k
    state.messages += step_msgs
    state.scalars += step_scalars
    C = g.num_consensus
    rep = StepReport(
        step=k,
        active_subproblems=n_active,
        updated_consensus=n_touched,
        frac_converged=float(state.converged.sum() / C) if C else 1.0,
        max_primal=float(state.primal.max()) if C else 0.0,
        max_dual=float(state.dual.max()) if C else 0.0,
        messages=int(step_msgs.sum()),
        scalars=int(step_scalars.sum()),
        cum_payload=int(state.messages.sum()),
        cum_scalars=int(state.scalars.sum()),
    )
    state.history.append(rep)
    return rep


# ----- driver ----------------------------------------------------------------------------


def parse_stop(stop):
    """``"full"``, a float ``p`` or ``"fraction(p)"`` / ``"fraction:p"`` -> (kind, p)."""
    if isinstance(stop, tuple):
        return stop
    if isinstance(stop, (int, float)) and not isinstance(stop, bool):
        p = float(stop)
    elif stop == "full":
        return ("full", 1.0)
    else:
        text = str(stop).strip()
        for pre in ("fraction(", "fraction:", "fraction="):
            if text.startswith(pre):
                text = text[len(pre):].rstrip(")")
                break
        try:
            p = float(text)
        except ValueError:
            raise ValueError(f"unknown stop rule {stop!r}") from None
    if not 0.0 < p <= 1.0:
        raise ValueError("stop fraction must be in (0, 1]")
    return ("fraction", p)


@dataclass
class RunReport:
    steps: list
    stop_reason: str
    objective: float
    wall_time: float
    num_machines: int
    per_machine_messages: np.ndarray
    per_machine_scalars: np.ndarray

    @property
    def iterations(self) -> int:
        return len(self.steps)

    @property
    def final_fraction(self) -> float:
        return self.steps[-1].frac_converged if self.steps else 0.0

    @property
    def cum_payload(self) -> int:
        return self.steps[-1].cum_payload if self.steps else 0

    @property
    def cum_scalars(self) -> int:
        return self.steps[-1].cum_scalars if self.steps else 0

    def iterations_to(self, fraction) -> int | None:
        for s in self.steps:
            if s.frac_converged >= fraction:
                return s.step
        return None

    def csv_rows(self) -> list[str]:
        rows = [",".join(CSV_COLUMNS)]
        for s in self.steps:
            rows.append(f"{s.step},{s.active_subproblems},{s.frac_converged!r},"
                        f"{s.max_primal!r},{s.max_dual!r},{s.cum_payload}")
        return rows

    def to_csv(self, path=None) -> str:
        text = "\n".join(self.csv_rows()) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text

    def summary(self) -> str:
        buf = io.StringIO()
        buf.write("{\n")
        items = [
            ("iterations", self.iterations),
            ("stop_reason", f'"{self.stop_reason}"'),
            ("frac_converged", repr(self.final_fraction)),
            ("objective", repr(self.objective)),
            ("cum_payload", self.cum_payload),
            ("cum_scalars", self.cum_scalars),
            ("num_machines", self.num_machines),
            ("wall_time_s", f"{self.wall_time:.3f}"),
        ]
        buf.write(",\n".join(f'  "{k}": {v}' for k, v in items))
        buf.write("\n}\n")
        return buf.getvalue()


def run(state: ClusterState, max_iters: int, stop="full") -> RunReport:
    """Superstep until the stop rule holds or ``max_iters`` steps have run."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    kind, p = parse_stop(stop)
    t0 = time.perf_counter()
    start = len(state.history)
    reason = "max_iters"
    for _ in range(max_iters):
        rep = superstep(state)
        if kind == "full" and not state.active.any():
            reason = "full"
            break
        if kind == "fraction" and rep.frac_converged >= p:
            reason = "fraction"
            break
    wall = time.perf_counter() - t0
    return RunReport(
        steps=state.history[start:],
        stop_reason=reason,
        objective=state.local_objective(),
        wall_time=wall,
        num_machines=state.num_machines,
        per_machine_messages=state.messages.copy(),
        per_machine_scalars=state.scalars.copy(),
    )


@dataclass(frozen=True)
class CommReport:
    messages: np.ndarray
    scalars: np.ndarray

    @property
    def total_messages(self) -> int:
        return int(self.messages.sum())

    @property
    def total_scalars(self) -> int:
        return int(self.scalars.sum())


def comm_report(state: ClusterState) -> CommReport:
    """Cross-machine sync volume per sending machine since the cluster was built."""
    return CommReport(state.messages.copy(), state.scalars.copy())
