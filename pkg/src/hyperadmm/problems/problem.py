"""A consensus problem: a bipartite graph plus one objective per subproblem.

File format (paired with the graph file, or standalone)::

    # free-form provenance comments
    problem <S> <C>
    quad    <n> <slot ids...> <Q row-major, n*n values> <c, n values>
    hinge   <n> <slot ids...> <weight> <power> <b> <a, n values>
    simplex <n> <slot ids...> <dimension>

Subproblem ``i`` is line ``i`` of the body.  Floats are written with ``repr``
so a write/read round trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import GraphFormatError, SizeMismatchError
from ..graph import BipartiteGraph
from .prox import HingeSpec, QuadraticSpec, SimplexSpec, canonical


@dataclass(frozen=True, eq=False)
class Problem:
    """Graph plus subproblem objectives; ``specs[i].slots`` equals ``graph.adjacency(i)``."""

    graph: BipartiteGraph
    specs: tuple

    def __post_init__(self):
        specs = tuple(canonical(s) for s in self.specs)
        if len(specs) != self.graph.num_subproblems:
            raise SizeMismatchError(
                f"{len(specs)} objectives for {self.graph.num_subproblems} subproblems"
            )
        for i, s in enumerate(specs):
            if not np.array_equal(s.slots, self.graph.adjacency(i)):
                raise SizeMismatchError(f"subproblem {i}: slots do not match graph adjacency")
        object.__setattr__(self, "specs", specs)

    @classmethod
    def from_specs(cls, specs, num_consensus=None) -> Problem:
        specs = [canonical(s) for s in specs]
        if num_consensus is None:
            num_consensus = 1 + max((int(s.slots.max()) for s in specs if s.n), default=-1)
        g = BipartiteGraph.from_adjacency([s.slots for s in specs], num_consensus)
        return cls(g, tuple(specs))

    @property
    def kinds(self) -> list[str]:
        return [s.kind for s in self.specs]

    def objective(self, X) -> float:
        """Sum of subproblem objectives at consensus values ``X``."""
        X = np.asarray(X, dtype=np.float64)
        return float(sum(s.objective(X[s.slots]) for s in self.specs))

    def __eq__(self, other):
        if not isinstance(other, Problem):
            return NotImplemented
        return self.graph == other.graph and all(
            _spec_key(a) == _spec_key(b) for a, b in zip(self.specs, other.specs)
        )

    __hash__ = None


def _spec_key(s):
    base = (s.kind, tuple(s.slots.tolist()))
    if s.kind == "quad":
        return base + (tuple(s.Q.ravel().tolist()), tuple(s.c.tolist()))
    if s.kind == "hinge":
        return base + (s.weight, s.power, s.b, tuple(s.a.tolist()))
    return base + (s.dimension,)


def _format(s) -> str:
    head = [s.kind, str(s.n)] + [str(v) for v in s.slots.tolist()]
    if s.kind == "quad":
        tail = [repr(float(v)) for v in s.Q.ravel()] + [repr(float(v)) for v in s.c]
    elif s.kind == "hinge":
        tail = [repr(s.weight), str(s.power), repr(s.b)] + [repr(float(v)) for v in s.a]
    else:
        tail = [str(s.dimension)]
    return " ".join(head + tail)


def write_problem(problem: Problem, path, header_comments=()) -> None:
    g = problem.graph
    lines = [f"# {c}" for c in header_comments]
    lines.append(f"problem {g.num_subproblems} {g.num_consensus}")
    lines.extend(_format(s) for s in problem.specs)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse(tokens, lineno):
    kind = tokens[0]
    try:
        n = int(tokens[1])
        slots = [int(t) for t in tokens[2:2 + n]]
        rest = tokens[2 + n:]
        if len(slots) != n:
            raise ValueError
        if kind == "quad":
            if len(rest) != n * n + n:
                raise ValueError
            vals = [float(t) for t in rest]
            return QuadraticSpec(slots, np.reshape(vals[:n * n], (n, n)), vals[n * n:])
        if kind == "hinge":
            if len(rest) != 3 + n:
                raise ValueError
            return HingeSpec(slots, float(rest[0]), [float(t) for t in rest[3:]],
                             float(rest[2]), int(rest[1]))
        if kind == "simplex":
            if len(rest) != 1:
                raise ValueError
            return SimplexSpec(slots, int(rest[0]))
    except (ValueError, IndexError) as exc:
        msg = str(exc) if str(exc) else f"malformed {kind} line"
        raise GraphFormatError(msg, lineno) from None
    raise GraphFormatError(f"unknown subproblem kind {kind!r}", lineno)


def read_problem(path, graph: BipartiteGraph | None = None) -> Problem:
    """Read a problem file; when ``graph`` is given it must match the slots."""
    with open(path, encoding="utf-8") as fh:
        body = [(n, ln.split()) for n, ln in enumerate(fh, start=1)
                if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise GraphFormatError("missing header", 1)
    n0, head = body[0]
    if len(head) != 3 or head[0] != "problem":
        raise GraphFormatError("expected header 'problem <S> <C>'", n0)
    try:
        num_sub, num_con = int(head[1]), int(head[2])
    except ValueError:
        raise GraphFormatError("header counts are not integers", n0) from None
    if len(body) - 1 != num_sub:
        raise GraphFormatError(f"header declares {num_sub} subproblems, found {len(body) - 1}",
                               n0)
    specs = []
    for n, tokens in body[1:]:
        s = _parse(tokens, n)
        if s.n and (s.slots.min() < 0 or s.slots.max() >= num_con):
            raise GraphFormatError(f"slot outside [0, {num_con})", n)
        specs.append(s)
    if graph is None:
        return Problem.from_specs(specs, num_con)
    if graph.num_consensus != num_con:
        raise SizeMismatchError("problem file and graph disagree on |C|")
    return Problem(graph, tuple(specs))
