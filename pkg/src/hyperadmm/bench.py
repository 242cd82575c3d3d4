"""Experiment cells and report writers behind the command-line tool.

A partition cell is (alpha, lambda, |C|, scheme, M, seed): the graph is
generated with ``seed`` and, for randomised schemes, partitioned with the same
seed, so every CSV row can be re-run on its own.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .engine import build_cluster, run
from .errors import InfeasibleBalanceError
from .graph import BipartiteGraph, GeneratorConfig, generate_bipartite, to_hypergraph
from .partition.assignment import SCHEMES, metrics
from .partition.hyper import partition_hyper
from .partition.vertex_cut import partition_greedy, partition_random

ALPHAS = (2.0, 2.2, 2.4, 2.6, 2.8)
LAMBDAS = (1.5, 2.0, 2.5, 3.0, 3.5)
MACHINES = (2, 4, 8, 16, 32)

# (alpha, lambda) -> (|S u C|, |E|, |S|/|C|, RF hyper, RF greedy, RF random) at |C| = 100,000, M = 32
REFERENCE_TABLE = {
    (2.0, 1.5): (1254452, 1811449, 11.54, 1.10, 1.44, 2.24),
    (2.0, 2.0): (1015092, 1661788, 9.15, 1.14, 1.64, 2.61),
    (2.0, 2.5): (799850, 1389912, 7.00, 1.17, 1.74, 3.00),
    (2.0, 3.0): (662938, 1247468, 5.63, 1.25, 1.88, 3.41),
    (2.0, 3.5): (578983, 1142410, 4.79, 1.28, 1.97, 3.78),
    (2.2, 1.5): (647396, 1051772, 5.47, 1.18, 1.62, 2.44),
    (2.2, 2.0): (514906, 902526, 4.15, 1.25, 1.75, 2.79),
    (2.2, 2.5): (409645, 792021, 3.10, 1.37, 1.93, 3.16),
    (2.2, 3.0): (363194, 756398, 2.63, 1.45, 2.08, 3.48),
    (2.2, 3.5): (319539, 708340, 2.20, 1.57, 2.22, 3.80),
    (2.4, 1.5): (450976, 704064, 3.51, 1.24, 1.56, 2.53),
    (2.4, 2.0): (356921, 614450, 2.57, 1.34, 1.72, 2.84),
    (2.4, 2.5): (303164, 559470, 2.03, 1.45, 1.85, 3.13),
    (2.4, 3.0): (271035, 541912, 1.71, 1.55, 2.00, 3.40),
    (2.4, 3.5): (249170, 522232, 1.49, 1.63, 2.10, 3.65),
    (2.6, 1.5): (375734, 580372, 2.76, 1.25, 1.54, 2.53),
    (2.6, 2.0): (308738, 515364, 2.09, 1.34, 1.67, 2.79),
    (2.6, 2.5): (265934, 474523, 1.66, 1.44, 1.78, 3.04),
    (2.6, 3.0): (237711, 451492, 1.38, 1.53, 1.90, 3.27),
    (2.6, 3.5): (218271, 437161, 1.18, 1.62, 2.00, 3.49),
    (2.8, 1.5): (335411, 507033, 2.35, 1.24, 1.51, 2.50),
    (2.8, 2.0): (278068, 450796, 1.78, 1.33, 1.62, 2.73),
    (2.8, 2.5): (242126, 420322, 1.42, 1.42, 1.74, 2.96),
    (2.8, 3.0): (218350, 400794, 1.18, 1.50, 1.84, 3.14),
    (2.8, 3.5): (200716, 385167, 1.01, 1.58, 1.92, 3.33),
}
REFERENCE_SCHEMES = ("hyper", "greedy", "random")


def reference_rf(alpha, lam, scheme) -> float:
    row = REFERENCE_TABLE[(round(alpha, 1), round(lam, 1))]
    return row[3 + REFERENCE_SCHEMES.index(scheme)]


PARTITION_COLUMNS = ("scheme", "M", "alpha", "lambda", "rf", "soed", "imbalance", "seed",
                     "consensus", "beta", "ratio", "status")


@dataclass(frozen=True)
class PartitionRow:
    scheme: str
    M: int
    alpha: float | None
    lam: float | None
    rf: float | None
    soed: int | None
    imbalance: float | None
    seed: int
    consensus: int
    beta: float
    ratio: float
    status: str = "ok"

    def cells(self) -> list[str]:
        def fmt(v, spec):
            return "" if v is None else format(v, spec)

        return [self.scheme, str(self.M), fmt(self.alpha, "g"), fmt(self.lam, "g"),
                fmt(self.rf, ".6f"), "" if self.soed is None else str(self.soed),
                fmt(self.imbalance, ".6f"), str(self.seed), str(self.consensus),
                format(self.beta, "g"), format(self.ratio, ".6f"), self.status]


def partition_graph(g: BipartiteGraph, scheme: str, M: int, seed: int = 0, beta: float = 2.0,
                    greedy_rule: str = "union"):
    if scheme == "random":
        return partition_random(g, M, seed)
    if scheme == "greedy":
        return partition_greedy(g, M, rule4=greedy_rule)
    if scheme == "hyper":
        return partition_hyper(to_hypergraph(g), M, beta=beta, seed=seed)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def partition_cells(g: BipartiteGraph, schemes, machines, seed, *, alpha=None, lam=None,
                    beta=2.0, greedy_rule="union") -> list[PartitionRow]:
    """One row per (scheme, M) on a single graph; infeasible cells are kept as rows."""
    ratio = g.num_subproblems / g.num_consensus if g.num_consensus else 0.0
    rows = []
    for M in machines:
        for scheme in schemes:
            try:
                a = partition_graph(g, scheme, M, seed, beta, greedy_rule)
            except InfeasibleBalanceError:
                rows.append(PartitionRow(scheme, M, alpha, lam, None, None, None, seed,
                                         g.num_consensus, beta, ratio, "infeasible"))
                continue
            m = metrics(g, a)
            rows.append(PartitionRow(scheme, M, alpha, lam, m.replication_factor, m.soed,
                                     m.imbalance, seed, g.num_consensus, beta, ratio))
    return rows


def grid_rows(alphas, lambdas, num_consensus, schemes, machines, seeds, *, beta=2.0,
              greedy_rule="union", progress=None) -> list[PartitionRow]:
    rows = []
    for alpha in alphas:
        for lam in lambdas:
            for seed in seeds:
                g = generate_bipartite(GeneratorConfig(alpha, lam, num_consensus, seed=seed))
                rows.extend(partition_cells(g, schemes, machines, seed, alpha=alpha, lam=lam,
                                            beta=beta, greedy_rule=greedy_rule))
                if progress is not None:
                    progress(alpha, lam, seed)
    return rows


def rows_to_csv(rows, columns=PARTITION_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(r.cells() if hasattr(r, "cells") else r)
    return buf.getvalue()


def mean_rf(rows, **match) -> dict:
    """Mean RF over seeds keyed by (alpha, lambda, scheme, M) for ok rows."""
    acc: dict = {}
    for r in rows:
        if r.status != "ok":
            continue
        if any(getattr(r, k) != v for k, v in match.items()):
            continue
        acc.setdefault((r.alpha, r.lam, r.scheme, r.M), []).append(r.rf)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def series_csv(rows, x_field, *, fixed=None) -> str:
    """Plot-ready mean RF per scheme against one parameter."""
    fixed = fixed or {}
    acc: dict = {}
    for r in rows:
        if r.status != "ok" or any(getattr(r, k) != v for k, v in fixed.items()):
            continue
        x = getattr(r, x_field)
        acc.setdefault((x, r.scheme), []).append(r.rf)
    xs = sorted({x for x, _ in acc})
    schemes = [s for s in SCHEMES if any(k[1] == s for k in acc)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda" if x_field == "lam" else x_field] + schemes)
    for x in xs:
        w.writerow([format(x, "g")] + [
            format(np.mean(acc[(x, s)]), ".6f") if (x, s) in acc else "" for s in schemes
        ])
    return buf.getvalue()


def table_markdown(rows, machines=32) -> str:
    """Measured mean RF next to the reference table, one line per (alpha, lambda)."""
    means = mean_rf(rows, M=machines)
    ratios: dict = {}
    for r in rows:
        ratios.setdefault((r.alpha, r.lam), []).append(r.ratio)
    lines = [
        "| alpha | lambda | S/C | S/C ref | Hyper | ref | Greedy | ref | Random | ref | order |",
        "|---|---|---|---|---|---|---|---|---|---|---|",
    ]
    for (alpha, lam) in sorted({(a, l) for a, l, _, _ in means}):
        ref = REFERENCE_TABLE.get((alpha, lam))
        vals = [means.get((alpha, lam, s, machines)) for s in REFERENCE_SCHEMES]
        order = all(v is not None for v in vals) and vals[0] < vals[1] < vals[2]

        def f(v):
            return "-" if v is None else f"{v:.3f}"

        refs = ref[3:] if ref else (None, None, None)
        lines.append(
            f"| {alpha:g} | {lam:g} | {np.mean(ratios[(alpha, lam)]):.2f} | "
            f"{ref[2] if ref else '-'} | {f(vals[0])} | {refs[0] or '-'} | {f(vals[1])} | "
            f"{refs[1] or '-'} | {f(vals[2])} | {refs[2] or '-'} | {'yes' if order else 'no'} |"
        )
    return "\n".join(lines) + "\n"


# ----- solve experiments ------------------------------------------------------------------


@dataclass
class SolveResult:
    scheme: str
    M: int
    seed: int
    rf: float
    report: object = field(repr=False)


def solve_cells(problem, schemes, M, seed=0, *, rho=1.0, eps_primal=1e-4, eps_dual=1e-4,
                max_iters=1000, stop="full", beta=2.0, greedy_rule="union"):
    g = problem.graph
    out = []
    for scheme in schemes:
        a = partition_graph(g, scheme, M, seed, beta, greedy_rule)
        state = build_cluster(g, a, problem, rho, eps_primal, eps_dual)
        rep = run(state, max_iters, stop)
        out.append(SolveResult(scheme, M, seed, metrics(g, a).replication_factor, rep))
    return out


def payload_csv(results) -> str:
    """Cumulative cross-machine payload per iteration, one column per scheme."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter"] + [f"{r.scheme}_M{r.M}" for r in results])
    n = max((r.report.iterations for r in results), default=0)
    for k in range(n):
        w.writerow([k + 1] + [
            r.report.steps[k].cum_payload if k < r.report.iterations else "" for r in results
        ])
    return buf.getvalue()


def solve_markdown(results) -> str:
    lines = ["| scheme | M | RF | iterations | stop | frac converged | payload | scalars | "
             "objective |", "|---|---|---|---|---|---|---|---|---|"]
    for r in results:
        rep = r.report
        lines.append(f"| {r.scheme} | {r.M} | {r.rf:.3f} | {rep.iterations} | {rep.stop_reason} | "
                     f"{rep.final_fraction:.4f} | {rep.cum_payload} | {rep.cum_scalars} | "
                     f"{rep.objective:.6g} |")
    by = {r.scheme: r.report for r in results}
    if "hyper" in by and "greedy" in by and by["greedy"].cum_payload:
        lines.append("")
        lines.append(f"payload ratio hyper/greedy: "
                     f"{by['hyper'].cum_payload / by['greedy'].cum_payload:.3f}")
    return "\n".join(lines) + "\n"
