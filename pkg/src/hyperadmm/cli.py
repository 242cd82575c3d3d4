"""Command-line front end: ``hyperadmm gen|partition|solve|bench``.

Exit codes: 0 success, 1 computational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import bench
from .errors import HyperAdmmError
from .graph import GeneratorConfig, degree_stats, generate_bipartite, read_graph, write_graph
from .partition.assignment import SCHEMES, read_assignment, write_assignment
from .partition.vertex_cut import GREEDY_RULES
from .problems import Problem, VoterConfig, ground_voter_model, read_problem, write_problem

log = logging.getLogger("hyperadmm")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ----- argument helpers ---------------------------------------------------------------------


def _list(conv):
    def parse(text):
        items = [t for t in str(text).replace(" ", "").split(",") if t]
        try:
            return [conv(t) for t in items]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None

    return parse


def _schemes(text):
    items = _list(str)(text)
    bad = [s for s in items if s not in SCHEMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown scheme(s) {bad}; choose from {SCHEMES}")
    return items


def read_config(path) -> list[str]:
    """``key = value`` lines -> argv tokens; ``#`` starts a comment."""
    tokens = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens.extend([flag, value])
    return tokens


def _run_dir(args, seed) -> Path:
    if args.run_dir:
        d = Path(args.run_dir)
    else:
        d = Path(args.out_root) / f"{time.strftime('%Y%m%d-%H%M%S')}-seed{seed}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _add_common(p):
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--run-dir", help="output directory (default: <out-root>/<timestamp>-seed<seed>)")
    p.add_argument("--out-root", default="runs", help="parent of generated run directories")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_generator(p, default_consensus=100000):
    p.add_argument("--alpha", type=float, default=2.0, help="power-law exponent of consensus degrees")
    p.add_argument("--lambda", dest="lam", type=float, default=2.0,
                   help="Poisson mean of subproblem degrees")
    p.add_argument("--consensus", type=int, default=default_consensus, help="|C|")


def _add_voter(p):
    p.add_argument("--voter", action="store_true", help="use the voter model")
    p.add_argument("--persons", type=int, default=10000)
    p.add_argument("--parties", type=int, default=2)
    p.add_argument("--registered-fraction", type=float, default=0.5)


def _add_engine(p):
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--eps-primal", type=float, default=1e-4)
    p.add_argument("--eps-dual", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--stop", default="full", help="'full' or a fraction such as 0.99")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperadmm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a bipartite graph or a voter problem")
    _add_common(p)
    _add_generator(p)
    _add_voter(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="graph file to write")
    p.add_argument("--problem-out", help="problem file for --voter (default: <out>.problem)")

    p = sub.add_parser("partition", help="partition graphs and write a metrics CSV")
    _add_common(p)
    _add_generator(p)
    p.add_argument("--graph", help="graph file (otherwise graphs are generated)")
    p.add_argument("--alphas", type=_list(float), help="alpha sweep, e.g. 2.0,2.2")
    p.add_argument("--lambdas", type=_list(float), help="lambda sweep")
    p.add_argument("--grid", action="store_true", help="full 5x5 alpha/lambda grid")
    p.add_argument("--schemes", type=_schemes, default=list(SCHEMES))
    p.add_argument("--machines", type=_list(int), default=[32])
    p.add_argument("--seeds", type=_list(int), default=[0])
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--greedy-rule", choices=GREEDY_RULES, default="union")
    p.add_argument("--save-assignments", action="store_true")

    p = sub.add_parser("solve", help="run consensus ADMM on a simulated cluster")
    _add_common(p)
    _add_voter(p)
    _add_engine(p)
    p.add_argument("--graph", help="graph file")
    p.add_argument("--problem", help="problem file")
    p.add_argument("--assignment", help="assignment file (overrides --scheme)")
    p.add_argument("--scheme", choices=SCHEMES, default="hyper")
    p.add_argument("--machines", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--greedy-rule", choices=GREEDY_RULES, default="union")

    p = sub.add_parser("bench", help="partition grid plus voter payload comparison")
    _add_common(p)
    _add_engine(p)
    p.add_argument("--consensus", type=int, default=100000)
    p.add_argument("--alphas", type=_list(float), default=list(bench.ALPHAS))
    p.add_argument("--lambdas", type=_list(float), default=list(bench.LAMBDAS))
    p.add_argument("--machines", type=_list(int), default=list(bench.MACHINES))
    p.add_argument("--schemes", type=_schemes, default=list(SCHEMES))
    p.add_argument("--seeds", type=_list(int), default=[0])
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--greedy-rule", choices=GREEDY_RULES, default="union")
    p.add_argument("--persons", type=int, default=10000, help="voter size; 0 skips the solve part")
    p.add_argument("--voter-machines", type=int, default=8)
    p.set_defaults(rho=0.1, stop="0.99")
    return parser


def parse_args(argv):
    argv = list(argv)
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            raise UsageError("--config needs a path")
        tokens = read_config(argv[i + 1])
        rest = argv[:i] + argv[i + 2:]
        # config values go right after the subcommand so explicit flags win
        argv = rest[:1] + tokens + rest[1:]
    return build_parser().parse_args(argv)


# ----- commands ---------------------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.voter:
        cfg = VoterConfig(args.persons, args.parties, registered_fraction=args.registered_fraction,
                          seed=args.seed)
        inst = ground_voter_model(cfg)
        g = inst.problem.graph
        header = cfg.describe()
        write_graph(g, out, header)
        pout = Path(args.problem_out) if args.problem_out else out.with_name(out.name + ".problem")
        write_problem(inst.problem, pout, header)
        print(f"wrote {out} and {pout}: |S|={g.num_subproblems} |C|={g.num_consensus} "
              f"|E|={g.num_edges} ratio={g.num_subproblems / g.num_consensus:.3f}")
        return EXIT_OK
    cfg = GeneratorConfig(args.alpha, args.lam, args.consensus, seed=args.seed)
    g = generate_bipartite(cfg)
    write_graph(g, out, [f"generator alpha={cfg.alpha} lambda={cfg.lam} "
                         f"consensus={cfg.num_consensus} seed={cfg.seed}"])
    st = degree_stats(g)
    print(f"wrote {out}: |S|={g.num_subproblems} |C|={g.num_consensus} |E|={g.num_edges} "
          f"ratio={st.ratio:.3f}")
    return EXIT_OK


def cmd_partition(args) -> int:
    if not args.schemes:
        raise UsageError("scheme list is empty")
    if not args.machines or not args.seeds:
        raise UsageError("machine and seed lists must be non-empty")
    rd = _run_dir(args, args.seeds[0])
    if args.graph:
        g = read_graph(args.graph)
        rows = []
        for seed in args.seeds:
            rows.extend(bench.partition_cells(g, args.schemes, args.machines, seed,
                                              beta=args.beta, greedy_rule=args.greedy_rule))
            if args.save_assignments:
                for M in args.machines:
                    for s in args.schemes:
                        try:
                            a = bench.partition_graph(g, s, M, seed, args.beta, args.greedy_rule)
                        except HyperAdmmError:
                            continue
                        write_assignment(g, a, rd / f"assignment-{s}-M{M}-seed{seed}.txt")
    else:
        alphas = args.alphas or (list(bench.ALPHAS) if args.grid else [args.alpha])
        lambdas = args.lambdas or (list(bench.LAMBDAS) if args.grid else [args.lam])
        rows = bench.grid_rows(alphas, lambdas, args.consensus, args.schemes, args.machines,
                               args.seeds, beta=args.beta, greedy_rule=args.greedy_rule,
                               progress=lambda a, l, s: log.info("done alpha=%g lambda=%g seed=%d",
                                                                 a, l, s))
    path = rd / "metrics.csv"
    path.write_text(bench.rows_to_csv(rows), encoding="utf-8", newline="\n")
    bad = sum(r.status != "ok" for r in rows)
    print(f"wrote {path} ({len(rows)} rows, {bad} infeasible)")
    return EXIT_OK


def _load_problem(args) -> Problem:
    if args.voter:
        return ground_voter_model(VoterConfig(args.persons, args.parties,
                                              registered_fraction=args.registered_fraction,
                                              seed=args.seed)).problem
    if not args.problem:
        raise UsageError("solve needs --problem (with optional --graph) or --voter")
    g = read_graph(args.graph) if args.graph else None
    return read_problem(args.problem, g)


def cmd_solve(args) -> int:
    from .engine import build_cluster, run

    problem = _load_problem(args)
    g = problem.graph
    if args.assignment:
        a = read_assignment(g, args.assignment)
    else:
        a = bench.partition_graph(g, args.scheme, args.machines, args.seed, args.beta,
                                  args.greedy_rule)
    rd = _run_dir(args, args.seed)
    state = build_cluster(g, a, problem, args.rho, args.eps_primal, args.eps_dual)
    rep = run(state, args.max_iters, args.stop)
    rep.to_csv(rd / "run.csv")
    (rd / "summary.txt").write_text(rep.summary(), encoding="utf-8", newline="\n")
    print(rep.summary(), end="")
    print(f"wrote {rd / 'run.csv'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if not args.schemes:
        raise UsageError("scheme list is empty")
    if not (args.alphas and args.lambdas and args.machines and args.seeds):
        raise UsageError("sweep lists must be non-empty")
    rd = _run_dir(args, args.seeds[0])
    rows = bench.grid_rows(
        args.alphas, args.lambdas, args.consensus, args.schemes, args.machines, args.seeds,
        beta=args.beta, greedy_rule=args.greedy_rule,
        progress=lambda a, l, s: log.info("done alpha=%g lambda=%g seed=%d", a, l, s),
    )
    (rd / "metrics.csv").write_text(bench.rows_to_csv(rows), encoding="utf-8", newline="\n")
    M_ref = max(args.machines)
    a0 = 2.0 if 2.0 in args.alphas else args.alphas[0]
    l0 = 2.0 if 2.0 in args.lambdas else args.lambdas[0]
    series = {
        "rf_vs_m.csv": bench.series_csv(rows, "M", fixed={"alpha": a0, "lam": l0}),
        "rf_vs_alpha.csv": bench.series_csv(rows, "alpha", fixed={"lam": l0, "M": M_ref}),
        "rf_vs_lambda.csv": bench.series_csv(rows, "lam", fixed={"alpha": a0, "M": M_ref}),
        "rf_vs_ratio.csv": bench.series_csv(rows, "ratio", fixed={"M": M_ref}),
    }
    for name, text in series.items():
        (rd / name).write_text(text, encoding="utf-8", newline="\n")
    md = [f"# Partition benchmark (|C|={args.consensus}, seeds={args.seeds})", "",
          f"## Replication factor at M={M_ref}", "", bench.table_markdown(rows, M_ref)]
    if args.persons > 0:
        problem = ground_voter_model(VoterConfig(args.persons, seed=args.seeds[0])).problem
        g = problem.graph
        schemes = [s for s in ("hyper", "greedy", "random") if s in args.schemes]
        results = bench.solve_cells(problem, schemes, args.voter_machines, args.seeds[0],
                                    rho=args.rho, eps_primal=args.eps_primal,
                                    eps_dual=args.eps_dual, max_iters=args.max_iters,
                                    stop=args.stop, beta=args.beta,
                                    greedy_rule=args.greedy_rule)
        (rd / "payload_vs_iter.csv").write_text(bench.payload_csv(results), encoding="utf-8",
                                                newline="\n")
        md += [f"## Voter model ({args.persons} persons, |S|={g.num_subproblems}, "
               f"|C|={g.num_consensus}, M={args.voter_machines}, rho={args.rho})", "",
               bench.solve_markdown(results)]
    (rd / "report.md").write_text("\n".join(md), encoding="utf-8", newline="\n")
    print(f"wrote report to {rd}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "partition": cmd_partition, "solve": cmd_solve, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"hyperadmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hyperadmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FileNotFoundError) as exc:
        print(f"hyperadmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HyperAdmmError, OSError) as exc:
        print(f"hyperadmm: failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
