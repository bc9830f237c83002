"""Command-line interface: ``exactdesign solve`` and ``exactdesign bench``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import statistics
import sys
from collections import defaultdict
from pathlib import Path

from .bnb import BnbConfig, SolveReport, Status, solve
from .criteria import Criterion
from .errors import ExactDesignError
from .instances import InstanceSpec, Kind, format_instance, fingerprint, generate, parse_instance

RUN_HEADER = [
    "criterion", "kind", "m", "n", "seed", "solver", "status", "f", "bound",
    "abs_gap", "rel_gap", "nodes", "nodes_per_sec", "wall_s", "grad_evals",
]
SUMMARY_HEADER = [
    "criterion", "kind", "m", "solver", "runs", "solved",
    "mean_nodes_per_sec", "mean_wall_s", "mean_grad_evals_per_node",
]
SOLVED_NOTE = (
    "solved = status Optimal and f <= min f over compared solvers on the same "
    "(criterion, kind, m, seed) + abstol"
)
EXIT_CODES = {
    Status.OPTIMAL: 0,
    Status.TIME_LIMIT: 2,
    Status.NODE_LIMIT: 2,
    Status.INFEASIBLE: 3,
}

log = logging.getLogger("exactdesign")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _finite(v):
    return None if v is None or not math.isfinite(v) else float(v)


def report_to_dict(report, criterion, instance_info):
    cfg = report.config.as_dict()
    return {
        "schema_version": 1,
        "status": report.status.value,
        "termination": report.termination,
        "criterion": Criterion.parse(criterion).value,
        "node_solver": cfg["node_solver"],
        "instance": instance_info,
        "x": None if report.x is None else [int(v) for v in report.x],
        "f": _finite(report.f),
        "best_bound": _finite(report.best_bound),
        "abs_gap": _finite(report.abs_gap),
        "rel_gap": _finite(report.rel_gap),
        "nodes_processed": report.nodes_processed,
        "nodes_per_second": report.nodes_per_second,
        "wall_seconds": report.wall_seconds,
        "nodes": {
            "pushed": report.nodes_pushed,
            "popped": report.nodes_popped,
            "remaining": report.nodes_remaining,
            "pruned": report.nodes_pruned,
        },
        "solver_stats": {
            "relaxations": report.stats.relaxations,
            "outer_iters": report.stats.outer_iters,
            "qp_iters": report.stats.qp_iters,
            "grad_evals": report.stats.grad_evals,
            "grad_evals_per_node": report.grad_evals_per_node,
            "unconverged": report.stats.unconverged,
        },
        "rel_gap_guard_fired": report.rel_gap_guard_fired,
        "threads": report.config.threads,
        "deterministic": not report.threaded,
        "config": cfg,
    }


def run_row(report, criterion, kind, m, n, seed, solver):
    return {
        "criterion": Criterion.parse(criterion).value,
        "kind": "" if kind is None else kind,
        "m": m,
        "n": n,
        "seed": "" if seed is None else seed,
        "solver": solver,
        "status": report.status.value,
        "f": repr(report.f),
        "bound": repr(report.best_bound),
        "abs_gap": repr(report.abs_gap),
        "rel_gap": repr(report.rel_gap),
        "nodes": report.nodes_processed,
        "nodes_per_sec": repr(report.nodes_per_second),
        "wall_s": repr(report.wall_seconds),
        "grad_evals": report.stats.grad_evals,
    }


def _parse_generate(value):
    parts = value.split(",")
    if len(parts) != 4:
        raise UsageError("--generate expects m,n,kind,seed")
    try:
        m, n, seed = int(parts[0]), int(parts[1]), int(parts[3])
        kind = Kind.parse(parts[2])
    except ValueError as exc:
        raise UsageError(f"--generate: {exc}") from None
    return m, n, kind, seed


def _int_list(value):
    out = []
    for part in value.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _add_solver_flags(p):
    p.add_argument("--time-limit", type=float, default=7200.0)
    p.add_argument("--abstol", type=float, default=1e-2)
    p.add_argument("--reltol", type=float, default=1e-6)
    p.add_argument("--node-limit", type=int, default=1_000_000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--rho", type=float, default=0.9, help="correlation for generated correlated data")


def build_parser():
    parser = _Parser(prog="exactdesign", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ps = sub.add_parser("solve", help="solve one instance")
    src = ps.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", metavar="PATH")
    src.add_argument("--generate", metavar="m,n,kind,seed")
    ps.add_argument("--criterion", choices=["A", "D"], required=True)
    ps.add_argument("--node-solver", choices=["pn", "vem"], default="pn")
    ps.add_argument("--out", metavar="PATH", help="report file (default: stdout)")
    ps.add_argument("--format", choices=["json", "csv"], default="json")
    _add_solver_flags(ps)

    pb = sub.add_parser("bench", help="run a benchmark sweep")
    pb.add_argument("--criteria", default="A,D")
    pb.add_argument("--kinds", default="independent,correlated")
    pb.add_argument("--m-list", default="50,60,80,100,120")
    pb.add_argument("--seeds", default="1-5")
    pb.add_argument("--solvers", default="pn,vem")
    pb.add_argument("--out", metavar="PATH", help="per-run CSV (default: stdout)")
    pb.add_argument("--summary", metavar="PATH", help="aggregate CSV (default: <out>.summary.csv or stdout)")
    _add_solver_flags(pb)
    return parser


def _config(args, solver):
    return BnbConfig(
        time_limit=args.time_limit,
        abstol=args.abstol,
        reltol=args.reltol,
        node_solver=solver,
        node_limit=args.node_limit,
        threads=args.threads,
    )


def _write(text, path, stdout):
    if path:
        Path(path).write_text(text)
    else:
        stdout.write(text)


def cmd_solve(args, stdout=sys.stdout):
    if args.instance:
        raw = Path(args.instance).read_bytes()
        problem = parse_instance(raw.decode())
        info = {"source": str(args.instance), "kind": None, "seed": None}
    else:
        m, n, kind, seed = _parse_generate(args.generate)
        problem = generate(InstanceSpec(m, n, kind, seed, args.rho))
        raw = format_instance(problem).encode()
        info = {"source": "generated", "kind": kind.value, "seed": seed}
    info.update(m=problem.m, n=problem.n, N=problem.N, fingerprint=fingerprint(raw))

    try:
        config = _config(args, args.node_solver)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = solve(problem, args.criterion, config)

    if args.format == "json":
        text = json.dumps(report_to_dict(report, args.criterion, info), indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, RUN_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerow(run_row(report, args.criterion, info["kind"], problem.m, problem.n,
                           info["seed"], args.node_solver))
        text = buf.getvalue()
    _write(text, args.out, stdout)
    return EXIT_CODES[report.status]


def run_sweep(criteria, kinds, m_list, seeds, solvers, make_config, rho=0.9):
    """Run the cross product and return per-run rows (dicts keyed by RUN_HEADER)."""
    rows = []
    for criterion in criteria:
        for kind in kinds:
            for m in m_list:
                n = max(1, m // 10)
                for seed in seeds:
                    try:
                        problem = generate(InstanceSpec(m, n, kind, seed, rho))
                    except (ExactDesignError, ValueError) as exc:
                        problem = None
                        err = exc
                    for solver in solvers:
                        if problem is None:
                            rows.append(_failed_row(criterion, kind, m, n, seed, solver, err))
                            continue
                        try:
                            report = solve(problem, criterion, make_config(solver))
                            rows.append(run_row(report, criterion, kind.value, m, n, seed, solver))
                        except Exception as exc:  # keep the sweep going
                            log.exception("run failed: %s %s m=%d seed=%d %s", criterion, kind.value, m, seed, solver)
                            rows.append(_failed_row(criterion, kind, m, n, seed, solver, exc))
    return rows


def _failed_row(criterion, kind, m, n, seed, solver, exc):
    row = dict.fromkeys(RUN_HEADER, "")
    row.update(criterion=Criterion.parse(criterion).value, kind=kind.value, m=m, n=n,
               seed=seed, solver=solver, status=f"Error:{type(exc).__name__}")
    return row


def summarize(rows, abstol):
    """Aggregate rows per (criterion, kind, m, solver)."""
    best = {}
    for r in rows:
        if r["status"] == Status.OPTIMAL.value:
            key = (r["criterion"], r["kind"], r["m"], r["seed"])
            best[key] = min(best.get(key, math.inf), float(r["f"]))

    groups = defaultdict(list)
    for r in rows:
        groups[(r["criterion"], r["kind"], r["m"], r["solver"])].append(r)
    out = []
    for (criterion, kind, m, solver), rs in groups.items():
        ok = [r for r in rs if r["nodes"] != ""]
        solved = sum(
            1 for r in ok
            if r["status"] == Status.OPTIMAL.value
            and float(r["f"]) <= best[(criterion, kind, m, r["seed"])] + abstol
        )
        out.append({
            "criterion": criterion,
            "kind": kind,
            "m": m,
            "solver": solver,
            "runs": len(rs),
            "solved": solved,
            "mean_nodes_per_sec": repr(statistics.fmean(float(r["nodes_per_sec"]) for r in ok)) if ok else "",
            "mean_wall_s": repr(statistics.fmean(float(r["wall_s"]) for r in ok)) if ok else "",
            "mean_grad_evals_per_node": repr(statistics.fmean(
                int(r["grad_evals"]) / max(1, int(r["nodes"])) for r in ok)) if ok else "",
        })
    return out


def _csv_text(header, rows, comments=()):
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.DictWriter(buf, header, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_bench(args, stdout=sys.stdout):
    try:
        criteria = [Criterion.parse(c) for c in args.criteria.split(",") if c]
        kinds = [Kind.parse(k) for k in args.kinds.split(",") if k]
        m_list = _int_list(args.m_list)
        seeds = _int_list(args.seeds)
        solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
        for s in solvers:
            if s not in ("pn", "vem"):
                raise ValueError(f"unknown solver {s!r}")
        _config(args, "pn")
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    rows = run_sweep(criteria, kinds, m_list, seeds, solvers, lambda s: _config(args, s), args.rho)
    summary = summarize(rows, args.abstol)
    comments = [
        SOLVED_NOTE,
        f"data: independent = iid N(0,1) rows; correlated = N(0, Sigma) rows with Sigma_ij = {args.rho}^|i-j|",
        f"abstol={args.abstol} reltol={args.reltol} time_limit={args.time_limit} node_limit={args.node_limit}",
    ]
    _write(_csv_text(RUN_HEADER, rows), args.out, stdout)
    summary_path = args.summary or (f"{args.out}.summary.csv" if args.out else None)
    _write(_csv_text(SUMMARY_HEADER, summary, comments), summary_path, stdout)
    return 0


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        if args.command == "solve":
            return cmd_solve(args, stdout)
        return cmd_bench(args, stdout)
    except UsageError as exc:
        print(exc, file=stderr)
        parser.print_usage(stderr)
        return 1
    except (ExactDesignError, OSError, UnicodeDecodeError) as exc:
        print(f"exactdesign: error: {exc}", file=stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
