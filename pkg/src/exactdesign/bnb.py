"""Best-first branch and bound for exact A-/D-optimal designs."""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr

from .criteria import Criterion, objective
from .errors import AllIntegral, DomainError, Infeasible, TooLarge
from .feasible_set import BoxSimplex, certificate_gap, project
from .pn_solver import PnParams, solve_relaxation
from .vem_solver import solve_vem

log = logging.getLogger(__name__)

REL_GAP_FLOOR = 1e-10


class NodeSolver(enum.Enum):
    PROJECTED_NEWTON = "pn"
    VERTEX_EXCHANGE = "vem"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    TIME_LIMIT = "TimeLimit"
    NODE_LIMIT = "NodeLimit"
    INFEASIBLE = "Infeasible"


@dataclass
class BnbConfig:
    time_limit: float = 7200.0
    abstol: float = 1e-2
    reltol: float = 1e-6
    node_solver: NodeSolver = NodeSolver.PROJECTED_NEWTON
    integrality_tol: float = 1e-6
    node_limit: int = 1_000_000
    relax_tol: float = 1e-6
    threads: int = 1
    pn_params: PnParams | None = None
    vem_max_iter: int = 100_000

    def __post_init__(self):
        self.node_solver = NodeSolver.parse(self.node_solver)
        if self.abstol <= 0 or self.reltol <= 0:
            raise ValueError("abstol and reltol must be positive")
        if self.time_limit < 0 or self.node_limit < 1:
            raise ValueError("time_limit must be >= 0 and node_limit >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def as_dict(self):
        return {
            "time_limit": self.time_limit,
            "abstol": self.abstol,
            "reltol": self.reltol,
            "node_solver": self.node_solver.value,
            "integrality_tol": self.integrality_tol,
            "node_limit": self.node_limit,
            "relax_tol": self.relax_tol,
            "threads": self.threads,
        }


@dataclass
class Node:
    lower: np.ndarray
    upper: np.ndarray
    relax_x: np.ndarray | None
    bound: float
    depth: int
    id: int
    relax_f: float = math.inf

    def sort_key(self):
        # lowest bound first, deeper first among equal bounds, then creation order
        return (self.bound, -self.depth, self.id)


@dataclass
class Incumbent:
    x_hat: np.ndarray
    f_hat: float


@dataclass
class SolverStats:
    relaxations: int = 0
    outer_iters: int = 0
    qp_iters: int = 0
    grad_evals: int = 0
    unconverged: int = 0

    def add(self, other):
        self.relaxations += other.relaxations
        self.outer_iters += other.outer_iters
        self.qp_iters += other.qp_iters
        self.grad_evals += other.grad_evals
        self.unconverged += other.unconverged


@dataclass
class SolveReport:
    status: Status
    termination: str
    x: np.ndarray | None
    f: float
    best_bound: float
    abs_gap: float
    rel_gap: float
    nodes_processed: int
    wall_seconds: float
    stats: SolverStats
    config: BnbConfig
    nodes_pushed: int = 0
    nodes_popped: int = 0
    nodes_remaining: int = 0
    nodes_pruned: int = 0
    rel_gap_guard_fired: int = 0
    threaded: bool = False
    bound_history: list = field(default_factory=list)
    incumbent_history: list = field(default_factory=list)

    @property
    def nodes_per_second(self):
        return self.nodes_processed / self.wall_seconds if self.wall_seconds > 0 else 0.0

    @property
    def grad_evals_per_node(self):
        return self.stats.grad_evals / self.nodes_processed if self.nodes_processed else 0.0


def independent_rows(A):
    """Indices of ``n`` linearly independent rows of ``A`` (column-pivoted QR of A')."""
    n = A.shape[1]
    _, _, piv = qr(A.T, mode="economic", pivoting=True)
    return sorted(int(i) for i in piv[:n])


def rounding_heuristic(problem, criterion, rng_seed=None, rows=None):
    """Integer design from ``n`` independent rows at their caps, then fixed to budget N.

    Too many experiments: repeatedly take one away from the largest entry in
    the chosen set (lowest index on ties). Too few: fill unused experiments
    up to their caps, in index order, or in a random order when ``rng_seed``
    is given.
    """
    criterion = Criterion.parse(criterion)
    u_hat = problem.u_global
    N = problem.N
    if int(u_hat.sum()) < N:
        raise Infeasible(f"caps sum to {int(u_hat.sum())} < N={N}")
    J = list(independent_rows(problem.A) if rows is None else rows)
    x = np.zeros(problem.m, dtype=np.int64)
    x[J] = u_hat[J]
    if x.sum() > N:
        while x.sum() > N:
            in_J = np.array(J)
            j_max = int(in_J[np.argmax(x[in_J])])
            x[j_max] -= 1
    elif x.sum() < N:
        order = np.arange(problem.m)
        if rng_seed is not None:
            order = np.random.default_rng(rng_seed).permutation(problem.m)
        chosen = set(J)
        for j in order:
            if x.sum() >= N:
                break
            if j in chosen:
                continue
            x[j] = min(N - x.sum(), u_hat[j])
            chosen.add(int(j))
            J.append(int(j))
    return Incumbent(x, objective(problem, criterion, x))


def fractionality(x):
    x = np.asarray(x, dtype=float)
    return np.abs(x - np.round(x))


def branch(node, integrality_tol=1e-6):
    """Split on the most fractional coordinate.

    Returns ``(j, (lower, upper) of the left child, (lower, upper) of the right)``.
    """
    frac = fractionality(node.relax_x)
    j = int(np.argmax(frac))
    if frac[j] <= integrality_tol:
        raise AllIntegral("relaxation solution is integral within tolerance")
    xj = node.relax_x[j]
    left_u = node.upper.copy()
    left_u[j] = math.floor(xj)
    right_l = node.lower.copy()
    right_l[j] = math.ceil(xj)
    return j, (node.lower.copy(), left_u), (right_l, node.upper.copy())


def gaps(f_hat, bound):
    """Absolute and relative gap; the boolean flags when the denominator guard fired."""
    if not math.isfinite(f_hat) or not math.isfinite(bound):
        return math.inf, math.inf, False
    abs_gap = abs(f_hat - bound)
    denom = min(abs(f_hat), abs(bound))
    guarded = denom < REL_GAP_FLOOR
    return abs_gap, abs_gap / max(denom, REL_GAP_FLOOR), guarded


def _solve_node(problem, criterion, config, lower, upper, warm):
    """Relaxation of one node; returns (x, f, valid lower bound, stats)."""
    S = BoxSimplex(problem.N, lower, upper)
    stats = SolverStats(relaxations=1)
    x0 = None if warm is None else project(S, warm)
    try:
        if config.node_solver is NodeSolver.PROJECTED_NEWTON:
            params = config.pn_params or PnParams(tol=config.relax_tol)
            x, f, st = solve_relaxation(problem, criterion, S, x0, params)
            stats.outer_iters = st.outer_iters
            stats.qp_iters = st.qp_iters
            stats.grad_evals = st.grad_evals
        else:
            x, f, iters, grad_evals, st = solve_vem(
                problem, criterion, S, x0, tol=config.relax_tol, max_iter=config.vem_max_iter
            )
            stats.outer_iters = iters
            stats.grad_evals = grad_evals
    except DomainError:
        return None, math.inf, math.inf, stats
    if not st.converged:
        stats.unconverged = 1
    grad = st.grad
    # convexity: min_S f >= f(x) - max_{y in S} <grad f(x), x - y>
    bound = f - max(certificate_gap(S, x, grad), 0.0)
    return x, f, bound, stats


def solve(problem, criterion, config=None):
    """Exact design by best-first branch and bound.

    The incumbent starts from :func:`rounding_heuristic`. Nodes are popped
    in order of their lower bound; an integral relaxation updates the
    incumbent, a fractional one is split on its most fractional coordinate
    and both children are solved immediately. The search stops when the
    tree is empty, the time or node limit is hit, or the absolute or
    relative gap between the incumbent and the smallest open bound falls
    below tolerance.
    """
    criterion = Criterion.parse(criterion)
    config = config or BnbConfig()
    stats = SolverStats()

    if not problem.is_solvable():
        return SolveReport(
            status=Status.INFEASIBLE, termination="infeasible", x=None, f=math.inf,
            best_bound=math.inf, abs_gap=math.inf, rel_gap=math.inf, nodes_processed=0,
            wall_seconds=0.0, stats=stats, config=config,
        )

    inc = rounding_heuristic(problem, criterion)
    slack = config.abstol / 10.0
    ids = itertools.count()
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    t0 = time.perf_counter()
    root_l = np.zeros(problem.m, dtype=np.int64)
    root_u = problem.u_global.astype(np.int64)
    x, f, bound, st = _solve_node(problem, criterion, config, root_l, root_u, None)
    stats.add(st)

    queue = []
    pushed = popped = pruned = guard_fired = 0
    bound_hist, inc_hist = [], [inc.f_hat]
    if math.isfinite(bound):
        heapq.heappush(queue, _entry(Node(root_l, root_u, x, bound, 0, next(ids), f)))
        pushed += 1

    def best_bound():
        return min(queue[0][0][0], inc.f_hat) if queue else inc.f_hat

    termination = "tree_empty"
    while queue:
        bb = best_bound()
        bound_hist.append(bb)
        abs_gap, rel_gap, guarded = gaps(inc.f_hat, bb)
        guard_fired += guarded
        if abs_gap <= config.abstol:
            termination = "abstol"
            break
        if rel_gap <= config.reltol:
            termination = "reltol"
            break
        if time.perf_counter() - t0 >= config.time_limit:
            termination = "time_limit"
            break
        if stats.relaxations >= config.node_limit:
            termination = "node_limit"
            break

        node = heapq.heappop(queue)[1]
        popped += 1
        if node.bound > inc.f_hat + slack:
            pruned += 1
            continue

        if np.all(fractionality(node.relax_x) <= config.integrality_tol):
            x_int = np.round(node.relax_x).astype(np.int64)
            try:
                f_int = objective(problem, criterion, x_int)
            except DomainError:
                f_int = math.inf
            if f_int < inc.f_hat:
                inc = Incumbent(x_int, f_int)
                inc_hist.append(f_int)
                log.debug("new incumbent %.10g at node %d", f_int, node.id)
            continue

        _, left, right = branch(node, config.integrality_tol)
        children = []
        for lo, up in (left, right):
            if lo.sum() > problem.N or up.sum() < problem.N:
                pruned += 1
                continue
            children.append((lo, up))
        args = [(problem, criterion, config, lo, up, node.relax_x) for lo, up in children]
        if pool is not None and len(args) > 1:
            results = list(pool.map(lambda a: _solve_node(*a), args))
        else:
            results = [_solve_node(*a) for a in args]
        for (lo, up), (cx, cf, cb, cst) in zip(children, results):
            stats.add(cst)
            if not math.isfinite(cb):
                pruned += 1
                continue
            # a child's feasible set is contained in its parent's
            cb = max(cb, node.bound)
            heapq.heappush(queue, _entry(Node(lo, up, cx, cb, node.depth + 1, next(ids), cf)))
            pushed += 1

    wall = time.perf_counter() - t0
    if pool is not None:
        pool.shutdown()

    if termination == "tree_empty":
        bb = inc.f_hat
    else:
        bb = best_bound()
    abs_gap, rel_gap, guarded = gaps(inc.f_hat, bb)
    guard_fired += guarded
    status = {
        "tree_empty": Status.OPTIMAL,
        "abstol": Status.OPTIMAL,
        "reltol": Status.OPTIMAL,
        "time_limit": Status.TIME_LIMIT,
        "node_limit": Status.NODE_LIMIT,
    }[termination]
    return SolveReport(
        status=status, termination=termination, x=inc.x_hat, f=inc.f_hat, best_bound=bb,
        abs_gap=abs_gap, rel_gap=rel_gap, nodes_processed=stats.relaxations,
        wall_seconds=wall, stats=stats, config=config, nodes_pushed=pushed,
        nodes_popped=popped, nodes_remaining=len(queue), nodes_pruned=pruned,
        rel_gap_guard_fired=guard_fired, threaded=pool is not None,
        bound_history=bound_hist, incumbent_history=inc_hist,
    )


def _entry(node):
    return (node.sort_key(), node)


def enumerate_exact(problem, criterion, max_candidates=1_000_000):
    """Brute-force optimum over all integer designs with ``e'x = N`` and ``x <= u``.

    Singular designs are skipped; ties keep the lexicographically first
    design. Returns ``(None, inf)`` when no design has a nonsingular
    information matrix.
    """
    criterion = Criterion.parse(criterion)
    u = [int(v) for v in problem.u_global]
    N = problem.N
    count = _count_designs(u, N, max_candidates)
    if count > max_candidates:
        raise TooLarge(f"more than {max_candidates} candidate designs")
    best_x, best_f = None, math.inf
    for design in _designs(u, N):
        x = np.array(design, dtype=np.int64)
        try:
            f = objective(problem, criterion, x)
        except DomainError:
            continue
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f


def _designs(u, N):
    """All integer vectors 0 <= x <= u with sum N, in lexicographic order."""
    m = len(u)
    tail_cap = list(itertools.accumulate(reversed(u)))[::-1] + [0]

    def rec(i, left):
        if i == m:
            if left == 0:
                yield ()
            return
        lo = max(0, left - tail_cap[i + 1])
        for v in range(lo, min(u[i], left) + 1):
            for rest in rec(i + 1, left - v):
                yield (v,) + rest

    yield from rec(0, N)


def _count_designs(u, N, cap):
    # ways[s] = number of prefixes summing to s
    ways = [1] + [0] * N
    for ui in u:
        new = [0] * (N + 1)
        for s, w in enumerate(ways):
            if w:
                for v in range(0, min(ui, N - s) + 1):
                    new[s + v] += w
        ways = [min(w, cap + 1) for w in new]
    return ways[N]
