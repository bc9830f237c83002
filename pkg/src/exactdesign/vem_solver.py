"""Direct vertex exchange method on f over the capped simplex (baseline node solver)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .criteria import build_state, pair_derivatives
from .errors import DomainError
from .feasible_set import exchange_candidates, stationarity_gap
from .pn_solver import _initial_point

LINE_TOL = 1e-12


@dataclass
class VemStats:
    iters: int = 0
    grad_evals: int = 0
    converged: bool = False
    grad: np.ndarray | None = None
    f_history: list = field(default_factory=list)
    x_history: list = field(default_factory=list)


def _phi_derivs(problem, criterion, x, d_idx, eta):
    j, k = d_idx
    y = x.copy()
    y[j] += eta
    y[k] -= eta
    try:
        return pair_derivatives(problem, criterion, y, j, k)
    except DomainError:
        return None


def vem_step_size(problem, criterion, x, j, k, cap):
    """Minimise ``phi(eta) = f(x + eta (e_j - e_k))`` over ``[0, cap]``.

    phi is convex, so its derivative is monotone; a Newton iteration on
    phi' is kept inside a shrinking bracket and falls back to bisection
    whenever the Newton point leaves it. Points outside dom f count as
    phi' = +inf. Returns 0 when phi'(0) >= 0 (no descent).
    """
    x = np.asarray(x, dtype=float)
    if cap <= 0.0:
        return 0.0
    _, d0, h0 = pair_derivatives(problem, criterion, x, j, k)
    if d0 >= 0.0:
        return 0.0
    end = _phi_derivs(problem, criterion, x, (j, k), cap)
    if end is not None and end[1] <= 0.0:
        return float(cap)

    lo, hi = 0.0, float(cap)
    eta, d_eta, h_eta = 0.0, d0, h0
    for _ in range(200):
        if hi - lo <= LINE_TOL * max(1.0, cap):
            break
        cand = eta - d_eta / h_eta if h_eta > 0.0 else np.nan
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        res = _phi_derivs(problem, criterion, x, (j, k), cand)
        if res is None or res[1] > 0.0:
            hi = cand
        else:
            lo = cand
        if res is None:
            continue
        eta, d_eta, h_eta = cand, res[1], res[2]
        if abs(d_eta) <= 1e-15 * max(1.0, abs(d0)):
            return float(eta)
    # lo always has phi' <= 0, so phi(lo) <= phi(0)
    return float(lo)


def solve_vem(problem, criterion, S, x0=None, tol=1e-6, max_iter=100_000, record=False):
    """Vertex exchange on f with exact line search.

    Each iteration moves mass from the coordinate with the largest gradient
    entry (among those above their lower bound) to the one with the
    smallest (among those below their upper bound), then recomputes the
    full gradient. Stops when the scaled pair gap drops to ``tol``.

    Returns
    -------
    x, f, iters, grad_evals, stats
    """
    x, st = _initial_point(problem, criterion, S, x0)
    x = np.array(x, dtype=float)
    stats = VemStats(grad_evals=1)
    stats.f_history.append(st.f_val)
    if record:
        stats.x_history.append(x.copy())

    if S.is_single_point():
        stats.converged, stats.grad = True, st.grad
        return x, st.f_val, 0, 1, stats

    while stationarity_gap(S, x, st.grad) > tol and stats.iters < max_iter:
        j, k = exchange_candidates(S, x, st.grad)
        up_room = S.upper[j] - x[j]
        down_room = x[k] - S.lower[k]
        cap = min(up_room, down_room)
        eta = vem_step_size(problem, criterion, x, j, k, cap)
        if eta <= 0.0:
            break
        x[j] = S.upper[j] if eta >= up_room else x[j] + eta
        x[k] = S.lower[k] if eta >= down_room else x[k] - eta
        st = build_state(problem, criterion, x)
        stats.iters += 1
        stats.grad_evals += 1
        stats.f_history.append(st.f_val)
        if record:
            stats.x_history.append(x.copy())

    stats.converged = stationarity_gap(S, x, st.grad) <= tol
    stats.grad = st.grad
    return x, st.f_val, stats.iters, stats.grad_evals, stats
