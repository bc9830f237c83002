"""Inexact projected Newton method for min f(x) over the capped simplex.

Each outer iteration solves the quadratic model of f at the current point to
an adaptive accuracy with the vertex exchange QP solver, then takes either a
damped step or a full Newton step. Full steps shrink both the step-control
parameter and the QP accuracy target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .criteria import build_state, hessian, local_norm
from .errors import DomainError, EmptySet, Infeasible
from .feasible_set import is_feasible, project, stationarity_gap
from .qp_solver import QpModel, solve_qp


def _h_denominator(tau):
    return (1.0 - 2.0 * tau) * (1.0 - tau) ** 2 - tau * tau


# smallest positive root of the denominator, 1 - 4t + 4t^2 - 2t^3
TAU_MAX = float(brentq(_h_denominator, 0.0, 0.5, xtol=1e-16))


def h_fn(tau):
    """``tau (1 - 2 tau + 2 tau^2) / ((1 - 2 tau)(1 - tau)^2 - tau^2)`` on [0, TAU_MAX)."""
    if not (0.0 <= tau < TAU_MAX):
        raise DomainError(f"h is defined on [0, {TAU_MAX:.6f}), got {tau!r}")
    return tau * (1.0 - 2.0 * tau + 2.0 * tau * tau) / _h_denominator(tau)


def h_inv(y):
    """Inverse of :func:`h_fn` by bisection on [0, TAU_MAX)."""
    if not (y >= 0.0 and math.isfinite(y)):
        raise DomainError(f"h_inv needs a finite y >= 0, got {y!r}")
    if y == 0.0:
        return 0.0
    lo, hi = 0.0, TAU_MAX
    # h increases to +inf at TAU_MAX, so any finite y is bracketed
    while hi - lo > 1e-16:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if h_fn(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PnParams:
    beta: float = 0.1
    sigma: float = 0.75
    delta: float = 0.95
    C: float = 2.0
    C1: float = 2.0
    tol: float = 1e-6
    max_outer: int = 200
    qp_max_iter: int | None = None

    def __post_init__(self):
        if not 0.0 < self.beta < 0.5:
            raise ValueError("beta must lie in (0, 0.5)")
        if not (0.0 < self.sigma < 1.0 and 0.0 < self.delta < 1.0):
            raise ValueError("sigma and delta must lie in (0, 1)")
        if self.C <= 1.0 or self.C1 <= 1.0:
            raise ValueError("C and C1 must exceed 1")
        if self.tol <= 0 or self.max_outer < 0:
            raise ValueError("tol must be positive and max_outer nonnegative")

    def satisfies_local_conditions(self):
        b, C = self.beta, self.C
        first = 1.0 / (C * (1.0 - b)) + b / ((1.0 - 2.0 * b) * (1.0 - b) ** 2)
        second = 1.0 / C + 1.0 / (1.0 - 2.0 * b)
        return first <= self.sigma and second <= 2.0


@dataclass
class PnState:
    x: np.ndarray
    lam: float
    eps: float
    outer_iters: int = 0
    grad_evals: int = 0
    qp_iters: int = 0
    full_steps: int = 0
    damped_steps: int = 0
    converged: bool = False
    grad: np.ndarray | None = None
    # per outer iteration: "full_local", "full_lambda" or "damped"
    step_kinds: list = field(default_factory=list)
    eps_history: list = field(default_factory=list)
    f_history: list = field(default_factory=list)
    x_history: list = field(default_factory=list)


def repair_domain(problem, criterion, S, x0):
    """Blend ``x0`` toward the projected uniform design until X(x) is nonsingular.

    Returns the first blend (theta = 0, 0.01, 0.02, 0.04, ..., 1) at which
    the criterion can be evaluated, together with its state.
    """
    x0 = np.asarray(x0, dtype=float)
    try:
        return x0, build_state(problem, criterion, x0)
    except DomainError:
        pass
    spread = project(S, np.full(S.m, S.N / S.m))
    theta = 1e-2
    while True:
        t = min(theta, 1.0)
        x = (1.0 - t) * x0 + t * spread
        try:
            return x, build_state(problem, criterion, x)
        except DomainError:
            if t >= 1.0:
                raise DomainError("no point of the feasible set lies in dom f") from None
        theta *= 2.0


def _initial_point(problem, criterion, S, x0):
    try:
        S.check_nonempty()
    except EmptySet as exc:
        raise Infeasible(str(exc)) from exc
    if S.is_single_point():
        x = S.single_point()
        return x, build_state(problem, criterion, x)
    if x0 is None:
        x0 = project(S, np.full(S.m, S.N / S.m))
    elif not is_feasible(S, x0):
        x0 = project(S, x0)
    return repair_domain(problem, criterion, S, x0)


def solve_relaxation(problem, criterion, S, x0=None, params=None, record=False):
    """Minimise f over ``S`` with the inexact projected Newton method.

    Parameters
    ----------
    x0 : array, optional
        Starting point. Infeasible points are projected onto ``S``; points
        outside dom f are repaired by :func:`repair_domain`.
    record : bool
        Keep the full iterate history in the returned state.

    Returns
    -------
    x, f, state
    """
    params = params or PnParams()
    x, st = _initial_point(problem, criterion, S, x0)
    hinv_beta = h_inv(params.beta)
    state = PnState(
        x=x,
        lam=params.beta / params.sigma,
        eps=min(params.beta / params.C, params.C1 * hinv_beta),
        grad_evals=1,
    )
    state.f_history.append(st.f_val)
    state.eps_history.append(state.eps)
    if record:
        state.x_history.append(x.copy())

    if S.is_single_point():
        state.converged = True
        state.x, state.grad = x, st.grad
        return x, st.f_val, state

    qp_cap = params.qp_max_iter or 50 * S.m * S.m
    while stationarity_gap(S, x, st.grad) > params.tol:
        if state.outer_iters >= params.max_outer:
            break
        H = hessian(st)
        model = QpModel(st.grad, H, x, st.f_val)
        eps_qp = state.eps
        res = solve_qp(model, S, z0=x, eps=eps_qp, max_iter=qp_cap)
        state.qp_iters += res.iters
        d = res.z - x
        gamma = local_norm(st, d, H)

        if state.eps + gamma <= hinv_beta or state.lam <= params.beta:
            kind = "full_local" if state.eps + gamma <= hinv_beta else "full_lambda"
            state.lam *= params.sigma
            state.eps *= params.sigma
            eta = 1.0
        else:
            kind = "damped"
            # the damped rule needs gamma > eps; tighten the QP until it holds
            while gamma <= eps_qp and eps_qp > 1e-14:
                eps_qp = min(eps_qp * params.sigma, 0.5 * gamma) if gamma > 0 else eps_qp * params.sigma
                res = solve_qp(model, S, z0=res.z, eps=eps_qp, max_iter=qp_cap)
                state.qp_iters += res.iters
                d = res.z - x
                gamma = local_norm(st, d, H)
            if gamma > 0.0:
                eta = params.delta * (gamma**2 - eps_qp**2) / (gamma**3 + gamma**2 - eps_qp**2 * gamma)
                eta = min(max(eta, 0.0), 1.0)
            else:
                # d lies in the Hessian null space: f is flat along it
                eta = 1.0

        f_cap = st.f_val + 1e-12 * max(1.0, abs(st.f_val)) if kind == "damped" else math.inf
        x_new, st_new = _take_step(problem, criterion, x, d, eta, f_cap)
        if st_new is None:
            state.outer_iters += 1
            state.step_kinds.append(kind)
            break

        x, st = x_new, st_new
        state.outer_iters += 1
        state.grad_evals += 1
        if kind == "damped":
            state.damped_steps += 1
        else:
            state.full_steps += 1
        state.step_kinds.append(kind)
        state.eps_history.append(state.eps)
        state.f_history.append(st.f_val)
        if record:
            state.x_history.append(x.copy())

    state.converged = stationarity_gap(S, x, st.grad) <= params.tol
    state.x, state.grad = x, st.grad
    return x, st.f_val, state


def _take_step(problem, criterion, x, d, eta, f_cap=math.inf):
    """``x + eta d``, halving eta while the point leaves dom f or f exceeds ``f_cap``.

    Damped steps decrease f in exact arithmetic; the cap only catches
    roundoff on nearly flat models. Returns ``(x, None)`` if no step works.
    """
    for _ in range(60):
        x_new = x + eta * d
        np.maximum(x_new, 0.0, out=x_new)
        try:
            st = build_state(problem, criterion, x_new)
        except DomainError:
            st = None
        if st is not None and st.f_val <= f_cap:
            return x_new, st
        eta *= 0.5
    return x, None

