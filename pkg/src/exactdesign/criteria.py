"""A- and D-criterion objectives on the information matrix X(x) = A' Diag(x) A.

Both objectives are written as minimisation problems:

* D-criterion: ``f(x) = -log det X(x)``
* A-criterion: ``f(x) = log tr X(x)^{-1}``

A :class:`CriterionState` holds one Cholesky factorisation of ``X(x)`` and
every quantity derived from it, so the Hessian reuses the gradient's work.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DomainError, RankError

PIVOT_RTOL = 1e-12
DEFAULT_FULL_MATRIX_CAP = 512


class Criterion(enum.Enum):
    A_OPTIMAL = "A"
    D_OPTIMAL = "D"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper()
        for member in cls:
            if key in (member.value, member.name, member.name.split("_")[0]):
                return member
        raise ValueError(f"unknown criterion {value!r}; expected 'A' or 'D'")


@dataclass(frozen=True, eq=False)
class DesignProblem:
    """An exact design instance.

    Parameters
    ----------
    A : (m, n) array
        Experiment matrix; row i is the regressor a_i of experiment i.
    N : int
        Total number of experiments (budget).
    u_global : (m,) int array
        Maximum number of repetitions of each experiment.

    Construction checks shapes and column rank. The budget conditions
    ``N >= n`` and ``sum(u_global) >= N`` are left to :meth:`check_solvable`
    so that infeasible instances can still be represented and reported.
    """

    A: np.ndarray
    N: int
    u_global: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2:
            raise ValueError("A must be a 2-D array")
        m, n = A.shape
        if n < 1 or m < n:
            raise ValueError(f"need m >= n >= 1, got m={m}, n={n}")
        if not np.all(np.isfinite(A)):
            raise ValueError("A has non-finite entries")
        if np.linalg.matrix_rank(A) < n:
            raise RankError(f"A ({m}x{n}) is not of full column rank")
        N = int(self.N)
        if N != self.N or N < 1:
            raise ValueError(f"budget N must be a positive integer, got {self.N!r}")
        if self.u_global is None:
            u = np.full(m, N, dtype=np.int64)
        else:
            u_raw = np.asarray(self.u_global)
            u = u_raw.astype(np.int64)
            if u.shape != (m,) or np.any(u != u_raw):
                raise ValueError("u_global must be an integer vector of length m")
            if np.any(u < 1):
                raise ValueError("u_global entries must be >= 1")
        A.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "u_global", u)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def is_solvable(self):
        return self.N >= self.n and int(self.u_global.sum()) >= self.N

    def check_solvable(self):
        from .errors import Infeasible

        if self.N < self.n:
            raise Infeasible(f"budget N={self.N} is below the number of parameters n={self.n}")
        if int(self.u_global.sum()) < self.N:
            raise Infeasible(f"caps sum to {int(self.u_global.sum())} < N={self.N}")

    def __eq__(self, other):
        if not isinstance(other, DesignProblem):
            return NotImplemented
        return (
            self.N == other.N
            and self.A.shape == other.A.shape
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.u_global, other.u_global)
        )

    def information_matrix(self, x):
        x = np.asarray(x, dtype=float)
        return (self.A.T * x) @ self.A


def _readonly(arr):
    if arr is not None:
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CriterionState:
    """Objective value, gradient and cached factors at one design ``x``.

    ``W = L^{-1} A'`` and, for the A-criterion, ``V = X^{-1} A'`` are kept so
    that entries of ``M1 = A X^{-1} A' = W'W`` and ``M2 = A X^{-2} A' = V'V``
    can be formed on demand when ``m`` exceeds the full-matrix cap.
    """

    criterion: Criterion
    x: np.ndarray
    chol: np.ndarray
    W: np.ndarray
    V: np.ndarray | None
    M1: np.ndarray | None
    M2: np.ndarray | None
    trace_inv: float | None
    f_val: float
    grad: np.ndarray

    @property
    def m(self):
        return self.W.shape[1]

    def m1_rows(self, idx):
        idx = np.atleast_1d(idx)
        if self.M1 is not None:
            return self.M1[idx]
        return self.W[:, idx].T @ self.W

    def m2_rows(self, idx):
        if self.V is None:
            raise ValueError("M2 is only formed for the A-criterion")
        idx = np.atleast_1d(idx)
        if self.M2 is not None:
            return self.M2[idx]
        return self.V[:, idx].T @ self.V

    def full_m1(self):
        return self.M1 if self.M1 is not None else self.W.T @ self.W

    def full_m2(self):
        if self.V is None:
            raise ValueError("M2 is only formed for the A-criterion")
        return self.M2 if self.M2 is not None else self.V.T @ self.V


def cholesky_information(A, x):
    """Lower Cholesky factor of ``A' Diag(x) A``; raises DomainError if singular."""
    X = (A.T * x) @ A
    scale = float(np.max(np.diag(X))) if X.size else 0.0
    if not np.isfinite(scale) or scale <= 0.0:
        raise DomainError("information matrix has no positive diagonal entry")
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise DomainError("information matrix is not positive definite") from exc
    pivots = np.diag(L) ** 2
    if np.min(pivots) <= PIVOT_RTOL * scale:
        raise DomainError(
            f"information matrix is numerically singular "
            f"(min pivot {np.min(pivots):.3e}, scale {scale:.3e})"
        )
    return L


def build_state(problem, criterion, x, full_matrix_cap=DEFAULT_FULL_MATRIX_CAP):
    """Evaluate the criterion at ``x`` and cache everything the Hessian needs.

    Raises
    ------
    DomainError
        If ``X(x)`` is singular or indefinite, i.e. ``x`` is not in dom f.
    """
    criterion = Criterion.parse(criterion)
    x = np.array(x, dtype=float)
    if x.shape != (problem.m,):
        raise ValueError(f"x must have length {problem.m}")
    if np.any(x < 0):
        raise DomainError("design weights must be nonnegative")

    A = problem.A
    L = cholesky_information(A, x)
    W = solve_triangular(L, A.T, lower=True, check_finite=False)
    full = problem.m <= full_matrix_cap

    if criterion is Criterion.D_OPTIMAL:
        f_val = -2.0 * float(np.sum(np.log(np.diag(L))))
        grad = -np.einsum("ij,ij->j", W, W)
        V = M2 = None
        trace_inv = None
    else:
        V = solve_triangular(L, W, lower=True, trans="T", check_finite=False)
        Linv = solve_triangular(L, np.eye(problem.n), lower=True, check_finite=False)
        trace_inv = float(np.sum(Linv * Linv))
        f_val = float(np.log(trace_inv))
        grad = -np.einsum("ij,ij->j", V, V) / trace_inv
        M2 = V.T @ V if full else None
    M1 = W.T @ W if full else None

    return CriterionState(
        criterion=criterion,
        x=_readonly(x),
        chol=_readonly(L),
        W=_readonly(W),
        V=_readonly(V),
        M1=_readonly(M1),
        M2=_readonly(M2),
        trace_inv=trace_inv,
        f_val=f_val,
        grad=_readonly(grad),
    )


def objective(problem, criterion, x):
    """f(x) alone; raises DomainError outside the domain."""
    criterion = Criterion.parse(criterion)
    L = cholesky_information(problem.A, np.asarray(x, dtype=float))
    if criterion is Criterion.D_OPTIMAL:
        return -2.0 * float(np.sum(np.log(np.diag(L))))
    Linv = solve_triangular(L, np.eye(problem.n), lower=True, check_finite=False)
    return float(np.log(np.sum(Linv * Linv)))


def hessian(state):
    """Full m x m Hessian of f at ``state.x``.

    D: ``M1 o M1``.
    A: ``(2/t) (M2 o M1) - (1/t^2) diag(M2) diag(M2)'`` with ``t = tr X^{-1}``.
    """
    M1 = state.full_m1()
    if state.criterion is Criterion.D_OPTIMAL:
        H = M1 * M1
    else:
        M2 = state.full_m2()
        t = state.trace_inv
        d2 = np.diag(M2)
        H = (2.0 / t) * (M2 * M1) - np.outer(d2, d2) / t**2
    return 0.5 * (H + H.T)


def local_norm(state, d, H=None):
    """Hessian-weighted norm ``sqrt(d' H d)``.

    When ``H`` is not supplied the quadratic form is computed from the
    factors without building the m x m Hessian.
    """
    d = np.asarray(d, dtype=float)
    if H is not None:
        q = float(d @ (H @ d))
    elif state.criterion is Criterion.D_OPTIMAL:
        # d' (M1 o M1) d = ||W Diag(d) W'||_F^2
        K = (state.W * d) @ state.W.T
        q = float(np.sum(K * K))
    else:
        t = state.trace_inv
        # d' (M2 o M1) d = ||W D V'||_F^2 with D = Diag(d); diag(M2)/t = -grad
        K1 = (state.W * d) @ state.V.T
        q = 2.0 / t * float(np.sum(K1 * K1)) - float(d @ state.grad) ** 2
    return float(np.sqrt(max(q, 0.0)))


def pair_derivatives(problem, criterion, x, j, k):
    """Value, first and second derivative of ``eta -> f(x + eta (e_j - e_k))`` at 0.

    Only the two rows ``a_j`` and ``a_k`` are touched, so the cost is
    O(n^3) instead of a full gradient evaluation.
    """
    criterion = Criterion.parse(criterion)
    A = problem.A
    L = cholesky_information(A, np.asarray(x, dtype=float))
    B = A[[j, k]].T
    Wb = solve_triangular(L, B, lower=True, check_finite=False)
    G1 = Wb.T @ Wb
    if criterion is Criterion.D_OPTIMAL:
        f_val = -2.0 * float(np.sum(np.log(np.diag(L))))
        d1 = -G1[0, 0] + G1[1, 1]
        d2 = G1[0, 0] ** 2 + G1[1, 1] ** 2 - 2.0 * G1[0, 1] ** 2
        return f_val, float(d1), float(d2)
    Vb = solve_triangular(L, Wb, lower=True, trans="T", check_finite=False)
    G2 = Vb.T @ Vb
    Linv = solve_triangular(L, np.eye(problem.n), lower=True, check_finite=False)
    t = float(np.sum(Linv * Linv))
    f_val = float(np.log(t))
    d1 = (-G2[0, 0] + G2[1, 1]) / t
    Hjj = 2.0 / t * G2[0, 0] * G1[0, 0] - G2[0, 0] ** 2 / t**2
    Hkk = 2.0 / t * G2[1, 1] * G1[1, 1] - G2[1, 1] ** 2 / t**2
    Hjk = 2.0 / t * G2[0, 1] * G1[0, 1] - G2[0, 0] * G2[1, 1] / t**2
    return f_val, float(d1), float(Hjj + Hkk - 2.0 * Hjk)
