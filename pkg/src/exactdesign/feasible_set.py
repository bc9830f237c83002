"""Geometry of the capped simplex F = {x : e'x = N, lower <= x <= upper}."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSet, EmptySet

FEAS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class BoxSimplex:
    N: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float)
        upper = np.array(self.upper, dtype=float)
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValueError("lower and upper must be vectors of equal length")
        if np.any(lower < 0) or np.any(lower > upper):
            raise ValueError("bounds must satisfy 0 <= lower <= upper")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "N", float(self.N))

    @classmethod
    def uniform(cls, m, N, lower=0.0, upper=None):
        upper = N if upper is None else upper
        return cls(N, np.full(m, float(lower)), np.full(m, float(upper)))

    @property
    def m(self):
        return self.lower.shape[0]

    @property
    def tol_act(self):
        """Band within which a coordinate counts as sitting on its bound."""
        return 1e-10 * max(1.0, self.N)

    def is_empty(self):
        return self.lower.sum() > self.N + FEAS_TOL or self.upper.sum() < self.N - FEAS_TOL

    def is_single_point(self):
        return (
            abs(self.lower.sum() - self.N) <= FEAS_TOL
            or abs(self.upper.sum() - self.N) <= FEAS_TOL
            or np.all(self.upper - self.lower <= self.tol_act)
        )

    def check_nonempty(self):
        if self.is_empty():
            raise EmptySet(
                f"sum(lower)={self.lower.sum():g}, sum(upper)={self.upper.sum():g}, N={self.N:g}"
            )

    def single_point(self):
        """The only feasible point when :meth:`is_single_point` holds."""
        if abs(self.lower.sum() - self.N) <= FEAS_TOL:
            return self.lower.copy()
        return self.upper.copy()


def is_feasible(S, x, tol=FEAS_TOL):
    x = np.asarray(x, dtype=float)
    if x.shape != S.lower.shape:
        return False
    return bool(
        abs(x.sum() - S.N) <= tol
        and np.all(x >= S.lower - tol)
        and np.all(x <= S.upper + tol)
    )


def project(S, y, tol=1e-12):
    """Euclidean projection of ``y`` onto ``S``.

    Bisection on the shift ``lam`` in ``clip(y - lam, lower, upper)`` brackets
    the active set; the shift is then recomputed exactly from the free
    coordinates so the budget holds to rounding error.
    """
    S.check_nonempty()
    y = np.asarray(y, dtype=float)
    lo_b, up_b = S.lower, S.upper

    def excess(lam):
        return np.clip(y - lam, lo_b, up_b).sum() - S.N

    lo = float(np.min(y - up_b))
    hi = float(np.max(y - lo_b))
    # excess(lo) >= 0 >= excess(hi)
    for _ in range(200):
        if hi - lo <= tol * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    x = np.clip(y - lam, lo_b, up_b)

    free = (y - lam > lo_b) & (y - lam < up_b)
    if np.any(free):
        fixed_sum = x[~free].sum()
        lam_exact = (y[free].sum() - (S.N - fixed_sum)) / np.count_nonzero(free)
        cand = np.clip(y - lam_exact, lo_b, up_b)
        if abs(cand.sum() - S.N) <= abs(x.sum() - S.N):
            x = cand
    return x


def linear_min(S, g):
    """Minimise ``<g, x>`` over ``S`` by greedy filling.

    Starting from ``lower``, the remaining budget goes to coordinates in
    ascending order of ``g`` (stable, so ties favour the lower index) until
    each hits its cap.
    """
    S.check_nonempty()
    g = np.asarray(g, dtype=float)
    x = S.lower.copy()
    remaining = S.N - x.sum()
    for i in np.argsort(g, kind="stable"):
        if remaining <= 0:
            break
        add = min(S.upper[i] - S.lower[i], remaining)
        x[i] += add
        remaining -= add
    return x, float(g @ x)


def certificate_gap(S, x, g):
    """``max_{y in S} <g, x - y>``, the linearised optimality gap at ``x``."""
    _, value = linear_min(S, g)
    return float(np.asarray(g) @ np.asarray(x)) - value


def exchange_candidates(S, x, g, band=None):
    """Indices ``(j, k)`` of the best exchange pair, without the optimality test.

    ``j`` minimises ``g`` over coordinates below their upper bound, ``k``
    maximises ``g`` over coordinates above their lower bound; "below" and
    "above" are measured with the activity band (``S.tol_act`` by default).
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    band = S.tol_act if band is None else band
    can_up = x < S.upper - band
    can_down = x > S.lower + band
    if not can_up.any() or not can_down.any():
        raise DegenerateSet("no coordinate can move; the feasible set is a single point")
    j = int(np.argmin(np.where(can_up, g, np.inf)))
    k = int(np.argmax(np.where(can_down, g, -np.inf)))
    return j, k


def select_pair(S, x, g):
    """Exchange pair ``(j, k)``, or ``None`` when ``g_j >= g_k`` (x is optimal)."""
    j, k = exchange_candidates(S, x, g)
    if g[j] >= g[k]:
        return None
    return j, k


def stationarity_gap(S, x, g):
    """Scaled pair gap ``(g_k - g_j) / max(1, |g_j|)``; zero at an optimum."""
    try:
        j, k = exchange_candidates(S, x, g)
    except DegenerateSet:
        return 0.0
    return max(0.0, float(g[k] - g[j])) / max(1.0, abs(float(g[j])))
