"""Vertex exchange method for the quadratic model of f over the capped simplex."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSet
from .feasible_set import certificate_gap, exchange_candidates, is_feasible, project

CURVATURE_RTOL = 1e-14


class QpStatus(enum.Enum):
    CONVERGED = "converged"
    ITER_LIMIT = "iter_limit"


@dataclass(frozen=True, eq=False)
class QpModel:
    """``q(z) = f0 + <g0, z - x_ref> + 1/2 <z - x_ref, H (z - x_ref)>``."""

    g0: np.ndarray
    H: np.ndarray
    x_ref: np.ndarray
    f0: float = 0.0

    def value(self, z):
        d = np.asarray(z, dtype=float) - self.x_ref
        return float(self.f0 + self.g0 @ d + 0.5 * d @ (self.H @ d))

    @property
    def curvature_floor(self):
        return CURVATURE_RTOL * float(np.max(np.abs(self.H))) if self.H.size else 0.0


@dataclass
class QpResult:
    z: np.ndarray
    gap: float
    iters: int
    status: QpStatus
    q_value: float


def qp_gradient(model, z):
    return model.g0 + model.H @ (np.asarray(z, dtype=float) - model.x_ref)


def qp_step(model, z, g, j, k, S):
    """Exact minimiser of q along ``e_j - e_k`` within the box caps."""
    cap = min(S.upper[j] - z[j], z[k] - S.lower[k])
    cap = max(cap, 0.0)
    H = model.H
    curv = H[j, j] + H[k, k] - H[j, k] - H[k, j]
    if curv <= model.curvature_floor:
        return cap
    return min(cap, (g[k] - g[j]) / curv)


def solve_qp(model, S, z0=None, eps=1e-6, max_iter=None, gap_check_stride=None, trace=None):
    """Approximately minimise ``q`` over ``S`` to an ``eps``-solution.

    Stops once ``max_{x in S} <grad q(z), z - x> <= eps**2``. The certificate
    is evaluated every ``gap_check_stride`` iterations (default ``m``) and
    whenever the exchange rule reports that no descent pair is left.

    Parameters
    ----------
    trace : list, optional
        If given, ``q(z)`` after every iteration is appended to it.
    """
    S.check_nonempty()
    m = S.m
    if eps <= 0:
        raise ValueError("eps must be positive")
    if max_iter is None:
        max_iter = 50 * m * m
    stride = m if gap_check_stride is None else max(1, int(gap_check_stride))
    target = eps * eps

    z = np.array(project(S, model.x_ref) if z0 is None else z0, dtype=float)
    g = qp_gradient(model, z)
    q_val = model.value(z)
    if trace is not None:
        trace.append(q_val)

    if S.is_single_point():
        z = S.single_point()
        g = qp_gradient(model, z)
        return QpResult(z, max(certificate_gap(S, z, g), 0.0), 0, QpStatus.CONVERGED, model.value(z))

    H = model.H
    gap = certificate_gap(S, z, g)
    it = 0
    while gap > target and it < max_iter:
        try:
            j, k = exchange_candidates(S, z, g)
        except DegenerateSet:
            break
        if g[j] >= g[k]:
            # coordinates inside the activity band can still carry a tiny gap
            try:
                j, k = exchange_candidates(S, z, g, band=0.0)
            except DegenerateSet:
                break
            if g[j] >= g[k]:
                break
        eta = qp_step(model, z, g, j, k, S)
        if eta <= 0.0:
            break
        up_room = S.upper[j] - z[j]
        down_room = z[k] - S.lower[k]
        slope = g[j] - g[k]
        curv = H[j, j] + H[k, k] - H[j, k] - H[k, j]
        z[j] = S.upper[j] if eta >= up_room else z[j] + eta
        z[k] = S.lower[k] if eta >= down_room else z[k] - eta
        g += eta * (H[:, j] - H[:, k])
        q_val += eta * slope + 0.5 * eta * eta * curv
        it += 1
        if trace is not None:
            trace.append(q_val)
        if it % stride == 0:
            gap = certificate_gap(S, z, g)

    # the incrementally updated gradient drifts; recompute before certifying
    g = qp_gradient(model, z)
    gap = certificate_gap(S, z, g)
    status = QpStatus.CONVERGED if gap <= target else QpStatus.ITER_LIMIT
    assert is_feasible(S, z), "vertex exchange left the feasible set"
    return QpResult(z, max(gap, 0.0), it, status, model.value(z))
