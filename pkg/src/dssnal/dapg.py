"""Distributed accelerated gradient method on ``phi``.

One iteration extrapolates ``x_tilde = x + beta (x - x_prev)``, evaluates
``grad phi(x_tilde)`` (two exchange rounds: ``x_tilde`` then ``u_lower``), and
steps ``x_next = x_tilde - grad / L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .subproblem import PhiPoint, Subproblem


def beta_of(mu: float, L: float) -> float:
    """Momentum coefficient ``(sqrt(L) - sqrt(mu)) / (sqrt(L) + sqrt(mu))``."""
    if not (mu > 0 and L > 0) or mu > L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    sl, sm = math.sqrt(L), math.sqrt(mu)
    return (sl - sm) / (sl + sm)


@dataclass(frozen=True)
class MomentumState:
    x_curr: np.ndarray
    x_prev: np.ndarray
    beta: float
    j: int = 0

    @classmethod
    def start(cls, x0: np.ndarray, beta: float) -> "MomentumState":
        x0 = np.array(x0, dtype=float)
        return cls(x0, x0.copy(), beta, 0)


def _extrapolated_grad(state: MomentumState, sub: Subproblem):
    x, xp, beta = state.x_curr, state.x_prev, state.beta
    x_tilde = sub.net.local(lambda r: x[r] + beta * (x[r] - xp[r]))
    point = sub.refresh_u(x_tilde)
    g, gnorm = sub.grad_phi(point)
    return point, g, gnorm


def _step(state, sub, point, g) -> MomentumState:
    L = sub.L
    x_next = sub.net.local(lambda r: point.x[r] - g[r] / L)
    return MomentumState(x_next, state.x_curr, state.beta, state.j + 1)


def dapg_iterate(state: MomentumState, sub: Subproblem) -> MomentumState:
    """One accelerated step; costs exactly two exchange rounds."""
    point, g, _ = _extrapolated_grad(state, sub)
    return _step(state, sub, point, g)


@dataclass
class WarmStart:
    x: np.ndarray
    point: PhiPoint
    grad: np.ndarray
    grad_norm: float
    iterations: int
    evaluations: int
    capped: bool


def dapg_solve(sub: Subproblem, x0, accept, cap: int) -> WarmStart:
    """Run DAPG from ``x0`` until ``accept(grad_norm, point, grad)`` or ``cap`` steps.

    The test is made at the extrapolated point, where the gradient is already
    known, and that point is returned together with its caches. ``iterations``
    counts steps taken; ``iterations + 1`` gradient evaluations were made, two
    exchange rounds each.
    """
    state = MomentumState.start(x0, beta_of(sub.mu, sub.L))
    while True:
        point, g, gnorm = _extrapolated_grad(state, sub)
        done = accept(gnorm, point, g)
        if done or state.j >= cap:
            return WarmStart(point.x, point, g, gnorm, state.j, state.j + 1, not done)
        state = _step(state, sub, point, g)


def warm_start(sub: Subproblem, tol_ws: float = 0.5, cap: int = 5000, x0=None) -> WarmStart:
    """DAPG from zero until ``||grad phi(x)|| / (1 + ||x||) <= tol_ws``."""
    if not tol_ws > 0:
        raise ValueError(f"warm-start tolerance must be > 0, got {tol_ws}")
    if x0 is None:
        x0 = np.zeros(sub.shape)

    def small_gradient(gnorm, point, g):
        if math.isinf(tol_ws):
            return True
        return gnorm / (1.0 + math.sqrt(sub.sq_norm(point.x))) <= tol_ws

    return dapg_solve(sub, x0, small_gradient, cap)
