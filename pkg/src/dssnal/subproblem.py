"""Distributed oracle for the inner subproblem at a fixed penalty and multiplier.

For ``sigma > 0`` and multipliers ``(lam_upper, lam_lower)`` the inner problem is
``min_x phi(x)`` with

    grad phi(x) = grad F(x) + B^T Prox_{sigma G*}(sigma B x - lam),
    B = [I; W],  W = L kron I_n.

Agent ``i`` keeps ``u_i = sigma x_i - lam_i`` and
``u_{i+m} = sigma (W x)_i - lam_{i+m}``; the lower block of the conjugate prox
is the identity, so block ``i`` of the gradient is
``grad f_i(x_i) + Prox_{sigma g_i*}(u_i) + (W u_lower)_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netsim import Network
from .problems import ProblemInstance
from .topology import GossipMatrix


class StaleCacheError(RuntimeError):
    """A cached point was used with a different subproblem or iterate."""


def phi_constants(instance: ProblemInstance, sigma: float, gossip: GossipMatrix, L_F=None, mu=None):
    """Strong-convexity and smoothness constants ``(mu, L)`` of ``phi``.

    ``L = max_i L_i + sigma * ||B||_2^2`` with ``||B||_2^2 = 1 + lambda_max(L)^2``.
    """
    if L_F is None or mu is None:
        mu, L_F, _, _ = instance.smoothness_constants()
    return mu, L_F + sigma * gossip.b_norm_sq


@dataclass(frozen=True, eq=False)
class PhiPoint:
    """Local caches at one iterate ``x``, tied to the subproblem that built them."""

    owner: object
    x: np.ndarray
    u_upper: np.ndarray
    u_lower: np.ndarray
    w_u_lower: np.ndarray
    prox_upper: np.ndarray


@dataclass(frozen=True, eq=False)
class Selection:
    """Generalized-Jacobian selections frozen at a Newton point."""

    curvature: np.ndarray
    h_diag: np.ndarray


class Subproblem:
    def __init__(self, problem: ProblemInstance, net: Network, sigma: float,
                 lam_upper: np.ndarray, lam_lower: np.ndarray, L_F=None, mu=None):
        if sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {sigma}")
        self.problem = problem
        self.net = net
        self.sigma = float(sigma)
        self.lam_upper = np.array(lam_upper, dtype=float)
        self.lam_lower = np.array(lam_lower, dtype=float)
        self.lam_upper.setflags(write=False)
        self.lam_lower.setflags(write=False)
        self.mu, self.L = phi_constants(problem, self.sigma, net.gossip, L_F=L_F, mu=mu)

    @property
    def shape(self):
        return (self.problem.m, self.problem.n)

    def refresh_u(self, x: np.ndarray) -> PhiPoint:
        """Build the ``u`` caches at ``x``: exchange ``x``, then exchange ``u_lower``."""
        net, sigma, prob = self.net, self.sigma, self.problem
        x = np.array(x, dtype=float)
        x.setflags(write=False)
        inbox_x = net.exchange(x)
        u_lower = net.local(lambda r: sigma * inbox_x.weighted_sum(r) - self.lam_lower[r])
        inbox_u = net.exchange(u_lower)
        w_u_lower = net.local(inbox_u.weighted_sum)
        u_upper = net.local(lambda r: sigma * x[r] - self.lam_upper[r])
        prox_upper = net.local(lambda r: prob.prox_conj(u_upper[r]))
        return PhiPoint(self, x, u_upper, u_lower, w_u_lower, prox_upper)

    def _check(self, point: PhiPoint, x=None):
        if point.owner is not self:
            raise StaleCacheError("cache was built for a different sigma/multiplier")
        if x is not None and not np.array_equal(point.x, x):
            raise StaleCacheError("cache was built at a different iterate")

    def grad_phi(self, point: PhiPoint, x=None):
        """Gradient blocks at the cached point and the global norm (one reduce)."""
        self._check(point, x)
        prob = self.problem
        g = self.net.local(lambda r: prob.grad(point.x[r], r) + point.prox_upper[r] + point.w_u_lower[r])
        sq = self.net.local(lambda r: (g[r] * g[r]).sum(axis=1))
        return g, float(np.sqrt(self.net.reduce_sum(sq)))

    def select(self, point: PhiPoint) -> Selection:
        self._check(point)
        prob = self.problem
        curv = self.net.local(lambda r: prob.curvature(point.x[r], r))
        h = self.net.local(lambda r: prob.prox_conj_jacobian(point.u_upper[r]))
        return Selection(curv, h)

    def hessian_matvec(self, sel: Selection, d: np.ndarray) -> np.ndarray:
        """Blocks of ``M d = V d + sigma (H d_upper + W^2 d)``, two exchange rounds."""
        net, sigma, prob = self.net, self.sigma, self.problem
        inbox_d = net.exchange(d)
        d_hat = net.local(inbox_d.weighted_sum)
        inbox_h = net.exchange(d_hat)
        return net.local(lambda r: prob.hess_matvec(sel.curvature[r], d[r], r)
                         + sigma * (sel.h_diag[r] * d[r] + inbox_h.weighted_sum(r)))

    def sq_norm(self, v: np.ndarray) -> float:
        """Global squared norm of per-agent blocks, one reduce."""
        return self.net.reduce_sum(self.net.local(lambda r: (v[r] * v[r]).sum(axis=1)))
