"""Distributed inexact semismooth Newton method without line search.

Each Newton step freezes the Jacobian selections at ``x``, runs the momentum
recursion on ``q(d) = <d, M d>/2 + <grad phi(x), d>`` for exactly
``apg_budget(eta)`` iterations (two exchange rounds each), certifies
``||M d + grad phi(x)|| <= eta ||grad phi(x)||`` with one more matvec, and
takes the unit step ``x + d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dapg import beta_of, dapg_solve
from .subproblem import PhiPoint, Subproblem

ETA_MODES = ("geometric", "quadratic")


class BudgetMissError(RuntimeError):
    """The APG direction missed its residual target after the full budget."""

    def __init__(self, ratio, eta, budget):
        super().__init__(f"residual ratio {ratio:.3e} exceeds eta={eta:.3e} after {budget} APG iterations")
        self.ratio = ratio
        self.eta = eta
        self.budget = budget


def apg_budget(eta: float, mu: float, L: float) -> int:
    """``ceil(2 ln(sqrt(2L/mu)/eta) / ln(1/(1 - sqrt(mu/L))))``, at least 1."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if not (0 < mu <= L):
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if mu == L:
        return 1
    num = 2.0 * math.log(math.sqrt(2.0 * L / mu) / eta)
    den = -math.log1p(-math.sqrt(mu / L))
    return max(1, math.ceil(num / den))


def eta_schedule(mode: str, t: int, grad_norm: float, eta_bar: float = 0.5, floor: float = 1e-8) -> float:
    """Forcing term for Newton step ``t``.

    ``geometric``: ``min(eta_bar, 0.5**(t+1))``; ``quadratic``: ``min(eta_bar, ||grad||)``.
    Both are bounded below by ``floor``.
    """
    if mode == "geometric":
        eta = min(eta_bar, 0.5 ** (t + 1))
    elif mode == "quadratic":
        eta = min(eta_bar, grad_norm)
    else:
        raise ValueError(f"unknown eta schedule {mode!r}")
    return max(eta, floor)


@dataclass
class Direction:
    d: np.ndarray
    residual_ratio: float
    budget: int
    iterations: int
    capped: bool


def newton_direction(sub: Subproblem, point: PhiPoint, g: np.ndarray, grad_norm: float,
                     eta: float, sel=None, apg_cap: int | None = None) -> Direction:
    """Approximate Newton direction with a measured inexactness certificate."""
    net = sub.net
    zero = np.zeros_like(g)
    if grad_norm == 0.0:
        return Direction(zero, 0.0, 0, 0, False)
    if sel is None:
        sel = sub.select(point)
    L = sub.L
    budget = apg_budget(eta, sub.mu, L)
    iters = budget if apg_cap is None else min(budget, apg_cap)
    beta = beta_of(sub.mu, L)
    d, d_prev = zero, zero
    for _ in range(iters):
        d_tilde = net.local(lambda r: d[r] + beta * (d[r] - d_prev[r]))
        md = sub.hessian_matvec(sel, d_tilde)
        d_prev, d = d, net.local(lambda r: d_tilde[r] - (md[r] + g[r]) / L)
    resid = sub.hessian_matvec(sel, d) + g
    ratio = math.sqrt(sub.sq_norm(resid)) / grad_norm
    capped = iters < budget
    if ratio > eta and not capped:
        raise BudgetMissError(ratio, eta, budget)
    return Direction(d, ratio, budget, iters, capped)


def dissn_step(sub: Subproblem, x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Unit step ``x + d``; any cache at ``x`` is stale afterwards."""
    return sub.net.local(lambda r: x[r] + d[r])


@dataclass
class NewtonRecord:
    t: int
    eta: float
    budget: int
    apg_iters: int
    residual_ratio: float
    grad_norm: float
    rounds: int

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class DissnResult:
    x: np.ndarray
    point: PhiPoint
    grad: np.ndarray
    grad_norm: float
    steps: list = field(default_factory=list)
    capped: bool = False
    diverged: bool = False
    apg_capped: bool = False
    rewarms: list = field(default_factory=list)

    @property
    def newton_iters(self) -> int:
        return len(self.steps)

    @property
    def apg_iters(self) -> int:
        return sum(s.apg_iters for s in self.steps)

    @property
    def rewarm_iters(self) -> int:
        return sum(r["iterations"] for r in self.rewarms)


def dissn_solve(sub: Subproblem, x0=None, *, point: PhiPoint | None = None, accept=None,
                tol: float | None = None, eta_mode: str = "geometric", eta_bar: float = 0.5,
                eta_floor: float = 1e-8, newton_cap: int = 50, apg_cap: int | None = None,
                patience: int = 2, max_rewarms: int = 0, rewarm_factor: float = 0.1,
                rewarm_cap: int = 20000, callback=None) -> DissnResult:
    """Newton iterations from ``x0`` (or a prebuilt ``point``) until ``accept`` holds.

    ``accept(grad_norm, point, grad)`` decides termination; ``tol`` is shorthand
    for ``grad_norm <= tol``. ``callback(point)`` is invoked at every iterate.

    When the gradient norm grows for ``patience`` consecutive steps the start
    was outside the local convergence region. With ``max_rewarms = 0`` the run
    stops there, flagged ``diverged``. Otherwise DAPG is restarted from the best
    iterate seen until the gradient norm falls by ``rewarm_factor`` (or
    ``accept`` holds), and Newton resumes from that point.
    """
    if accept is None:
        if tol is None:
            raise ValueError("need either accept or tol")
        accept = lambda gn, *_: gn <= tol  # noqa: E731
    if point is None:
        point = sub.refresh_u(x0)
    g, gnorm = sub.grad_phi(point)
    steps, rewarms = [], []
    growth = 0
    apg_capped = False
    best = (gnorm, point, g)
    for t in range(newton_cap + 1):
        if callback is not None:
            callback(point)
        if accept(gnorm, point, g):
            return DissnResult(point.x, point, g, gnorm, steps, False, False, apg_capped, rewarms)
        if growth >= patience:
            if len(rewarms) >= max_rewarms:
                return DissnResult(point.x, point, g, gnorm, steps, False, True, apg_capped, rewarms)
            target = best[0] * rewarm_factor
            r0 = sub.net.ledger.rounds
            ws = dapg_solve(sub, best[1].x, lambda gn, p, gr: gn <= target or accept(gn, p, gr), rewarm_cap)
            point, g, gnorm = ws.point, ws.grad, ws.grad_norm
            rewarms.append({"after_step": t, "from_grad_norm": best[0], "grad_norm": gnorm,
                            "iterations": ws.iterations, "capped": ws.capped,
                            "rounds": sub.net.ledger.rounds - r0})
            growth = 0
            if gnorm < best[0]:
                best = (gnorm, point, g)
            if accept(gnorm, point, g):
                return DissnResult(point.x, point, g, gnorm, steps, False, False, apg_capped, rewarms)
        if t == newton_cap:
            break
        r0 = sub.net.ledger.rounds
        eta = eta_schedule(eta_mode, t, gnorm, eta_bar, eta_floor)
        direction = newton_direction(sub, point, g, gnorm, eta, apg_cap=apg_cap)
        apg_capped |= direction.capped
        x = dissn_step(sub, point.x, direction.d)
        point = sub.refresh_u(x)
        prev = gnorm
        g, gnorm = sub.grad_phi(point)
        steps.append(NewtonRecord(t, eta, direction.budget, direction.iterations,
                                  direction.residual_ratio, gnorm, sub.net.ledger.rounds - r0))
        growth = growth + 1 if gnorm > prev else 0
        if gnorm < best[0]:
            best = (gnorm, point, g)
    return DissnResult(point.x, point, g, gnorm, steps, True, False, apg_capped, rewarms)
