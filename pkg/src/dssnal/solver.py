"""Outer augmented-Lagrangian loop, dual updates, stopping tests and the KKT monitor."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import prox
from .dapg import dapg_solve, warm_start
from .dissn import ETA_MODES, dissn_solve
from .netsim import Network, TraceWriter
from .problems import ProblemInstance
from .subproblem import Subproblem
from .topology import GossipMatrix

log = logging.getLogger(__name__)

CRITERIA = ("A", "B", "C", "combined")
DUAL_MODES = ("algorithm3", "plain")
SIGMA_INDEX_MODES = ("algorithm3", "alm")
INNER_SOLVERS = ("dssnal", "dapg")


class ConfigError(ValueError):
    pass


@dataclass
class SolverConfig:
    sigma0: float = 1.0
    sigma_growth: float = 1.5
    sigma_max: float = 1e6
    criterion: str = "A"
    eps_scale: float = 0.5
    delta_scale: float = 0.5
    delta_prime_scale: float = 1.0
    eta_mode: str = "geometric"
    eta_bar: float = 0.5
    eta_floor: float = 1e-8
    tol_ws: float = 0.5
    ws_cap: int = 5000
    max_outer: int = 100
    newton_cap: int = 50
    apg_cap: int = 200000
    dapg_inner_cap: int = 20000
    patience: int = 2
    max_rewarms: int = 10
    rewarm_factor: float = 0.1
    tol: float = 1e-6
    dual_update: str = "algorithm3"
    sigma_index: str = "algorithm3"
    solver: str = "dssnal"

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ConfigError(f"sigma0 must be > 0, got {self.sigma0}")
        if self.sigma_growth < 1:
            raise ConfigError(f"sigma_growth must be >= 1, got {self.sigma_growth}")
        if self.sigma_max < self.sigma0:
            raise ConfigError("sigma_max must be >= sigma0")
        for name, value, allowed in [("criterion", self.criterion, CRITERIA),
                                     ("dual_update", self.dual_update, DUAL_MODES),
                                     ("sigma_index", self.sigma_index, SIGMA_INDEX_MODES),
                                     ("eta_mode", self.eta_mode, ETA_MODES),
                                     ("solver", self.solver, INNER_SOLVERS)]:
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")

    # geometric sequences: summable eps, delta and vanishing delta'
    def eps(self, k):
        return self.eps_scale * 0.5 ** k

    def delta(self, k):
        return self.delta_scale * 0.5 ** k

    def delta_prime(self, k):
        return self.delta_prime_scale * 0.5 ** k

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


def check_stop(criterion: str, grad_norm: float, lambda_delta_norm: float, sigma: float,
               k: int, mu: float, config: SolverConfig) -> bool:
    """Implementable inner stopping tests for outer iteration ``k``."""
    g2 = grad_norm * grad_norm
    a = g2 <= config.eps(k) ** 2 * mu / sigma
    if criterion == "A":
        return a
    b = g2 <= config.delta(k) ** 2 * mu / sigma * lambda_delta_norm ** 2
    c = grad_norm <= config.delta_prime(k) / sigma * lambda_delta_norm
    if criterion == "B":
        return b
    if criterion == "C":
        return c
    if criterion == "combined":
        return a and b and c
    raise ConfigError(f"unknown criterion {criterion!r}")


def dual_update(net: Network, problem: ProblemInstance, x: np.ndarray, sigma: float,
                lam_upper: np.ndarray, lam_lower: np.ndarray, mode: str = "algorithm3"):
    """New multipliers from ``x`` and penalty ``sigma``.

    ``u_i = sigma x_i - lam_i`` and ``u_{i+m} = sigma (W x)_i - lam_{i+m}``;
    then ``lam_i <- -Prox_{sigma g_i*}(u_i)`` and either
    ``lam_{i+m} <- -(W u_lower)_i`` (``algorithm3``, two rounds) or
    ``lam_{i+m} <- -u_{i+m}`` (``plain``, one round).
    """
    inbox_x = net.exchange(x)
    u_lower = net.local(lambda r: sigma * inbox_x.weighted_sum(r) - lam_lower[r])
    new_upper = net.local(lambda r: -problem.prox_conj(sigma * x[r] - lam_upper[r]))
    if mode == "algorithm3":
        inbox_u = net.exchange(u_lower)
        new_lower = net.local(lambda r: -inbox_u.weighted_sum(r))
    elif mode == "plain":
        new_lower = -u_lower
    else:
        raise ConfigError(f"unknown dual update mode {mode!r}")
    return new_upper, new_lower


def is_idempotent(gossip: GossipMatrix, tol: float = 1e-12) -> bool:
    L = gossip.dense()
    return bool(np.abs(L @ L - L).max() <= tol * max(1.0, np.abs(L).max()))


def kkt_residual(x: np.ndarray, problem: ProblemInstance, gossip: GossipMatrix) -> float:
    """Scaled KKT residual ``(||W x|| + ||x - Prox_G(x - A grad F(x))||) / (1 + ||x||)``.

    ``A grad F(x)`` broadcasts the agent-average gradient to every block.
    """
    x = np.asarray(x, dtype=float)
    wx = gossip.apply(x)
    avg = problem.grad(x).mean(axis=0)
    step = x - avg[None, :]
    fixed = x - prox.prox_l1(step, problem.l1_level)
    return float((np.linalg.norm(wx) + np.linalg.norm(fixed)) / (1.0 + np.linalg.norm(x)))


@dataclass
class SolveResult:
    x: np.ndarray
    x_bar: np.ndarray
    trace: list
    summary: dict
    lam_upper: np.ndarray = field(repr=False, default=None)
    lam_lower: np.ndarray = field(repr=False, default=None)

    @property
    def converged(self) -> bool:
        return self.summary["converged"]


def solve(problem: ProblemInstance, gossip: GossipMatrix, config: SolverConfig | None = None,
          net: Network | None = None, trace_path=None, x0=None) -> SolveResult:
    """Run the distributed augmented-Lagrangian method.

    The inner problem is solved by the semismooth Newton method (``solver="dssnal"``),
    warm-started by DAPG at the first outer iteration, or by DAPG alone
    (``solver="dapg"``, the first-order baseline). Terminates when the KKT
    residual drops below ``config.tol`` or after ``config.max_outer`` iterations.
    """
    cfg = config or SolverConfig()
    if net is None:
        net = Network(gossip)
    if net.m != problem.m:
        raise ConfigError(f"network has {net.m} agents, problem has {problem.m}")
    if cfg.dual_update == "algorithm3" and not is_idempotent(gossip):
        log.warning("dual_update='algorithm3' matches the augmented-Lagrangian multiplier step only "
                    "when L^2 = L (projection gossip); with this gossip matrix it can diverge, "
                    "consider dual_update='plain'")
    mu, L_F, _, _ = problem.smoothness_constants()
    shape = (problem.m, problem.n)
    x = np.zeros(shape) if x0 is None else np.array(x0, dtype=float)
    lam_u, lam_l = np.zeros(shape), np.zeros(shape)
    sigma = cfg.sigma0
    trace = []
    writer = TraceWriter(trace_path) if trace_path is not None else None
    R = kkt_residual(net.gather(x), problem, gossip)
    ws_iters_total = 0
    apg_total = 0
    k = 0
    try:
        for k in range(cfg.max_outer):
            ledger0 = net.ledger.snapshot()
            sub = Subproblem(problem, net, sigma, lam_u, lam_l, L_F=L_F, mu=mu)
            sigma_next = min(cfg.sigma_max, cfg.sigma_growth * sigma)
            sigma_dual = sigma_next if cfg.sigma_index == "algorithm3" else sigma
            candidate = {}

            def accept(gnorm, point, g, k=k, sub=sub, sigma_dual=sigma_dual, candidate=candidate):
                delta = 0.0
                if cfg.criterion != "A":
                    nu, nl = dual_update(net, problem, point.x, sigma_dual, lam_u, lam_l, cfg.dual_update)
                    delta = math.sqrt(sub.sq_norm(nu - lam_u) + sub.sq_norm(nl - lam_l))
                    candidate.update(x=point.x, upper=nu, lower=nl, delta=delta)
                return check_stop(cfg.criterion, gnorm, delta, sub.sigma, k, mu, cfg)

            record = {"iteration": k, "sigma": sigma, "mu_phi": sub.mu, "L_phi": sub.L}
            ws = None
            if cfg.solver == "dssnal":
                point = None
                if k == 0:
                    ws = warm_start(sub, cfg.tol_ws, cfg.ws_cap, x)
                    point = ws.point
                    ws_iters_total += ws.iterations
                    record.update(ws_iters=ws.iterations, ws_evals=ws.evaluations, ws_capped=ws.capped,
                                  ws_rounds=net.ledger.rounds - ledger0["rounds"])
                res = dissn_solve(sub, x, point=point, accept=accept, eta_mode=cfg.eta_mode,
                                  eta_bar=cfg.eta_bar, eta_floor=cfg.eta_floor,
                                  newton_cap=cfg.newton_cap, apg_cap=cfg.apg_cap, patience=cfg.patience,
                                  max_rewarms=cfg.max_rewarms, rewarm_factor=cfg.rewarm_factor,
                                  rewarm_cap=cfg.dapg_inner_cap)
                x, gnorm = res.x, res.grad_norm
                inner = res.newton_iters
                apg = res.apg_iters + res.rewarm_iters
                record.update(newton=[s.as_dict() for s in res.steps], rewarms=res.rewarms,
                              inner_capped=res.capped, diverged=res.diverged, apg_capped=res.apg_capped)
            else:
                res = dapg_solve(sub, x, accept, cfg.dapg_inner_cap)
                x, gnorm = res.x, res.grad_norm
                inner = 0
                apg = res.iterations
                record.update(inner_capped=res.capped)
            apg_total += apg + (ws.iterations if ws is not None else 0)

            r_dual = net.ledger.rounds
            if candidate and np.array_equal(candidate["x"], x):
                new_u, new_l = candidate["upper"], candidate["lower"]
            else:
                new_u, new_l = dual_update(net, problem, x, sigma_dual, lam_u, lam_l, cfg.dual_update)
            dual_rounds = net.ledger.rounds - r_dual
            lam_delta = math.sqrt(sub.sq_norm(new_u - lam_u) + sub.sq_norm(new_l - lam_l))
            lam_u, lam_l = new_u, new_l

            xg = net.gather(x)
            R = kkt_residual(xg, problem, gossip)
            x_bar = xg.mean(axis=0)
            record.update(R_KKT=R, grad_phi_norm=gnorm, lambda_delta_norm=lam_delta,
                          inner_newton_iters=inner, apg_iters=apg, dual_rounds=dual_rounds,
                          lambda_norm=math.sqrt(float((lam_u ** 2).sum() + (lam_l ** 2).sum())),
                          objective=problem.objective(x_bar),
                          rounds=net.ledger.rounds - ledger0["rounds"],
                          reduce_ops=net.ledger.reduce_ops - ledger0["reduce_ops"])
            trace.append(record)
            if writer is not None:
                writer.write(record)
            log.info("outer %d: R_KKT=%.3e |grad phi|=%.3e sigma=%.3g newton=%d apg=%d",
                     k, R, gnorm, sigma, inner, apg)
            if R < cfg.tol:
                break
            sigma = sigma_next
    finally:
        if writer is not None:
            writer.close()

    xg = net.gather(x)
    x_bar = xg.mean(axis=0)
    outer = len(trace)
    summary = {
        "solver": cfg.solver,
        "converged": bool(R < cfg.tol),
        "R_KKT": R,
        "outer_iters": outer,
        "ws_iters": ws_iters_total,
        "apg_iters": apg_total,
        "newton_iters": sum(r.get("inner_newton_iters", 0) for r in trace),
        "iter": f"{outer}({ws_iters_total if cfg.solver == 'dssnal' else apg_total})",
        "objective": problem.objective(x_bar),
        "consensus_gap": float(np.abs(xg - x_bar).max()),
        "m": problem.m, "n": problem.n, "S": problem.S,
        **{f"total_{key}": v for key, v in net.ledger.snapshot().items()},
    }
    return SolveResult(xg, x_bar, trace, summary, lam_u, lam_l)


def config_to_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)
