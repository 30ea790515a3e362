"""Problem families: Huber regression + L1 and squared-hinge SVC + L1.

Agent ``i`` holds ``f_i(w) = loss over its samples + rho/(2m) ||w||^2`` and
``g_i(w) = (gamma/m) ||w||_1``. Data is stored padded to a common per-agent
sample count so every oracle runs over all agents at once; padded rows are
zero and masked out. Oracles take a ``rows`` slice selecting the agents whose
blocks are passed in, which is how :meth:`netsim.Network.local` drives them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import prox

FAMILIES = ("huber", "svc")


class FamilyMismatchError(TypeError):
    """An oracle for one problem family was called on the other."""


class DataError(ValueError):
    """Invalid labels, shapes or non-finite data."""


def contiguous_partition(S: int, m: int) -> list[np.ndarray]:
    return np.array_split(np.arange(S), m)


def random_partition(S: int, m: int, seed: int = 0) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(S)
    return [np.sort(p) for p in np.array_split(perm, m)]


@dataclass(eq=False)
class ProblemInstance:
    family: str
    A: np.ndarray
    b: np.ndarray
    partition: list
    rho: float = 1.0
    gamma: float = 0.0
    nu: float = 1.0
    C: float = 1.0
    A_pad: np.ndarray = field(init=False, repr=False)
    b_pad: np.ndarray = field(init=False, repr=False)
    mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}")
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise DataError(f"feature matrix {self.A.shape} and labels {self.b.shape} disagree")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise DataError("data contains NaN or inf")
        if self.family == "svc" and not np.all(np.isin(self.b, (-1.0, 1.0))):
            raise DataError("classification labels must be -1 or +1")
        if self.rho <= 0 or self.gamma < 0:
            raise DataError(f"need rho > 0 and gamma >= 0, got rho={self.rho}, gamma={self.gamma}")
        if self.family == "huber" and self.nu <= 0:
            raise DataError(f"Huber parameter must be > 0, got {self.nu}")
        if self.family == "svc" and self.C <= 0:
            raise DataError(f"C must be > 0, got {self.C}")
        self.partition = [np.asarray(p, dtype=np.intp) for p in self.partition]
        seen = np.concatenate(self.partition) if self.partition else np.array([], dtype=np.intp)
        if len(self.partition) < 1 or not np.array_equal(np.sort(seen), np.arange(self.S)):
            raise DataError("partition must be disjoint and cover every sample")

        smax = max(len(p) for p in self.partition)
        m, n = self.m, self.n
        self.A_pad = np.zeros((m, smax, n))
        self.b_pad = np.zeros((m, smax))
        self.mask = np.zeros((m, smax))
        for i, idx in enumerate(self.partition):
            self.A_pad[i, : len(idx)] = self.A[idx]
            self.b_pad[i, : len(idx)] = self.b[idx]
            self.mask[i, : len(idx)] = 1.0

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def S(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.partition)

    @property
    def l1_level(self) -> float:
        return self.gamma / self.m

    @property
    def ridge(self) -> float:
        return self.rho / self.m

    # -- smooth part -------------------------------------------------------

    def _scores(self, X, rows):
        return np.matmul(self.A_pad[rows], X[:, :, None])[:, :, 0]

    def _back(self, coef, rows):
        return np.matmul(coef[:, None, :], self.A_pad[rows])[:, 0, :]

    def grad(self, X: np.ndarray, rows=slice(None)) -> np.ndarray:
        """Per-agent gradients ``grad f_i(x_i)`` for the agents in ``rows``."""
        s = self._scores(X, rows)
        mask = self.mask[rows]
        if self.family == "huber":
            r = s - self.b_pad[rows]
            coef = prox.clip(r, self.nu) * mask / self.nu
        else:
            b = self.b_pad[rows]
            coef = -2.0 * self.C * np.maximum(0.0, 1.0 - b * s) * b * mask
        return self._back(coef, rows) + self.ridge * X

    def curvature(self, X: np.ndarray, rows=slice(None)) -> np.ndarray:
        """Per-sample weights defining the Jacobian selection ``V_i`` at ``X``.

        ``V_i = sum_j c_j a_j a_j^T + (rho/m) I`` with ``c_j`` returned here.
        """
        s = self._scores(X, rows)
        mask = self.mask[rows]
        if self.family == "huber":
            return prox.clip_jacobian(s - self.b_pad[rows], self.nu) * mask / self.nu
        return 2.0 * self.C * prox.relu_jacobian(1.0 - self.b_pad[rows] * s) * mask

    def hess_matvec(self, curv: np.ndarray, D: np.ndarray, rows=slice(None)) -> np.ndarray:
        """``V_i d_i`` for the frozen selection ``curv`` (from :meth:`curvature`)."""
        return self._back(curv * self._scores(D, rows), rows) + self.ridge * D

    def local_values(self, X: np.ndarray, rows=slice(None)) -> np.ndarray:
        """``f_i(x_i)`` for each selected agent."""
        s = self._scores(X, rows)
        mask = self.mask[rows]
        if self.family == "huber":
            r = np.abs(s - self.b_pad[rows])
            loss = np.where(r <= self.nu, r * r / (2 * self.nu), r - self.nu / 2)
        else:
            loss = self.C * np.maximum(0.0, 1.0 - self.b_pad[rows] * s) ** 2
        return (loss * mask).sum(axis=1) + 0.5 * self.ridge * (X * X).sum(axis=1)

    def objective(self, w: np.ndarray) -> float:
        """Value of ``sum_i f_i(w) + g_i(w)`` at a common point ``w``."""
        X = np.broadcast_to(w, (self.m, self.n))
        return float(self.local_values(np.ascontiguousarray(X)).sum() + self.gamma * np.abs(w).sum())

    # -- nonsmooth part ----------------------------------------------------

    def prox_conj(self, U: np.ndarray, sigma: float | None = None) -> np.ndarray:
        """``Prox_{sigma g_i^*}(u_i)``; ``sigma`` is accepted but has no effect."""
        return prox.prox_l1_conjugate(U, self.l1_level)

    def prox_conj_jacobian(self, U: np.ndarray) -> np.ndarray:
        """Diagonal of the selection ``H_i``, entries in {0, 1}."""
        return prox.clip_jacobian(U, self.l1_level)

    # -- constants ---------------------------------------------------------

    def smoothness_constants(self, iters: int = 50, rtol: float = 1e-6, seed: int = 0):
        """Return ``(mu, L_F, mu_i, L_i)``.

        The data-dependent part of ``L_i`` uses a power-iteration estimate of
        ``lambda_max(A_i^T A_i)``, falling back to ``||A_i||_F^2`` when the
        iteration does not settle.
        """
        scale = 1.0 / self.nu if self.family == "huber" else 2.0 * self.C
        mu_i = np.full(self.m, self.ridge)
        lam = np.array([gram_lambda_max(self.A[idx], iters, rtol, seed) for idx in self.partition])
        L_i = self.ridge + scale * lam
        return float(mu_i.min()), float(L_i.max()), mu_i, L_i


def gram_lambda_max(A_i: np.ndarray, iters: int = 50, rtol: float = 1e-6, seed: int = 0) -> float:
    """Upper estimate of ``lambda_max(A_i^T A_i)``.

    Power iteration; the returned value is the Rayleigh quotient plus its
    residual norm, which bounds the eigenvalue the iteration converged to.
    """
    if A_i.shape[0] == 0:
        return 0.0
    frob = float((A_i * A_i).sum())
    if frob == 0.0:
        return 0.0
    v = np.random.default_rng(seed).standard_normal(A_i.shape[1])
    v /= np.linalg.norm(v)
    theta = 0.0
    for _ in range(iters):
        w = A_i.T @ (A_i @ v)
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return frob
        converged = abs(new - theta) <= rtol * abs(new)
        theta = new
        resid = float(np.linalg.norm(w - theta * v))
        v = w / nw
        if converged:
            return min(theta + resid, frob)
    return frob


def _agent_block(inst: ProblemInstance, i: int, w) -> np.ndarray:
    if not 0 <= i < inst.m:
        raise IndexError(f"agent {i} out of range for m={inst.m}")
    return np.asarray(w, dtype=float).reshape(1, inst.n)


def _require(inst, family):
    if inst.family != family:
        raise FamilyMismatchError(f"{family} oracle called on a {inst.family} instance")


def huber_grad(inst: ProblemInstance, i: int, w) -> np.ndarray:
    _require(inst, "huber")
    return inst.grad(_agent_block(inst, i, w), slice(i, i + 1))[0]


def huber_hess_matvec(inst: ProblemInstance, i: int, w, d) -> np.ndarray:
    _require(inst, "huber")
    rows = slice(i, i + 1)
    curv = inst.curvature(_agent_block(inst, i, w), rows)
    return inst.hess_matvec(curv, _agent_block(inst, i, d), rows)[0]


def svc_grad(inst: ProblemInstance, i: int, w) -> np.ndarray:
    _require(inst, "svc")
    return inst.grad(_agent_block(inst, i, w), slice(i, i + 1))[0]


def svc_hess_matvec(inst: ProblemInstance, i: int, w, d) -> np.ndarray:
    _require(inst, "svc")
    rows = slice(i, i + 1)
    curv = inst.curvature(_agent_block(inst, i, w), rows)
    return inst.hess_matvec(curv, _agent_block(inst, i, d), rows)[0]


def make_instance(family, A, b, m, rho=1.0, gamma=0.0, nu=1.0, C=1.0,
                  partition="contiguous", seed=0) -> ProblemInstance:
    S = np.asarray(A).shape[0]
    if partition == "contiguous":
        parts = contiguous_partition(S, m)
    elif partition == "random":
        parts = random_partition(S, m, seed)
    else:
        raise ValueError(f"unknown partition mode {partition!r}")
    return ProblemInstance(family, A, b, parts, rho=rho, gamma=gamma, nu=nu, C=C)
