"""Synchronous round-based message passing between agents.

Per-agent data lives in arrays whose leading axis is the agent index. The only
ways data moves between agents are :meth:`Network.exchange` (one neighbor round),
:meth:`Network.reduce_sum` (a global sum, billed separately) and
:meth:`Network.gather` (the centralized monitor). Local computation runs through
:meth:`Network.local`, which either applies an agent-separable kernel to all
agents at once or loops over agents one at a time; both give identical bits.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .topology import GossipMatrix

MODES = ("vectorized", "sequential")


class ProtocolError(RuntimeError):
    """Malformed payload for an exchange round."""


@dataclass
class CommLedger:
    rounds: int = 0
    vectors_sent: int = 0
    reduce_ops: int = 0
    gathers: int = 0

    def snapshot(self) -> dict:
        return asdict(self)


class Inbox:
    """Payloads delivered in one round.

    ``values[i]`` holds the payloads of the agents in ``gossip.cols[i]``: agent
    ``i``'s neighbors plus its own slot, which it never receives over the wire.
    """

    def __init__(self, gossip: GossipMatrix, payload: np.ndarray):
        self._gossip = gossip
        self.values = payload[gossip.cols]
        self.values.setflags(write=False)

    def of(self, i: int) -> dict:
        """Neighbor payloads received by agent ``i``."""
        nbrs = self._gossip.graph.neighbors[i]
        out = {}
        for slot, k in enumerate(self._gossip.cols[i]):
            if k in nbrs and k not in out:
                out[int(k)] = self.values[i, slot]
        return out

    def weighted_sum(self, rows=slice(None)) -> np.ndarray:
        """``sum_k L_ik payload_k`` over ``N_i`` and ``i`` for the selected agents."""
        return self._gossip.combine(self.values[rows], rows)


class Network:
    """Simulated synchronous network over a gossip matrix."""

    def __init__(self, gossip: GossipMatrix, mode: str = "vectorized"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.gossip = gossip
        self.m = gossip.m
        self.mode = mode
        self.ledger = CommLedger()
        self._directed_edges = 2 * len(gossip.graph.edges)

    def exchange(self, payload: np.ndarray) -> Inbox:
        """Every agent sends its row of ``payload`` to all of its neighbors."""
        payload = np.asarray(payload, dtype=float)
        if payload.ndim < 2 or payload.shape[0] != self.m:
            raise ProtocolError(f"payload must have one row per agent ({self.m}), got shape {payload.shape}")
        inbox = Inbox(self.gossip, payload)
        self.ledger.rounds += 1
        self.ledger.vectors_sent += self._directed_edges
        return inbox

    def reduce_sum(self, local) -> float | np.ndarray:
        """Global sum of per-agent values in fixed agent order; result known to every agent.

        ``local`` has shape ``(m,)`` or ``(m, k)``; several scalars may share one reduction.
        """
        local = np.asarray(local, dtype=float)
        if local.shape[0] != self.m:
            raise ProtocolError(f"reduce needs one value per agent, got shape {local.shape}")
        total = np.zeros(local.shape[1:])
        for i in range(self.m):
            total = total + local[i]
        self.ledger.reduce_ops += 1
        return float(total) if total.ndim == 0 else total

    def gather(self, blocks: np.ndarray) -> np.ndarray:
        """Centralized copy of all blocks, for monitoring only."""
        self.ledger.gathers += 1
        return np.array(blocks, dtype=float, copy=True)

    def local(self, fn: Callable[[slice], np.ndarray]) -> np.ndarray:
        """Run an agent-separable kernel ``fn(rows)`` for every agent.

        ``fn`` receives a slice of agent indices and must return an array whose
        leading axis matches that slice.
        """
        if self.mode == "vectorized":
            return fn(slice(None))
        return np.concatenate([fn(slice(i, i + 1)) for i in range(self.m)], axis=0)


@dataclass
class RunResult:
    state: object
    iterations: int
    capped: bool


def run_rounds(net: Network, program, state, until, max_iter: int) -> RunResult:
    """Repeat ``state = program(net, state)`` until ``until(state)`` or ``max_iter`` is hit."""
    for it in range(max_iter + 1):
        if until(state):
            return RunResult(state, it, False)
        if it == max_iter:
            break
        state = program(net, state)
    return RunResult(state, max_iter, True)


class TraceWriter:
    """Append-only JSON-lines sink, one record per line."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")

    def write(self, record: dict):
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
