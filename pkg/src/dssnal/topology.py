"""Communication graphs and gossip matrices.

A :class:`GossipMatrix` stores one sparse row per agent (self weight
included), so multiplying by ``W = L kron I_n`` is a neighbor-local weighted
sum. Agents are indexed ``0..m-1`` internally; edge-list files are 1-indexed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TopologyError(ValueError):
    """Invalid graph or gossip construction."""


class ConnectivityError(TopologyError):
    """The graph has more than one connected component."""


class IncompleteExchangeError(KeyError):
    """A neighbor value needed for a weighted sum is missing."""


@dataclass(frozen=True)
class Graph:
    m: int
    edges: frozenset

    def __post_init__(self):
        if self.m < 1:
            raise TopologyError(f"agent count must be >= 1, got {self.m}")
        norm = set()
        for i, j in self.edges:
            if i == j:
                raise TopologyError(f"self-loop at agent {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise TopologyError(f"edge ({i}, {j}) out of range for m={self.m}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @property
    def neighbors(self) -> list[list[int]]:
        nbrs = [[] for _ in range(self.m)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return [sorted(n) for n in nbrs]

    def is_connected(self) -> bool:
        nbrs = self.neighbors
        seen = {0}
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for k in nbrs[i]:
                if k not in seen:
                    seen.add(k)
                    queue.append(k)
        return len(seen) == self.m


def complete_graph(m):
    return Graph(m, frozenset((i, j) for i in range(m) for j in range(i + 1, m)))


def ring_graph(m):
    if m < 3:
        return path_graph(m)
    return Graph(m, frozenset((i, (i + 1) % m) for i in range(m)))


def path_graph(m):
    return Graph(m, frozenset((i, i + 1) for i in range(m - 1)))


def grid_graph(m):
    """Near-square 2D grid with ``m`` nodes, filled row by row."""
    cols = int(np.ceil(np.sqrt(m)))
    edges = set()
    for i in range(m):
        r, c = divmod(i, cols)
        if c + 1 < cols and i + 1 < m:
            edges.add((i, i + 1))
        if i + cols < m:
            edges.add((i, i + cols))
    return Graph(m, frozenset(edges))


def erdos_renyi_graph(m, p, seed=0, max_tries=1000):
    """Erdos-Renyi graph, rejection-sampled until connected."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        draws = rng.random((m, m))
        edges = frozenset((i, j) for i in range(m) for j in range(i + 1, m) if draws[i, j] < p)
        g = Graph(m, edges)
        if g.is_connected():
            return g
    raise ConnectivityError(f"no connected ER(m={m}, p={p}) sample in {max_tries} tries")


def make_graph(spec: str, m: int, seed: int = 0) -> Graph:
    """Build a graph from a topology id: complete, ring, path, grid or ``er:p``."""
    if spec == "complete":
        return complete_graph(m)
    if spec == "ring":
        return ring_graph(m)
    if spec == "path":
        return path_graph(m)
    if spec == "grid":
        return grid_graph(m)
    if spec.startswith("er:"):
        return erdos_renyi_graph(m, float(spec[3:]), seed=seed)
    raise TopologyError(f"unknown topology {spec!r}")


def read_edge_list(path) -> Graph:
    """Read ``m`` on the first line, then one 1-indexed ``i j`` pair per line."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise TopologyError(f"{path}: empty edge-list file")
    m = int(lines[0])
    edges = set()
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 2:
            raise TopologyError(f"{path}:{lineno}: expected 'i j', got {ln!r}")
        i, j = int(parts[0]) - 1, int(parts[1]) - 1
        edges.add((i, j))
    return Graph(m, frozenset(edges))


def write_edge_list(graph: Graph, path):
    with open(path, "w") as fh:
        fh.write(f"{graph.m}\n")
        for i, j in sorted(graph.edges):
            fh.write(f"{i + 1} {j + 1}\n")


@dataclass(frozen=True, eq=False)
class GossipMatrix:
    """Symmetric PSD matrix with null space span{1}, held as per-agent rows.

    ``rows[i]`` maps each agent ``k`` in ``N_i`` plus ``i`` itself to ``L_ik``.
    Weighted sums always run over the keys of a row in ascending order, both
    in :func:`local_weighted_sum` and in :meth:`combine`, so the per-agent and
    all-agents paths give bit-identical results.
    """

    m: int
    rows: tuple
    graph: Graph
    lambda_max: float = field(init=False)
    cols: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = max(len(r) for r in self.rows)
        cols = np.empty((self.m, d), dtype=np.intp)
        weights = np.zeros((self.m, d))
        for i, row in enumerate(self.rows):
            keys = sorted(row)
            # padding slots point at the agent itself with weight 0
            cols[i, :] = i
            cols[i, : len(keys)] = keys
            weights[i, : len(keys)] = [row[k] for k in keys]
        cols.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "lambda_max", float(np.linalg.eigvalsh(self.dense())[-1]))

    @classmethod
    def from_dense(cls, L, graph: Graph | None = None, tol=0.0):
        L = np.asarray(L, dtype=float)
        m = L.shape[0]
        if graph is None:
            graph = Graph(m, frozenset((i, j) for i in range(m) for j in range(i + 1, m)
                                       if abs(L[i, j]) > tol or abs(L[j, i]) > tol))
        rows = tuple({k: float(L[i, k]) for k in range(m) if k == i or abs(L[i, k]) > tol}
                     for i in range(m))
        return cls(m, rows, graph)

    def dense(self) -> np.ndarray:
        L = np.zeros((self.m, self.m))
        for i, row in enumerate(self.rows):
            for k, w in row.items():
                L[i, k] = w
        return L

    @property
    def frobenius_sq(self) -> float:
        return float(sum(w * w for row in self.rows for w in row.values()))

    @property
    def b_norm_sq(self) -> float:
        """Squared spectral norm of ``B = [I; L kron I]``: ``1 + lambda_max(L)**2``."""
        return 1.0 + self.lambda_max ** 2

    def combine(self, gathered: np.ndarray, rows=slice(None)) -> np.ndarray:
        """Weighted sum over each agent's gathered neighborhood values.

        ``gathered`` has shape ``(k, d, n)``: for each of the selected agents,
        the values of the agents listed in ``self.cols[rows]``.
        """
        w = self.weights[rows]
        acc = np.zeros((gathered.shape[0],) + gathered.shape[2:])
        for s in range(w.shape[1]):
            acc = acc + w[:, s, None] * gathered[:, s]
        return acc

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Return the stacked blocks of ``(L kron I_n) v`` for ``values`` of shape (m, n)."""
        return self.combine(values[self.cols])


def local_weighted_sum(i: int, L: GossipMatrix, values: dict) -> np.ndarray:
    """Block ``i`` of ``(L kron I_n) v`` from the values agent ``i`` can see."""
    row = L.rows[i]
    missing = [k for k in row if k not in values]
    if missing:
        raise IncompleteExchangeError(f"agent {i} lacks values from {missing}")
    acc = np.zeros(np.shape(values[i]))
    for k in sorted(row):
        acc = acc + row[k] * np.asarray(values[k], dtype=float)
    # match the padded all-agents path, which adds 0 * own value per pad slot
    for _ in range(L.weights.shape[1] - len(row)):
        acc = acc + 0.0 * np.asarray(values[i], dtype=float)
    return acc


def build_projection_gossip(m: int) -> GossipMatrix:
    """``L = I - (1/m) 1 1^T`` on the complete graph."""
    if m < 2:
        raise TopologyError(f"projection gossip needs m >= 2, got {m}")
    L = np.eye(m) - np.full((m, m), 1.0 / m)
    return GossipMatrix.from_dense(L, complete_graph(m))


def build_laplacian_gossip(graph: Graph) -> GossipMatrix:
    """Combinatorial Laplacian ``D - A`` of a connected graph."""
    if not graph.is_connected():
        raise ConnectivityError("graph is not connected")
    nbrs = graph.neighbors
    rows = []
    for i in range(graph.m):
        row = {k: -1.0 for k in nbrs[i]}
        row[i] = float(len(nbrs[i]))
        rows.append(row)
    return GossipMatrix(graph.m, tuple(rows), graph)


def build_gossip(spec: str, m: int, seed: int = 0) -> GossipMatrix:
    """Projection gossip for ``complete``, graph Laplacian for the other families."""
    if spec == "complete":
        return build_projection_gossip(m)
    return build_laplacian_gossip(make_graph(spec, m, seed=seed))


@dataclass
class GossipReport:
    symmetric: bool
    psd: bool
    connectivity: bool
    graph_induced: bool
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.symmetric and self.psd and self.connectivity and self.graph_induced

    def lines(self) -> list[str]:
        names = [("a", "symmetry", self.symmetric), ("b", "positive semidefinite", self.psd),
                 ("c", "null space = span{1}", self.connectivity),
                 ("d", "graph induced", self.graph_induced)]
        return [f"({tag}) {name}: {'pass' if ok else 'FAIL'}" for tag, name, ok in names]


def validate_gossip(L, graph: Graph, tol_sym=1e-12, tol_psd=1e-10, tol_null=1e-10) -> GossipReport:
    """Check the four gossip-matrix properties. Failures are reported, not raised."""
    A = L.dense() if isinstance(L, GossipMatrix) else np.asarray(L, dtype=float)
    m = A.shape[0]
    if m != graph.m:
        raise TopologyError(f"dimension mismatch: matrix is {m}x{m}, graph has {graph.m} agents")
    scale = max(1.0, np.abs(A).max())
    symmetric = bool(np.abs(A - A.T).max() <= tol_sym * scale)
    evals, evecs = np.linalg.eigh(0.5 * (A + A.T))
    psd = bool(evals[0] >= -tol_psd * scale)
    null = np.flatnonzero(np.abs(evals) <= tol_null * scale)
    connectivity = False
    if null.size == 1:
        v = evecs[:, null[0]]
        ones = np.ones(m) / np.sqrt(m)
        connectivity = bool(abs(abs(v @ ones) - 1.0) <= 1e-8)
    adjacent = np.eye(m, dtype=bool)
    for i, j in graph.edges:
        adjacent[i, j] = adjacent[j, i] = True
    graph_induced = bool(np.all((A == 0) | adjacent))
    return GossipReport(symmetric, psd, connectivity, graph_induced, evals)
