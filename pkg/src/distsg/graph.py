"""Sensor-network topologies, Metropolis weights and Laplacian spectra.

Nodes are 1-based everywhere a user sees them (edge lists, reports) and
0-based inside arrays.
"""

from __future__ import annotations

import re
import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import DegenerateWeightWarning, ValidationError

ROW_SUM_TOL = 1e-12
_N_HEADER = re.compile(r"^\s*#\s*n\s*=\s*(\d+)\s*$")


@dataclass(frozen=True)
class Topology:
    """Undirected graph on nodes ``1..n`` without self-loops.

    ``edges`` is normalised to a frozenset of ``(i, j)`` tuples with ``i < j``.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n!r}")
        normalised = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ValidationError(f"self-loop ({i}, {j}) is not allowed")
            for v in (i, j):
                if not 1 <= v <= self.n:
                    raise ValidationError(f"edge endpoint {v} outside 1..{self.n}")
            normalised.add((min(i, j), max(i, j)))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", frozenset(normalised))

    @cached_property
    def neighbors(self):
        """0-based adjacency lists, self excluded."""
        adj = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            adj[i - 1].append(j - 1)
            adj[j - 1].append(i - 1)
        return tuple(tuple(a) for a in adj)

    @property
    def degrees(self):
        return np.array([len(a) for a in self.neighbors], dtype=int)

    def adjacency(self):
        adj = np.zeros((self.n, self.n))
        for i, j in self.edges:
            adj[i - 1, j - 1] = adj[j - 1, i - 1] = 1.0
        return adj


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Symmetric row-stochastic weight matrix of a topology."""

    a: np.ndarray
    topology: Topology | None = None

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self):
        return self.a.shape[0]

    @cached_property
    def sparse(self):
        return sp.csr_matrix(self.a)

    @cached_property
    def sparse_t(self):
        return sp.csr_matrix(self.a.T)

    @cached_property
    def row_sums(self):
        return self.a.sum(axis=1)

    @cached_property
    def col_sums(self):
        return self.a.sum(axis=0)

    def laplacian(self):
        return np.eye(self.n) - self.a

    def power_min_entry(self, q):
        """Smallest entry of ``a**q`` (matrix power)."""
        return float(np.linalg.matrix_power(self.a, q).min())


@dataclass(frozen=True)
class LaplacianSpectrum:
    eigenvalues: np.ndarray
    l2: float
    connected: bool
    diameter: int | None


def build_metropolis(topology):
    """Metropolis weights: ``1 / (1 + max(deg_i, deg_j))`` on edges, remainder on the diagonal."""
    n = topology.n
    deg = topology.degrees
    a = np.zeros((n, n))
    for i, j in topology.edges:
        w = 1.0 / (1.0 + max(deg[i - 1], deg[j - 1]))
        a[i - 1, j - 1] = a[j - 1, i - 1] = w
    # summing the off-diagonals in a fixed order keeps a[i][i] deterministic
    for i in range(n):
        a[i, i] = 1.0 - sum(a[i, k] for k in range(n) if k != i)
    return WeightMatrix(a, topology)


def weight_matrix_from_array(a, topology=None):
    """Wrap a user-supplied matrix after checking the weight-matrix invariants.

    Only validation is performed; the matrix is not repaired.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"weight matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("weight matrix has non-finite entries")
    if not np.array_equal(a, a.T):
        raise ValidationError("weight matrix is not exactly symmetric")
    if np.any(a < 0):
        raise ValidationError("weight matrix has negative entries")
    bad = np.abs(a.sum(axis=1) - 1.0) > ROW_SUM_TOL
    if np.any(bad):
        rows = (np.flatnonzero(bad) + 1).tolist()
        raise ValidationError(f"rows {rows} do not sum to 1 within {ROW_SUM_TOL}")
    if topology is not None:
        if topology.n != a.shape[0]:
            raise ValidationError("topology size does not match weight matrix")
        adj = topology.adjacency() > 0
        off = ~np.eye(a.shape[0], dtype=bool)
        if np.any((a[off] > 0) != adj[off]):
            raise ValidationError("weight support does not match the edge set")
    zero_diag = np.flatnonzero(np.diag(a) == 0.0)
    if zero_diag.size:
        warnings.warn(
            f"weight matrix has zero diagonal at nodes {(zero_diag + 1).tolist()}",
            DegenerateWeightWarning,
            stacklevel=2,
        )
    return WeightMatrix(a, topology)


def connectivity_and_diameter(topology):
    """BFS from every node. Returns ``(connected, diameter)``; diameter is None if disconnected."""
    n = topology.n
    adj = topology.neighbors
    diameter = 0
    for src in range(n):
        dist = [-1] * n
        dist[src] = 0
        queue = deque([src])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        if min(dist) < 0:
            return False, None
        diameter = max(diameter, max(dist))
    return True, diameter


def laplacian_spectrum(w, topology=None):
    """Sorted eigenvalues of ``I - A`` plus connectivity data.

    ``l2`` is the second-smallest eigenvalue (0.0 for a single node). For the
    Kronecker lift ``L (x) I_m`` every eigenvalue repeats m times, so ``l2``
    is also its (m+1)-th smallest eigenvalue.
    """
    topology = topology or w.topology
    if topology is None:
        raise ValidationError("laplacian_spectrum needs the topology for the diameter")
    try:
        ev = np.linalg.eigvalsh(w.laplacian())
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"symmetric eigensolver failed on the Laplacian: {exc}") from exc
    ev = np.sort(ev)
    connected, diameter = connectivity_and_diameter(topology)
    l2 = float(ev[1]) if len(ev) > 1 else 0.0
    return LaplacianSpectrum(ev, l2, connected, diameter)


def kron_laplacian(w, m):
    """Dense ``(I - A) (x) I_m``."""
    return np.kron(w.laplacian(), np.eye(m))


# -- constructors and presets -------------------------------------------------


def path_graph(n):
    return Topology(n, frozenset((i, i + 1) for i in range(1, n)))


def ring_graph(n):
    if n < 3:
        return path_graph(n)
    return Topology(n, frozenset((i, i % n + 1) for i in range(1, n + 1)))


def complete_graph(n):
    return Topology(n, frozenset((i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)))


def ring_with_chords(n, stride):
    edges = set(ring_graph(n).edges)
    for i in range(1, n + 1):
        j = (i - 1 + stride) % n + 1
        if j != i:
            edges.add((min(i, j), max(i, j)))
    return Topology(n, frozenset(edges))


def random_connected_graph(n, rng, extra_edge_prob=0.3):
    """Random spanning tree plus independent extra edges; always connected."""
    edges = set()
    order = rng.permutation(n) + 1
    for idx in range(1, n):
        parent = order[rng.integers(0, idx)]
        child = order[idx]
        edges.add((min(parent, child), max(parent, child)))
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if rng.random() < extra_edge_prob:
                edges.add((i, j))
    return Topology(n, frozenset(edges))


PRESETS = {
    # 28-node ring with chords (i, i+7 mod 28), degree 4, diameter 5
    "ring28plus": lambda: ring_with_chords(28, 7),
}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValidationError(
            f"unknown topology preset {name!r}; known: {sorted(PRESETS)}"
        ) from None


def load_edgelist(path, n=None):
    """Read ``i j`` pairs (1-based), one per line; ``#`` starts a comment.

    ``n`` defaults to a ``# n = <count>`` header line if present, otherwise to
    the largest node index seen.
    """
    path = Path(path)
    edges = set()
    max_node = 0
    declared = None
    if not path.is_file():
        raise ValidationError(f"edge list {path} does not exist")
    with path.open() as fh:
        for lineno, raw in enumerate(fh, 1):
            header = _N_HEADER.match(raw)
            if header:
                declared = int(header.group(1))
                continue
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'i j', got {raw.strip()!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-integer node in {raw.strip()!r}") from None
            if i < 1 or j < 1:
                raise ValidationError(f"{path}:{lineno}: node indices are 1-based")
            edges.add((i, j))
            max_node = max(max_node, i, j)
    if n is None:
        n = declared if declared is not None else max_node
    if n < 1:
        raise ValidationError(f"{path}: no nodes found")
    return Topology(n, frozenset(edges))


def write_edgelist(topology, path):
    lines = [f"# n = {topology.n}"] + [f"{i} {j}" for i, j in sorted(topology.edges)]
    Path(path).write_text("\n".join(lines) + "\n")
