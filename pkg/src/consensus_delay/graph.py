"""Communication topologies and the spectra of their protocol matrices.

Agents are numbered from 1 in files and user-facing output; all matrices are
0-indexed numpy arrays.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

SPECIAL_TOL = 1e-8


class TopologyError(ValueError):
    """Base class for invalid topologies."""


class TopologyParseError(TopologyError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConnectivityError(TopologyError):
    def __init__(self, unreachable):
        self.unreachable = tuple(unreachable)
        agents = ", ".join(str(i) for i in self.unreachable)
        super().__init__(f"topology is disconnected; agents not reachable from agent 1: {agents}")


class DegreeError(TopologyError):
    pass


class SpectralError(RuntimeError):
    pass


class ProtocolKind(enum.Enum):
    """A: neighbours delayed, own state current. B: own state delayed too (self delay)."""

    A = "a"
    B = "b"

    @classmethod
    def parse(cls, value) -> "ProtocolKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown protocol {value!r}; expected 'a' or 'b'") from None

    @property
    def special_eigenvalue(self) -> float:
        return 1.0 if self is ProtocolKind.A else 0.0


@dataclass(frozen=True)
class Topology:
    """Undirected graph on ``n`` agents. Edges are stored as sorted 1-based pairs."""

    n: int
    edges: frozenset
    degrees: tuple = field(init=False)

    def __post_init__(self):
        if self.n < 2:
            raise TopologyError(f"need at least 2 agents, got {self.n}")
        norm = set()
        for i, j in self.edges:
            if i == j:
                raise TopologyError(f"self-loop at agent {i}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise TopologyError(f"edge ({i}, {j}) out of range 1..{self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        deg = [0] * self.n
        for i, j in norm:
            deg[i - 1] += 1
            deg[j - 1] += 1
        object.__setattr__(self, "degrees", tuple(deg))

    @classmethod
    def from_edges(cls, n: int, edges) -> "Topology":
        return cls(n, frozenset(tuple(e) for e in edges))

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i, j in self.edges:
            A[i - 1, j - 1] = A[j - 1, i - 1] = 1.0
        return A

    def neighbours(self, i: int) -> list[int]:
        out = [b for a, b in self.edges if a == i] + [a for a, b in self.edges if b == i]
        return sorted(out)


def parse_topology(text: str) -> Topology:
    """Parse the plain-text topology format.

    The first non-comment line holds the agent count; every following
    non-empty line is a whitespace separated pair ``i j``. Everything after
    a ``#`` is a comment. Duplicate edges collapse.
    """
    n = None
    edges = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 1:
                raise TopologyParseError(f"expected agent count, got {line!r}", lineno)
            try:
                n = int(parts[0])
            except ValueError:
                raise TopologyParseError(f"agent count is not an integer: {parts[0]!r}", lineno) from None
            if n < 2:
                raise TopologyParseError(f"need at least 2 agents, got {n}", lineno)
            continue
        if len(parts) != 2:
            raise TopologyParseError(f"expected 'i j', got {line!r}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise TopologyParseError(f"non-integer agent index in {line!r}", lineno) from None
        if i == j:
            raise TopologyParseError(f"self-loop at agent {i}", lineno)
        if not (1 <= i <= n and 1 <= j <= n):
            raise TopologyParseError(f"agent index out of range 1..{n} in {line!r}", lineno)
        edges.add((min(i, j), max(i, j)))
    if n is None:
        raise TopologyParseError("empty topology file")
    return Topology(n, frozenset(edges))


def read_topology(path) -> Topology:
    with open(path, encoding="utf-8") as fh:
        return parse_topology(fh.read())


def format_topology(t: Topology) -> str:
    lines = [str(t.n)] + [f"{i} {j}" for i, j in sorted(t.edges)]
    return "\n".join(lines) + "\n"


def unreachable_agents(t: Topology) -> list[int]:
    """Agents (1-based) that breadth-first search from agent 1 does not reach."""
    adj = {i: [] for i in range(1, t.n + 1)}
    for i, j in t.edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {1}
    queue = deque([1])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return [i for i in range(1, t.n + 1) if i not in seen]


def is_connected(t: Topology) -> bool:
    return not unreachable_agents(t)


def require_connected(t: Topology) -> None:
    missing = unreachable_agents(t)
    if missing:
        raise ConnectivityError(missing)


def laplacian(t: Topology) -> np.ndarray:
    """L = diag(degrees) - A."""
    return np.diag(np.asarray(t.degrees, dtype=float)) - t.adjacency()


def weighted_adjacency(t: Topology) -> np.ndarray:
    """Row-normalised adjacency C = diag(degrees)^-1 A."""
    deg = np.asarray(t.degrees, dtype=float)
    if np.any(deg < 1):
        isolated = [i + 1 for i in np.flatnonzero(deg < 1)]
        raise DegreeError(f"isolated agents have no informers: {isolated}")
    return t.adjacency() / deg[:, None]


def protocol_matrix(t: Topology, kind: ProtocolKind) -> np.ndarray:
    """The coupling matrix of the state-space form: C for protocol A, -L for B."""
    kind = ProtocolKind.parse(kind)
    return weighted_adjacency(t) if kind is ProtocolKind.A else -laplacian(t)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Diagonalisation ``inverse_transform @ M @ transform = diag(...)``.

    ``eigenvalues[0]`` is the special eigenvalue (1 for A, 0 for B); the rest
    ascend. For protocol B the eigenvalues are those of +L, while the
    diagonalised matrix is M = -L.
    """

    kind: ProtocolKind
    eigenvalues: np.ndarray
    transform: np.ndarray
    inverse_transform: np.ndarray
    special_index: int = 1

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def special(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def disagreement_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[1:]

    def m_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of M itself (sign-flipped for protocol B)."""
        return self.eigenvalues if self.kind is ProtocolKind.A else -self.eigenvalues


def _order_with_special_first(values: np.ndarray, target: float) -> np.ndarray:
    dist = np.abs(values - target)
    special = int(np.argmin(dist))
    if dist[special] >= SPECIAL_TOL:
        raise SpectralError(
            f"no eigenvalue within {SPECIAL_TOL:g} of {target:g} (closest {values[special]!r})"
        )
    rest = [i for i in np.lexsort((np.arange(len(values)), values)) if i != special]
    return np.array([special] + rest)


def spectrum(t: Topology, kind: ProtocolKind) -> Spectrum:
    kind = ProtocolKind.parse(kind)
    require_connected(t)
    if kind is ProtocolKind.B:
        w, V = np.linalg.eigh(laplacian(t))
        order = _order_with_special_first(w, 0.0)
        V = V[:, order]
        if V[:, 0].sum() < 0:
            V[:, 0] = -V[:, 0]
        return Spectrum(kind, w[order], V, V.T.copy())

    # C is similar to the symmetric S = D^-1/2 A D^-1/2, so use eigh on S.
    deg = np.asarray(t.degrees, dtype=float)
    root = np.sqrt(deg)
    S = t.adjacency() / np.outer(root, root)
    w, V = np.linalg.eigh(S)
    order = _order_with_special_first(w, 1.0)
    V = V[:, order]
    if V[:, 0].sum() < 0:
        V[:, 0] = -V[:, 0]
    T = V / root[:, None]
    T_inv = V.T * root[None, :]
    return Spectrum(kind, w[order], T, T_inv)


def anderson_bound(t: Topology) -> float:
    """Upper bound 2 * max degree on the Laplacian eigenvalues."""
    return 2.0 * max(t.degrees)


def absolute_exigent_eigenvalue(kind: ProtocolKind, n: int | None = None) -> float:
    """Worst-case disagreement eigenvalue over every connected topology.

    Protocol A: -1, whatever the graph or its size. Protocol B: ``n``, the
    largest Laplacian eigenvalue any graph on ``n`` vertices can have.
    """
    kind = ProtocolKind.parse(kind)
    if kind is ProtocolKind.A:
        return -1.0
    if n is None:
        raise ValueError("protocol B needs the number of agents n")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return float(n)


def predicted_exigent_eigenvalue(spec: Spectrum) -> float:
    """Smallest eigenvalue of C (protocol A) or largest of L (protocol B)."""
    rest = spec.disagreement_eigenvalues
    return float(rest.min() if spec.kind is ProtocolKind.A else rest.max())
