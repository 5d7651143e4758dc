"""Tuple-dependency structure and exact discrete joint distributions.

Nodes are 0-based indices ``0..n-1``.  A partial assignment is a mapping
``{node: state_index}``.  Joint tables are dense numpy arrays with one axis
per node, kept read-only after construction.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CapExceeded,
    CyclicGraph,
    IndexOutOfRange,
    InvalidModel,
    NotASeparator,
    ZeroConditioningEvent,
)

PROB_TOL = 1e-12
DEFAULT_TABLE_CAP = 2**22
DEFAULT_SEPARATOR_CAP = 4


def _check_index(i: int, n: int) -> int:
    if not isinstance(i, (int, np.integer)) or not 0 <= i < n:
        raise IndexOutOfRange(f"node index {i!r} outside 0..{n - 1}")
    return int(i)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class JointTable:
    """Exact probability table over ``n`` discrete tuples.

    ``probs`` has shape ``tuple(len(d) for d in domains)``.
    """

    domains: tuple[tuple[str, ...], ...]
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        domains = tuple(tuple(str(s) for s in d) for d in self.domains)
        for j, d in enumerate(domains):
            if len(d) == 0:
                raise InvalidModel(f"node {j} has an empty domain")
            if len(set(d)) != len(d):
                raise InvalidModel(f"node {j} has duplicate state labels")
        probs = _frozen(self.probs)
        shape = tuple(len(d) for d in domains)
        if probs.size != int(np.prod(shape)):
            raise InvalidModel(f"table has {probs.size} entries, domains need {np.prod(shape)}")
        probs = probs.reshape(shape)
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise InvalidModel("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise InvalidModel(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_array(cls, probs, labels: Sequence[Sequence[str]] | None = None) -> "JointTable":
        probs = np.asarray(probs, dtype=float)
        if labels is None:
            labels = [[str(s) for s in range(k)] for k in probs.shape]
        return cls(tuple(tuple(d) for d in labels), probs)

    @property
    def n(self) -> int:
        return len(self.domains)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.probs.shape

    def marginal(self, nodes: Iterable[int]) -> np.ndarray:
        """Marginal table over ``nodes``, axes in the order given."""
        nodes = [_check_index(j, self.n) for j in nodes]
        if len(set(nodes)) != len(nodes):
            raise InvalidModel("repeated node in marginal request")
        drop = tuple(j for j in range(self.n) if j not in nodes)
        m = self.probs.sum(axis=drop)
        kept = sorted(nodes)
        return np.transpose(m, [kept.index(j) for j in nodes]) if nodes else m

    def probability(self, assignment: Mapping[int, int]) -> float:
        nodes = list(assignment)
        m = self.marginal(nodes)
        idx = tuple(int(assignment[j]) for j in nodes)
        for j, s in zip(nodes, idx):
            if not 0 <= s < len(self.domains[j]):
                raise IndexOutOfRange(f"state {s} outside domain of node {j}")
        return float(m[idx])


@dataclass(frozen=True)
class DependencyGraph:
    """Directed (Bayesian network) or undirected (Markov network) graph."""

    n: int
    edges: frozenset
    directed: bool = False

    def __init__(self, n: int, edges: Iterable[Sequence[int]] = (), directed: bool = False):
        if n < 1:
            raise InvalidModel("graph needs at least one node")
        es = set()
        for e in edges:
            u, v = (int(x) for x in e)
            _check_index(u, n)
            _check_index(v, n)
            if u == v:
                raise InvalidModel(f"self-loop on node {u}")
            es.add((u, v) if directed else (min(u, v), max(u, v)))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", frozenset(es))
        object.__setattr__(self, "directed", bool(directed))
        if directed:
            _topological_order(self)

    @classmethod
    def chain(cls, n: int, directed: bool = True) -> "DependencyGraph":
        return cls(n, [(t, t + 1) for t in range(n - 1)], directed=directed)

    def parents(self, i: int) -> set[int]:
        return {u for u, v in self.edges if v == i}

    def children(self, i: int) -> set[int]:
        return {v for u, v in self.edges if u == i}

    def neighbors(self, i: int) -> set[int]:
        return {v for u, v in self.edges if u == i} | {u for u, v in self.edges if v == i}


def _topological_order(g: DependencyGraph) -> list[int]:
    indeg = [0] * g.n
    for _, v in g.edges:
        indeg[v] += 1
    queue = deque(j for j in range(g.n) if indeg[j] == 0)
    order = []
    while queue:
        u = queue.popleft()
        order.append(u)
        for v in sorted(g.children(u)):
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if len(order) != g.n:
        raise CyclicGraph("directed dependency graph contains a cycle")
    return order


@dataclass(frozen=True)
class MarkovChainSpec:
    """Time-homogeneous chain ``X_0 -> X_1 -> ... -> X_{n-1}`` over ``k`` states."""

    transition: np.ndarray = field(repr=False)
    initial: np.ndarray = field(repr=False)
    length: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        P = _frozen(self.transition)
        pi0 = _frozen(self.initial)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise InvalidModel("transition matrix must be square and nonempty")
        k = P.shape[0]
        if pi0.shape != (k,):
            raise InvalidModel("initial distribution length must match state count")
        if np.any(P < 0) or np.any(pi0 < 0):
            raise InvalidModel("chain probabilities must be nonnegative")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > PROB_TOL):
            raise InvalidModel("transition rows must sum to 1")
        if abs(pi0.sum() - 1.0) > PROB_TOL:
            raise InvalidModel("initial distribution must sum to 1")
        if int(self.length) < 1:
            raise InvalidModel("chain length must be at least 1")
        labels = tuple(str(s) for s in range(k)) if self.labels is None else tuple(map(str, self.labels))
        if len(labels) != k or len(set(labels)) != k:
            raise InvalidModel("chain labels must be unique, one per state")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial", pi0)
        object.__setattr__(self, "length", int(self.length))
        object.__setattr__(self, "labels", labels)

    @property
    def k(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True)
class QuiltPartition:
    """Quilt ``quilt`` around ``target``, with its nearby and remote sets."""

    target: int
    quilt: frozenset
    nearby: frozenset
    remote: frozenset

    def __post_init__(self):
        q, nb, r = (frozenset(int(j) for j in s) for s in (self.quilt, self.nearby, self.remote))
        if q & nb or q & r or nb & r:
            raise InvalidModel("quilt, nearby and remote sets must be disjoint")
        if self.target in q | nb | r:
            raise InvalidModel("target may not appear in its own quilt partition")
        object.__setattr__(self, "quilt", q)
        object.__setattr__(self, "nearby", nb)
        object.__setattr__(self, "remote", r)


def build_joint_from_chain(chain: MarkovChainSpec, cap: int = DEFAULT_TABLE_CAP) -> JointTable:
    k, n = chain.k, chain.length
    if k**n > cap:
        raise CapExceeded(f"chain joint needs {k}^{n} entries, cap is {cap}")
    probs = chain.initial.copy()
    for _ in range(n - 1):
        probs = probs[..., None] * chain.transition.reshape((1,) * (probs.ndim - 1) + (k, k))
    return JointTable(tuple(chain.labels for _ in range(n)), probs)


def chain_window_joint(chain: MarkovChainSpec, start: int, stop: int) -> JointTable:
    """Exact joint of positions ``start..stop-1`` of ``chain``.

    By the Markov property this is the position-``start`` marginal followed by
    transitions, so long chains never need their full table.
    """
    if not 0 <= start < stop <= chain.length:
        raise IndexOutOfRange(f"window {start}:{stop} outside chain of length {chain.length}")
    marginal = chain.initial @ np.linalg.matrix_power(chain.transition, start)
    marginal = marginal / marginal.sum()
    window = MarkovChainSpec(chain.transition, marginal, stop - start, chain.labels)
    return build_joint_from_chain(window)


def moralize(g: DependencyGraph) -> DependencyGraph:
    """Undirected moral graph: drop edge directions and marry co-parents."""
    if not g.directed:
        return g
    edges = set(g.edges)
    for child in range(g.n):
        edges.update(itertools.combinations(sorted(g.parents(child)), 2))
    return DependencyGraph(g.n, edges, directed=False)


def markov_blanket(g: DependencyGraph, i: int) -> frozenset:
    i = _check_index(i, g.n)
    if not g.directed:
        return frozenset(g.neighbors(i))
    blanket = g.parents(i) | g.children(i)
    for c in g.children(i):
        blanket |= g.parents(c)
    blanket.discard(i)
    return frozenset(blanket)


def _reachable(g: DependencyGraph, start: int, blocked: frozenset) -> set[int]:
    """Nodes reachable from ``start`` on undirected ``g`` without entering ``blocked``."""
    adj = {j: set() for j in range(g.n)}
    for u, v in g.edges:
        adj[u].add(v)
        adj[v].add(u)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen and v not in blocked:
                seen.add(v)
                queue.append(v)
    return seen


def validate_quilt(g: DependencyGraph, i: int, quilt: Iterable[int], nearby: Iterable[int]) -> QuiltPartition:
    i = _check_index(i, g.n)
    q = frozenset(_check_index(j, g.n) for j in quilt)
    nb = frozenset(_check_index(j, g.n) for j in nearby)
    remote = frozenset(range(g.n)) - q - nb - {i}
    part = QuiltPartition(i, q, nb, remote)
    leaked = _reachable(moralize(g), i, q) & remote
    if leaked:
        raise NotASeparator(f"nodes {sorted(leaked)} reachable from {i} without crossing the quilt")
    return part


def enumerate_chain_quilts(n: int, i: int) -> list[QuiltPartition]:
    """All quilts ``{i-a, i+b}`` of node ``i`` on a length-``n`` chain.

    Endpoints falling outside ``0..n-1`` are dropped, so the leftmost node has a
    single left option.  Ordered by ``(a, b)``; the blanket comes first.
    """
    i = _check_index(i, n)
    out = []
    for a in range(1, i + 2):
        for b in range(1, n - i + 1):
            q = {j for j in (i - a, i + b) if 0 <= j < n}
            nb = set(range(max(i - a + 1, 0), i)) | set(range(i + 1, min(i + b, n)))
            rest = frozenset(range(n)) - q - nb - {i}
            out.append(QuiltPartition(i, frozenset(q), frozenset(nb), rest))
    return out


def find_quilts(g: DependencyGraph, i: int, max_size: int = DEFAULT_SEPARATOR_CAP) -> list[QuiltPartition]:
    """Quilts of ``i`` on a general graph by subset search over separators.

    For each candidate separator ``Q`` with ``|Q| <= max_size`` the nearby set is
    the component of ``i`` in the moral graph with ``Q`` removed; everything
    else (including disconnected components) is remote.  Results are
    deduplicated and ordered by separator size, then lexicographically.
    """
    i = _check_index(i, g.n)
    mg = moralize(g)
    others = [j for j in range(g.n) if j != i]
    seen = set()
    out = []
    for size in range(0, min(max_size, len(others)) + 1):
        for q in itertools.combinations(others, size):
            q = frozenset(q)
            nb = frozenset(_reachable(mg, i, q) - {i})
            if (q, nb) in seen:
                continue
            seen.add((q, nb))
            out.append(QuiltPartition(i, q, nb, frozenset(others) - q - nb))
    return out


def conditional(joint: JointTable, target: Mapping[int, int], given: Mapping[int, int] | None = None) -> float:
    """Exact ``P(target | given)`` by table summation."""
    given = dict(given or {})
    if set(target) & set(given):
        raise InvalidModel("target and conditioning sets must be disjoint")
    p_given = joint.probability(given) if given else 1.0
    if p_given == 0.0:
        raise ZeroConditioningEvent(f"P({given}) = 0")
    return joint.probability({**given, **target}) / p_given
