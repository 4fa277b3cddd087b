"""Conditional independence in DAGs by ancestral restriction and moralization.

To decide whether ``A`` is independent of ``B`` given ``C``: restrict to the
ancestral graph of ``A | B | C``, marry the parents of every node and drop
directions, delete ``C``, and check whether any path joins ``A`` to ``B``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

__all__ = [
    "CycleError",
    "Dag",
    "QueryError",
    "UndirectedGraph",
    "ancestral_graph",
    "cond_independent",
    "moralize",
    "parse_graph",
    "parse_query",
    "scheme_dag",
]


class CycleError(ValueError):
    pass


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class Dag:
    nodes: frozenset
    edges: frozenset  # of (parent, child)

    def __init__(self, nodes: Iterable = (), edges: Iterable = ()):
        edges = frozenset((p, c) for p, c in edges)
        nodes = frozenset(nodes) | {n for e in edges for n in e}
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        self._check_acyclic()

    def parents(self, node) -> set:
        return {p for p, c in self.edges if c == node}

    def children(self, node) -> set:
        return {c for p, c in self.edges if p == node}

    def _check_acyclic(self) -> None:
        # Kahn's algorithm
        indeg = {n: 0 for n in self.nodes}
        out: dict = {n: [] for n in self.nodes}
        for p, c in self.edges:
            if p == c:
                raise CycleError(f"self-loop at {p!r}")
            indeg[c] += 1
            out[p].append(c)
        queue = deque(n for n, k in indeg.items() if k == 0)
        seen = 0
        while queue:
            n = queue.popleft()
            seen += 1
            for c in out[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen != len(self.nodes):
            raise CycleError("graph has a directed cycle")

    def ancestors(self, subset: Iterable) -> set:
        parents: dict = {}
        for p, c in self.edges:
            parents.setdefault(c, []).append(p)
        found = set(subset)
        stack = list(found)
        while stack:
            n = stack.pop()
            for p in parents.get(n, ()):
                if p not in found:
                    found.add(p)
                    stack.append(p)
        return found


@dataclass(frozen=True)
class UndirectedGraph:
    nodes: frozenset
    edges: frozenset  # of frozenset({u, v})

    def has_edge(self, u, v) -> bool:
        return frozenset((u, v)) in self.edges

    def adjacency(self) -> dict:
        adj: dict = {n: set() for n in self.nodes}
        for e in self.edges:
            u, v = tuple(e)
            adj[u].add(v)
            adj[v].add(u)
        return adj


def ancestral_graph(dag: Dag, subset: Iterable) -> Dag:
    """Subgraph induced by ``subset`` and all of its ancestors."""
    subset = set(subset)
    missing = subset - dag.nodes
    if missing:
        raise QueryError(f"unknown nodes: {sorted(map(str, missing))}")
    keep = dag.ancestors(subset)
    return Dag(keep, [(p, c) for p, c in dag.edges if p in keep and c in keep])


def moralize(dag: Dag) -> UndirectedGraph:
    """Connect every pair of parents sharing a child, then drop directions."""
    edges = {frozenset(e) for e in dag.edges}
    parents: dict = {}
    for p, c in dag.edges:
        parents.setdefault(c, []).append(p)
    for ps in parents.values():
        for i, u in enumerate(ps):
            for v in ps[i + 1:]:
                edges.add(frozenset((u, v)))
    return UndirectedGraph(dag.nodes, frozenset(edges))


def cond_independent(dag: Dag, A: Iterable, B: Iterable, C: Iterable = ()) -> bool:
    """True when ``A`` and ``B`` are separated given ``C`` in ``dag``."""
    A, B, C = set(A), set(B), set(C)
    if not A or not B:
        raise QueryError("A and B must be non-empty")
    if A & B or A & C or B & C:
        raise QueryError("A, B and C must be disjoint")
    moral = moralize(ancestral_graph(dag, A | B | C))
    adj = moral.adjacency()
    seen = set(A)
    queue = deque(A)
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if m in C or m in seen:
                continue
            if m in B:
                return False
            seen.add(m)
            queue.append(m)
    return True


def scheme_dag(scheme: str, T: int) -> Dag:
    """Dependence graph of a scheme over ``T`` trials.

    Nodes are ``S1..ST``, ``Y1..YT`` and, for random-effect schemes, ``alpha``.
    """
    if scheme not in ("FD", "FDr", "UD", "UDr"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if T < 1:
        raise ValueError("T must be positive")
    S = [f"S{t}" for t in range(1, T + 1)]
    Y = [f"Y{t}" for t in range(1, T + 1)]
    edges = list(zip(S, Y))
    if scheme.startswith("UD"):
        edges += [(S[t - 1], S[t]) for t in range(1, T)]
        edges += [(Y[t - 1], S[t]) for t in range(1, T)]
    nodes = S + Y
    if scheme.endswith("r"):
        nodes.append("alpha")
        edges += [("alpha", y) for y in Y]
    return Dag(nodes, edges)


def parse_graph(text: str) -> Dag:
    """Parse ``parent -> child`` lines; blank lines and ``#`` comments are skipped.

    A line holding a single name declares an isolated node.
    """
    nodes, edges = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" in line:
            parts = [p.strip() for p in line.split("->")]
            if len(parts) != 2 or not all(parts):
                raise QueryError(f"line {lineno}: expected 'parent -> child', got {raw!r}")
            edges.append(tuple(parts))
        elif line.split() == [line]:
            nodes.append(line)
        else:
            raise QueryError(f"line {lineno}: expected 'parent -> child', got {raw!r}")
    return Dag(nodes, edges)


def parse_query(text: str) -> tuple[set, set, set]:
    """Parse ``A | B | C`` (or ``A | B``) with comma-separated node lists.

    A trailing ``?`` is ignored.
    """
    text = text.strip().rstrip("?").strip()
    parts = text.split("|")
    if len(parts) not in (2, 3):
        raise QueryError(f"query must look like 'A | B | C', got {text!r}")

    def names(s):
        return {n.strip() for n in s.split(",") if n.strip()}

    A, B = names(parts[0]), names(parts[1])
    C = names(parts[2]) if len(parts) == 3 else set()
    return A, B, C
