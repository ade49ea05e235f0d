"""Graph types and exact separation / marginalization algorithms.

Two graph classes are used throughout the package:

* :class:`Dag` holds a directed acyclic graph as a tuple of parent sets.
* :class:`MixedGraph` holds at most one edge per unordered node pair, with
  an endpoint :class:`Mark` at each side. MAGs, PAGs and the mixed output
  of the discovery algorithm all live in this class.

Separation queries are answered by reachability over (node, arrived-with-
arrowhead) states, which runs in time linear in the number of edges.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    InconsistentSepset,
    InvalidConditioningSet,
    NotAncestralGraph,
)


class Mark(enum.Enum):
    TAIL = "-"
    ARROW = ">"
    CIRCLE = "o"


TAIL, ARROW, CIRCLE = Mark.TAIL, Mark.ARROW, Mark.CIRCLE


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over nodes ``0..num_nodes-1``.

    Parameters
    ----------
    parents : tuple of frozenset of int
        ``parents[i]`` is the parent set of node ``i``.
    node_names : tuple of str, optional
        Display names; defaults to ``X0, X1, ...`` when serialized.
    """

    parents: tuple[frozenset[int], ...]
    node_names: tuple[str, ...] | None = None

    def __post_init__(self):
        n = len(self.parents)
        object.__setattr__(self, "parents", tuple(frozenset(int(p) for p in ps) for ps in self.parents))
        for i, ps in enumerate(self.parents):
            if i in ps:
                raise ValueError(f"self-loop on node {i}")
            if any(p < 0 or p >= n for p in ps):
                raise ValueError(f"parent index out of range for node {i}")
        if self.node_names is not None:
            names = tuple(str(s) for s in self.node_names)
            if len(names) != n:
                raise ValueError("node_names length does not match node count")
            object.__setattr__(self, "node_names", names)
        topological_order(self)

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Iterable[tuple[int, int]], node_names=None) -> "Dag":
        parents = [set() for _ in range(num_nodes)]
        for a, b in edges:
            parents[b].add(a)
        return cls(tuple(frozenset(p) for p in parents), None if node_names is None else tuple(node_names))

    @classmethod
    def from_adjacency(cls, adjacency, node_names=None) -> "Dag":
        """Build from a matrix with ``adjacency[i, j] != 0`` meaning ``i -> j``."""
        A = np.asarray(adjacency)
        n = A.shape[0]
        return cls.from_edges(n, zip(*np.nonzero(A)), node_names)

    @property
    def num_nodes(self) -> int:
        return len(self.parents)

    def edges(self) -> list[tuple[int, int]]:
        return sorted((p, c) for c, ps in enumerate(self.parents) for p in ps)

    def children(self, i: int) -> frozenset[int]:
        return frozenset(c for c, ps in enumerate(self.parents) if i in ps)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.num_nodes, self.num_nodes), dtype=int)
        for a, b in self.edges():
            A[a, b] = 1
        return A

    def name(self, i: int) -> str:
        return self.node_names[i] if self.node_names is not None else f"X{i}"

    def to_mixed(self) -> "MixedGraph":
        mg = MixedGraph(self.num_nodes, node_names=self.node_names)
        for a, b in self.edges():
            mg.set_edge(a, b, TAIL, ARROW)
        return mg


class MixedGraph:
    """Graph with at most one edge per pair and a mark at each endpoint.

    Edges are stored under the key ``(a, b)`` with ``a < b`` as the pair
    ``(mark at a, mark at b)``. Public algorithms in this package never
    mutate a graph they receive; :meth:`set_edge` and :meth:`remove_edge`
    exist for construction.
    """

    def __init__(self, num_nodes: int, edges: Mapping | None = None, node_names=None):
        self.num_nodes = int(num_nodes)
        self.node_names = None if node_names is None else tuple(str(s) for s in node_names)
        if self.node_names is not None and len(self.node_names) != self.num_nodes:
            raise ValueError("node_names length does not match node count")
        self._edges: dict[tuple[int, int], tuple[Mark, Mark]] = {}
        self._adj: list[set[int]] = [set() for _ in range(self.num_nodes)]
        self._mag_checked = False
        for (a, b), (ma, mb) in (edges or {}).items():
            self.set_edge(a, b, ma, mb)

    # construction
    def set_edge(self, a: int, b: int, mark_a: Mark, mark_b: Mark) -> None:
        if a == b:
            raise ValueError("self-loops are not allowed")
        if not (0 <= a < self.num_nodes and 0 <= b < self.num_nodes):
            raise IndexError(f"edge ({a}, {b}) out of range")
        if a > b:
            a, b, mark_a, mark_b = b, a, mark_b, mark_a
        self._edges[(a, b)] = (Mark(mark_a), Mark(mark_b))
        self._adj[a].add(b)
        self._adj[b].add(a)
        self._mag_checked = False

    def remove_edge(self, a: int, b: int) -> None:
        key = (min(a, b), max(a, b))
        if key in self._edges:
            del self._edges[key]
            self._adj[a].discard(b)
            self._adj[b].discard(a)
            self._mag_checked = False

    def copy(self) -> "MixedGraph":
        return MixedGraph(self.num_nodes, dict(self._edges), self.node_names)

    # queries
    def adjacent(self, a: int, b: int) -> bool:
        return b in self._adj[a]

    def neighbors(self, a: int) -> frozenset[int]:
        return frozenset(self._adj[a])

    def endpoints(self, a: int, b: int) -> tuple[Mark, Mark] | None:
        """Marks ``(at a, at b)`` of the edge between ``a`` and ``b``, or None."""
        if a < b:
            return self._edges.get((a, b))
        e = self._edges.get((b, a))
        return None if e is None else (e[1], e[0])

    def mark(self, a: int, b: int) -> Mark | None:
        """Mark at ``b`` on the edge ``a *-* b``."""
        e = self.endpoints(a, b)
        return None if e is None else e[1]

    def edges(self) -> list[tuple[int, int, Mark, Mark]]:
        return [(a, b, ma, mb) for (a, b), (ma, mb) in sorted(self._edges.items())]

    def num_edges(self) -> int:
        return len(self._edges)

    def is_directed(self, a: int, b: int) -> bool:
        return self.endpoints(a, b) == (TAIL, ARROW)

    def parents(self, b: int) -> frozenset[int]:
        return frozenset(a for a in self._adj[b] if self.is_directed(a, b))

    def children(self, a: int) -> frozenset[int]:
        return frozenset(b for b in self._adj[a] if self.is_directed(a, b))

    def directed_edges(self) -> list[tuple[int, int]]:
        out = []
        for a, b, ma, mb in self.edges():
            if (ma, mb) == (TAIL, ARROW):
                out.append((a, b))
            elif (ma, mb) == (ARROW, TAIL):
                out.append((b, a))
        return out

    def skeleton(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(k) for k in self._edges)

    def name(self, i: int) -> str:
        return self.node_names[i] if self.node_names is not None else f"X{i}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, MixedGraph):
            return NotImplemented
        return self.num_nodes == other.num_nodes and self._edges == other._edges

    def __hash__(self):
        return hash((self.num_nodes, frozenset(self._edges.items())))

    def __repr__(self) -> str:
        from .io import graph_to_text

        body = graph_to_text(self).strip().replace("\n", "; ")
        return f"MixedGraph({self.num_nodes}: {body})"


@dataclass(frozen=True)
class LatentPartition:
    """Split of a DAG's nodes into observed (ordered) and latent sets."""

    observed: tuple[int, ...]
    latent: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "observed", tuple(int(i) for i in self.observed))
        object.__setattr__(self, "latent", frozenset(int(i) for i in self.latent))
        if set(self.observed) & self.latent:
            raise ValueError("observed and latent sets overlap")
        if len(set(self.observed)) != len(self.observed):
            raise ValueError("duplicate observed nodes")

    @classmethod
    def from_latent(cls, num_nodes: int, latent: Iterable[int]) -> "LatentPartition":
        latent = frozenset(latent)
        return cls(tuple(i for i in range(num_nodes) if i not in latent), latent)

    @classmethod
    def fully_observed(cls, num_nodes: int) -> "LatentPartition":
        return cls(tuple(range(num_nodes)), frozenset())

    def check(self, g: Dag) -> None:
        if set(self.observed) | self.latent != set(range(g.num_nodes)):
            raise ValueError("partition does not cover the graph's nodes")


# ---------------------------------------------------------------------------
# orderings and ancestry


def topological_order(g: Dag) -> list[int]:
    """Kahn's algorithm; ties broken by lowest index."""
    n = len(g.parents)
    indeg = [len(ps) for ps in g.parents]
    children = [[] for _ in range(n)]
    for c, ps in enumerate(g.parents):
        for p in ps:
            children[p].append(c)
    heap = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != n:
        raise CycleDetected("graph contains a directed cycle")
    return order


def _parent_sets(g) -> list[frozenset[int]]:
    if isinstance(g, Dag):
        return list(g.parents)
    return [g.parents(i) for i in range(g.num_nodes)]


def ancestors(g, i: int) -> set[int]:
    """Nodes with a directed path into ``i`` (``i`` itself excluded)."""
    pa = _parent_sets(g)
    if not 0 <= i < len(pa):
        raise IndexError(i)
    seen, stack = set(), list(pa[i])
    while stack:
        v = stack.pop()
        if v not in seen:
            seen.add(v)
            stack.extend(pa[v])
    seen.discard(i)
    return seen


def ancestors_of_set(g, nodes: Iterable[int]) -> set[int]:
    """Union of ``nodes`` and all their ancestors."""
    pa = _parent_sets(g)
    seen, stack = set(), list(nodes)
    while stack:
        v = stack.pop()
        if v not in seen:
            seen.add(v)
            stack.extend(pa[v])
    return seen


def descendants(g, i: int) -> set[int]:
    if isinstance(g, Dag):
        ch = [set() for _ in range(g.num_nodes)]
        for c, ps in enumerate(g.parents):
            for p in ps:
                ch[p].add(c)
    else:
        ch = [g.children(v) for v in range(g.num_nodes)]
    seen, stack = set(), list(ch[i])
    while stack:
        v = stack.pop()
        if v not in seen:
            seen.add(v)
            stack.extend(ch[v])
    seen.discard(i)
    return seen


# ---------------------------------------------------------------------------
# separation


def _incidence(g) -> list[list[tuple[int, Mark, Mark]]]:
    """Per node ``v`` the list of ``(w, mark at v, mark at w)``."""
    if isinstance(g, Dag):
        inc = [[] for _ in range(g.num_nodes)]
        for c, ps in enumerate(g.parents):
            for p in ps:
                inc[p].append((c, TAIL, ARROW))
                inc[c].append((p, ARROW, TAIL))
        return inc
    inc = [[] for _ in range(g.num_nodes)]
    for a, b, ma, mb in g.edges():
        inc[a].append((b, ma, mb))
        inc[b].append((a, mb, ma))
    return inc


def _reachable(inc, start: int, target: int, passable: Callable[[int, bool], bool]) -> bool:
    """Is there a walk from ``start`` to ``target`` whose inner nodes pass?

    ``passable(v, is_collider)`` decides whether the walk may continue
    through ``v``; collider status is read off the two marks at ``v``.
    """
    seen = set()
    stack = []
    for w, _, mw in inc[start]:
        if w == target:
            return True
        stack.append((w, mw is ARROW))
    while stack:
        state = stack.pop()
        if state in seen:
            continue
        seen.add(state)
        v, into = state
        for w, mv, mw in inc[v]:
            if not passable(v, into and mv is ARROW):
                continue
            if w == target:
                return True
            nxt = (w, mw is ARROW)
            if nxt not in seen:
                stack.append(nxt)
    return False


def _check_query(n: int, i: int, j: int, z) -> frozenset[int]:
    z = frozenset(z)
    if i == j:
        raise InvalidConditioningSet("endpoints must differ")
    if i in z or j in z:
        raise InvalidConditioningSet("conditioning set contains an endpoint")
    if not all(0 <= v < n for v in (i, j, *z)):
        raise IndexError("node index out of range")
    return z


def d_separated(g: Dag, i: int, j: int, z: Iterable[int] = ()) -> bool:
    """True iff ``i`` and ``j`` are d-separated given ``z`` in ``g``."""
    z = _check_query(g.num_nodes, i, j, z)
    anz = ancestors_of_set(g, z)

    def passable(v, collider):
        return v in anz if collider else v not in z

    return not _reachable(_incidence(g), i, j, passable)


def is_ancestral(mg: MixedGraph) -> bool:
    """Only tails/arrows, no undirected edges, no (almost) directed cycles."""
    for a, b, ma, mb in mg.edges():
        if ma is CIRCLE or mb is CIRCLE or (ma, mb) == (TAIL, TAIL):
            return False
    anc = [ancestors(mg, v) for v in range(mg.num_nodes)]
    for v in range(mg.num_nodes):
        if v in anc[v]:
            return False
    for a, b, ma, mb in mg.edges():
        if (ma, mb) == (ARROW, ARROW) and (a in anc[b] or b in anc[a]):
            return False
    return True


def _has_mag_inducing_path(mg: MixedGraph, i: int, j: int, inc=None) -> bool:
    anc = ancestors_of_set(mg, (i, j))

    def passable(v, collider):
        return collider and v in anc

    return _reachable(inc or _incidence(mg), i, j, passable)


def is_mag(mg: MixedGraph) -> bool:
    """Ancestral and maximal (no inducing path between non-adjacent nodes)."""
    if not is_ancestral(mg):
        return False
    inc = _incidence(mg)
    for i, j in itertools.combinations(range(mg.num_nodes), 2):
        if not mg.adjacent(i, j) and _has_mag_inducing_path(mg, i, j, inc):
            return False
    return True


def m_separated(mg: MixedGraph, i: int, j: int, z: Iterable[int] = ()) -> bool:
    """True iff ``i`` and ``j`` are m-separated given ``z`` in the MAG ``mg``."""
    if not mg._mag_checked:
        if not is_mag(mg):
            raise NotAncestralGraph("graph violates MAG invariants")
        mg._mag_checked = True
    z = _check_query(mg.num_nodes, i, j, z)
    anz = ancestors_of_set(mg, z)

    def passable(v, collider):
        return v in anz if collider else v not in z

    return not _reachable(_incidence(mg), i, j, passable)


def inducing_path_exists(g: Dag, i: int, j: int, latent: Iterable[int]) -> bool:
    """Inducing path between ``i`` and ``j`` relative to ``latent`` in ``g``.

    Every observed non-endpoint must be a collider, and every collider must
    be an ancestor of ``i`` or ``j``.
    """
    latent = frozenset(latent)
    if i == j:
        raise ValueError("endpoints must differ")
    anc = ancestors_of_set(g, (i, j))

    def passable(v, collider):
        return v in anc if collider else v in latent

    return _reachable(_incidence(g), i, j, passable)


def marginalize(g: Dag, part: LatentPartition) -> MixedGraph:
    """Marginal MAG of ``g`` over ``part.observed`` (in that order).

    Node ``k`` of the result corresponds to ``part.observed[k]``.
    """
    part.check(g)
    obs = part.observed
    names = tuple(g.name(v) for v in obs)
    mg = MixedGraph(len(obs), node_names=names)
    anc = [ancestors(g, v) for v in range(g.num_nodes)]
    inc = _incidence(g)
    for a, b in itertools.combinations(range(len(obs)), 2):
        u, v = obs[a], obs[b]
        both = ancestors_of_set(g, (u, v))

        def passable(w, collider, both=both):
            return w in both if collider else w in part.latent

        if not _reachable(inc, u, v, passable):
            continue
        if u in anc[v]:
            mg.set_edge(a, b, TAIL, ARROW)
        elif v in anc[u]:
            mg.set_edge(a, b, ARROW, TAIL)
        else:
            mg.set_edge(a, b, ARROW, ARROW)
    mg._mag_checked = True
    return mg


# ---------------------------------------------------------------------------
# PAG orientation


def _pairkey(a: int, b: int) -> frozenset[int]:
    return frozenset((a, b))


class _Orienter:
    def __init__(self, g: MixedGraph, sepsets, strict: bool):
        self.g = g
        self.sepsets = {frozenset(k): frozenset(v) for k, v in sepsets.items()}
        self.strict = strict
        self.changed = False

    def sep(self, a, b):
        return self.sepsets.get(_pairkey(a, b), frozenset())

    def set_mark(self, a, b, new: Mark) -> None:
        """Set the mark at ``b`` on edge ``a *-* b``; circles only."""
        ma, mb = self.g.endpoints(a, b)
        if mb is new:
            return
        if mb is not CIRCLE:
            if self.strict:
                raise InconsistentSepset(f"conflicting marks at {b} on edge {a}-{b}")
            return
        self.g.set_edge(a, b, ma, new)
        self.changed = True

    def colliders(self):
        g = self.g
        for c in range(g.num_nodes):
            for a, b in itertools.combinations(sorted(g.neighbors(c)), 2):
                if not g.adjacent(a, b) and c not in self.sep(a, b):
                    self.set_mark(a, c, ARROW)
                    self.set_mark(b, c, ARROW)

    def r1(self):
        # a *-> b o-* c, a and c non-adjacent  =>  b -> c
        g = self.g
        for b in range(g.num_nodes):
            for a in sorted(g.neighbors(b)):
                if g.mark(a, b) is not ARROW:
                    continue
                for c in sorted(g.neighbors(b)):
                    if c == a or g.adjacent(a, c):
                        continue
                    if g.mark(c, b) is CIRCLE:
                        self.set_mark(c, b, TAIL)
                        self.set_mark(b, c, ARROW)

    def r2(self):
        # a -> b *-> c  or  a *-> b -> c, with a *-o c  =>  a *-> c
        g = self.g
        for a in range(g.num_nodes):
            for c in sorted(g.neighbors(a)):
                if g.mark(a, c) is not CIRCLE:
                    continue
                for b in sorted(g.neighbors(a) & g.neighbors(c)):
                    first = g.is_directed(a, b) and g.mark(b, c) is ARROW
                    second = g.mark(a, b) is ARROW and g.is_directed(b, c)
                    if first or second:
                        self.set_mark(a, c, ARROW)
                        break

    def r3(self):
        # a *-> b <-* c, a *-o t o-* c, a, c non-adjacent, t *-o b  =>  t *-> b
        g = self.g
        for b in range(g.num_nodes):
            for t in sorted(g.neighbors(b)):
                if g.mark(t, b) is not CIRCLE:
                    continue
                cand = sorted((g.neighbors(b) & g.neighbors(t)) - {t})
                for a, c in itertools.combinations(cand, 2):
                    if g.adjacent(a, c):
                        continue
                    if g.mark(a, b) is ARROW and g.mark(c, b) is ARROW \
                            and g.mark(a, t) is CIRCLE and g.mark(c, t) is CIRCLE:
                        self.set_mark(t, b, ARROW)
                        break

    def r4(self):
        # discriminating path <th, ..., a, b, c> for b with b o-* c
        g = self.g
        for b in range(g.num_nodes):
            for c in sorted(g.neighbors(b)):
                if g.mark(c, b) is not CIRCLE:
                    continue
                for a in sorted(g.neighbors(b) & g.neighbors(c)):
                    if g.mark(b, a) is not ARROW or not g.is_directed(a, c):
                        continue
                    th = self._discriminating_start(a, b, c)
                    if th is None:
                        continue
                    if b in self.sep(th, c):
                        self.set_mark(c, b, TAIL)
                        self.set_mark(b, c, ARROW)
                    else:
                        self.set_mark(a, b, ARROW)
                        self.set_mark(b, a, ARROW)
                        self.set_mark(c, b, ARROW)
                        self.set_mark(b, c, ARROW)

    def _discriminating_start(self, a, b, c):
        # BFS backwards from a over colliders that are parents of c
        g = self.g
        frontier = [(a, (b, a))]
        visited = {a, b, c}
        while frontier:
            nxt = []
            for v, path in frontier:
                for th in sorted(g.neighbors(v)):
                    if th in visited or g.mark(th, v) is not ARROW:
                        continue
                    if not g.adjacent(th, c):
                        return th
                    if g.is_directed(th, c) and g.mark(v, th) is ARROW:
                        visited.add(th)
                        nxt.append((th, path + (th,)))
            frontier = nxt
        return None


def pag_orient(skeleton: MixedGraph, sepsets: Mapping, strict: bool = True) -> MixedGraph:
    """Orient colliders and apply rules R1-R4 to a fixpoint.

    Parameters
    ----------
    skeleton : MixedGraph
        Usually all marks are circles; existing non-circle marks are kept.
    sepsets : mapping
        ``frozenset({a, b}) -> set`` for non-adjacent pairs.
    strict : bool
        Raise :class:`InconsistentSepset` when a rule would overwrite a
        non-circle mark. When False the first mark wins.
    """
    o = _Orienter(skeleton.copy(), sepsets, strict)
    o.colliders()
    while True:
        o.changed = False
        o.r1()
        o.r2()
        o.r3()
        o.r4()
        if not o.changed:
            break
    return o.g


def circle_skeleton(mg: MixedGraph) -> MixedGraph:
    out = MixedGraph(mg.num_nodes, node_names=mg.node_names)
    for a, b, _, _ in mg.edges():
        out.set_edge(a, b, CIRCLE, CIRCLE)
    return out


def iter_subsets(items: Sequence[int], max_size: int | None = None):
    """All subsets of ``items`` by increasing size, lexicographic within size."""
    items = sorted(items)
    top = len(items) if max_size is None else min(max_size, len(items))
    for k in range(top + 1):
        yield from (frozenset(c) for c in itertools.combinations(items, k))
