"""Brute-force reference implementations used only by the tests.

Everything here enumerates simple paths or subsets explicitly and shares
no code with the package's reachability-based algorithms.
"""

import itertools

import numpy as np

from adascore.graphs import ARROW, TAIL, Dag, MixedGraph


def _dag_marks(g: Dag):
    marks = {}
    for c, ps in enumerate(g.parents):
        for p in ps:
            marks[(p, c)] = (TAIL, ARROW)
            marks[(c, p)] = (ARROW, TAIL)
    return marks


def _mixed_marks(g: MixedGraph):
    marks = {}
    for a, b, ma, mb in g.edges():
        marks[(a, b)] = (ma, mb)
        marks[(b, a)] = (mb, ma)
    return marks


def simple_paths(marks, n, i, j):
    nbrs = {v: [w for (a, w) in marks if a == v] for v in range(n)}

    def rec(path):
        v = path[-1]
        if v == j:
            yield list(path)
            return
        for w in nbrs[v]:
            if w not in path:
                path.append(w)
                yield from rec(path)
                path.pop()

    yield from rec([i])


def _is_collider(marks, path, k):
    a, v, b = path[k - 1], path[k], path[k + 1]
    return marks[(a, v)][1] is ARROW and marks[(b, v)][1] is ARROW


def _anc_closure(marks, n, nodes):
    # transitive closure over directed edges, by repeated relaxation
    out = set(nodes)
    changed = True
    while changed:
        changed = False
        for (a, b), (ma, mb) in marks.items():
            if (ma, mb) == (TAIL, ARROW) and b in out and a not in out:
                out.add(a)
                changed = True
    return out


def _separated(marks, n, i, j, z):
    z = set(z)
    anz = _anc_closure(marks, n, z)
    for path in simple_paths(marks, n, i, j):
        ok = True
        for k in range(1, len(path) - 1):
            if _is_collider(marks, path, k):
                if path[k] not in anz:
                    ok = False
                    break
            elif path[k] in z:
                ok = False
                break
        if ok:
            return False
    return True


def dsep_bruteforce(g: Dag, i, j, z):
    return _separated(_dag_marks(g), g.num_nodes, i, j, z)


def msep_bruteforce(g: MixedGraph, i, j, z):
    return _separated(_mixed_marks(g), g.num_nodes, i, j, z)


def inducing_path_bruteforce(g: Dag, i, j, latent):
    marks = _dag_marks(g)
    anc = _anc_closure(marks, g.num_nodes, {i, j})
    for path in simple_paths(marks, g.num_nodes, i, j):
        ok = True
        for k in range(1, len(path) - 1):
            col = _is_collider(marks, path, k)
            if path[k] not in latent and not col:
                ok = False
                break
            if col and path[k] not in anc:
                ok = False
                break
        if ok:
            return True
    return False


def adjacent_by_separation(g: Dag, observed, a, b):
    """Adjacent in the marginal iff no observed subset d-separates."""
    rest = [v for v in observed if v not in (a, b)]
    for k in range(len(rest) + 1):
        for z in itertools.combinations(rest, k):
            if dsep_bruteforce(g, a, b, z):
                return False
    return True


def random_dag(rng, n, p):
    order = rng.permutation(n)
    A = np.zeros((n, n), dtype=int)
    for x in range(n):
        for y in range(x + 1, n):
            if rng.random() < p:
                A[order[x], order[y]] = 1
    return Dag.from_adjacency(A)


def edge_class(g: MixedGraph, a, b):
    e = g.endpoints(a, b)
    if e is None:
        return "absent"
    if e == (TAIL, ARROW):
        return ("dir", a, b)
    if e == (ARROW, TAIL):
        return ("dir", b, a)
    return "undirected"


def pairwise_metrics(pred: MixedGraph, truth: MixedGraph):
    """SHD and the three F1 scores from an explicit table of pair labels."""
    n = truth.num_nodes
    rows = []
    for a in range(n):
        for b in range(a + 1, n):
            rows.append((a, b, edge_class(pred, a, b), edge_class(truth, a, b)))
    shd = sum(p != t for _, _, p, t in rows)

    def f1(label):
        tp = fp = fn = 0
        for a, b, p, t in rows:
            for item in label(a, b, p):
                if item in label(a, b, t):
                    tp += 1
                else:
                    fp += 1
            fn += sum(item not in label(a, b, p) for item in label(a, b, t))
        if tp + fp == 0 and tp + fn == 0:
            return 1.0
        if tp == 0:
            return 0.0
        return 2 * tp / (2 * tp + fp + fn)

    def any_edge(a, b, c):
        return [] if c == "absent" else [(a, b)]

    def directed(a, b, c):
        return [c[1:]] if isinstance(c, tuple) else []

    def undirected(a, b, c):
        return [(a, b)] if c == "undirected" else []

    return shd, f1(any_edge), f1(directed), f1(undirected)


def random_mixed_graph(rng, n, p):
    from adascore.graphs import CIRCLE

    marks = [TAIL, ARROW, CIRCLE]
    g = MixedGraph(n)
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p:
                g.set_edge(a, b, marks[rng.integers(3)], marks[rng.integers(3)])
    return g
