"""Graph comparison: structural Hamming distance and edge F1 scores.

Every unordered node pair of a graph falls into one of three classes:
absent, directed (a tail at one end and an arrowhead at the other, in
that orientation), or undirected. Any other mark combination (``<->``,
``o-o``, ``o->``) counts as undirected because it does not commit to a
direct causal edge.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import combinations

from .errors import NodeCountMismatch
from .graphs import ARROW, TAIL, Dag, MixedGraph


class EdgeKind(enum.Enum):
    ABSENT = "absent"
    DIRECTED = "directed"
    UNDIRECTED = "undirected"


@dataclass(frozen=True)
class EdgeClass:
    kind: EdgeKind
    source: int | None = None
    target: int | None = None

    def __post_init__(self):
        if (self.kind is EdgeKind.DIRECTED) != (self.source is not None):
            raise ValueError("only directed edges carry an orientation")


ABSENT = EdgeClass(EdgeKind.ABSENT)
UNDIRECTED = EdgeClass(EdgeKind.UNDIRECTED)


class Criterion(enum.Enum):
    ANY_EDGE = "any"
    DIRECTED_EDGE = "directed"
    UNIDENTIFIABLE_EDGE = "unidentifiable"


def _mixed(g) -> MixedGraph:
    return g.to_mixed() if isinstance(g, Dag) else g


def edge_class(g, a: int, b: int) -> EdgeClass:
    g = _mixed(g)
    ends = g.endpoints(a, b)
    if ends is None:
        return ABSENT
    ma, mb = ends
    if (ma, mb) == (TAIL, ARROW):
        return EdgeClass(EdgeKind.DIRECTED, a, b)
    if (ma, mb) == (ARROW, TAIL):
        return EdgeClass(EdgeKind.DIRECTED, b, a)
    return UNDIRECTED


def _check(pred, truth) -> tuple[MixedGraph, MixedGraph]:
    pred, truth = _mixed(pred), _mixed(truth)
    if pred.num_nodes != truth.num_nodes:
        raise NodeCountMismatch(f"{pred.num_nodes} predicted nodes vs {truth.num_nodes} true nodes")
    return pred, truth


def shd(pred, truth) -> int:
    """Number of node pairs whose edge class differs."""
    pred, truth = _check(pred, truth)
    return sum(
        edge_class(pred, a, b) != edge_class(truth, a, b)
        for a, b in combinations(range(pred.num_nodes), 2)
    )


def _positives(g: MixedGraph, criterion: Criterion) -> set:
    out = set()
    for a, b in combinations(range(g.num_nodes), 2):
        c = edge_class(g, a, b)
        if c is ABSENT or c.kind is EdgeKind.ABSENT:
            continue
        if criterion is Criterion.ANY_EDGE:
            out.add((a, b))
        elif criterion is Criterion.DIRECTED_EDGE and c.kind is EdgeKind.DIRECTED:
            out.add((c.source, c.target))
        elif criterion is Criterion.UNIDENTIFIABLE_EDGE and c.kind is EdgeKind.UNDIRECTED:
            out.add((a, b))
    return out


def f1_edges(pred, truth, criterion=Criterion.ANY_EDGE) -> float:
    """F1 of predicted against true positives under ``criterion``.

    When neither graph has a positive the score is 1; when exactly one does
    it is 0.
    """
    pred, truth = _check(pred, truth)
    criterion = Criterion(criterion)
    p, t = _positives(pred, criterion), _positives(truth, criterion)
    if not p and not t:
        return 1.0
    tp = len(p & t)
    if tp == 0:
        return 0.0
    precision, recall = tp / len(p), tp / len(t)
    return 2 * precision * recall / (precision + recall)


def evaluate(pred, truth) -> dict:
    return {
        "shd": shd(pred, truth),
        "f1_any": f1_edges(pred, truth, Criterion.ANY_EDGE),
        "f1_directed": f1_edges(pred, truth, Criterion.DIRECTED_EDGE),
        "f1_unidentifiable": f1_edges(pred, truth, Criterion.UNIDENTIFIABLE_EDGE),
    }
