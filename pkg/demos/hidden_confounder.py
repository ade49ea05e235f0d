"""
A hidden common cause
=====================

Two observed variables share a parent we never see. A method that assumes
every cause is observed would happily draw an arrow between them. Here we
count what the mixed-graph search reports over a few draws, and compare it
with a genuine cause-effect pair.

At a thousand samples the confounding is often too faint to detect, so do
not expect a clean sweep.
"""

from collections import Counter

from adascore.discovery import adascore
from adascore.graphs import TAIL, Dag
from adascore.io import graph_to_text
from adascore.simulate import MechanismKind, make_scm, sample_scm, standardize

mlp = MechanismKind.NONLINEAR_MLP


def outcome(graph):
    edges = graph.edges()
    if not edges:
        return "no edge"
    _, _, ma, mb = edges[0]
    return "undirected" if ma == mb == TAIL else "directed"


# U -> V1 and U -> V2, with U (node 0) hidden
fork = Dag.from_edges(3, [(0, 1), (0, 2)], ["U", "V1", "V2"])
tally = Counter()
for seed in range(5):
    full = sample_scm(make_scm(fork, mlp, seed=seed, latent=[0]), 1000)
    graph, trace = adascore(standardize(full.select([1, 2])))
    tally[outcome(graph)] += 1
    steps = [e["event"] for e in trace.events if e["event"] != "summary"]
    print(f"seed {seed}: {outcome(graph):<10}  {' > '.join(steps)}")
print("confounded pair:", dict(tally))

# A real cause-effect pair generated the same way, nothing hidden.
pair = Dag.from_edges(2, [(0, 1)], ["X", "Y"])
data = standardize(sample_scm(make_scm(pair, mlp, seed=3), 1000))
graph, _ = adascore(data)
print("cause-effect pair:")
print(graph_to_text(graph))
