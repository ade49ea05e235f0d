"""Synthetic structural causal models with optional hidden variables.

The generator draws an Erdos-Renyi DAG, attaches linear or random-MLP
mechanisms with uniform noise, samples data in topological order and can
hide a subset of nodes. For every instance it also produces the graph a
perfect-information run of the discovery algorithm should return, which
is what benchmarks score against.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateColumn, NoValidHiding
from .graphs import (
    ARROW,
    TAIL,
    Dag,
    LatentPartition,
    MixedGraph,
    ancestors,
    ancestors_of_set,
    d_separated,
    descendants,
    marginalize,
    topological_order,
)
from .io import graph_from_json, graph_to_json, read_csv, write_csv

MAX_HIDING_ATTEMPTS = 10_000
HIDDEN_WIDTH = 10
PRELU_SLOPE = 0.25
COEF_LOW, COEF_HIGH = 0.5, 3.0


class MechanismKind(enum.Enum):
    LINEAR = "linear"
    NONLINEAR_MLP = "mlp"
    NON_ADDITIVE = "nonadditive"

    @property
    def is_linear(self) -> bool:
        return self is MechanismKind.LINEAR


def _rng(seed: int, tag: str) -> np.random.Generator:
    # independent, reproducible streams for graph / weights / noise / hiding
    salt = int.from_bytes(tag.encode(), "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), salt]))


# ---------------------------------------------------------------------------
# graphs


def gen_er_dag(d: int, edge_prob: float, seed: int) -> Dag:
    """Erdos-Renyi DAG: random node order, each forward pair kept with ``edge_prob``."""
    if d < 1:
        raise ValueError("d must be at least 1")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    rng = _rng(seed, "graph")
    order = rng.permutation(d)
    coins = rng.random((d, d))
    edges = [
        (int(order[a]), int(order[b]))
        for a in range(d)
        for b in range(a + 1, d)
        if coins[a, b] < edge_prob
    ]
    return Dag.from_edges(d, edges)


# ---------------------------------------------------------------------------
# mechanisms


@dataclass(frozen=True)
class Mlp:
    """One hidden layer, PReLU, batch standardization, linear read-out."""

    inputs: tuple[int, ...]
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    slope: float = PRELU_SLOPE
    uses_noise: bool = False

    @classmethod
    def draw(cls, rng, inputs, uses_noise=False) -> "Mlp":
        p = len(inputs) + int(uses_noise)
        return cls(
            inputs=tuple(inputs),
            w1=rng.standard_normal((p, HIDDEN_WIDTH)),
            b1=rng.standard_normal(HIDDEN_WIDTH),
            w2=rng.standard_normal(HIDDEN_WIDTH),
            uses_noise=uses_noise,
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        h = x @ self.w1 + self.b1
        h = np.where(h > 0, h, self.slope * h)
        sd = h.std(axis=0)
        h = (h - h.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        return h @ self.w2

    def to_json(self) -> dict:
        return {
            "inputs": list(self.inputs),
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "slope": self.slope,
            "uses_noise": self.uses_noise,
        }


@dataclass(frozen=True)
class ScmSpec:
    """A fully parametrized SCM over ``graph``.

    With a non-empty ``latent`` set, nonlinear nodes are generated as
    ``f(observed parents) + g(latent parents) + noise`` so that the latent
    influence is additive.
    """

    graph: Dag
    mechanism: MechanismKind
    seed: int
    coefficients: dict = field(default_factory=dict)  # (parent, child) -> float
    mlps: dict = field(default_factory=dict)  # child -> tuple of Mlp
    noise_low: float = -2.0
    noise_high: float = 2.0
    latent: frozenset = frozenset()

    def __post_init__(self):
        if not self.noise_low < self.noise_high:
            raise ValueError("noise_low must be below noise_high")
        for c in self.coefficients.values():
            if not COEF_LOW <= abs(c) <= COEF_HIGH:
                raise ValueError(f"linear coefficient {c} outside +-[0.5, 3]")


def _draw_coefficient(rng) -> float:
    return float(rng.choice([-1.0, 1.0]) * rng.uniform(COEF_LOW, COEF_HIGH))


def make_scm(
    graph: Dag,
    mechanism: MechanismKind,
    seed: int,
    latent=(),
    noise_low: float = -2.0,
    noise_high: float = 2.0,
) -> ScmSpec:
    mechanism = MechanismKind(mechanism)
    latent = frozenset(latent)
    rng = _rng(seed, "weights")
    coefficients, mlps = {}, {}
    for child in range(graph.num_nodes):
        parents = sorted(graph.parents[child])
        if mechanism.is_linear:
            for p in parents:
                coefficients[(p, child)] = _draw_coefficient(rng)
        elif mechanism is MechanismKind.NON_ADDITIVE:
            if parents:
                mlps[child] = (Mlp.draw(rng, parents, uses_noise=True),)
        elif parents:
            obs = [p for p in parents if p not in latent]
            lat = [p for p in parents if p in latent]
            mlps[child] = tuple(Mlp.draw(rng, grp) for grp in (obs, lat) if grp)
    return ScmSpec(graph, mechanism, int(seed), coefficients, mlps, noise_low, noise_high, latent)


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    column_names: tuple[str, ...]
    standardized: bool = False
    centered: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 1:
            raise ValueError(f"dataset must be n x d with n >= 2, d >= 1; got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("dataset contains NaN or Inf")
        if len(self.column_names) != v.shape[1]:
            raise ValueError("column_names length does not match number of columns")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def select(self, columns) -> "Dataset":
        columns = list(columns)
        return Dataset(
            self.values[:, columns],
            [self.column_names[c] for c in columns],
            standardized=self.standardized,
            centered=self.centered,
        )


def sample_scm(spec: ScmSpec, n: int, return_noise: bool = False):
    """Draw ``n`` samples of every node (observed and latent), unstandardized."""
    if n < 2:
        raise ValueError("n must be at least 2")
    g = spec.graph
    rng = _rng(spec.seed, "noise")
    noise = rng.uniform(spec.noise_low, spec.noise_high, size=(n, g.num_nodes))
    x = np.zeros((n, g.num_nodes))
    for v in topological_order(g):
        parents = sorted(g.parents[v])
        if not parents:
            x[:, v] = noise[:, v]
        elif spec.mechanism.is_linear:
            x[:, v] = sum(spec.coefficients[(p, v)] * x[:, p] for p in parents) + noise[:, v]
        elif spec.mechanism is MechanismKind.NON_ADDITIVE:
            (net,) = spec.mlps[v]
            x[:, v] = net(np.column_stack([x[:, list(net.inputs)], noise[:, v]]))
        else:
            x[:, v] = sum(net(x[:, list(net.inputs)]) for net in spec.mlps[v]) + noise[:, v]
    data = Dataset(x, [g.name(i) for i in range(g.num_nodes)])
    return (data, noise) if return_noise else data


def standardize(data: Dataset, center: bool = False) -> Dataset:
    """Divide each column by its empirical standard deviation (optionally centre first)."""
    v = data.values
    sd = v.std(axis=0)
    bad = np.flatnonzero(sd == 0)
    if bad.size:
        raise DegenerateColumn(f"column {data.column_names[bad[0]]!r} is constant")
    out = v / sd
    if center:
        out = out - out.mean(axis=0)
    return Dataset(out, data.column_names, standardized=True, centered=center or data.centered)


# ---------------------------------------------------------------------------
# hiding and the identifiable target


def _latent_reach(g: Dag, u: int, latent, forward: bool) -> set[int]:
    """Observed nodes reachable from ``u`` along directed paths with latent interiors."""
    seen, out, stack = {u}, set(), [u]
    while stack:
        v = stack.pop()
        nxt = g.children(v) if forward else g.parents[v]
        for w in nxt:
            if w in seen:
                continue
            seen.add(w)
            if w in latent:
                stack.append(w)
            else:
                out.add(w)
    return out


def hidden_roles(g: Dag, latent) -> tuple[bool, bool]:
    """(has hidden confounder, has hidden mediator) for the given latent set."""
    latent = frozenset(latent)
    confounder = mediator = False
    for u in latent:
        below = _latent_reach(g, u, latent, forward=True)
        above = _latent_reach(g, u, latent, forward=False)
        confounder |= len(below) >= 2
        mediator |= bool(below) and bool(above)
    return confounder, mediator


def hiding_acceptable(g: Dag, latent, mechanism: MechanismKind) -> bool:
    if not latent:
        return True
    confounder, mediator = hidden_roles(g, latent)
    if MechanismKind(mechanism).is_linear:
        return confounder
    return confounder or mediator


def choose_hidden(g: Dag, k: int, mechanism: MechanismKind, seed: int,
                  max_attempts: int = MAX_HIDING_ATTEMPTS) -> frozenset:
    """Rejection-sample ``k`` nodes to hide until the hiding is informative."""
    d = g.num_nodes
    if not 0 <= k < d:
        raise ValueError(f"need 0 <= k < d, got k={k}, d={d}")
    if k == 0:
        return frozenset()
    rng = _rng(seed, "hidden")
    for _ in range(max_attempts):
        latent = frozenset(int(v) for v in rng.choice(d, size=k, replace=False))
        if hiding_acceptable(g, latent, mechanism):
            return latent
    raise NoValidHiding(f"no acceptable set of {k} hidden nodes after {max_attempts} attempts")


def delta_vanishes(g: Dag, part: LatentPartition, mechanism: MechanismKind, j: int, z) -> bool:
    """Population-level answer to: is the j-th score of V_Z predictable from R_j(V_Z)?

    ``j`` and ``z`` are indices into ``g`` (not into the observed order);
    ``z`` must contain ``j``. Nodes outside ``z`` act as unobserved.

    The answer follows the structure of the generator. For linear models,
    ``V_j`` minus its regression on ``Z`` is a linear mix of the noises of
    ``j`` and of every node reaching ``j`` through nodes outside ``Z``; the
    residual is independent of the regressors exactly when none of those
    nodes is an ancestor of a regressor. For nonlinear models, ``f_j`` is a
    joint function of all observed parents, so they must all be in ``Z``,
    and the additive latent part must be d-separated from the regressors.
    """
    z = frozenset(z)
    rest = z - {j}
    if rest & descendants(g, j):
        return False
    if MechanismKind(mechanism).is_linear:
        reach, stack = {j}, [j]
        while stack:
            v = stack.pop()
            for p in g.parents[v]:
                if p not in z and p not in reach:
                    reach.add(p)
                    stack.append(p)
        anc_rest = ancestors_of_set(g, rest)
        return not (reach & anc_rest)
    latent = part.latent
    obs_parents = {p for p in g.parents[j] if p not in latent}
    if not obs_parents <= z:
        return False
    lat_parents = [p for p in g.parents[j] if p in latent]
    return all(d_separated(g, u, r, ()) for u in lat_parents for r in rest)


def identifiable_target_graph(g: Dag, part: LatentPartition, mechanism: MechanismKind) -> MixedGraph:
    """Marginal skeleton with an edge directed ``i -> j`` exactly when the score
    criterion can orient it: some observed ``Z`` containing both has a vanishing
    ``delta_vanishes`` for ``j``. Every other adjacency is undirected.

    For nonlinear mechanisms this reduces to "``i`` is an observed parent of
    ``j`` and the observed parents of ``j`` are d-separated from its latent
    parents"; for linear mechanisms orientations imply ancestry.
    """
    part.check(g)
    mechanism = MechanismKind(mechanism)
    marg = marginalize(g, part)
    obs = part.observed
    out = MixedGraph(len(obs), node_names=marg.node_names)
    for a, b, _, _ in marg.edges():
        i, j = obs[a], obs[b]
        if _orientable(g, part, mechanism, i, j):
            out.set_edge(a, b, TAIL, ARROW)
        elif _orientable(g, part, mechanism, j, i):
            out.set_edge(b, a, TAIL, ARROW)
        else:
            out.set_edge(a, b, TAIL, TAIL)
    return out


def _orientable(g, part, mechanism, i, j) -> bool:
    others = [v for v in part.observed if v not in (i, j)]
    if not mechanism.is_linear:
        # shortcut: the only candidate set worth checking
        if i not in g.parents[j]:
            return False
        z = {i, j} | {p for p in g.parents[j] if p not in part.latent}
        return delta_vanishes(g, part, mechanism, j, z)
    if i not in ancestors(g, j):
        return False
    for k in range(len(others) + 1):
        for extra in itertools.combinations(others, k):
            if delta_vanishes(g, part, mechanism, j, {i, j, *extra}):
                return True
    return False


def random_baseline(d_total: int, edge_prob: float, part_size: int,
                    mechanism: MechanismKind, seed: int) -> MixedGraph:
    """Target graph of a fresh ER DAG with random hidden nodes, as a chance-level guess."""
    if not 1 <= part_size <= d_total:
        raise ValueError("need 1 <= part_size <= d_total")
    g = gen_er_dag(d_total, edge_prob, _seed_child(seed, 1))
    rng = _rng(seed, "baseline")
    latent = rng.choice(d_total, size=d_total - part_size, replace=False)
    part = LatentPartition.from_latent(d_total, (int(v) for v in latent))
    return identifiable_target_graph(g, part, mechanism)


def _seed_child(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([int(seed) & (2**64 - 1), k]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# benchmark instances


@dataclass(frozen=True)
class BenchmarkInstance:
    full_dag: Dag
    partition: LatentPartition
    data: Dataset
    target: MixedGraph
    spec: ScmSpec | None = None

    def __post_init__(self):
        if self.data.d != len(self.partition.observed):
            raise ValueError("data columns do not match observed nodes")
        if self.target.num_nodes != len(self.partition.observed):
            raise ValueError("target must be over observed nodes only")


def hide_variables(spec: ScmSpec, data: Dataset, k: int, seed: int) -> BenchmarkInstance:
    """Drop ``k`` accepted hidden columns and attach the identifiable target.

    ``data`` holds every node (as returned by :func:`sample_scm`). When the
    ``spec`` was built for a particular latent set, it must be the one drawn here.
    """
    g = spec.graph
    if data.d != g.num_nodes:
        raise ValueError("data must contain one column per node of the SCM")
    latent = choose_hidden(g, k, spec.mechanism, seed)
    if spec.latent and spec.latent != latent:
        raise ValueError("ScmSpec was generated for a different hidden set")
    part = LatentPartition.from_latent(g.num_nodes, latent)
    observed = data.select(part.observed)
    target = identifiable_target_graph(g, part, spec.mechanism)
    return BenchmarkInstance(g, part, observed, target, spec)


def make_instance(d: int, edge_prob: float, mechanism, n: int, hidden: int, seed: int,
                  center: bool = False) -> BenchmarkInstance:
    """Graph, hidden set, SCM, samples, standardization, and target in one call."""
    mechanism = MechanismKind(mechanism)
    g = gen_er_dag(d, edge_prob, seed)
    latent = choose_hidden(g, hidden, mechanism, seed)
    spec = make_scm(g, mechanism, seed, latent=latent)
    full = sample_scm(spec, n)
    inst = hide_variables(spec, full, hidden, seed)
    return BenchmarkInstance(inst.full_dag, inst.partition, standardize(inst.data, center=center),
                             inst.target, spec)


def write_bundle(inst: BenchmarkInstance, out_dir, meta: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "data.csv", inst.data.values, inst.data.column_names)
    (out / "truth.json").write_text(json.dumps(graph_to_json(inst.target), indent=2) + "\n",
                                    encoding="utf-8")
    info = dict(meta or {})
    info.update(
        full_dag_nodes=inst.full_dag.num_nodes,
        full_dag_edges=[list(e) for e in inst.full_dag.edges()],
        latent=sorted(inst.partition.latent),
        observed=list(inst.partition.observed),
        standardized=inst.data.standardized,
        centered=inst.data.centered,
    )
    if inst.spec is not None:
        info.update(mechanism=inst.spec.mechanism.value, seed=inst.spec.seed,
                    noise_low=inst.spec.noise_low, noise_high=inst.spec.noise_high)
    (out / "meta.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")


def load_bundle(path) -> BenchmarkInstance:
    path = Path(path)
    values, header = read_csv(path / "data.csv")
    meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
    target = graph_from_json(json.loads((path / "truth.json").read_text(encoding="utf-8")))
    g = Dag.from_edges(meta["full_dag_nodes"], [tuple(e) for e in meta["full_dag_edges"]])
    part = LatentPartition.from_latent(g.num_nodes, meta["latent"])
    data = Dataset(values, header, standardized=meta.get("standardized", False),
                   centered=meta.get("centered", False))
    return BenchmarkInstance(g, part, data, target)
