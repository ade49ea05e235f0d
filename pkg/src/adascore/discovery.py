"""AdaScore: score-matching causal discovery that tolerates hidden variables.

The search loop only talks to a *backend* answering two kinds of
questions about a variable subset ``Z`` (indices into the observed data):

* ``delta``: can the score of ``V_j`` be predicted from the residual of
  ``V_j`` regressed on the rest of ``Z``? (vanishing means ``j`` has an
  additive-noise mechanism with independent noise inside ``Z``)
* ``cross``: is the cross-partial ``d^2 log p(V_Z) / dV_i dV_j`` zero?
  (vanishing means ``i`` and ``j`` are separated given ``Z \\ {i, j}``)

:class:`SampleBackend` answers with Stein score estimates, kernel ridge
residuals and hypothesis tests; :class:`OracleBackend` answers exactly from
a known DAG, which is how the search logic itself is verified.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigError
from .graphs import (
    ARROW,
    TAIL,
    Dag,
    LatentPartition,
    MixedGraph,
    circle_skeleton,
    d_separated,
    iter_subsets,
    pag_orient,
)
from .regression import KrrConfig, delta as delta_estimate, fold_assignment, residual
from .score import SteinConfig, stein_score_table
from .simulate import Dataset, MechanismKind, delta_vanishes
from .stat_tests import kernel_independence_test, t_test_zero_mean


class Mode(enum.Enum):
    DAG = "dag"
    MIXED = "mixed"
    PAG = "pag"


@dataclass(frozen=True)
class DiscoveryConfig:
    mode: Mode = Mode.MIXED
    alpha: float = 0.05
    prune_alpha: float = 0.001
    stein: SteinConfig = field(default_factory=SteinConfig)
    krr: KrrConfig = field(default_factory=KrrConfig)
    max_subset_size: int | None = None
    seed: int = 0
    cam_prune: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 < self.prune_alpha < 1:
            raise ConfigError("prune_alpha must lie in (0, 1)")
        if self.max_subset_size is not None and self.max_subset_size < 0:
            raise ConfigError("max_subset_size must be non-negative")


# ---------------------------------------------------------------------------
# trace


@dataclass
class DiscoveryTrace:
    """Ordered event log; every change to the output graph is an event."""

    num_nodes: int
    node_names: tuple[str, ...] | None = None
    events: list[dict] = field(default_factory=list)

    def add(self, kind: str, **payload) -> None:
        self.events.append({"event": kind, **payload})

    def replay(self) -> MixedGraph:
        g = MixedGraph(self.num_nodes, node_names=self.node_names)
        for ev in self.events:
            kind = ev["event"]
            if kind == "edge-oriented":
                a, b = ev["pair"]
                g.set_edge(a, b, TAIL, ARROW)
            elif kind == "edge-undirected":
                a, b = ev["pair"]
                g.set_edge(a, b, TAIL, TAIL)
            elif kind in ("final-pruned", "cam-pruned", "edge-removed"):
                a, b = ev["pair"]
                if g.adjacent(a, b):
                    g.remove_edge(a, b)
            elif kind == "pag-marks":
                g = MixedGraph(self.num_nodes, node_names=self.node_names)
                from .graphs import Mark

                for a, b, ma, mb in ev["edges"]:
                    g.set_edge(a, b, Mark(ma), Mark(mb))
        return g

    def to_jsonl(self) -> str:
        return "".join(json.dumps(ev, default=_json_default) + "\n" for ev in self.events)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(type(o))


# ---------------------------------------------------------------------------
# backends


class OracleBackend:
    """Exact answers from a known DAG and hidden set.

    Statistics are 0 for a vanishing quantity and 1 otherwise, so
    "argmin, then test" selection behaves like "does any candidate vanish".
    ``regression_calls`` counts two fits per distinct ``delta`` query, which
    is what the sample backend would spend.
    """

    def __init__(self, g: Dag, part: LatentPartition, mechanism: MechanismKind):
        part.check(g)
        self.g, self.part, self.mechanism = g, part, MechanismKind(mechanism)
        self.obs = part.observed
        self.num_nodes = len(self.obs)
        self.regression_calls = 0
        self._delta: dict = {}

    def _full(self, z):
        return {self.obs[v] for v in z}

    def delta_stat(self, j, z) -> float:
        return 0.0 if self.delta_test(j, z)[0] else 1.0

    def delta_test(self, j, z):
        key = (j, frozenset(z))
        if key not in self._delta:
            self.regression_calls += 2
            self._delta[key] = delta_vanishes(self.g, self.part, self.mechanism, self.obs[j],
                                              self._full(z))
        v = self._delta[key]
        return v, (1.0 if v else 0.0)

    def cross_stat(self, i, j, z) -> float:
        return 0.0 if self.cross_test(i, j, z)[0] else 1.0

    def cross_test(self, i, j, z):
        rest = self._full(set(z) - {i, j})
        v = d_separated(self.g, self.obs[i], self.obs[j], rest)
        return v, (1.0 if v else 0.0)

    def prune_parents(self, parents: dict, alpha: float, trace) -> dict:
        return parents


class SampleBackend:
    """Finite-sample answers from data.

    * cross-partials: Stein Hessian over ``Z``, one-sample t-test of zero mean;
      selection statistic is the mean absolute estimate.
    * delta: out-of-fold residual of ``V_j`` on ``Z \\ {j}``, out-of-fold
      regression of the estimated score on it; selection statistic is the mean
      squared error, and the decision is an HSIC test of the residual against
      the regressors.
    """

    def __init__(self, values: np.ndarray, cfg: DiscoveryConfig):
        self.x = np.asarray(values, dtype=float)
        n, d = self.x.shape
        self.num_nodes = d
        self.cfg = cfg
        if n < 2 * cfg.krr.folds:
            raise ConfigError(f"{n} samples are too few for {cfg.krr.folds} folds")
        self.folds = fold_assignment(n, cfg.krr.folds, cfg.seed)
        self.regression_calls = 0
        self._tables: dict = {}
        self._deltas: dict = {}
        self._dtests: dict = {}
        self._ctests: dict = {}

    def table(self, z):
        key = tuple(sorted(z))
        if key not in self._tables:
            self._tables[key] = stein_score_table(self.x, key, self.cfg.stein)
        return self._tables[key]

    def _delta(self, j, z):
        key = (j, frozenset(z))
        if key not in self._deltas:
            tab = self.table(z)
            self.regression_calls += 2
            self._deltas[key] = delta_estimate(self.x, tab, j, tuple(sorted(z)), self.cfg.krr,
                                               self.folds)
        return self._deltas[key]

    def delta_stat(self, j, z) -> float:
        return self._delta(j, z).mean

    def delta_test(self, j, z):
        key = (j, frozenset(z))
        if key not in self._dtests:
            est = self._delta(j, z)
            others = sorted(set(z) - {j})
            if not others:
                self._dtests[key] = (True, 1.0)
            else:
                r = kernel_independence_test(est.residual.values, self.x[:, others], self.cfg.alpha)
                self._dtests[key] = (not r.rejected, r.p_value)
        return self._dtests[key]

    def _cross(self, i, j, z):
        tab = self.table(z)
        return tab.cross[:, tab.column(i), tab.column(j)]

    def cross_stat(self, i, j, z) -> float:
        return float(np.mean(np.abs(self._cross(i, j, z))))

    def cross_test(self, i, j, z):
        key = (min(i, j), max(i, j), frozenset(z))
        if key not in self._ctests:
            r = t_test_zero_mean(self._cross(i, j, z), self.cfg.alpha)
            self._ctests[key] = (not r.rejected, r.p_value)
        return self._ctests[key]

    def prune_parents(self, parents: dict, alpha: float, trace) -> dict:
        return cam_prune(self.x, parents, alpha, trace=trace, krr=self.cfg.krr)


# ---------------------------------------------------------------------------
# the search


def _argmin(candidates, stat):
    """Candidate with the smallest statistic; ties go to the lexicographically first."""
    best, best_key = None, None
    for c in candidates:
        key = (stat(c), tuple(sorted(c)) if isinstance(c, frozenset) else c)
        if best_key is None or key < best_key:
            best, best_key = c, key
    return best


class _Search:
    def __init__(self, backend, cfg: DiscoveryConfig, trace: DiscoveryTrace):
        self.b, self.cfg, self.trace = backend, cfg, trace
        d = backend.num_nodes
        self.d = d
        self.nbrs = {i: set(range(d)) - {i} for i in range(d)}
        self.edges: dict[frozenset, tuple[int, int] | None] = {}  # None means undirected
        # Once a non-sink has left S, a cross-partial over V_S can be non-zero
        # through that node alone, so later sink edges are re-checked at the end.
        self.left_early = False
        self.recheck: set[frozenset] = set()

    # edge bookkeeping, mirrored into the trace
    def orient(self, a, b, **info):
        self.edges[frozenset((a, b))] = (a, b)
        self.trace.add("edge-oriented", pair=[a, b], **info)

    def undirect(self, a, b, **info):
        self.edges[frozenset((a, b))] = None
        self.trace.add("edge-undirected", pair=sorted([a, b]), **info)

    def drop(self, a, b, kind, **info):
        if self.edges.pop(frozenset((a, b)), "absent") != "absent":
            self.trace.add(kind, pair=sorted([a, b]), **info)

    def subsets(self, pool):
        return iter_subsets(sorted(pool), self.cfg.max_subset_size)

    # steps
    def sink_candidate(self, s):
        z = frozenset(s)
        i = _argmin(sorted(s), lambda v: self.b.delta_stat(v, z))
        return i, self.b.delta_stat(i, z)

    def add_sink(self, i, s):
        z = frozenset(s)
        for j in sorted(s - {i}):
            vanish, p = self.b.cross_test(i, j, z)
            if not vanish:
                self.orient(j, i, p=p)
                if self.left_early:
                    self.recheck.add(frozenset((i, j)))

    def best_separator(self, i, j):
        pool = (self.nbrs[i] | self.nbrs[j]) - {i, j}
        sets = [frozenset(c) | {i, j} for c in self.subsets(pool)]
        z = _argmin(sets, lambda c: self.b.cross_stat(i, j, c))
        vanish, p = self.b.cross_test(i, j, z)
        return vanish, p, z

    def orientable_into(self, j, i):
        """Does some subset of ``j``'s neighbourhood make ``delta_j`` vanish (with ``i`` in it)?"""
        pool = self.nbrs[j] - {i}
        sets = [frozenset(c) | {i, j} for c in self.subsets(pool)]
        z = _argmin(sets, lambda c: self.b.delta_stat(j, c))
        vanish, p = self.b.delta_test(j, z)
        return vanish, p, z

    def explore(self, i, s):
        for k in sorted(self.nbrs[i]):
            if k not in self.nbrs[i]:
                continue
            vanish, p, z = self.best_separator(i, k)
            if vanish:
                self.nbrs[i].discard(k)
                self.nbrs[k].discard(i)
                self.trace.add("neighborhood-pruned", pair=[i, k], subset=sorted(z - {i, k}), p=p)
        for j in sorted(self.nbrs[i]):
            into_i, p_i, _ = self.orientable_into(i, j)
            into_j, p_j, _ = self.orientable_into(j, i)
            if into_i and not into_j:
                self.orient(j, i, p_into=[p_i, p_j])
            elif into_j and not into_i:
                self.orient(i, j, p_into=[p_i, p_j])
            else:
                self.undirect(i, j, p_into=[p_i, p_j])
        out = [j for j in sorted(self.nbrs[i]) if j in s and self.edges.get(frozenset((i, j))) == (i, j)]
        return out

    def final_prune(self):
        for key in sorted(self.edges, key=lambda k: tuple(sorted(k))):
            if self.edges[key] is not None and key not in self.recheck:
                continue
            i, j = sorted(key)
            vanish, p, z = self.best_separator(i, j)
            if vanish:
                self.drop(i, j, "final-pruned", subset=sorted(z - {i, j}), p=p)

    def run_mixed(self):
        s = set(range(self.d))
        current, chain = None, set()
        while s:
            if current is None:
                i, stat = self.sink_candidate(s)
                vanish, p = self.b.delta_test(i, frozenset(s)) if len(s) > 1 else (True, 1.0)
                if vanish:
                    self.trace.add("sink-found", node=i, delta=stat, p=p)
                    self.add_sink(i, s)
                    s.discard(i)
                    continue
                self.trace.add("sink-rejected", node=i, delta=stat, p=p)
                chain = set()
            else:
                i = current
            chain.add(i)
            self.trace.add("explore", node=i)
            outgoing = [j for j in self.explore(i, s) if j not in chain]
            if outgoing:
                current = outgoing[0]
            else:
                s.discard(i)
                self.left_early = True
                current = None
        self.final_prune()

    def run_dag(self):
        s = set(range(self.d))
        while s:
            i, stat = self.sink_candidate(s)
            self.trace.add("sink-found", node=i, delta=stat)
            self.add_sink(i, s)
            s.discard(i)

    def run_pag(self) -> MixedGraph:
        adj = {i: set(range(self.d)) - {i} for i in range(self.d)}
        sepsets = {}
        size = 0
        while any(len(adj[i]) - 1 >= size for i in adj):
            for i in range(self.d):
                for j in sorted(adj[i]):
                    if j not in adj[i]:
                        continue
                    for c in iter_subsets(sorted(adj[i] - {j}), size):
                        if len(c) != size:
                            continue
                        vanish, p = self.b.cross_test(i, j, frozenset(c) | {i, j})
                        if vanish:
                            adj[i].discard(j)
                            adj[j].discard(i)
                            sepsets[frozenset((i, j))] = set(c)
                            self.trace.add("neighborhood-pruned", pair=[i, j], subset=sorted(c), p=p)
                            break
            size += 1
            if self.cfg.max_subset_size is not None and size > self.cfg.max_subset_size:
                break
        skel = MixedGraph(self.d)
        for i in range(self.d):
            for j in adj[i]:
                if i < j:
                    skel.set_edge(i, j, TAIL, TAIL)
        pag = pag_orient(circle_skeleton(skel), sepsets, strict=False)
        self.trace.add("pag-marks", edges=[[a, b, ma.value, mb.value] for a, b, ma, mb in pag.edges()])
        return pag

    def graph(self, names=None) -> MixedGraph:
        g = MixedGraph(self.d, node_names=names)
        for key, direction in self.edges.items():
            if direction is None:
                a, b = sorted(key)
                g.set_edge(a, b, TAIL, TAIL)
            else:
                g.set_edge(direction[0], direction[1], TAIL, ARROW)
        return g

    def apply_pruning(self):
        parents = {}
        for key, direction in self.edges.items():
            if direction is not None:
                parents.setdefault(direction[1], set()).add(direction[0])
        kept = self.b.prune_parents(parents, self.cfg.prune_alpha, self.trace)
        for child, ps in parents.items():
            for p in sorted(ps - set(kept.get(child, ()))):
                self.edges.pop(frozenset((p, child)), None)


def run_search(backend, cfg: DiscoveryConfig, node_names=None):
    """Run the search loop against any backend; returns ``(graph, trace)``."""
    names = None if node_names is None else tuple(node_names)
    trace = DiscoveryTrace(backend.num_nodes, names)
    search = _Search(backend, cfg, trace)
    if backend.num_nodes == 1:
        return MixedGraph(1, node_names=names), trace
    if cfg.mode is Mode.PAG:
        g = search.run_pag()
        if names is not None:
            g = MixedGraph(g.num_nodes, {(a, b): (ma, mb) for a, b, ma, mb in g.edges()}, names)
        return g, trace
    if cfg.mode is Mode.DAG:
        search.run_dag()
    else:
        search.run_mixed()
    if cfg.cam_prune:
        search.apply_pruning()
    return search.graph(names), trace


def adascore(data, cfg: DiscoveryConfig = DiscoveryConfig()):
    """Discover a causal graph from ``data`` (a :class:`Dataset` or an n x d array).

    Returns ``(graph, trace)``. In DAG mode the graph is a :class:`Dag`,
    otherwise a :class:`MixedGraph` (directed and undirected edges in mixed
    mode; tail/arrow/circle marks in PAG mode).
    """
    if isinstance(data, Dataset):
        values, names = data.values, data.column_names
    else:
        values, names = np.asarray(data, dtype=float), None
    if values.ndim != 2 or values.shape[1] < 1:
        raise ConfigError("data must be a two-dimensional array")
    values = values - values.mean(axis=0)
    backend = SampleBackend(values, cfg)
    g, trace = run_search(backend, cfg, names)
    trace.add("summary", regression_calls=backend.regression_calls)
    if cfg.mode is Mode.DAG:
        return Dag.from_edges(g.num_nodes, g.directed_edges(), names), trace
    return g, trace


def find_unconfounded_sink(data, remaining, cfg: DiscoveryConfig = DiscoveryConfig(), backend=None):
    """The minimal-delta node of ``remaining`` if its independence test passes, else ``None``.

    Returns ``(node, DeltaEstimate)`` (the estimate is ``None`` for oracle
    backends and for a single remaining node).
    """
    remaining = sorted(remaining)
    if not remaining:
        raise ValueError("remaining must be non-empty")
    if backend is None:
        values = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)
        backend = SampleBackend(values - values.mean(axis=0), cfg)
    if len(remaining) == 1:
        return remaining[0], None
    z = frozenset(remaining)
    i = _argmin(remaining, lambda v: backend.delta_stat(v, z))
    vanish, _ = backend.delta_test(i, z)
    if not vanish:
        return None
    est = backend._delta(i, z) if isinstance(backend, SampleBackend) else None
    return i, est


# ---------------------------------------------------------------------------
# CAM-style pruning


def _smoother(x: np.ndarray, y: np.ndarray, krr: KrrConfig):
    """Kernel ridge smoother for one input: eigenbasis, shrinkage factors, dof."""
    from scipy.spatial.distance import pdist, squareform

    from .score import median_bandwidth

    s = median_bandwidth(x)
    k = np.exp(-squareform(pdist(x[:, None], "sqeuclidean")) / (2 * s * s))
    w, q = np.linalg.eigh(k)
    w = np.clip(w, 0.0, None)
    qty = q.T @ (y - y.mean())
    q2 = q * q
    best, best_err = None, np.inf
    for lam in krr.ridge_grid:
        shrink = w / (w + lam)
        hat = q2 @ shrink
        loo = ((y - y.mean()) - q @ (shrink * qty)) / np.clip(1 - hat, 1e-12, None)
        err = float(np.mean(loo**2))
        if err < best_err:
            best, best_err = lam, err
    shrink = w / (w + best)
    return q, shrink, float(shrink.sum())


def _backfit(y, smoothers, sweeps=10, tol=1e-8):
    n = y.shape[0]
    r = y - y.mean()
    fits = [np.zeros(n) for _ in smoothers]
    for _ in range(sweeps):
        change = 0.0
        for k, (q, shrink, _) in enumerate(smoothers):
            partial = r - sum(f for m, f in enumerate(fits) if m != k)
            new = q @ (shrink * (q.T @ partial))
            new -= new.mean()
            change = max(change, float(np.max(np.abs(new - fits[k]))))
            fits[k] = new
        if change < tol:
            break
    resid = r - sum(fits) if fits else r
    return float(resid @ resid)


def cam_prune(values: np.ndarray, parents: dict, prune_alpha: float = 0.001, trace=None,
              krr: KrrConfig = KrrConfig()) -> dict:
    """Drop parents whose additive component is not significant (F-test).

    ``parents`` maps child index to a set of parent indices. Each child gets
    an additive model of univariate kernel smoothers fitted by backfitting;
    a parent survives when removing its component increases the residual
    sum of squares significantly at ``prune_alpha``.
    """
    x = np.asarray(values, dtype=float)
    n = x.shape[0]
    kept = {}
    for child in sorted(parents):
        ps = sorted(parents[child])
        if not ps:
            kept[child] = set()
            continue
        y = x[:, child]
        sm = {p: _smoother(x[:, p], y, krr) for p in ps}
        rss_full = _backfit(y, [sm[p] for p in ps])
        df_full = 1.0 + sum(sm[p][2] for p in ps)
        df_resid = max(n - df_full, 1.0)
        keep = set()
        for p in ps:
            rss_red = _backfit(y, [sm[o] for o in ps if o != p])
            df_p = max(sm[p][2], 1e-8)
            f = max(rss_red - rss_full, 0.0) / df_p / (rss_full / df_resid)
            pval = float(stats.f.sf(f, df_p, df_resid))
            if pval < prune_alpha:
                keep.add(p)
            elif trace is not None:
                trace.add("cam-pruned", pair=sorted([p, child]), child=child, parent=p, p=pval)
        kept[child] = keep
    return kept
