import itertools
import json

import numpy as np
import pytest

from adascore.errors import DegenerateColumn, NoValidHiding
from adascore.graphs import ARROW, TAIL, Dag, LatentPartition, marginalize
from adascore.simulate import (
    Dataset,
    MechanismKind,
    ScmSpec,
    choose_hidden,
    gen_er_dag,
    hidden_roles,
    hide_variables,
    identifiable_target_graph,
    load_bundle,
    make_instance,
    make_scm,
    random_baseline,
    sample_scm,
    standardize,
    write_bundle,
)

from oracles import adjacent_by_separation, dsep_bruteforce, random_dag

LIN, MLP, NONADD = MechanismKind.LINEAR, MechanismKind.NONLINEAR_MLP, MechanismKind.NON_ADDITIVE


class TestErDag:
    def test_no_edges(self):
        assert gen_er_dag(5, 0.0, 1).edges() == []

    def test_complete(self):
        assert len(gen_er_dag(3, 1.0, 1).edges()) == 3

    def test_deterministic(self):
        assert gen_er_dag(6, 0.4, 9).edges() == gen_er_dag(6, 0.4, 9).edges()

    def test_edge_density(self):
        pairs = 7 * 6 // 2
        density = np.mean([len(gen_er_dag(7, 0.3, s).edges()) / pairs for s in range(1000)])
        assert abs(density - 0.3) <= 0.03


class TestSampling:
    def test_root_is_uniform_noise(self):
        spec = make_scm(Dag.from_edges(2, [(0, 1)]), LIN, 0)
        x = sample_scm(spec, 20_000).values[:, 0]
        assert x.min() >= -2 and x.max() <= 2
        assert abs(x.mean()) < 0.05

    def test_linear_residual_is_noise(self):
        g = Dag.from_edges(2, [(0, 1)])
        spec = ScmSpec(g, LIN, 3, coefficients={(0, 1): 2.0})
        x = sample_scm(spec, 1000).values
        r = x[:, 1] - 2 * x[:, 0]
        assert r.min() >= -2 and r.max() <= 2

    def test_ols_recovers_coefficients(self):
        g = gen_er_dag(5, 0.6, 4)
        spec = make_scm(g, LIN, 4)
        x = sample_scm(spec, 10_000).values
        for child in range(5):
            ps = sorted(g.parents[child])
            if not ps:
                continue
            a = np.column_stack([x[:, ps], np.ones(len(x))])
            coef = np.linalg.lstsq(a, x[:, child], rcond=None)[0]
            for p, c in zip(ps, coef):
                assert abs(c - spec.coefficients[(p, child)]) <= 0.05

    @pytest.mark.parametrize("mech", list(MechanismKind))
    def test_bit_identical_regeneration(self, mech):
        g = gen_er_dag(5, 0.5, 2)
        a = sample_scm(make_scm(g, mech, 2), 300).values
        b = sample_scm(make_scm(g, mech, 2), 300).values
        assert np.array_equal(a, b)

    def test_coefficient_range(self):
        spec = make_scm(gen_er_dag(8, 0.7, 5), LIN, 5)
        assert all(0.5 <= abs(c) <= 3 for c in spec.coefficients.values())
        with pytest.raises(ValueError):
            ScmSpec(Dag.from_edges(2, [(0, 1)]), LIN, 0, coefficients={(0, 1): 0.1})

    def test_nonadditive_noise_enters_network(self):
        spec = make_scm(Dag.from_edges(2, [(0, 1)]), NONADD, 1)
        (net,) = spec.mlps[1]
        assert net.uses_noise and net.w1.shape == (2, 10)

    def test_latent_part_is_separate_network(self):
        spec = make_scm(Dag.from_edges(3, [(0, 2), (1, 2)]), MLP, 1, latent=[1])
        assert [n.inputs for n in spec.mlps[2]] == [(0,), (1,)]


class TestStandardize:
    def test_unit_sd(self):
        d = Dataset(np.random.default_rng(0).normal(3, 4, (500, 3)), ["a", "b", "c"])
        s = standardize(d)
        assert np.allclose(s.values.std(axis=0), 1, atol=1e-9)
        assert s.standardized and not s.centered
        assert np.allclose(s.values, d.values / d.values.std(axis=0))

    def test_pm_one_unchanged(self):
        d = Dataset(np.array([[1.0], [-1.0], [1.0], [-1.0]]), ["x"])
        assert np.allclose(standardize(d).values, d.values)

    def test_sd_four(self):
        v = np.array([[4.0], [-4.0]])
        assert np.allclose(standardize(Dataset(v, ["x"])).values, v / 4)

    def test_idempotent(self):
        d = Dataset(np.random.default_rng(1).uniform(size=(100, 2)), ["a", "b"])
        once = standardize(d)
        assert np.allclose(standardize(once).values, once.values, atol=1e-12)

    def test_centering_flag(self):
        d = Dataset(np.random.default_rng(1).uniform(size=(100, 2)) + 5, ["a", "b"])
        s = standardize(d, center=True)
        assert s.centered and np.allclose(s.values.mean(axis=0), 0)

    def test_constant_column(self):
        with pytest.raises(DegenerateColumn):
            standardize(Dataset(np.ones((10, 1)), ["x"]))


class TestHiding:
    def test_chain_hides_the_mediator(self):
        chain = Dag.from_edges(3, [(0, 1), (1, 2)])
        for seed in range(20):
            assert choose_hidden(chain, 1, MLP, seed) == frozenset({1})

    def test_chain_rule_by_enumeration(self):
        chain = Dag.from_edges(3, [(0, 1), (1, 2)])
        roles = {v: hidden_roles(chain, {v}) for v in range(3)}
        assert roles == {0: (False, False), 1: (False, True), 2: (False, False)}

    def test_linear_needs_a_confounder(self):
        with pytest.raises(NoValidHiding):
            choose_hidden(Dag.from_edges(3, [(0, 1), (1, 2)]), 1, LIN, 0, max_attempts=200)

    def test_star_confounder(self):
        star = Dag.from_edges(4, [(0, 1), (0, 2), (0, 3)])
        assert hidden_roles(star, {0}) == (True, False)

    def test_no_hidden(self):
        inst = make_instance(4, 0.5, MLP, 200, 0, 3)
        assert inst.data.d == 4
        assert inst.partition.latent == frozenset()
        assert sorted(inst.target.directed_edges()) == sorted(inst.full_dag.edges())

    def test_hide_variables_drops_columns(self):
        g = Dag.from_edges(3, [(0, 1), (0, 2)])
        spec = make_scm(g, MLP, 0)
        full = sample_scm(spec, 100)
        inst = hide_variables(spec, full, 1, 0)
        assert inst.partition.latent == frozenset({0})
        assert np.array_equal(inst.data.values, full.values[:, [1, 2]])

    def test_empty_graph_has_no_valid_hiding(self):
        g = Dag.from_edges(3, [])
        for k in (1, 2):
            assert not any(any(hidden_roles(g, set(c))) for c in itertools.combinations(range(3), k))
        with pytest.raises(NoValidHiding):
            choose_hidden(g, 2, MLP, 0, max_attempts=100)


class TestTarget:
    def test_instrument_graph_edge_stays_undirected(self):
        # Z=0 -> X=1 <- U=2, U -> Y=3, X -> Y; hide U
        g = Dag.from_edges(4, [(0, 1), (2, 1), (2, 3), (1, 3)])
        t = identifiable_target_graph(g, LatentPartition.from_latent(4, [2]), MLP)
        # observed order Z, X, Y
        assert t.endpoints(1, 2) == (TAIL, TAIL)
        assert t.endpoints(0, 1) == (TAIL, ARROW)

    def test_observed_chain_fully_directed(self):
        g = Dag.from_edges(3, [(0, 1), (1, 2)])
        t = identifiable_target_graph(g, LatentPartition.fully_observed(3), MLP)
        assert t.directed_edges() == [(0, 1), (1, 2)]

    def test_confounded_pair(self):
        g = Dag.from_edges(3, [(0, 1), (0, 2)])
        for mech in MechanismKind:
            t = identifiable_target_graph(g, LatentPartition.from_latent(3, [0]), mech)
            assert t.edges() == [(0, 1, TAIL, TAIL)]

    def test_linear_orients_ancestors_through_mediator(self):
        # 0 -> 1 -> 2 with 1 hidden: linear keeps the ancestral orientation
        g = Dag.from_edges(3, [(0, 1), (1, 2)])
        t = identifiable_target_graph(g, LatentPartition.from_latent(3, [1]), LIN)
        assert t.directed_edges() == [(0, 1)]

    def test_nonlinear_rule_matches_parent_criterion(self):
        """Directed iff observed parent, and every observed parent of the child is
        d-separated from every hidden parent (checked by path enumeration)."""
        rng = np.random.default_rng(5)
        for _ in range(150):
            n = int(rng.integers(3, 7))
            g = random_dag(rng, n, rng.uniform(0.2, 0.7))
            latent = set(rng.choice(n, size=int(rng.integers(0, 3)), replace=False).tolist())
            part = LatentPartition.from_latent(n, latent)
            t = identifiable_target_graph(g, part, MLP)
            obs = part.observed
            for a, b in itertools.permutations(range(len(obs)), 2):
                i, j = obs[a], obs[b]
                pa_v = [p for p in g.parents[j] if p not in latent]
                pa_u = [p for p in g.parents[j] if p in latent]
                rule = i in g.parents[j] and all(
                    dsep_bruteforce(g, p, u, ()) for p in pa_v for u in pa_u)
                assert t.is_directed(a, b) == rule

    def test_skeleton_matches_marginal(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            g = random_dag(rng, n, 0.5)
            part = LatentPartition.from_latent(n, rng.choice(n, size=min(2, n - 1), replace=False))
            for mech in (LIN, MLP):
                t = identifiable_target_graph(g, part, mech)
                assert t.skeleton() == marginalize(g, part).skeleton()


class TestRandomBaseline:
    def test_empty(self):
        assert random_baseline(5, 0.0, 5, MLP, 1).num_edges() == 0

    def test_tournament(self):
        t = random_baseline(4, 1.0, 4, MLP, 1)
        assert t.num_edges() == 6 and len(t.directed_edges()) == 6

    def test_deterministic(self):
        assert random_baseline(6, 0.4, 4, LIN, 3) == random_baseline(6, 0.4, 4, LIN, 3)

    def test_adjacency_rate_matches_enumeration(self):
        d, p, keep = 4, 0.5, 3
        pairs = list(itertools.combinations(range(d), 2))
        # exact: every labelled DAG on a random order, every hidden node
        expected = 0.0
        for order in itertools.permutations(range(d)):
            for mask in range(1 << len(pairs)):
                edges, k = [], 0
                for bit, (x, y) in enumerate(pairs):
                    if mask >> bit & 1:
                        edges.append((order[x], order[y]))
                        k += 1
                w = p**k * (1 - p) ** (len(pairs) - k) / 24
                g = Dag.from_edges(d, edges)
                for hidden in range(d):
                    obs = [v for v in range(d) if v != hidden]
                    adj = [adjacent_by_separation(g, obs, a, b) for a, b in itertools.combinations(obs, 2)]
                    expected += w / d * np.mean(adj)
        rates = []
        for seed in range(500):
            t = random_baseline(d, p, keep, LIN, seed)
            rates.append(t.num_edges() / 3)
        assert abs(np.mean(rates) - expected) <= 0.05


class TestBundle:
    def test_round_trip(self, tmp_path):
        inst = make_instance(5, 0.5, MLP, 100, 1, 2)
        write_bundle(inst, tmp_path / "b", {"note": "x"})
        back = load_bundle(tmp_path / "b")
        assert np.array_equal(back.data.values, inst.data.values)
        assert back.target == inst.target
        assert back.partition == inst.partition
        meta = json.loads((tmp_path / "b" / "meta.json").read_text())
        assert meta["note"] == "x" and meta["mechanism"] == "mlp"

    def test_hidden_instance_is_confounded(self):
        for seed in range(5):
            inst = make_instance(6, 0.5, LIN, 50, 2, seed)
            assert hidden_roles(inst.full_dag, inst.partition.latent)[0]
