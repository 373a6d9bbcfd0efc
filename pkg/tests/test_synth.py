import hashlib

import numpy as np
import pytest

from digraph_flow.errors import EmptyDataset, InvalidParam
from digraph_flow.graph import DiGraph, is_acyclic
from digraph_flow.io import load_split
from digraph_flow.metrics.validity import validity_er
from digraph_flow.synth import (
    DatasetSpec,
    default_price_m,
    empirical_stats,
    gen_er,
    gen_price,
    gen_sbm,
    generate_graph,
    generate_splits,
    graph_rng,
    make_dataset,
)


class TestER:
    def test_node_count_range(self, rng):
        ns = [gen_er(20, 80, 0.6, False, rng).num_nodes for _ in range(300)]
        assert min(ns) >= 20 and max(ns) <= 80
        assert min(ns) < 25 and max(ns) > 75

    def test_p_zero_is_empty(self, rng):
        assert gen_er(5, 10, 0.0, False, rng).num_edges == 0

    def test_dag_always_acyclic(self, rng):
        assert all(is_acyclic(gen_er(5, 20, 0.3, True, rng)) for _ in range(1000))

    def test_dag_is_lower_triangular(self, rng):
        g = gen_er(10, 10, 0.9, True, rng)
        assert all(i > j for i, j, _ in g.arcs())

    def test_pair_frequency(self, rng):
        hits = pairs = 0
        while pairs < 100_000:
            g = gen_er(20, 80, 0.6, False, rng)
            n = g.num_nodes
            hits += g.num_edges
            pairs += n * (n - 1)
        sd = np.sqrt(0.6 * 0.4 / pairs)
        assert abs(hits / pairs - 0.6) < 3 * sd

    def test_dataset_edge_count_consistent_with_table(self):
        # Reported ER row: average N 46 with 1446 edges. Under uniform N on
        # [20, 80] the variance of N is (61^2 - 1) / 12, so the implied mean
        # edge count is 0.6 (Var N + 46^2 - 46).
        implied = 0.6 * ((61**2 - 1) / 12 + 46**2 - 46)
        assert abs(implied - 1446) / 1446 < 0.02
        graphs, _ = generate_splits(DatasetSpec("ER"))
        gs = [g for s in graphs.values() for g in s]
        assert len(gs) == 200
        expected = 0.6 * np.mean([g.num_nodes * (g.num_nodes - 1) for g in gs])
        assert abs(np.mean([g.num_edges for g in gs]) / expected - 1) < 0.02

    @pytest.mark.parametrize("args", [(0, 5, 0.5), (6, 5, 0.5), (2, 5, 1.5), (2, 5, -0.1)])
    def test_invalid(self, rng, args):
        with pytest.raises(InvalidParam):
            gen_er(*args, False, rng)


class TestPrice:
    def test_default_m(self):
        assert default_price_m(64) == 6

    def test_acyclic_and_out_degree(self, rng):
        for _ in range(1000):
            g = gen_price(int(rng.integers(2, 40)), None, rng)
            assert is_acyclic(g)
            m = default_price_m(g.num_nodes)
            assert g.adjacency().sum(axis=1).max() <= m

    def test_arcs_point_to_older_nodes(self, rng):
        g = gen_price(64, 6, rng)
        assert all(i > j for i, j, _ in g.arcs())

    def test_average_edges_matches_table(self):
        # Reported Price row: 197 average edges at n = 64.
        gs = [gen_price(64, None, graph_rng(0, "train", k)) for k in range(200)]
        assert abs(np.mean([g.num_edges for g in gs]) - 197) / 197 < 0.03

    def test_invalid(self, rng):
        with pytest.raises(InvalidParam):
            gen_price(3, 4, rng)
        with pytest.raises(InvalidParam):
            gen_price(3, 0, rng)


class TestSBM:
    def test_size_range_and_average(self, rng):
        ns = [gen_sbm(2, 5, 20, 40, 0.3, 0.05, rng).num_nodes for _ in range(400)]
        assert min(ns) >= 40 and max(ns) <= 200
        # Reported SBM row: average N 106; the model expectation is 3.5 * 30 = 105.
        assert abs(np.mean(ns) - 106) / 106 < 0.03

    def test_block_frequencies(self, rng):
        intra = np.zeros(2)
        inter = np.zeros(2)
        while intra[1] < 10_000 or inter[1] < 10_000:
            g, b = gen_sbm(2, 5, 20, 40, 0.3, 0.05, rng, return_blocks=True)
            a = g.adjacency().astype(bool)
            same = b[:, None] == b[None, :]
            off = ~np.eye(len(b), dtype=bool)
            intra += [a[same & off].sum(), (same & off).sum()]
            inter += [a[~same].sum(), (~same).sum()]
        for (hits, n), p in ((intra, 0.3), (inter, 0.05)):
            assert abs(hits / n - p) < 3 * np.sqrt(p * (1 - p) / n)

    def test_no_cross_arcs_when_p_inter_zero(self, rng):
        g, b = gen_sbm(2, 2, 5, 10, 0.5, 0.0, rng, return_blocks=True)
        assert all(b[i] == b[j] for i, j, _ in g.arcs())

    def test_equal_probs_pass_er_test(self, rng):
        ok = [validity_er(gen_sbm(2, 5, 20, 40, 0.2, 0.2, rng), 0.2).valid for _ in range(100)]
        assert np.mean(ok) >= 0.9

    def test_invalid(self, rng):
        with pytest.raises(InvalidParam):
            gen_sbm(1, 3, 5, 10, 0.3, 0.05, rng)
        with pytest.raises(InvalidParam):
            gen_sbm(2, 3, 0, 10, 0.3, 0.05, rng)


class TestDataset:
    def test_default_counts(self):
        spec = DatasetSpec("ER")
        assert spec.counts == {"train": 128, "val": 32, "test": 40}

    def test_unknown_param(self):
        with pytest.raises(InvalidParam):
            DatasetSpec("ER", {"q": 1})
        with pytest.raises(InvalidParam):
            DatasetSpec("TREE")
        with pytest.raises(InvalidParam):
            DatasetSpec("ER", train=0)

    def test_byte_identical(self, tmp_path):
        spec = DatasetSpec("SBM", {"size_min": 4, "size_max": 6}, train=5, val=2, test=2, seed=9)
        make_dataset(spec, tmp_path / "a")
        make_dataset(spec, tmp_path / "b")
        for name in ("manifest.json", "train.jsonl", "val.jsonl", "test.jsonl"):
            ha = hashlib.sha256((tmp_path / "a" / name).read_bytes()).hexdigest()
            hb = hashlib.sha256((tmp_path / "b" / name).read_bytes()).hexdigest()
            assert ha == hb

    def test_single_graph_reproducible_in_isolation(self):
        spec = DatasetSpec("ER", {"n_min": 5, "n_max": 15}, train=10, val=1, test=1, seed=3)
        graphs, _ = generate_splits(spec)
        g, _ = generate_graph(spec, graph_rng(3, "train", 7))
        assert g == graphs["train"][7]

    def test_counts_one_each(self, tmp_path):
        spec = DatasetSpec("PRICE", {"n": 8}, train=1, val=1, test=1)
        m = make_dataset(spec, tmp_path)
        for split in ("train", "val", "test"):
            assert len(load_split(tmp_path / "manifest.json", split)) == 1
        assert m["X"] == 1 and m["E"] == 2

    def test_sbm_blocks_in_metadata(self, tmp_path):
        spec = DatasetSpec("SBM", {"size_min": 3, "size_max": 4}, train=2, val=1, test=1)
        m = make_dataset(spec, tmp_path)
        g = load_split(tmp_path / "manifest.json", "train")[0]
        assert len(m["meta"]["blocks"]["train"][0]) == g.num_nodes


class TestEmpiricalStats:
    def test_node_point_mass(self):
        s = empirical_stats([DiGraph.from_edges(3, [], node_types=[1, 1, 1])], 2, 2)
        np.testing.assert_array_equal(s.node_marginal, [0.0, 1.0])

    def test_single_arc(self):
        s = empirical_stats([DiGraph.from_edges(2, [(0, 1)])], 1, 2)
        np.testing.assert_allclose(s.edge_marginal, [0.5, 0.5])

    def test_er_absent_rate(self, rng):
        gs = []
        while sum(g.num_nodes * (g.num_nodes - 1) for g in gs) < 10_000:
            gs.append(gen_er(10, 20, 0.3, False, rng))
        s = empirical_stats(gs, 1, 2)
        assert abs(s.edge_marginal[0] - 0.7) < 0.01

    def test_normalised(self, rng):
        gs = [gen_er(3, 9, 0.4, False, rng) for _ in range(20)]
        s = empirical_stats(gs, 1, 2)
        for dist in (s.node_marginal, s.edge_marginal, np.array(list(s.node_counts.values()))):
            assert abs(dist.sum() - 1) < 1e-12

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            empirical_stats([], 1, 2)
