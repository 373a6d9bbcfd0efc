import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_digraph
from digraph_flow.errors import InvalidParam
from digraph_flow.graph import DiGraph, permute
from digraph_flow.posenc import (
    Q5,
    PEConfig,
    PEKind,
    Walk,
    batch_pe,
    compute_pe,
    directed_laplacian,
    fix_gauge,
    lap_features,
    magnetic_laplacian,
    maglap_features,
    ppr_matrix,
    rrwp_features,
    sym_laplacian,
    transition_matrices,
)

ARC = DiGraph.from_edges(2, [(0, 1)])
P3 = DiGraph.from_edges(3, [(0, 1), (1, 2)])


@st.composite
def digraphs(draw, max_n=10):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    p = draw(st.floats(0.05, 0.6))
    return random_digraph(np.random.default_rng(seed), n, p)


class TestMagneticLaplacian:
    def test_q_zero_is_combinatorial(self, rng):
        g = random_digraph(rng, 8, 0.3)
        np.testing.assert_array_equal(magnetic_laplacian(g, 0.0).real, sym_laplacian(g))
        assert np.abs(magnetic_laplacian(g, 0.0).imag).max() == 0

    @pytest.mark.parametrize("q", [0.0, 0.1, 0.25, 0.4])
    def test_two_node_spectrum(self, q):
        vals = np.linalg.eigvalsh(magnetic_laplacian(ARC, q))
        np.testing.assert_allclose(vals, [0.0, 2.0], atol=1e-12)

    def test_empty_graph(self):
        assert np.abs(magnetic_laplacian(DiGraph.from_edges(4, []), 0.2)).max() == 0

    def test_phase_sign_encodes_direction(self):
        lap = magnetic_laplacian(ARC, 0.25)
        np.testing.assert_allclose(lap[0, 1], -np.exp(2j * np.pi * 0.25))
        np.testing.assert_allclose(lap[1, 0], -np.exp(-2j * np.pi * 0.25))

    def test_antiparallel_phase_cancels(self):
        g = DiGraph.from_edges(2, [(0, 1), (1, 0)])
        np.testing.assert_allclose(magnetic_laplacian(g, 0.3), [[1, -1], [-1, 1]])

    def test_hermitian_psd_on_random_graphs(self):
        rng = np.random.default_rng(5)
        for k in range(1000):
            g = random_digraph(rng, int(rng.integers(1, 12)), float(rng.uniform(0.05, 0.6)))
            q = float(rng.uniform(0, 0.5))
            lap = magnetic_laplacian(g, q, normalized=bool(k % 2))
            assert np.abs(lap - lap.conj().T).max() < 1e-12
            assert np.linalg.eigvalsh(lap).min() >= -1e-8


class TestMaglapFeatures:
    def test_q_zero_imaginary_zero(self, rng):
        pe = maglap_features(random_digraph(rng, 7, 0.3), [0.0], 4)
        assert np.abs(pe.node[:, 4:]).max() == 0

    def test_q_zero_matches_symmetric(self, rng):
        g = random_digraph(rng, 7, 0.3)
        mag, sym = maglap_features(g, [0.0], 5), lap_features(g, 5)
        np.testing.assert_array_equal(mag.node[:, :5], sym.node)
        np.testing.assert_array_equal(mag.graph, sym.graph)

    def test_padding(self):
        pe = maglap_features(P3, [0.1], 10)
        assert pe.node.shape == (3, 20)
        assert np.abs(pe.node[:, 3:10]).max() == 0 and np.abs(pe.node[:, 13:]).max() == 0
        assert np.abs(pe.graph[3:]).max() == 0

    def test_multi_q_layout(self):
        cfg = PEConfig(PEKind.MULTI_MAGLAP, Q5, k_eigen=4)
        pe = compute_pe(P3, cfg)
        assert Q5 == (0.0, 0.1, 0.2, 0.3, 0.4)
        assert pe.node.shape == (3, cfg.dims()[0]) == (3, 40)
        assert pe.graph.shape == (20,)

    def test_gauge(self, rng):
        vecs = np.linalg.eigh(magnetic_laplacian(random_digraph(rng, 6, 0.4), 0.2))[1]
        fixed = fix_gauge(vecs * np.exp(1j * rng.uniform(0, 2 * np.pi, 6)))
        for col in fixed.T:
            k = np.argmax(np.abs(col) >= np.abs(col).max() - 1e-10)
            assert abs(col[k].imag) < 1e-12 and col[k].real >= 0

    @settings(max_examples=50, deadline=None)
    @given(digraphs(), st.integers(0, 2**32 - 1))
    def test_eigenvalues_permutation_invariant(self, g, seed):
        perm = np.random.default_rng(seed).permutation(g.num_nodes)
        a = maglap_features(g, [0.0, 0.2], 5).graph
        b = maglap_features(permute(g, perm), [0.0, 0.2], 5).graph
        np.testing.assert_allclose(a, b, atol=1e-8)


class TestSymLaplacian:
    def test_direction_blind(self):
        np.testing.assert_array_equal(sym_laplacian(ARC), sym_laplacian(DiGraph.from_edges(2, [(1, 0)])))

    def test_row_sums(self, rng):
        np.testing.assert_allclose(sym_laplacian(random_digraph(rng, 9, 0.3)).sum(axis=1), 0)

    def test_path_spectrum(self):
        np.testing.assert_allclose(np.linalg.eigvalsh(sym_laplacian(P3)), [0, 1, 3], atol=1e-12)


class TestRRWP:
    def test_two_node_transition(self):
        t, _ = transition_matrices(ARC)
        np.testing.assert_array_equal(t, [[0, 1], [0, 1]])
        pe = rrwp_features(ARC, K_walk=2)
        np.testing.assert_array_equal(pe.node[:, 1], [0, 1])

    def test_layout(self):
        pe = rrwp_features(P3, K_walk=3, use_ppr=True)
        assert pe.edge.shape == (3, 3, 7) and pe.node.shape == (3, 7)
        np.testing.assert_array_equal(pe.edge[..., 0], np.eye(3))
        np.testing.assert_array_equal(pe.edge[..., 3], np.eye(3))
        for k in range(7):
            np.testing.assert_array_equal(pe.node[:, k], np.diag(pe.edge[..., k]))

    def test_reverse_walk_follows_in_arcs(self):
        _, r = transition_matrices(ARC)
        np.testing.assert_array_equal(r, [[1, 0], [1, 0]])

    @settings(max_examples=50, deadline=None)
    @given(digraphs())
    def test_row_stochastic(self, g):
        pe = rrwp_features(g, K_walk=6, use_ppr=True)
        np.testing.assert_allclose(pe.edge.sum(axis=1), 1.0, atol=1e-10)

    def test_ppr_restart_one(self, rng):
        t, _ = transition_matrices(random_digraph(rng, 5, 0.4))
        np.testing.assert_array_equal(ppr_matrix(t, 1.0), np.eye(5))

    def test_ppr_series(self, rng):
        t, _ = transition_matrices(random_digraph(rng, 6, 0.4))
        p = 0.3
        series = sum(p * (1 - p) ** k * np.linalg.matrix_power(t, k) for k in range(400))
        np.testing.assert_allclose(ppr_matrix(t, p), series, atol=1e-10)

    def test_invalid(self):
        with pytest.raises(InvalidParam):
            rrwp_features(ARC, K_walk=0)

    @settings(max_examples=30, deadline=None)
    @given(digraphs(), st.integers(0, 2**32 - 1))
    def test_equivariance(self, g, seed):
        perm = np.random.default_rng(seed).permutation(g.num_nodes)
        inv = np.argsort(perm)
        a = rrwp_features(g, K_walk=4)
        b = rrwp_features(permute(g, perm), K_walk=4)
        np.testing.assert_allclose(b.node, a.node[inv], atol=1e-12)
        np.testing.assert_allclose(b.edge, a.edge[np.ix_(inv, inv)], atol=1e-12)


class TestDirectedLaplacian:
    def test_two_cycle_plain(self):
        lap = directed_laplacian(DiGraph.from_edges(2, [(0, 1), (1, 0)]), Walk.PLAIN)
        np.testing.assert_allclose(lap, [[1, -1], [-1, 1]], atol=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(digraphs())
    def test_symmetric_psd(self, g):
        lap = directed_laplacian(g, Walk.PAGERANK, 0.05)
        assert np.abs(lap - lap.T).max() < 1e-10
        assert np.linalg.eigvalsh(lap).min() >= -1e-8

    def test_lazy_converges_on_two_cycle(self):
        lap = directed_laplacian(DiGraph.from_edges(2, [(0, 1), (1, 0)]), Walk.LAZY)
        np.testing.assert_allclose(lap, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-10)


class TestBatch:
    @pytest.mark.parametrize("kind", list(PEKind))
    def test_shapes_match_dims(self, kind):
        cfg = PEConfig(kind, (0.1, 0.2), k_eigen=3, K_walk=4, use_ppr=True)
        node, edge, glob = batch_pe([P3, ARC], cfg, 4)
        dn, de, dg = cfg.dims()
        assert node.shape == (2, 4, dn) and edge.shape == (2, 4, 4, de) and glob.shape == (2, dg)
        assert np.abs(node[1, 2:]).max(initial=0) == 0
        assert np.isfinite(node).all() and np.isfinite(edge).all()

    def test_invalid_config(self):
        with pytest.raises(InvalidParam):
            PEConfig(PEKind.MAGLAP, ())
        with pytest.raises(InvalidParam):
            PEConfig(k_eigen=0)
