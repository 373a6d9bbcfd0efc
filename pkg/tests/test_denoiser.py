import numpy as np
import pytest

from digraph_flow.denoiser import (
    MAGIC,
    AdamW,
    NeuralDenoiser,
    OracleDenoiser,
    TrainConfig,
    load_checkpoint,
    mle_fit,
    mle_sample,
    oracle_posterior,
    restore_state,
    sample_times,
    save_checkpoint,
    state_tensors,
    train,
)
from digraph_flow.dfm import NoiseModel
from digraph_flow.diffusion import alpha_bar
from digraph_flow.errors import CheckpointError, EmptyDataset, InvalidParam
from digraph_flow.graph import DiGraph, is_acyclic
from digraph_flow.model import ModelConfig
from digraph_flow.posenc import PEConfig, PEKind
from digraph_flow.synth import gen_er

TINY = ModelConfig(n_layers=1, d_x=8, d_e=4, d_y=4, n_heads=2, ff_x=8, ff_e=8, ff_y=8,
                   hidden_x=8, hidden_e=8, hidden_y=8, num_node_classes=1, num_edge_classes=2,
                   pe_node=6, pe_edge=6)
RRWP3 = PEConfig(PEKind.RRWP, K_walk=3)


def toy_graphs(n_graphs=5, seed=0):
    rng = np.random.default_rng(seed)
    return [gen_er(4, 6, 0.3, True, rng) for _ in range(n_graphs)]


class TestOracle:
    def test_t_one_point_mass(self):
        post = oracle_posterior(np.array([0, 1]), 1.0, [0.4, 0.6], [0.5, 0.5])
        np.testing.assert_array_equal(post, np.eye(2))

    def test_t_zero_prior(self):
        post = oracle_posterior(np.array([0, 1]), 0.0, [0.4, 0.6], [0.5, 0.5])
        np.testing.assert_allclose(post, [[0.4, 0.6], [0.4, 0.6]])

    def test_hand_computed(self):
        # Prior p = 0.6 present, uniform noise, t = 0.5, observed absent:
        # 0.6 * 0.25 / (0.6 * 0.25 + 0.4 * 0.75) = 1/3.
        post = oracle_posterior(np.array(0), 0.5, [0.4, 0.6], [0.5, 0.5])
        np.testing.assert_allclose(post[1], 1 / 3, rtol=1e-12)

    @pytest.mark.parametrize("kappa", [0.0, 0.2, 0.7, 1.0])
    def test_marginalisation(self, kappa):
        prior = np.array([0.3, 0.7])
        limit = np.array([0.8, 0.2])
        lik = kappa * np.eye(2) + (1 - kappa) * limit[None, :]  # [z1, z_t]
        p_zt = prior @ lik
        post = oracle_posterior(np.arange(2), kappa, prior, limit)  # [z_t, z1]
        np.testing.assert_allclose(p_zt @ post, prior, atol=1e-12)
        np.testing.assert_allclose(post * p_zt[:, None], (prior[:, None] * lik).T, atol=1e-12)

    def test_batch_call(self):
        den = OracleDenoiser.erdos_renyi(0.6)
        e = np.zeros((2, 3, 3), dtype=int)
        _, pe = den(np.zeros((2, 3), int), e, np.ones((2, 3), bool), np.array([0.5, 1.0]))
        np.testing.assert_allclose(pe[0, 0, 1], [2 / 3, 1 / 3])
        np.testing.assert_allclose(pe[1, 0, 1], [1.0, 0.0])

    def test_dd_uses_alpha_bar(self):
        den = OracleDenoiser.erdos_renyi(0.6, engine="dd")
        t = np.array([0.5])
        _, pe = den(np.zeros((1, 2), int), np.zeros((1, 2, 2), int), np.ones((1, 2), bool), t)
        expected = oracle_posterior(np.array(0), alpha_bar(0.5), [0.4, 0.6], [0.5, 0.5])
        np.testing.assert_allclose(pe[0, 0, 1], expected)

    def test_unknown_engine(self):
        with pytest.raises(InvalidParam):
            OracleDenoiser([1.0], [0.5, 0.5], NoiseModel.uniform(1, 2), engine="sde")


class TestMLE:
    def test_single_graph_node_count(self, rng):
        m = mle_fit([DiGraph.from_edges(7, [(0, 1)])], 1, 2)
        assert all(mle_sample(m, rng).num_nodes == 7 for _ in range(20))

    def test_er_edge_probability(self, rng):
        gs = [gen_er(20, 30, 0.3, False, rng) for _ in range(20)]
        assert sum(g.num_nodes * (g.num_nodes - 1) for g in gs) >= 10_000
        m = mle_fit(gs, 1, 2)
        assert abs(m.edge_probs[0, 0, 1] - 0.3) < 0.01

    def test_conditional_on_classes(self, rng):
        g = DiGraph.from_edges(4, [(0, 2, 1), (1, 3, 1), (0, 3, 1), (1, 2, 1)], node_types=[0, 0, 1, 1])
        m = mle_fit([g], 2, 2)
        np.testing.assert_allclose(m.edge_probs[0, 1], [0, 1])
        np.testing.assert_allclose(m.edge_probs[1, 0], [1, 0])
        for _ in range(10):
            s = mle_sample(m, rng)
            for i, j, _ in s.arcs():
                assert s.node_types[i] == 0 and s.node_types[j] == 1

    def test_unseen_pair_fallback(self):
        m = mle_fit([DiGraph.from_edges(2, [(0, 1)])], 2, 2)
        np.testing.assert_allclose(m.edge_probs[1, 1], [0.5, 0.5])

    def test_dag_corpus_gives_cycles(self, rng):
        gs = [gen_er(20, 80, 0.3, True, rng) for _ in range(30)]
        m = mle_fit(gs, 1, 2)
        assert not any(is_acyclic(mle_sample(m, rng)) for _ in range(50))

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            mle_fit([], 1, 2)


class TestTraining:
    def test_defaults(self):
        tc = TrainConfig()
        assert tc.lam == 5.0 and tc.lr == 2e-4 and tc.weight_decay == 1e-12

    def test_dd_times_on_grid(self, rng):
        t = sample_times(TrainConfig(engine="dd", T=10), 1000, rng)
        np.testing.assert_allclose(t * 10, np.round(t * 10))
        assert t.min() >= 0 and t.max() <= 0.9

    def test_adamw_decoupled_decay(self):
        p = {"w": np.array([1.0])}
        opt = AdamW(p, lr=0.1, weight_decay=0.5)
        opt.step(p, {"w": np.array([0.0])})
        np.testing.assert_allclose(p["w"], [0.95])

    def test_smoke_loss_decreases(self):
        tc = TrainConfig(epochs=50, batch_size=5, lr=3e-3, seed=1)
        state = train(toy_graphs(), TINY, RRWP3, tc)
        assert state.step == 50
        losses = np.array([row[2] for row in state.trace])
        assert losses[-10:].mean() < losses[:10].mean()

    def test_deterministic(self):
        tc = TrainConfig(epochs=3, batch_size=2, lr=1e-3, seed=4)
        a = train(toy_graphs(), TINY, RRWP3, tc)
        b = train(toy_graphs(), TINY, RRWP3, tc)
        assert a.trace == b.trace
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])

    def test_dd_engine_trains(self):
        tc = TrainConfig(engine="dd", epochs=2, batch_size=5, T=20)
        state = train(toy_graphs(), TINY, RRWP3, tc)
        assert np.isfinite([r[2] for r in state.trace]).all()

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            train([], TINY, RRWP3, TrainConfig(epochs=1))

    def test_neural_denoiser_outputs_distributions(self, rng):
        state = train(toy_graphs(), TINY, RRWP3, TrainConfig(epochs=1, batch_size=5))
        den = NeuralDenoiser(state.params, TINY, RRWP3)
        mask = np.array([[True, True, True, False]])
        px, pe = den(np.zeros((1, 4), int), rng.integers(0, 2, (1, 4, 4)), mask, np.array([0.3]))
        np.testing.assert_allclose(px[mask].sum(-1), 1, atol=1e-6)
        np.testing.assert_allclose(pe[0, :3, :3].sum(-1), 1, atol=1e-6)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        tensors = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=4)}
        save_checkpoint(tmp_path / "c.ckpt", {"step": 7}, tensors)
        header, loaded = load_checkpoint(tmp_path / "c.ckpt")
        assert header["step"] == 7 and list(loaded) == ["a", "b"]
        for k in tensors:
            np.testing.assert_array_equal(loaded[k], tensors[k].astype(np.float32))
        assert (tmp_path / "c.ckpt").read_bytes().startswith(MAGIC)
        assert not (tmp_path / "c.ckpt.partial").exists()

    def test_corruption(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, {}, {"a": np.ones(10)})
        raw = path.read_bytes()
        for bad in (b"XXXX" + raw[4:], raw[:-8], raw + b"\0\0\0\0", raw[: len(MAGIC) + 2]):
            path.write_bytes(bad)
            with pytest.raises(CheckpointError):
                load_checkpoint(path)
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "missing.ckpt")

    def test_resume_matches_uninterrupted(self, tmp_path):
        graphs = toy_graphs()
        full = train(graphs, TINY, RRWP3, TrainConfig(epochs=4, batch_size=5, lr=1e-3))
        tc = TrainConfig(epochs=2, batch_size=5, lr=1e-3)
        half = train(graphs, TINY, RRWP3, tc)
        save_checkpoint(tmp_path / "c.ckpt", {"step": half.step, "epoch": half.epoch, "trace": half.trace},
                        state_tensors(half, TINY))
        header, tensors = load_checkpoint(tmp_path / "c.ckpt")
        tc4 = TrainConfig(epochs=4, batch_size=5, lr=1e-3)
        resumed = train(graphs, TINY, RRWP3, tc4, state=restore_state(header, tensors, TINY, tc4))
        assert resumed.step == full.step and resumed.epoch == 4
        # Checkpoints store float32, so resumed losses match to single precision.
        np.testing.assert_allclose([r[2] for r in resumed.trace], [r[2] for r in full.trace], rtol=1e-4)
