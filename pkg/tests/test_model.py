import numpy as np
import pytest

from gdgat import autodiff as ad
from gdgat.certify import build_fixture, certify_gradients
from gdgat.data import Dataset, Event, EventPairInstance, MATRES
from gdgat.errors import ShapeError
from gdgat.graph import NodeFeatureConfig, build_graph, init_node_features
from gdgat.model import (ModelConfig, attention_coefficients, classify_pair,
                         document_loss, forward, head_output, init_model,
                         layer_forward, load_checkpoint, node_features,
                         pair_loss, predict, save_checkpoint)
from gdgat.probs import ProbTable, synth_prob_table

from oracles import scalar_attention_weights, scalar_classify, scalar_model

VOCAB = {"t0": 0, "t1": 1, "t2": 2}


def make_setup(n, seed, cfg=None, label_set=MATRES, uniform_edges=False):
    """(params, graph, events) with synthesized edge features."""
    rng = np.random.default_rng(seed)
    cfg = cfg or ModelConfig(d_h=8, d_h1=4, d_h2=6, heads=2)
    events = [Event("doc", k, f"t{int(rng.integers(3))}", f"w{k}") for k in range(n)]
    ds = Dataset(label_set, {"doc": events}, [])
    if uniform_edges:
        c = label_set.size
        entries = {("doc", i, j): np.full(c, 1.0 / c)
                   for i in range(n) for j in range(n) if i != j}
        table = ProbTable(label_set, entries, "uniform")
    else:
        table = synth_prob_table(ds, 3.0, 0.3, seed=seed + 1)
    params = init_model(cfg, label_set, VOCAB, seed=seed)
    graph = build_graph(events, table, params.node_feature_config())
    return params, graph, events


def all_pairs(n):
    return [(i, j) for i in range(n) for j in range(n) if i != j]


class TestScalarOracleEquivalence:
    """Vectorized forward vs an independent scalar-loop implementation."""

    @pytest.mark.parametrize("seed", range(6))
    def test_two_layer_forward_and_classifier(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        params, graph, _ = make_setup(n, seed)
        h0 = node_features(params, graph).data
        h1_ref, h2_ref, yhat_ref = scalar_model(
            h0.tolist(),
            params.layer1.w.data.tolist(), params.layer1.a.data.tolist(),
            params.layer2.w.data.tolist(), params.layer2.a.data.tolist(),
            params.w_cls.data.tolist(), params.b_cls.data.tolist(),
            graph.p.tolist(), all_pairs(n), 0.2, 0.2,
        )
        h2 = forward(params, graph).data
        assert np.max(np.abs(h2 - np.array(h2_ref))) < 1e-10
        for (i, j), ref in zip(all_pairs(n), yhat_ref):
            got = classify_pair(params, graph, i, j)
            assert np.max(np.abs(got - np.array(ref))) < 1e-10

    def test_attention_matches_scalar_recompute(self):
        params, graph, _ = make_setup(4, seed=42)
        h0 = node_features(params, graph).data
        for head in range(params.layer1.heads):
            for node in range(4):
                ref = scalar_attention_weights(
                    h0.tolist(), params.layer1.w.data.tolist(),
                    params.layer1.a.data.tolist(), graph.p.tolist(), 0.2, head, node)
                got = attention_coefficients(params.layer1, head, node, graph, h0)
                assert np.max(np.abs(got - np.array(ref))) < 1e-10


class TestAttention:
    def test_single_neighbor_weight_one(self):
        params, graph, _ = make_setup(2, seed=0)
        h0 = node_features(params, graph).data
        w = attention_coefficients(params.layer1, 0, 0, graph, h0)
        assert w.shape == (1,) and w[0] == pytest.approx(1.0)

    def test_identical_neighbors_uniform(self):
        # same type and order encoding for all neighbors + identical edges
        cfg = ModelConfig(d_h=8, d_h1=4, d_h2=6, heads=2)
        events = [Event("doc", k, "t0", "w") for k in range(4)]
        entries = {("doc", i, j): np.array([0.7, 0.1, 0.1, 0.1])
                   for i in range(4) for j in range(4) if i != j}
        params = init_model(cfg, MATRES, VOCAB, seed=1)
        graph = build_graph(events, ProbTable(MATRES, entries, ""), params.node_feature_config())
        h0 = np.ones((4, 8))  # force identical node features
        w = attention_coefficients(params.layer1, 1, 2, graph, h0)
        assert np.allclose(w, 1.0 / 3.0, atol=1e-12)

    def test_weights_normalized_everywhere(self):
        for seed in range(5):
            params, graph, _ = make_setup(5, seed=seed)
            h0 = node_features(params, graph).data
            h1 = layer_forward(params.layer1, graph, h0)
            for layer, h_in in ((params.layer1, h0), (params.layer2, h1)):
                for head in range(layer.heads):
                    for node in range(graph.n):
                        w = attention_coefficients(layer, head, node, graph, h_in)
                        assert (w >= 0).all()
                        assert abs(w.sum() - 1.0) < 1e-8


class TestHeadOutput:
    def test_zero_params_zero_output(self):
        params, graph, _ = make_setup(3, seed=2)
        params.layer1.w.data[:] = 0.0
        params.layer1.a.data[:] = 0.0
        h0 = node_features(params, graph).data
        assert np.array_equal(head_output(params.layer1, 0, 1, graph, h0), np.zeros(4))

    def test_single_neighbor_exact(self):
        params, graph, _ = make_setup(2, seed=3)
        h0 = node_features(params, graph).data
        got = head_output(params.layer1, 1, 0, graph, h0)
        pre = h0[1] @ params.layer1.w.data[1]
        expect = np.where(pre >= 0, pre, 0.2 * pre)
        assert np.allclose(got, expect, atol=1e-12)

    def test_three_node_vs_oracle(self):
        params, graph, _ = make_setup(3, seed=4)
        h0 = node_features(params, graph).data
        ref = scalar_model(
            h0.tolist(), params.layer1.w.data.tolist(), params.layer1.a.data.tolist(),
            params.layer2.w.data.tolist(), params.layer2.a.data.tolist(),
            params.w_cls.data.tolist(), params.b_cls.data.tolist(),
            graph.p.tolist(), [], 0.2, 0.2,
        )[0]
        for node in range(3):
            got = np.concatenate([head_output(params.layer1, k, node, graph, h0)
                                  for k in range(2)])
            assert np.max(np.abs(got - np.array(ref[node]))) < 1e-10


class TestLayerForward:
    def test_k1_concat_equals_mean(self):
        cfg = ModelConfig(d_h=8, d_h1=4, d_h2=4, heads=1)
        params, graph, _ = make_setup(3, seed=5, cfg=cfg)
        h0 = node_features(params, graph).data
        concat = layer_forward(params.layer1, graph, h0)
        params.layer1.aggregation = "mean"
        mean = layer_forward(params.layer1, graph, h0)
        assert np.array_equal(concat, mean)

    def test_eight_head_concat_width(self):
        cfg = ModelConfig(d_h=8, d_h1=4, d_h2=6, heads=8)
        params, graph, _ = make_setup(3, seed=6, cfg=cfg)
        h0 = node_features(params, graph).data
        assert layer_forward(params.layer1, graph, h0).shape == (3, 8 * 4)

    def test_layer2_mean_width(self):
        params, graph, _ = make_setup(3, seed=7)
        h0 = node_features(params, graph).data
        h1 = layer_forward(params.layer1, graph, h0)
        assert layer_forward(params.layer2, graph, h1).shape == (3, 6)


class TestClassifier:
    def test_zero_classifier_uniform(self):
        params, graph, _ = make_setup(3, seed=8)
        params.w_cls.data[:] = 0.0
        params.b_cls.data[:] = 0.0
        assert np.allclose(classify_pair(params, graph, 0, 2), [0.25] * 4, atol=1e-15)

    def test_simplex_random_params(self):
        for seed in range(4):
            params, graph, _ = make_setup(4, seed=seed + 30)
            y = classify_pair(params, graph, 1, 3)
            assert abs(y.sum() - 1.0) < 1e-8 and ((y >= 0) & (y <= 1)).all()

    def test_scalar_oracle_fixture(self):
        params, graph, _ = make_setup(3, seed=9)
        h2 = forward(params, graph).data
        ref = scalar_classify((h2[0].tolist(), h2[2].tolist()), graph.p[0, 2].tolist(),
                              params.w_cls.data.tolist(), params.b_cls.data.tolist())
        assert np.max(np.abs(classify_pair(params, graph, 0, 2) - np.array(ref))) < 1e-10

    def test_identical_pair_rejected(self):
        params, graph, _ = make_setup(3, seed=10)
        with pytest.raises(ValueError):
            classify_pair(params, graph, 1, 1)


class TestPairLoss:
    def test_concentrated_loss_near_zero(self):
        logits = np.array([50.0, 0.0, 0.0, 0.0])
        assert pair_loss(logits, np.array([1.0, 0, 0, 0])) < 1e-12

    def test_uniform_ln4(self):
        assert pair_loss(np.zeros(4), 2) == pytest.approx(np.log(4.0), abs=1e-12)

    def test_frozen_extended_precision_oracle(self):
        # -log softmax([0.3, -1.2, 2.0, 0.5])[0] at 60 digits
        logits = np.array([0.3, -1.2, 2.0, 0.5])
        assert pair_loss(logits, 0) == pytest.approx(2.069199307369018, abs=1e-14)

    def test_nonnegative(self, rng):
        for _ in range(20):
            logits = rng.normal(size=4) * 5
            assert pair_loss(logits, int(rng.integers(4))) >= 0.0


class TestPredict:
    def test_empty(self):
        params, graph, _ = make_setup(3, seed=11)
        assert predict(params, graph, []) == []

    def test_composition_matches_classify_pair(self):
        params, graph, _ = make_setup(4, seed=12)
        pairs = all_pairs(4)
        preds = predict(params, graph, pairs)
        for (pair, label, yhat) in preds:
            ref = classify_pair(params, graph, pair[0], pair[1])
            assert np.allclose(yhat, ref, atol=1e-12)
            assert label == MATRES.labels[int(np.argmax(ref))]

    def test_permutation_equivariance(self, rng):
        """Relabeling nodes leaves every pair's prediction unchanged."""
        n = 5
        params, graph, events = make_setup(n, seed=13)
        perm = rng.permutation(n)
        relabeled = sorted(
            (Event("doc", int(perm[k]), events[k].event_type, events[k].surface)
             for k in range(n)),
            key=lambda e: e.order_index,
        )
        entries = {("doc", int(perm[i]), int(perm[j])): graph.p[i, j]
                   for i in range(n) for j in range(n) if i != j}
        graph2 = build_graph(relabeled, ProbTable(MATRES, entries, ""),
                             params.node_feature_config())
        # carry the order encodings so node features move with the nodes
        carried = np.empty_like(graph.sin_half)
        carried[perm] = graph.sin_half
        graph2.sin_half = carried
        for (i, j) in all_pairs(n):
            y1 = classify_pair(params, graph, i, j)
            y2 = classify_pair(params, graph2, int(perm[i]), int(perm[j]))
            assert np.max(np.abs(y1 - y2)) < 1e-9


class TestGradients:
    def test_full_model_certified(self):
        err = certify_gradients(seed=7, eps=1e-5)
        assert err < 1e-4

    def test_wo_lp_wiring_certified(self):
        err = certify_gradients(seed=9, eps=1e-5, use_edge_features=False)
        assert err < 1e-4

    def test_edge_feature_local_linearity(self):
        """Perturbing p_ij moves the pair's score by exactly a_k[edge] . delta."""
        params, graph, _ = make_setup(4, seed=14)
        h0 = node_features(params, graph).data
        layer = params.layer1
        cache0 = None
        from gdgat import kernels

        _, cache0 = kernels.layer_forward(h0, layer.w.data, layer.a.data, graph.p,
                                          0.2, 0.2, "concat")
        delta = np.array([0.01, -0.02, 0.005, 0.005])
        p2 = graph.p.copy()
        p2[1, 3] += delta
        _, cache1 = kernels.layer_forward(h0, layer.w.data, layer.a.data, p2,
                                          0.2, 0.2, "concat")
        for head in range(layer.heads):
            dz = cache1["z"][head, 1, 3] - cache0["z"][head, 1, 3]
            expect = layer.a.data[head, 2 * layer.d_out:] @ delta
            assert dz == pytest.approx(expect, abs=1e-12)
            # every other score is untouched
            other = np.delete(cache1["z"][head].ravel() - cache0["z"][head].ravel(),
                              1 * graph.n + 3)
            assert np.max(np.abs(other)) == 0.0


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params, graph, _ = make_setup(4, seed=15)
        path = tmp_path / "ckpt.json"
        save_checkpoint(params, path, run_config={"note": "test"}, seed=15)
        again = load_checkpoint(path)
        for p, q in zip(params.parameters(), again.parameters()):
            assert p.name == q.name and np.array_equal(p.data, q.data)
        y1 = classify_pair(params, graph, 0, 2)
        assert np.array_equal(classify_pair(again, graph, 0, 2), y1)

    def test_format_version_checked(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format_version": "other"}')
        with pytest.raises(ShapeError, match="format"):
            load_checkpoint(path)


def test_extra_features_flow_through_model():
    events = [Event("doc", k, "t0", f"w{k}", extra=(0.5 * k, -1.0)) for k in range(3)]
    ds = Dataset(MATRES, {"doc": events}, [])
    table = synth_prob_table(ds, 4.0, 0.0, seed=1)
    cfg = ModelConfig(d_h=8, d_h1=4, d_h2=6, heads=2, extra_dim=2)
    params = init_model(cfg, MATRES, {"t0": 0}, seed=0)
    graph = build_graph(events, table, params.node_feature_config())
    h0 = node_features(params, graph)
    assert h0.data.shape == (3, 10)  # 4 order + 4 type + 2 extra
    assert np.array_equal(h0.data[:, 8:], [[0.0, -1.0], [0.5, -1.0], [1.0, -1.0]])
    y = classify_pair(params, graph, 0, 2)
    assert abs(y.sum() - 1.0) < 1e-8

    bare = [Event("doc", k, "t0", f"w{k}") for k in range(3)]
    bare_graph = build_graph(bare, synth_prob_table(
        Dataset(MATRES, {"doc": bare}, []), 4.0, 0.0, seed=1),
        params.node_feature_config())
    with pytest.raises(ShapeError, match="extra"):
        classify_pair(params, bare_graph, 0, 1)


def test_model_dim_validation():
    with pytest.raises(ShapeError):
        ModelConfig(d_h=7)
    cfg = ModelConfig(d_h=8, d_h1=4, d_h2=6, heads=2)
    params = init_model(cfg, MATRES, VOCAB, seed=0)
    params.w_cls.data = np.zeros((3, 4))
    with pytest.raises(ShapeError):
        params._validate_dims()
