import numpy as np
import pytest

from gdgat import autodiff as ad
from gdgat.model import ModelConfig, document_loss, init_model
from gdgat.probs import merge_tables
from gdgat.synth import synth_bundle
from gdgat.train import EpochStats, TrainConfig, optimizer_step, save_history, train

SMALL_MODEL = ModelConfig(d_h=8, d_h1=4, d_h2=8, heads=2)


@pytest.fixture(scope="module")
def tiny_bundle():
    bundle = synth_bundle("basic", 3, basic_pairs=(120, 60, 60), basic_sharpness=12.0)
    table = merge_tables([bundle[s][1] for s in ("train", "dev", "test")])
    return bundle, table


class TestOptimizerStep:
    def test_zero_gradient_sgd_no_change(self):
        p = ad.Param("p", np.array([1.0, -2.0]))
        before = p.data.copy()
        optimizer_step([p], [np.zeros(2)], {}, TrainConfig(optimizer="sgd"))
        assert np.array_equal(p.data, before)

    def test_sgd_closed_form(self):
        # f(x) = x^2/2, grad = x; lr 0.1 from 1.0 -> 0.9
        p = ad.Param("p", np.array([1.0]))
        optimizer_step([p], [p.data.copy()], {},
                       TrainConfig(optimizer="sgd", learning_rate=0.1))
        assert p.data[0] == pytest.approx(0.9, abs=1e-15)

    def test_adam_first_step_magnitude(self):
        # first bias-corrected step is ~lr * sign(g) for any constant gradient
        for scale in (1e-4, 1.0, 1e4):
            p = ad.Param("p", np.array([0.0]))
            g = np.array([scale])
            cfg = TrainConfig(optimizer="adam", learning_rate=0.01)
            optimizer_step([p], [g], {}, cfg)
            expect = 0.01 * scale / (scale + cfg.adam_eps)
            assert p.data[0] == pytest.approx(-expect, rel=1e-12)
            assert abs(p.data[0]) == pytest.approx(0.01, rel=1e-3)

    def test_weight_decay(self):
        p = ad.Param("p", np.array([2.0]))
        optimizer_step([p], [np.zeros(1)], {},
                       TrainConfig(optimizer="sgd", learning_rate=0.1, weight_decay=0.5))
        assert p.data[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)

    def test_shape_mismatch(self):
        p = ad.Param("p", np.zeros(3))
        with pytest.raises(ValueError):
            optimizer_step([p], [np.zeros(2)], {}, TrainConfig())


class TestTrainConfig:
    def test_epochs_must_be_positive(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_bad_optimizer(self):
        with pytest.raises(ValueError):
            TrainConfig(optimizer="rmsprop")


class TestTrain:
    def test_one_epoch_one_history_row(self, tiny_bundle):
        bundle, table = tiny_bundle
        _, hist = train(bundle["train"][0], bundle["dev"][0], table, SMALL_MODEL,
                        TrainConfig(epochs=1, seed=0))
        assert len(hist) == 1 and hist[0].epoch == 1

    def test_same_seed_bitwise_identical(self, tiny_bundle):
        bundle, table = tiny_bundle
        cfg = TrainConfig(epochs=3, seed=11)
        p1, h1 = train(bundle["train"][0], bundle["dev"][0], table, SMALL_MODEL, cfg)
        p2, h2 = train(bundle["train"][0], bundle["dev"][0], table, SMALL_MODEL, cfg)
        for a, b in zip(p1.parameters(), p2.parameters()):
            assert np.array_equal(a.data, b.data)
        assert [(r.epoch, r.train_loss, r.dev_micro_f1) for r in h1] == \
               [(r.epoch, r.train_loss, r.dev_micro_f1) for r in h2]

    def test_loss_decreases_on_separable_data(self, tiny_bundle):
        bundle, table = tiny_bundle
        _, hist = train(bundle["train"][0], bundle["dev"][0], table, SMALL_MODEL,
                        TrainConfig(epochs=5, learning_rate=3e-3, seed=1))
        losses = [h.train_loss for h in hist]
        assert all(losses[k + 1] < losses[k] for k in range(4))

    def test_single_small_step_does_not_increase_loss(self, tiny_bundle):
        bundle, table = tiny_bundle
        ds = bundle["train"][0]
        from gdgat.graph import build_graph, build_type_vocab

        params = init_model(SMALL_MODEL, ds.label_set,
                            build_type_vocab(ds.documents), seed=2)
        doc_id = sorted(ds.pairs_by_doc())[0]
        pairs = ds.pairs_by_doc()[doc_id]
        graph = build_graph(ds.documents[doc_id], table, params.node_feature_config())
        before = float(document_loss(params, graph, pairs).data)
        params.zero_grad()
        ad.backward(document_loss(params, graph, pairs))
        optimizer_step(params.parameters(), None, {},
                       TrainConfig(optimizer="sgd", learning_rate=1e-4))
        after = float(document_loss(params, graph, pairs).data)
        assert after <= before

    def test_early_stop_returns_best_dev_checkpoint(self, tiny_bundle):
        bundle, table = tiny_bundle
        cfg = TrainConfig(epochs=30, learning_rate=3e-2, seed=3, early_stop_patience=2)
        params, hist = train(bundle["train"][0], bundle["dev"][0], table, SMALL_MODEL, cfg)
        assert len(hist) < 30  # stopped early at this aggressive rate
        best_epoch = max(hist, key=lambda h: h.dev_micro_f1)
        from gdgat.evaluate import (ConfusionMatrix, micro_f1, predict_dataset)

        preds = predict_dataset(params, bundle["dev"][0], table)
        conf = ConfusionMatrix.from_predictions(
            [p[0].gold for p in preds], [p[1] for p in preds], bundle["dev"][0].label_set)
        got = micro_f1(conf, "VAGUE")
        assert got == pytest.approx(best_epoch.dev_micro_f1, abs=1e-12)

    def test_empty_train_split_rejected(self, tiny_bundle):
        bundle, table = tiny_bundle
        from gdgat.data import Dataset

        empty = Dataset(bundle["train"][0].label_set, bundle["train"][0].documents, [])
        with pytest.raises(ValueError):
            train(empty, bundle["dev"][0], table, SMALL_MODEL, TrainConfig())

    def test_accumulation_group(self, tiny_bundle):
        bundle, table = tiny_bundle
        cfg = TrainConfig(epochs=1, seed=4, accum_docs=4)
        _, hist = train(bundle["train"][0], bundle["dev"][0], table, SMALL_MODEL, cfg)
        assert len(hist) == 1

    def test_divergence_aborts_with_context(self, tiny_bundle):
        bundle, table = tiny_bundle
        from gdgat.errors import NumericError

        cfg = TrainConfig(epochs=5, optimizer="sgd", learning_rate=1e15, seed=5)
        with np.errstate(all="ignore"), pytest.raises(NumericError, match="epoch"):
            train(bundle["train"][0], bundle["dev"][0], table, SMALL_MODEL, cfg)


def test_save_history_excludes_wall_time(tmp_path):
    rows = [EpochStats(1, 0.5, 0.8, 0.7, wall_time=1.23),
            EpochStats(2, 0.4, 0.9, 0.8, wall_time=4.56)]
    path = tmp_path / "history.jsonl"
    save_history(rows, path, seed=7, config_sha256="abc")
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert "wall" not in lines[0]
    import json

    row = json.loads(lines[0])
    assert row == {"config_sha256": "abc", "dev_macro_f1": 0.7, "dev_micro_f1": 0.8,
                   "epoch": 1, "seed": 7, "train_loss": 0.5}
