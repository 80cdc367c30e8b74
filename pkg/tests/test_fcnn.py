import math

import numpy as np
import pytest

from clinrel.features import FeatureConfig, FeatureVector, describe_layout, feature_length
from clinrel.fcnn import (
    AdamState,
    ModelFormatError,
    RelationExample,
    TrainConfig,
    _batches,
    adam_step,
    backward,
    decayed_lr,
    dropout_masks,
    export_model_text,
    fit,
    forward,
    init_model,
    load_model,
    loss_and_grads,
    model_to_bytes,
    numerical_gradients,
    predict,
    predict_proba,
    relative_error,
    save_model,
    softmax_cross_entropy,
    train,
)


def separable(n=200, d=10, seed=5, margin=0.5):
    """Two classes split by a random hyperplane, with no point closer than ``margin``."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    w /= np.linalg.norm(w)
    X, y = [], []
    while len(X) < n:
        x = rng.normal(size=d)
        if abs(x @ w) >= margin:
            X.append(x)
            y.append(int(x @ w > 0))
    return np.array(X), np.array(y), w


@pytest.fixture(scope="module")
def separable_model():
    X, y, w = separable()
    return fit(X, y, ("neg", "pos"), TrainConfig(seed=0)), X, y, w


def randomize(model, rng):
    for layer in model.layers:
        layer.bias[:] = rng.normal(size=layer.bias.shape)
        if layer.has_bn:
            layer.bn_gamma[:] = rng.uniform(0.5, 1.5, layer.bn_gamma.shape)
            layer.bn_beta[:] = rng.normal(size=layer.bn_beta.shape)
            layer.bn_running_mean[:] = rng.normal(size=layer.bn_beta.shape)
            layer.bn_running_var[:] = rng.uniform(0.5, 2.0, layer.bn_beta.shape)
    return model


class TestForward:
    def test_zero_model(self, rng):
        m = init_model(6, ["a", "b", "c"], (4, 4))
        logits, _ = forward(m, rng.normal(size=(5, 6)))
        assert not logits.any()
        logits, _ = forward(m, rng.normal(size=(5, 6)), "train")
        assert not logits.any()

    def test_infer_repeatable(self, rng):
        m = randomize(init_model(6, ["a", "b"], (4, 4), rng=rng), rng)
        X = rng.normal(size=(7, 6))
        a, _ = forward(m, X)
        b, _ = forward(m, X)
        assert np.array_equal(a, b)

    def test_batch_norm_statistics(self, rng):
        m = init_model(6, ["a", "b"], (5, 5), rng=rng)
        X = rng.normal(2.0, 3.0, size=(32, 6))
        _, cache = forward(m, X, "train")
        for c in cache.layers[:-1]:
            z = c.pre_act  # gamma 1, beta 0: the normalized pre-activation
            assert np.all(np.abs(z.mean(axis=0)) < 1e-6)
            assert np.all(np.abs(z.var(axis=0) - 1.0) < 1e-4)

    def test_batch_of_one(self, rng):
        m = init_model(3, ["a", "b"], (4,), rng=rng)
        with pytest.raises(ValueError, match="batch too small for batch norm"):
            forward(m, rng.normal(size=(1, 3)), "train")

    def test_dim_mismatch(self, rng):
        m = init_model(3, ["a", "b"], (4,), rng=rng)
        with pytest.raises(ValueError):
            forward(m, rng.normal(size=(2, 4)))

    def test_dropout_scaling(self, rng):
        m = init_model(3, ["a", "b"], (4,), rng=rng)
        masks = dropout_masks(m, 10000, 0.5, rng)
        assert set(np.unique(masks[0])) == {0.0, 2.0}
        assert abs(masks[0].mean() - 1.0) < 0.05

    def test_dropout_changes_train_output_only(self, rng):
        m = init_model(3, ["a", "b"], (4,), rng=rng)
        X = rng.normal(size=(8, 3))
        plain, _ = forward(m, X, "train")
        dropped, _ = forward(m, X, "train", dropout=0.5, rng=np.random.default_rng(0))
        assert not np.array_equal(plain, dropped)


class TestLoss:
    @pytest.mark.parametrize("c", [2, 3, 7])
    def test_uniform(self, c):
        loss, _ = softmax_cross_entropy(np.zeros((4, c)), [0, 1, 0, 1])
        assert loss == pytest.approx(math.log(c), abs=1e-12)

    def test_shift_invariance(self, rng):
        logits = rng.normal(size=(5, 3))
        y = rng.integers(0, 3, 5)
        a, ga = softmax_cross_entropy(logits, y)
        b, gb = softmax_cross_entropy(logits + 123.4, y)
        assert a == pytest.approx(b, abs=1e-12)
        np.testing.assert_allclose(ga, gb, atol=1e-12)

    def test_confident(self):
        loss, _ = softmax_cross_entropy([[10.0, -10.0]], [0])
        assert loss == pytest.approx(math.log1p(math.exp(-20.0)), rel=1e-9)
        assert loss < 1e-4

    def test_extreme_logits_finite(self):
        loss, g = softmax_cross_entropy([[1000.0, -1000.0]], [1])
        assert loss == pytest.approx(2000.0) and np.all(np.isfinite(g))

    def test_gradient_finite_differences(self, rng):
        logits = rng.normal(size=(4, 3))
        y = rng.integers(0, 3, 4)
        _, g = softmax_cross_entropy(logits, y)
        h = 1e-6
        num = np.zeros_like(logits)
        for idx in np.ndindex(logits.shape):
            up, down = logits.copy(), logits.copy()
            up[idx] += h
            down[idx] -= h
            num[idx] = (softmax_cross_entropy(up, y)[0] - softmax_cross_entropy(down, y)[0]) / (2 * h)
        np.testing.assert_allclose(g, num, atol=1e-8)


class TestBackward:
    def test_zero_upstream(self, rng):
        m = randomize(init_model(5, ["a", "b"], (4, 4), rng=rng), rng)
        logits, cache = forward(m, rng.normal(size=(6, 5)), "train")
        grads = backward(m, cache, np.zeros_like(logits))
        assert all(not g.any() for g in grads.values())

    def test_finite(self, rng):
        m = randomize(init_model(5, ["a", "b", "c"], (4, 4), rng=rng), rng)
        _, grads = loss_and_grads(m, rng.normal(size=(6, 5)) * 10, rng.integers(0, 3, 6))
        assert all(np.all(np.isfinite(g)) for g in grads.values())
        assert {k for k, _ in m.parameters()} == set(grads)

    def test_needs_cache(self, rng):
        m = init_model(5, ["a", "b"], (4,), rng=rng)
        with pytest.raises(ValueError):
            backward(m, None, np.zeros((2, 2)))

    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences_two_layer(self, seed):
        rng = np.random.default_rng(seed)
        m = randomize(init_model(6, ["a", "b", "c"], (5, 4), rng=rng), rng)
        X = rng.normal(size=(8, 6))
        y = rng.integers(0, 3, 8)
        masks = dropout_masks(m, 8, 0.3, rng)
        _, analytic = loss_and_grads(m, X, y, masks)
        numeric = numerical_gradients(m, X, y, 1e-4, masks)
        for key in analytic:
            assert relative_error(analytic[key], numeric[key]) < 1e-3, key

    def test_bias_gradient_vanishes_under_batch_norm(self, rng):
        m = randomize(init_model(4, ["a", "b"], (3,), rng=rng), rng)
        _, grads = loss_and_grads(m, rng.normal(size=(5, 4)), [0, 1, 1, 0, 1])
        assert np.abs(grads[(0, "bias")]).max() < 1e-12


class TestAdam:
    def test_zero_gradients(self, rng):
        p = {"w": rng.normal(size=(3, 2))}
        before = p["w"].copy()
        adam_step(p, {"w": np.zeros((3, 2))}, AdamState(), 0.1)
        assert np.array_equal(p["w"], before)

    def test_first_step_closed_form(self, rng):
        p = {"w": rng.normal(size=4)}
        g = rng.normal(size=4)
        before = p["w"].copy()
        adam_step(p, {"w": g}, AdamState(), 0.01)
        # bias-corrected moments equal g and g**2 after one step
        np.testing.assert_allclose(p["w"], before - 0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)

    def test_lr_decay(self):
        assert decayed_lr(0.0003, 0.005, 0) == 0.0003
        assert decayed_lr(0.0003, 0.005, 10) == pytest.approx(0.0003 / 1.05)
        assert decayed_lr(0.0003, 0.005, 10) == pytest.approx(0.00028571, abs=1e-8)


class TestTrain:
    def test_defaults_match_table(self):
        cfg = TrainConfig()
        assert (cfg.dropout, cfg.batch_size, cfg.learning_rate, cfg.epochs, cfg.lr_decay) == (0.5, 64, 0.0003, 50, 0.005)

    def test_separable_accuracy(self, separable_model):
        m, X, y, _ = separable_model
        acc = np.mean(predict_proba(m, X).argmax(axis=1) == y)
        assert acc >= 0.99
        assert len(m.history) == 50

    def test_planted_positive(self, separable_model):
        m, _, _, w = separable_model
        label, probs = predict(m, 2.0 * w)
        assert label == "pos" and probs[1] > 0.9

    def test_loss_monotone(self, separable_model):
        m, _, _, _ = separable_model
        losses = [h["eval_loss"] for h in m.history]
        upticks = sum(b > a for a, b in zip(losses, losses[1:]))
        assert upticks <= 0.05 * (len(losses) - 1)
        assert losses[-1] < 0.25 * losses[0]

    def test_deterministic(self):
        X, y, _ = separable(60, 5)
        cfg = TrainConfig(seed=3, epochs=5, batch_size=16)
        a = fit(X, y, ("a", "b"), cfg, hidden_sizes=(8, 8))
        b = fit(X, y, ("a", "b"), cfg, hidden_sizes=(8, 8))
        assert model_to_bytes(a) == model_to_bytes(b)
        c = fit(X, y, ("a", "b"), TrainConfig(seed=4, epochs=5, batch_size=16), hidden_sizes=(8, 8))
        assert model_to_bytes(a) != model_to_bytes(c)

    def test_single_class(self):
        X, _, _ = separable(10, 3)
        with pytest.raises(ValueError, match="need at least 2 classes"):
            fit(X, np.zeros(10, dtype=int), ("a", "b"))

    def test_nan_aborts(self):
        X, y, _ = separable(10, 3)
        X[3, 1] = np.nan
        with pytest.raises(FloatingPointError, match="epoch 0"):
            fit(X, y, ("a", "b"), TrainConfig(epochs=1), hidden_sizes=(4,))

    def test_glorot_init(self):
        m = init_model(30, ["a", "b"], (20,), rng=np.random.default_rng(0))
        limit = math.sqrt(6 / 50)
        assert np.abs(m.layers[0].weights).max() <= limit
        assert np.abs(m.layers[0].weights).max() > 0.9 * limit
        assert not m.layers[0].bias.any()
        assert np.all(m.layers[0].bn_gamma == 1) and not m.layers[0].bn_beta.any()

    def test_batches_even(self):
        sizes = [len(b) for b in _batches(np.arange(200), 64)]
        assert sizes == [50, 50, 50, 50]
        assert [len(b) for b in _batches(np.arange(129), 64)] == [43, 43, 43]
        assert sorted(np.concatenate(_batches(np.arange(65), 64))) == list(range(65))

    def test_train_from_examples(self):
        cfg = FeatureConfig(embed_dim=1, max_path_len=1, vicinity_window=1)
        X, y, _ = separable(40, feature_length(cfg))
        layout = describe_layout(cfg)
        ex = [RelationExample(FeatureVector(x, layout), "1" if t else "0") for x, t in zip(X, y)]
        m = train(ex, ("0", "1"), cfg, TrainConfig(epochs=2), hidden_sizes=(4,))
        assert m.feature_config == cfg
        with pytest.raises(ValueError):
            train(ex, ("0", "2"), cfg, TrainConfig(epochs=2))


class TestPredict:
    def test_zero_model_uniform(self, rng):
        m = init_model(4, ["x", "y", "z"], (3,))
        label, probs = predict(m, rng.normal(size=4))
        assert label == "x"
        np.testing.assert_allclose(probs, 1 / 3)

    def test_simplex(self, rng):
        m = randomize(init_model(4, ["x", "y", "z"], (3,), rng=rng), rng)
        P = predict_proba(m, rng.normal(size=(50, 4)) * 5)
        assert np.all(P >= 0)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)

    def test_length_mismatch(self, rng):
        m = init_model(4, ["x", "y"], (3,))
        with pytest.raises(ValueError):
            predict(m, np.zeros(5))


class TestSerialization:
    def model(self, rng):
        cfg = FeatureConfig(embed_dim=2, max_path_len=1, vicinity_window=1, vicinity_mode="mean")
        return randomize(init_model(feature_length(cfg), ["0", "1", "2"], (5, 4), cfg, rng), rng)

    def test_roundtrip(self, tmp_path, rng):
        m = self.model(rng)
        save_model(m, tmp_path / "m.bin")
        m2 = load_model(tmp_path / "m.bin")
        X = rng.normal(size=(100, m.input_dim))
        assert np.array_equal(predict_proba(m, X), predict_proba(m2, X))
        for a, b in zip(m.layers, m2.layers):
            for (na, ta), (nb, tb) in zip(a.tensors(), b.tensors()):
                assert na == nb and np.array_equal(ta, tb)
        assert m2.feature_config == m.feature_config and m2.class_labels == m.class_labels
        assert model_to_bytes(m2) == model_to_bytes(m)

    def test_version(self, tmp_path, rng):
        data = bytearray(model_to_bytes(self.model(rng)))
        data[8:12] = (999).to_bytes(4, "little")
        (tmp_path / "m.bin").write_bytes(bytes(data))
        with pytest.raises(ModelFormatError, match="unsupported model version"):
            load_model(tmp_path / "m.bin")

    def test_empty(self, tmp_path):
        (tmp_path / "m.bin").write_bytes(b"")
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "m.bin")

    def test_truncated(self, tmp_path, rng):
        (tmp_path / "m.bin").write_bytes(model_to_bytes(self.model(rng))[:-8])
        with pytest.raises(ModelFormatError, match="payload"):
            load_model(tmp_path / "m.bin")

    def test_text_export(self, tmp_path, rng):
        import json
        m = self.model(rng)
        export_model_text(m, tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        assert doc["class_labels"] == ["0", "1", "2"]
        assert [s[0] for s in doc["layout"]][:2] == ["similarity", "distance"]
        assert doc["parameters"][0]["values"] == m.layers[0].weights.tolist()
