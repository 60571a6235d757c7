import struct

import numpy as np
import pytest

import mgepool.nn as nn
from mgepool.errors import (
    ConfigRangeError,
    FormatError,
    InvalidInputError,
    StructuralError,
    TrainingDivergedError,
)


def write_idx_images(path, arr):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", nn.IDX_IMAGE_MAGIC, *arr.shape))
        f.write(arr.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", nn.IDX_LABEL_MAGIC, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def numeric_param_grads(spec, params, x, y, h=1e-6):
    """Central finite differences of the loss over every parameter."""
    grads = []
    for e in params.entries:
        g = np.zeros_like(e.values)
        for i in range(e.values.size):
            orig = e.values[i]
            e.values[i] = orig + h
            lp, _, _ = nn.loss_and_grads(spec, params, x, y)
            e.values[i] = orig - h
            lm, _, _ = nn.loss_and_grads(spec, params, x, y)
            e.values[i] = orig
            g[i] = (lp - lm) / (2 * h)
        grads.append(g)
    return grads


def train_linear_oracle(features, labels, classes, steps=2000, lr=0.5):
    """Plain multinomial logistic regression by gradient descent.

    Independent of the package's training path; used to certify
    separability of synthetic datasets.
    """
    n, d = features.shape
    w = np.zeros((d, classes))
    b = np.zeros(classes)
    onehot = np.eye(classes)[labels]
    for _ in range(steps):
        logits = features @ w + b
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        w -= lr * features.T @ g
        b -= lr * g.sum(axis=0)
    pred = (features @ w + b).argmax(axis=1)
    return float((pred == labels).mean())


class TestForward:
    def test_zero_params_zero_logits(self):
        spec = nn.mlp([4, 6, 3])
        params = nn.zero_params(spec)
        x = np.random.default_rng(0).uniform(size=(5, 4))
        assert np.all(nn.forward(spec, params, x) == 0.0)

    def test_identity_dense_layer(self):
        spec = nn.NetworkSpec((nn.Dense(3, 3),), (3,), 3)
        params = nn.zero_params(spec)
        params.get("layer0.weight").values[:] = np.eye(3).ravel()
        x = np.random.default_rng(1).uniform(size=(4, 3))
        assert np.allclose(nn.forward(spec, params, x), x)

    def test_matches_hand_rolled_matmul(self):
        spec = nn.mlp([2, 16, 3])
        rng = np.random.default_rng(2)
        params = nn.init_params(spec, rng)
        x = rng.uniform(size=(1, 2))
        w1 = params.get("layer0.weight").reshaped()
        b1 = params.get("layer0.bias").values
        w2 = params.get("layer2.weight").reshaped()
        b2 = params.get("layer2.bias").values
        expected = np.maximum(x @ w1 + b1, 0.0) @ w2 + b2
        assert np.max(np.abs(nn.forward(spec, params, x) - expected)) <= 1e-9

    def test_conv_matches_naive_loops(self):
        spec = nn.NetworkSpec(
            (nn.Conv(2, 3, 3), nn.Flatten(), nn.Dense(3 * 4 * 4, 2)),
            (2, 6, 6), 2)
        rng = np.random.default_rng(3)
        params = nn.init_params(spec, rng)
        x = rng.uniform(size=(1, 2, 6, 6))
        w = params.get("layer0.weight").reshaped()
        b = params.get("layer0.bias").values
        out = np.zeros((1, 3, 4, 4))
        for oc in range(3):
            for i in range(4):
                for j in range(4):
                    out[0, oc, i, j] = (w[oc] * x[0, :, i:i + 3, j:j + 3]).sum() + b[oc]
        w2 = params.get("layer2.weight").reshaped()
        b2 = params.get("layer2.bias").values
        expected = out.reshape(1, -1) @ w2 + b2
        assert np.max(np.abs(nn.forward(spec, params, x) - expected)) <= 1e-9

    def test_shape_mismatch_rejected(self):
        spec = nn.mlp([2, 4, 2])
        params = nn.zero_params(spec)
        with pytest.raises(StructuralError):
            nn.forward(spec, params, np.zeros((3, 5)))

    def test_deterministic(self):
        spec = nn.mlp([3, 8, 2])
        params = nn.init_params(spec, np.random.default_rng(4))
        x = np.random.default_rng(5).uniform(size=(7, 3))
        a = nn.forward(spec, params, x)
        b = nn.forward(spec, params, x)
        assert np.array_equal(a, b)


class TestGradients:
    def test_param_grads_match_finite_differences_mlp(self):
        spec = nn.mlp([3, 5, 4, 2], activation="tanh")
        rng = np.random.default_rng(6)
        params = nn.init_params(spec, rng)
        x = rng.uniform(size=(4, 3))
        y = np.array([0, 1, 0, 1])
        _, grads, _ = nn.loss_and_grads(spec, params, x, y)
        numeric = numeric_param_grads(spec, params, x, y)
        for g, gn in zip(grads, numeric):
            scale = max(1e-8, np.abs(gn).max())
            assert np.max(np.abs(g - gn)) <= 1e-4 * scale

    def test_param_grads_match_finite_differences_conv(self):
        spec = nn.NetworkSpec(
            (nn.Conv(1, 2, 3), nn.Activation("relu"), nn.MaxPool(2),
             nn.Flatten(), nn.Dense(2 * 3 * 3, 2)),
            (1, 8, 8), 2)
        rng = np.random.default_rng(7)
        params = nn.init_params(spec, rng)
        x = rng.uniform(size=(2, 1, 8, 8))
        y = np.array([0, 1])
        _, grads, _ = nn.loss_and_grads(spec, params, x, y)
        numeric = numeric_param_grads(spec, params, x, y)
        for g, gn in zip(grads, numeric):
            scale = max(1e-8, np.abs(gn).max())
            assert np.max(np.abs(g - gn)) <= 1e-4 * scale

    def test_input_gradient_zero_weight_net(self):
        spec = nn.mlp([3, 4, 2])
        params = nn.zero_params(spec)
        g = nn.input_gradient(spec, params, np.ones(3), 0)
        assert np.all(g == 0.0)

    def test_input_gradient_analytic_softmax_layer(self):
        spec = nn.NetworkSpec((nn.Dense(3, 2),), (3,), 2)
        rng = np.random.default_rng(8)
        params = nn.init_params(spec, rng)
        w = params.get("layer0.weight").reshaped()
        b = params.get("layer0.bias").values
        x = rng.uniform(size=3)
        y = 1
        logits = x @ w + b
        p = np.exp(logits - logits.max())
        p /= p.sum()
        onehot = np.eye(2)[y]
        expected = w @ (p - onehot)
        assert np.max(np.abs(nn.input_gradient(spec, params, x, y) - expected)) <= 1e-12

    def test_input_gradient_matches_finite_differences(self):
        spec = nn.mlp([4, 6, 3], activation="tanh")
        rng = np.random.default_rng(9)
        params = nn.init_params(spec, rng)
        x = rng.uniform(size=4)
        y = 2
        g = nn.input_gradient(spec, params, x, y)
        h = 1e-5
        for i in range(4):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            lp = nn.cross_entropy(nn.forward(spec, params, xp[None]), [y])
            lm = nn.cross_entropy(nn.forward(spec, params, xm[None]), [y])
            fd = (lp - lm) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)


class TestLoss:
    def test_uniform_logits_loss_is_log_classes(self):
        logits = np.zeros((5, 4))
        assert nn.cross_entropy(logits, np.array([0, 1, 2, 3, 0])) == pytest.approx(np.log(4))

    def test_loss_non_negative(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            logits = rng.normal(scale=5, size=(6, 3))
            labels = rng.integers(0, 3, size=6)
            assert nn.cross_entropy(logits, labels) >= 0.0


class TestTrain:
    def test_separable_blobs_reach_95(self):
        ds = nn.make_synthetic("blobs", 400, 2, seed=11, noise=0.05)
        parts = nn.split_dataset(ds, {"train": 0.75, "val": 0.25}, seed=12)
        # margin check: centers 12 sigma apart, linear oracle confirms
        assert train_linear_oracle(parts["train"].features, parts["train"].labels, 2) >= 0.99
        spec = nn.mlp([2, 8, 2])
        params, _ = nn.train(spec, parts["train"],
                             nn.TrainConfig(epochs=50, learning_rate=0.01, seed=13))
        assert nn.evaluate_accuracy(spec, params, parts["val"]) >= 0.95

    def test_zero_learning_rate_keeps_params(self):
        ds = nn.make_synthetic("blobs", 60, 2, seed=14)
        spec = nn.mlp([2, 4, 2])
        cfg = nn.TrainConfig(optimizer="sgd", learning_rate=0.0, epochs=1, seed=15)
        params, _ = nn.train(spec, ds, cfg)
        fresh = nn.init_params(spec, np.random.default_rng(15))
        for a, b in zip(params.entries, fresh.entries):
            assert np.array_equal(a.values, b.values)

    def test_divergence_detected(self):
        ds = nn.make_synthetic("blobs", 60, 2, seed=16)
        spec = nn.mlp([2, 4, 2])
        with pytest.raises(TrainingDivergedError):
            nn.train(spec, ds, nn.TrainConfig(optimizer="sgd", learning_rate=1e308,
                                              epochs=50, seed=17))


class TestEvaluate:
    def test_constant_logits_tie_break_to_class_zero(self):
        spec = nn.mlp([2, 4, 3])
        params = nn.zero_params(spec)
        ds = nn.make_synthetic("blobs", 90, 3, seed=18)
        freq0 = float((ds.labels == 0).mean())
        assert nn.evaluate_accuracy(spec, params, ds) == freq0

    def test_permutation_invariant(self):
        spec = nn.mlp([2, 8, 3])
        params = nn.init_params(spec, np.random.default_rng(19))
        ds = nn.make_synthetic("blobs", 120, 3, seed=20)
        perm = np.random.default_rng(21).permutation(len(ds))
        assert nn.evaluate_accuracy(spec, params, ds) == \
            nn.evaluate_accuracy(spec, params, ds.subset(perm))

    def test_random_net_on_label_free_data_near_chance(self):
        # labels independent of features: any classifier has expected accuracy 1/3
        rng = np.random.default_rng(22)
        feats = rng.uniform(size=(3000, 2))
        labels = rng.permutation(np.arange(3000) % 3)
        ds = nn.Dataset(feats, labels, 3)
        spec = nn.mlp([2, 16, 3])
        params = nn.init_params(spec, np.random.default_rng(23))
        acc = nn.evaluate_accuracy(spec, params, ds)
        assert 0.28 <= acc <= 0.39  # 6-sigma binomial band around 1/3


class TestSynthetic:
    def test_deterministic(self):
        a = nn.make_synthetic("blobs", 300, 3, seed=1)
        b = nn.make_synthetic("blobs", 300, 3, seed=1)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_moons_minimal(self):
        ds = nn.make_synthetic("moons", 2, 2, seed=2)
        assert sorted(ds.labels.tolist()) == [0, 1]

    def test_class_balance(self):
        ds = nn.make_synthetic("blobs", 301, 3, seed=3)
        counts = np.bincount(ds.labels)
        assert counts.max() - counts.min() <= 1

    def test_features_in_unit_range(self):
        for kind in ("blobs", "moons"):
            ds = nn.make_synthetic(kind, 500, 3 if kind == "blobs" else 2, seed=4)
            assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0

    def test_rejects_bad_args(self):
        with pytest.raises(ConfigRangeError):
            nn.make_synthetic("blobs", 2, 3, seed=0)
        with pytest.raises(ConfigRangeError):
            nn.make_synthetic("moons", 10, 3, seed=0)


class TestIdx:
    def test_round_trip_single_image(self, tmp_path):
        img = (np.arange(28 * 28) % 256).astype(np.uint8).reshape(1, 28, 28)
        path = tmp_path / "one.idx3"
        write_idx_images(path, img)
        loaded = nn.load_idx(path)
        assert loaded.shape == (1, 28, 28)
        assert np.array_equal((loaded * 255).round().astype(np.uint8), img)

    def test_dataset_pairing(self, tmp_path):
        rng = np.random.default_rng(24)
        imgs = rng.integers(0, 256, size=(5, 8, 8)).astype(np.uint8)
        labels = np.array([0, 1, 2, 3, 4], dtype=np.uint8)
        write_idx_images(tmp_path / "img", imgs)
        write_idx_labels(tmp_path / "lab", labels)
        ds = nn.load_idx_dataset(tmp_path / "img", tmp_path / "lab", classes=10)
        assert len(ds) == 5
        assert ds.features.shape == (5, 1, 8, 8)
        assert np.array_equal(ds.labels, labels)

    def test_truncated_file_rejected(self, tmp_path):
        img = np.zeros((2, 4, 4), dtype=np.uint8)
        path = tmp_path / "trunc.idx3"
        write_idx_images(path, img)
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError):
            nn.load_idx(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">II", 0xDEADBEEF, 0))
        with pytest.raises(FormatError) as err:
            nn.load_idx(path)
        assert err.value.offset == 0


class TestValidation:
    def test_dataset_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            nn.Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)

    def test_label_range_checked(self):
        with pytest.raises(InvalidInputError):
            nn.Dataset(np.zeros((2, 2)), np.array([0, 5]), 3)

    def test_network_needs_parameterized_layer(self):
        with pytest.raises(StructuralError):
            nn.NetworkSpec((nn.Flatten(),), (2,), 2)

    def test_train_config_validation(self):
        with pytest.raises(ConfigRangeError):
            nn.TrainConfig(epochs=0)
        with pytest.raises(ConfigRangeError):
            nn.TrainConfig(optimizer="rmsprop")
