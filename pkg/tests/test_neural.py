import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from echoml import neural
from echoml.neural import (
    DenseNetwork,
    Layer,
    LayerSpec,
    TrainConfig,
    TrainingError,
    backprop_gradients,
    build_network,
    classifier_network,
    forward,
    loss,
    one_hot_labels,
    predict_batch,
    regressor_network,
    train,
)


def identity_regressor():
    return DenseNetwork([Layer(np.eye(2), np.zeros(2), "linear")], "regressor")


def finite_difference_check(net, x, targets, n_coords, rng, h=1e-5):
    grads = backprop_gradients(net, x, targets)
    params = net.parameters()
    flat_grads = [g for pair in grads for g in pair]
    errors = []
    for _ in range(n_coords):
        k = int(rng.integers(len(params)))
        idx = tuple(int(rng.integers(s)) for s in params[k].shape)
        old = params[k][idx]
        params[k][idx] = old + h
        up = loss(net, x, targets)
        params[k][idx] = old - h
        down = loss(net, x, targets)
        params[k][idx] = old
        numeric = (up - down) / (2 * h)
        analytic = flat_grads[k][idx]
        scale = max(abs(numeric), abs(analytic), 1e-7)
        errors.append(abs(numeric - analytic) / scale)
    return np.array(errors)


class TestStructure:
    def test_softmax_only_last(self):
        with pytest.raises(ValueError):
            build_network((3, 2, 2), ["softmax", "softmax"], "classifier")

    def test_layers_must_chain(self):
        with pytest.raises(ValueError):
            DenseNetwork([Layer(np.zeros((4, 3)), np.zeros(4), "relu"),
                          Layer(np.zeros((2, 5)), np.zeros(2), "softmax")], "classifier")

    def test_head_width_and_activation(self):
        with pytest.raises(ValueError):
            build_network((3, 3), ["softmax"], "classifier")
        with pytest.raises(ValueError):
            build_network((3, 2), ["tanh"], "regressor")
        with pytest.raises(ValueError):
            build_network((3, 2), ["linear"], "classifier")

    def test_layer_spec_validation(self):
        with pytest.raises(ValueError):
            LayerSpec(0, 3, "relu")
        with pytest.raises(ValueError):
            LayerSpec(3, 3, "sigmoid")

    def test_default_topologies(self):
        assert [s.fan_out for s in classifier_network(128).specs] == [32, 16, 2]
        assert [s.activation for s in regressor_network(160).specs] == ["tanh", "tanh", "linear"]


class TestForward:
    def test_zero_classifier_is_undecided(self):
        net = classifier_network(5)
        for layer in net.layers:
            layer.weight[:] = 0
        np.testing.assert_array_equal(forward(net, np.ones(5)), [0.5, 0.5])

    def test_identity(self):
        x = np.array([0.3, -1.7])
        np.testing.assert_array_equal(forward(identity_regressor(), x), x)

    def test_matches_hand_rolled(self):
        net = classifier_network(6, hidden=(5, 4), seed=3)
        x = np.random.default_rng(0).normal(size=6)
        a = x
        for layer in net.layers[:-1]:
            a = np.array([max(0.0, sum(w * v for w, v in zip(row, a)) + b)
                          for row, b in zip(layer.weight, layer.bias)])
        last = net.layers[-1]
        z = [sum(w * v for w, v in zip(row, a)) + b for row, b in zip(last.weight, last.bias)]
        p = np.exp(z[0]) / (np.exp(z[0]) + np.exp(z[1]))
        np.testing.assert_allclose(forward(net, x), [p, 1 - p], rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(classifier_network(4), np.ones(5))

    @given(arrays(np.float64, 8, elements=st.floats(-1e6, 1e6)))
    @settings(max_examples=200, deadline=None)
    def test_softmax_outputs_are_probabilities(self, x):
        out = forward(classifier_network(8, seed=1), x)
        assert np.all((out >= 0) & (out <= 1))
        assert abs(out.sum() - 1.0) <= 1e-9
        assert out[1] == 1.0 - out[0]


class TestLoss:
    def test_perfect_classifier(self):
        net = DenseNetwork([Layer(np.array([[1000.0], [-1000.0]]), np.zeros(2), "softmax")],
                           "classifier")
        assert loss(net, [[1.0]], one_hot_labels([1])) == 0.0

    def test_undecided_classifier(self):
        net = classifier_network(3)
        for layer in net.layers:
            layer.weight[:] = 0
        assert loss(net, np.ones((4, 3)), one_hot_labels([1, 0, 1, 1])) == pytest.approx(np.log(2))

    def test_regressor_mse(self):
        x = np.random.default_rng(1).normal(size=(7, 2))
        assert loss(identity_regressor(), x, x + 0.1) == pytest.approx(0.01)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            loss(identity_regressor(), np.empty((0, 2)), np.empty((0, 2)))

    def test_label_encoding(self):
        np.testing.assert_array_equal(one_hot_labels([1, 0]), [[1, 0], [0, 1]])
        with pytest.raises(ValueError):
            one_hot_labels([2])


class TestGradients:
    @pytest.mark.parametrize("head", ["classifier", "regressor"])
    def test_finite_differences(self, head):
        rng = np.random.default_rng(42)
        if head == "classifier":
            net = classifier_network(10, hidden=(8, 6), seed=5)
            targets = one_hot_labels(rng.integers(0, 2, 12))
        else:
            net = regressor_network(10, hidden=(8, 6), seed=5)
            targets = rng.normal(size=(12, 2))
        x = rng.normal(size=(12, 10))
        errors = finite_difference_check(net, x, targets, 150, rng)
        assert len(errors) >= 100
        assert errors.max() < 1e-4

    def test_zero_loss_gives_zero_gradients(self):
        x = np.random.default_rng(2).normal(size=(5, 2))
        for dw, db in backprop_gradients(identity_regressor(), x, x):
            assert not np.any(dw) and not np.any(db)

    def test_duplicated_batch(self):
        net = classifier_network(4, hidden=(3,), seed=1)
        x = np.random.default_rng(3).normal(size=(1, 4))
        y = one_hot_labels([1])
        single = backprop_gradients(net, x, y)
        double = backprop_gradients(net, np.vstack([x, x]), np.vstack([y, y]))
        for (a, b), (c, d) in zip(single, double):
            np.testing.assert_allclose(a, c, rtol=1e-12)
            np.testing.assert_allclose(b, d, rtol=1e-12)


XOR_X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
XOR_Y = one_hot_labels([0, 1, 1, 0])


class TestTrain:
    def test_xor(self):
        net = build_network((2, 4, 2), ["tanh", "softmax"], "classifier", seed=0)
        cfg = TrainConfig(epochs=2000, batch_size=4, learning_rate=0.05, validation_fraction=0)
        trained, report = train(net, XOR_X, XOR_Y, cfg)
        assert report.accuracy == 1.0
        pred = np.argmax(forward(trained, XOR_X), axis=1)
        np.testing.assert_array_equal(pred, np.argmax(XOR_Y, axis=1))

    def test_zero_epochs_is_identity(self):
        net = classifier_network(2, hidden=(4,), seed=1)
        trained, report = train(net, XOR_X, XOR_Y, TrainConfig(epochs=0, validation_fraction=0))
        for a, b in zip(net.parameters(), trained.parameters()):
            assert np.array_equal(a, b)
        assert report.loss_history == []

    def test_input_network_untouched(self):
        net = classifier_network(2, hidden=(4,), seed=1)
        before = [p.copy() for p in net.parameters()]
        train(net, XOR_X, XOR_Y, TrainConfig(epochs=5, validation_fraction=0))
        for a, b in zip(before, net.parameters()):
            assert np.array_equal(a, b)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(60, 5)), one_hot_labels(rng.integers(0, 2, 60))
        cfg = TrainConfig(epochs=10, seed=9)
        a, ra = train(classifier_network(5, seed=1), x, y, cfg)
        b, rb = train(classifier_network(5, seed=1), x, y, cfg)
        for p, q in zip(a.parameters(), b.parameters()):
            assert np.array_equal(p, q)
        assert ra.loss_history == rb.loss_history
        assert ra.final_test_loss >= 0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        x = np.random.default_rng(0).normal(size=(16, 2)) * 1e3
        cfg = TrainConfig(epochs=50, learning_rate=1e6, optimizer="sgd", validation_fraction=0)
        with pytest.raises(TrainingError, match="learning_rate"):
            train(regressor_network(2, hidden=(4,)), x, x * 1e150, cfg)

    @pytest.mark.parametrize("kwargs", [{"batch_size": 0}, {"learning_rate": 0},
                                        {"optimizer": "rmsprop"}, {"validation_fraction": 1.0}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestPredictBatch:
    def test_batch_of_one(self):
        net = classifier_network(6, seed=2)
        x = np.random.default_rng(1).normal(size=6)
        np.testing.assert_array_equal(predict_batch(net, x[None, :])[0], forward(net, x))

    def test_permutation(self):
        net = regressor_network(6, seed=2)
        x = np.random.default_rng(1).normal(size=(20, 6))
        perm = np.random.default_rng(2).permutation(20)
        np.testing.assert_array_equal(predict_batch(net, x)[perm], predict_batch(net, x[perm]))

    def test_latency(self):
        net = classifier_network(128)
        x = np.random.default_rng(0).random((1000, 128))
        _, mean_latency = predict_batch(net, x, return_latency=True)
        assert np.median(neural.per_window_latency(net, x)) < 1e-3
        assert mean_latency < 1e-3


class TestSerialization:
    @pytest.mark.parametrize("make", [lambda: classifier_network(7, seed=4),
                                      lambda: regressor_network(9, seed=4)])
    def test_round_trip(self, make, tmp_path):
        net = make()
        path = tmp_path / "net.json"
        neural.save_network(net, path)
        back = neural.load_network(path)
        assert back.head == net.head and back.specs == net.specs
        for a, b in zip(net.parameters(), back.parameters()):
            assert np.array_equal(a, b)
        x = np.random.default_rng(0).normal(size=(5, net.n_inputs))
        assert np.array_equal(forward(net, x), forward(back, x))

    def test_shape_mismatch_rejected(self):
        data = neural.network_to_dict(classifier_network(3))
        data["layers"][0]["weight_shape"] = [3, 32]
        with pytest.raises(ValueError):
            neural.network_from_dict(data)
