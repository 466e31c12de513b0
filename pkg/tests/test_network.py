"""Forward/backward correctness, dropout behavior, training loop, checkpoints.

The backprop checks compare analytic gradients against central finite
differences; the forward checks compare the vectorized implementation
against a deliberately naive scalar reimplementation.
"""

import math

import numpy as np
import pytest

from polydrop.exceptions import TrainingDiverged
from polydrop.network import (
    Activation,
    Mlp,
    NetworkConfig,
    TrainConfig,
    backward,
    forward,
    forward_with_cache,
    init_network,
    load_checkpoint,
    masks_from_seed,
    sample_masks,
    save_checkpoint,
    sigmoid,
    train_arrays,
)


class TestSigmoid:
    def test_midpoint(self):
        assert sigmoid(0.0) == 0.5

    def test_symmetry(self):
        x = np.random.default_rng(41).uniform(-100, 100, size=5000)
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)

    def test_no_overflow_far_out(self):
        hi = sigmoid(710.0)
        lo = sigmoid(-710.0)
        assert math.isfinite(hi) and hi >= 1 - 1e-15
        assert math.isfinite(lo) and 0 <= lo < 1e-300

    def test_stable_across_thousand_range(self):
        x = np.linspace(-1000, 1000, 2001)
        s = sigmoid(x)
        assert np.all(np.isfinite(s))
        assert np.all((s >= 0) & (s <= 1))


class TestInitNetwork:
    def test_shapes_chain(self):
        net = init_network(NetworkConfig(width=6, depth=1, init_seed=0))
        assert [w.shape for w in net.weights] == [(1, 6), (6, 1)]
        assert [b.shape for b in net.biases] == [(6,), (1,)]

    def test_deep_shapes(self):
        net = init_network(NetworkConfig(width=4, depth=3, init_seed=0))
        assert [w.shape for w in net.weights] == [(1, 4), (4, 4), (4, 4), (4, 1)]

    def test_deterministic(self):
        a = init_network(NetworkConfig(width=8, depth=2, init_seed=7))
        b = init_network(NetworkConfig(width=8, depth=2, init_seed=7))
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_relu_init_scale(self):
        """First-layer weights (fan_in 1) have std near sqrt(2); a
        hidden-to-hidden layer has std near sqrt(2/width)."""
        net = init_network(NetworkConfig(width=100, depth=2, init_seed=3))
        assert abs(net.weights[0].std() - math.sqrt(2)) / math.sqrt(2) < 0.1
        expected = math.sqrt(2 / 100)
        assert abs(net.weights[1].std() - expected) / expected < 0.1

    def test_sigmoid_init_scale(self):
        net = init_network(
            NetworkConfig(width=100, depth=2, activation="sigmoid", init_seed=3)
        )
        expected = math.sqrt(1 / 100)
        assert abs(net.weights[1].std() - expected) / expected < 0.1

    def test_biases_zero(self):
        net = init_network(NetworkConfig(width=5, depth=2, init_seed=1))
        for b in net.biases:
            np.testing.assert_array_equal(b, np.zeros_like(b))

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            NetworkConfig(width=0, depth=1)
        with pytest.raises(ValueError):
            NetworkConfig(width=4, depth=1, dropout_rate=1.0)


def _scalar_forward(net, x_value, masks_row=None):
    """Straight-line per-sample reimplementation used as a forward oracle."""
    h = [float(x_value)]
    for layer in range(net.depth):
        w, b = net.weights[layer], net.biases[layer]
        nxt = []
        for j in range(w.shape[1]):
            z = b[j] + sum(h[i] * w[i, j] for i in range(w.shape[0]))
            a = max(z, 0.0) if net.activation is Activation.RELU else sigmoid(z)
            if masks_row is not None:
                a *= masks_row[layer][j]
            nxt.append(a)
        h = nxt
    w, b = net.weights[-1], net.biases[-1]
    return b[0] + sum(h[i] * w[i, 0] for i in range(len(h)))


class TestForward:
    def test_hand_set_single_layer(self):
        """Weights (1), bias 0, output weight (2): x=0 gives 2*sigmoid(0)=1."""
        net = Mlp(
            weights=[np.array([[1.0]]), np.array([[2.0]])],
            biases=[np.zeros(1), np.zeros(1)],
            activation=Activation.SIGMOID,
            dropout_rate=0.0,
        )
        np.testing.assert_allclose(forward(net, [0.0]), [1.0], rtol=1e-15)

    def test_batch_shape(self):
        net = init_network(NetworkConfig(width=10, depth=2, init_seed=5))
        for batch in (1, 7, 128):
            out = forward(net, np.linspace(-1, 1, batch))
            assert out.shape == (batch,)

    def test_zero_dropout_mc_equals_deterministic(self):
        net = init_network(
            NetworkConfig(width=8, depth=2, dropout_rate=0.0, init_seed=5)
        )
        x = np.linspace(-1, 1, 40)
        np.testing.assert_array_equal(forward(net, x, mask_seed=123), forward(net, x))

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(42)
        for activation in Activation:
            net = init_network(
                NetworkConfig(width=5, depth=3, activation=activation, init_seed=9)
            )
            x = rng.uniform(-2, 2, size=6)
            out = forward(net, x)
            expected = [_scalar_forward(net, xi) for xi in x]
            np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)

    def test_masked_matches_scalar_oracle(self):
        net = init_network(
            NetworkConfig(width=5, depth=2, dropout_rate=0.3, init_seed=9)
        )
        x = np.linspace(-1, 1, 4)
        masks = masks_from_seed(77, len(x), 5, 2, 0.3)
        out, _, _ = forward_with_cache(net, x, masks)
        for row, xi in enumerate(x):
            masks_row = [masks[layer][row] for layer in range(2)]
            expected = _scalar_forward(net, xi, masks_row)
            np.testing.assert_allclose(out[row], expected, rtol=1e-12, atol=1e-12)

    def test_mask_seed_deterministic(self):
        net = init_network(NetworkConfig(width=8, depth=2, init_seed=5))
        x = np.linspace(-1, 1, 16)
        np.testing.assert_array_equal(
            forward(net, x, mask_seed=3), forward(net, x, mask_seed=3)
        )
        assert not np.array_equal(forward(net, x, mask_seed=3), forward(net, x, mask_seed=4))

    def test_non_finite_input_rejected(self):
        net = init_network(NetworkConfig(width=4, depth=1, init_seed=0))
        with pytest.raises(ValueError):
            forward(net, np.array([0.0, np.nan]))


class TestDropoutMasks:
    def test_mask_values(self):
        masks = sample_masks(np.random.default_rng(1), 50, 10, 2, 0.25)
        scale = 1.0 / 0.75
        for mask in masks:
            assert set(np.unique(mask)) <= {0.0, scale}

    def test_zero_rate_returns_none(self):
        assert sample_masks(np.random.default_rng(1), 5, 4, 1, 0.0) is None

    def test_inverted_dropout_preserves_expectation(self):
        """The mean over many masked passes of a fixed activation matches
        the unmasked activation within three standard errors."""
        rate = 0.2
        activation = 1.7
        n = 10_000
        rng = np.random.default_rng(8)
        draws = activation * sample_masks(rng, n, 1, 1, rate)[0][:, 0]
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean() - activation) < 3 * se


def _flat_params(net):
    return np.concatenate([p.ravel() for p in net.parameters()])


def _set_flat_params(net, flat):
    offset = 0
    for p in net.parameters():
        p[...] = flat[offset : offset + p.size].reshape(p.shape)
        offset += p.size


def _fd_gradient(net, x, y, masks, h=1e-5):
    base = _flat_params(net).copy()
    grad = np.empty_like(base)
    for k in range(base.size):
        bumped = base.copy()
        bumped[k] += h
        _set_flat_params(net, bumped)
        up, _, _ = forward_with_cache(net, x, masks)
        loss_up = float(np.mean((up - y) ** 2))
        bumped[k] -= 2 * h
        _set_flat_params(net, bumped)
        down, _, _ = forward_with_cache(net, x, masks)
        loss_down = float(np.mean((down - y) ** 2))
        grad[k] = (loss_up - loss_down) / (2 * h)
    _set_flat_params(net, base)
    return grad


def _analytic_gradient(net, x, y, masks):
    _, gw, gb = backward(net, x, y, masks)
    return np.concatenate([g.ravel() for g in [*gw, *gb]])


def _relative_errors(analytic, numeric):
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return np.abs(analytic - numeric) / denom


class TestBackward:
    def test_sigmoid_gradients_match_finite_differences(self):
        rng = np.random.default_rng(50)
        for trial in range(5):
            depth = int(rng.integers(1, 4))
            width = int(rng.integers(2, 11))
            net = init_network(
                NetworkConfig(
                    width=width,
                    depth=depth,
                    activation="sigmoid",
                    dropout_rate=0.0,
                    init_seed=trial,
                )
            )
            x = rng.uniform(-1, 1, size=8)
            y = rng.uniform(-1, 1, size=8)
            errs = _relative_errors(
                _analytic_gradient(net, x, y, None), _fd_gradient(net, x, y, None)
            )
            assert errs.max() < 1e-4

    def test_gradients_respect_masks(self):
        rng = np.random.default_rng(51)
        net = init_network(
            NetworkConfig(width=6, depth=2, activation="sigmoid", dropout_rate=0.4, init_seed=2)
        )
        x = rng.uniform(-1, 1, size=5)
        y = rng.uniform(-1, 1, size=5)
        masks = masks_from_seed(13, len(x), 6, 2, 0.4)
        errs = _relative_errors(
            _analytic_gradient(net, x, y, masks), _fd_gradient(net, x, y, masks)
        )
        assert errs.max() < 1e-4

    def test_relu_gradients_away_from_kinks(self):
        """ReLU nets are checked after nudging parameters so no
        pre-activation sits near zero, where the subgradient is ambiguous."""
        rng = np.random.default_rng(52)
        for trial in range(3):
            net = init_network(
                NetworkConfig(width=6, depth=2, dropout_rate=0.0, init_seed=trial + 10)
            )
            x = rng.uniform(-1, 1, size=6)
            y = rng.uniform(-1, 1, size=6)
            for _ in range(20):
                _, pre, _ = forward_with_cache(net, x, None)
                gap = min(np.abs(z).min() for z in pre)
                if gap > 1e-3:
                    break
                for b in net.biases[:-1]:
                    b += rng.uniform(0.002, 0.01, size=b.shape)
            errs = _relative_errors(
                _analytic_gradient(net, x, y, None), _fd_gradient(net, x, y, None)
            )
            assert errs.max() < 1e-4

    def test_zero_output_zero_target_has_zero_output_bias_gradient(self):
        net = init_network(NetworkConfig(width=4, depth=1, init_seed=1))
        net.weights[-1][...] = 0.0
        net.biases[-1][...] = 0.0
        x = np.linspace(-1, 1, 10)
        _, _, gb = backward(net, x, np.zeros(10), None)
        np.testing.assert_array_equal(gb[-1], np.zeros(1))

    def test_empty_batch_rejected(self):
        net = init_network(NetworkConfig(width=4, depth=1, init_seed=1))
        with pytest.raises(ValueError):
            backward(net, np.array([]), np.array([]), None)


def _linear_data(n=400, seed=60):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=n)
    return x, 0.8 * x - 0.3


class TestTrain:
    def test_loss_decreases_on_linear_data(self):
        x, y = _linear_data()
        net = init_network(NetworkConfig(width=16, depth=1, dropout_rate=0.0, init_seed=4))
        _, hist = train_arrays(
            net, x, y, x, y, TrainConfig(epochs=50, early_stop_patience=None, train_seed=5)
        )
        assert hist.train_loss[49] < hist.train_loss[0]

    def test_deterministic(self):
        x, y = _linear_data()
        cfg = TrainConfig(epochs=10, train_seed=6)
        results = []
        for _ in range(2):
            net = init_network(NetworkConfig(width=8, depth=2, init_seed=3))
            trained, _ = train_arrays(net, x, y, x, y, cfg)
            results.append(_flat_params(trained))
        np.testing.assert_array_equal(results[0], results[1])

    def test_returns_best_epoch_parameters(self):
        """With early stopping on, the returned net reproduces the best
        recorded test loss exactly."""
        x, y = _linear_data()
        rng = np.random.default_rng(61)
        x_test = rng.uniform(-1, 1, size=100)
        y_test = 0.8 * x_test - 0.3
        net = init_network(NetworkConfig(width=8, depth=2, init_seed=3))
        trained, hist = train_arrays(
            net, x, y, x_test, y_test, TrainConfig(epochs=30, train_seed=7)
        )
        pred = forward(trained, x_test)
        got = float(np.mean((pred - y_test) ** 2))
        np.testing.assert_allclose(got, min(hist.test_loss), rtol=1e-12)
        assert hist.best_epoch == int(np.argmin(hist.test_loss))

    def test_divergence_reports_epoch(self):
        x, y = _linear_data()
        net = init_network(NetworkConfig(width=8, depth=2, init_seed=3))
        with pytest.raises(TrainingDiverged) as exc:
            train_arrays(
                net,
                x,
                y,
                x,
                y,
                TrainConfig(epochs=10, optimizer="sgd", learning_rate=1e20, train_seed=8),
            )
        assert exc.value.epoch >= 0
        assert str(exc.value.epoch) in str(exc.value)

    def test_invalid_learning_rate_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)

    def test_original_network_untouched(self):
        x, y = _linear_data()
        net = init_network(NetworkConfig(width=8, depth=1, init_seed=3))
        before = _flat_params(net).copy()
        train_arrays(net, x, y, x, y, TrainConfig(epochs=3, train_seed=9))
        np.testing.assert_array_equal(_flat_params(net), before)

    def test_sgd_optimizer_trains(self):
        x, y = _linear_data()
        net = init_network(NetworkConfig(width=16, depth=1, dropout_rate=0.0, init_seed=4))
        _, hist = train_arrays(
            net,
            x,
            y,
            x,
            y,
            TrainConfig(epochs=30, optimizer="sgd", learning_rate=0.05, train_seed=5),
        )
        assert hist.train_loss[-1] < hist.train_loss[0]


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        net = init_network(NetworkConfig(width=9, depth=3, dropout_rate=0.15, init_seed=21))
        meta = {"width": 9, "depth": 3, "note": "ck"}
        path = tmp_path / "model.npz"
        save_checkpoint(path, net, meta)
        back, meta_back = load_checkpoint(path)
        assert meta_back == meta
        assert back.activation == net.activation
        assert back.dropout_rate == net.dropout_rate
        for a, b in zip(net.parameters(), back.parameters()):
            np.testing.assert_array_equal(a, b)
        x = np.linspace(-1, 1, 32)
        np.testing.assert_array_equal(forward(net, x), forward(back, x))

    def test_unrecognized_file_rejected(self, tmp_path):
        path = tmp_path / "junk.npz"
        np.savez(path, a=np.zeros(3))
        with pytest.raises(ValueError):
            load_checkpoint(path)
