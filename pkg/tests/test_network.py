"""Network construction, activations, forward pass, serialization."""

import numpy as np
import pytest

from pcn.exceptions import DomainError, NonInvertibleActivationError
from pcn.network import (
    ActivationKind,
    Network,
    NetworkSpec,
    activation_apply,
    activation_derivative,
    activation_inverse,
    build_network,
    forward_pass,
    load_network,
    mlp_spec,
    save_network,
)

TANH = ActivationKind.TANH
RELU = ActivationKind.RELU
LINEAR = ActivationKind.LINEAR


class TestBuildNetwork:
    def test_same_seed_is_bitwise_identical(self):
        spec = mlp_spec([4, 3, 2], seed=11)
        a, b = build_network(spec), build_network(spec)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_zero_std_gives_zero_weights(self):
        net = build_network(mlp_spec([3, 3], weight_init_std=0.0))
        assert not net.weights[0].any()

    def test_sample_variance_matches_init_std(self):
        """Entry variance of a [5,5,5]-net stays within 20% of 0.05 once
        enough entries are pooled."""
        entries = []
        for seed in range(200):
            net = build_network(mlp_spec([5, 5, 5], weight_init_std=np.sqrt(0.05), seed=seed))
            entries.extend(w.ravel() for w in net.weights)
        var = np.var(np.concatenate(entries))
        assert abs(var - 0.05) < 0.2 * 0.05

    def test_shape_chain(self):
        net = build_network(mlp_spec([7, 5, 3, 2]))
        assert [w.shape for w in net.weights] == [(5, 7), (3, 5), (2, 3)]
        assert net.layer_widths == (7, 5, 3, 2)

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            NetworkSpec((5,), (TANH,))
        with pytest.raises(ValueError):
            NetworkSpec((5, 0), (TANH,))
        with pytest.raises(ValueError):
            NetworkSpec((5, 5), (TANH, TANH))

    def test_broken_weight_chain_rejected(self):
        with pytest.raises(ValueError, match="chain"):
            Network([np.zeros((3, 4)), np.zeros((2, 5))], [TANH, LINEAR])


class TestActivations:
    def test_linear_identity(self):
        v = np.array([-1.0, 0.0, 2.5])
        assert np.array_equal(activation_apply(LINEAR, v), v)
        assert np.array_equal(activation_derivative(LINEAR, v), np.ones(3))
        assert np.array_equal(activation_inverse(LINEAR, v), v)

    def test_tanh_fixed_points(self):
        assert activation_apply(TANH, np.zeros(2)).tolist() == [0.0, 0.0]
        assert activation_derivative(TANH, np.zeros(1))[0] == 1.0
        assert activation_inverse(TANH, np.zeros(1))[0] == 0.0

    def test_tanh_inverse_round_trip(self):
        v = np.array([0.7])
        assert activation_inverse(TANH, activation_apply(TANH, v))[0] == pytest.approx(0.7, abs=1e-12)
        rng = np.random.default_rng(0)
        x = rng.normal(size=50)
        back = activation_apply(TANH, activation_inverse(TANH, np.tanh(x)))
        assert np.max(np.abs(back - np.tanh(x))) < 1e-10

    def test_relu(self):
        v = np.array([-1.0, 2.0])
        assert activation_apply(RELU, v).tolist() == [0.0, 2.0]
        assert activation_derivative(RELU, np.array([-1.0, 0.0, 3.0])).tolist() == [0.0, 0.0, 1.0]

    def test_relu_not_invertible(self):
        with pytest.raises(NonInvertibleActivationError):
            activation_inverse(RELU, np.array([1.0]))

    def test_tanh_inverse_domain(self):
        with pytest.raises(DomainError):
            activation_inverse(TANH, np.array([1.0]))
        with pytest.raises(DomainError):
            activation_inverse(TANH, np.array([-1.5]))
        # inside the open interval but beyond the clipping band: finite result
        v = activation_inverse(TANH, np.array([1.0 - 1e-14]))
        assert np.isfinite(v).all()

    @pytest.mark.parametrize("kind", [LINEAR, TANH])
    def test_derivative_matches_finite_differences(self, kind):
        rng = np.random.default_rng(7)
        x = rng.normal(0.0, 2.0, size=100)
        h = 1e-6
        fd = (activation_apply(kind, x + h) - activation_apply(kind, x - h)) / (2 * h)
        got = activation_derivative(kind, x)
        assert np.max(np.abs(got - fd)) < 1e-7

    def test_relu_derivative_matches_fd_away_from_kink(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=100)
        x = x[np.abs(x) > 1e-3]
        h = 1e-6
        fd = (activation_apply(RELU, x + h) - activation_apply(RELU, x - h)) / (2 * h)
        assert np.max(np.abs(activation_derivative(RELU, x) - fd)) < 1e-7


class TestForwardPass:
    def test_zero_weights_tanh(self):
        net = build_network(mlp_spec([3, 4, 2], weight_init_std=0.0))
        values = forward_pass(net, np.ones(3))
        assert not values[1].any() and not values[2].any()

    def test_scalar_chain(self):
        net = Network([np.array([[2.0]])], [LINEAR])
        assert forward_pass(net, np.array([3.0]))[-1][0] == 6.0

    def test_independent_loop_oracle(self):
        net = build_network(mlp_spec([4, 6, 3, 2], hidden=TANH, output=LINEAR, seed=3))
        rng = np.random.default_rng(9)
        x = rng.normal(size=4)
        values = forward_pass(net, x)
        cur = x
        for w, kind in zip(net.weights, net.activations):
            pre = np.array([w[i] @ cur for i in range(w.shape[0])])
            cur = np.tanh(pre) if kind is TANH else pre
        assert np.array_equal(values[-1], cur) or np.max(np.abs(values[-1] - cur)) < 1e-12

    def test_linearity_for_linear_nets(self):
        net = build_network(mlp_spec([4, 5, 3], hidden=LINEAR, output=LINEAR, seed=5))
        rng = np.random.default_rng(10)
        u, v = rng.normal(size=4), rng.normal(size=4)
        a, b = 0.7, -1.3
        mixed = forward_pass(net, a * u + b * v)
        fu, fv = forward_pass(net, u), forward_pass(net, v)
        for l in range(3):
            assert np.max(np.abs(mixed[l] - (a * fu[l] + b * fv[l]))) < 1e-10

    def test_layer_widths(self):
        net = build_network(mlp_spec([4, 6, 3, 2]))
        values = forward_pass(net, np.zeros(4))
        assert [v.shape[-1] for v in values] == [4, 6, 3, 2]

    def test_batched_matches_single(self):
        net = build_network(mlp_spec([4, 5, 2], seed=8))
        rng = np.random.default_rng(11)
        xs = rng.normal(size=(6, 4))
        batched = forward_pass(net, xs)
        for i in range(6):
            single = forward_pass(net, xs[i])
            for l in range(3):
                assert np.max(np.abs(batched[l][i] - single[l])) < 1e-12

    def test_width_mismatch(self):
        net = build_network(mlp_spec([4, 3]))
        with pytest.raises(ValueError):
            forward_pass(net, np.zeros(5))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        net = build_network(mlp_spec([4, 3, 2], hidden=TANH, output=RELU, seed=21))
        path = tmp_path / "net.pcn"
        save_network(net, path)
        loaded = load_network(path)
        assert loaded.activations == net.activations
        for a, b in zip(net.weights, loaded.weights):
            assert np.array_equal(a, b)
        assert loaded.precisions is None  # identity materialized then folded back

    def test_round_trip_with_precisions(self, tmp_path):
        net = build_network(mlp_spec([3, 3, 3], seed=2))
        pis = [np.eye(3) * 2.0, np.eye(3)]
        net = net.with_precisions(pis)
        path = tmp_path / "net.pcn"
        save_network(net, path)
        loaded = load_network(path)
        assert loaded.precisions is not None
        for a, b in zip(net.precisions, loaded.precisions):
            assert np.array_equal(a, b)

    def test_bytes_stable(self, tmp_path):
        net = build_network(mlp_spec([4, 3, 2], seed=0))
        p1, p2 = tmp_path / "a.pcn", tmp_path / "b.pcn"
        save_network(net, p1)
        save_network(load_network(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bad.pcn"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(ValueError, match="magic"):
            load_network(path)
