"""Exact backprop and exact targetprop against independent oracles."""

import numpy as np
import pytest

import pcn.metrics as metrics
from pcn.baselines import backprop, bp_train, targetprop_targets
from pcn.data import synthetic_gaussian
from pcn.exceptions import DomainError, NonInvertibleActivationError
from pcn.experiments import scaled_orthogonal_net
from pcn.inference import ClampMode, InferenceSettings, InitMode, init_activities, run_inference
from pcn.learning import TrainSettings, mse_loss
from pcn.network import ActivationKind, Network, build_network, forward_pass, mlp_spec

TANH = ActivationKind.TANH
LINEAR = ActivationKind.LINEAR
RELU = ActivationKind.RELU


class TestBackprop:
    def test_zero_gradient_at_exact_target(self):
        net = build_network(mlp_spec([4, 3, 2], seed=0))
        d = np.ones(4)
        target = forward_pass(net, d)[-1]
        _, grads = backprop(net, d, target)
        for g in grads:
            assert np.max(np.abs(g)) < 1e-14

    def test_matches_finite_differences(self):
        """Every weight gradient against central differences of the loss
        composed with the forward pass (3-layer tanh)."""
        net = build_network(mlp_spec([3, 4, 2], hidden=TANH, output=LINEAR, seed=1))
        rng = np.random.default_rng(0)
        d, target = rng.normal(size=3), rng.normal(size=2)
        _, grads = backprop(net, d, target)
        h = 1e-6
        for l, w in enumerate(net.weights):
            fd = np.zeros_like(w)
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    for sign in (1.0, -1.0):
                        net.weights[l][i, j] += sign * h
                        fd[i, j] += sign * mse_loss(forward_pass(net, d)[-1], target) / (2 * h)
                        net.weights[l][i, j] -= sign * h
            scale = max(np.max(np.abs(fd)), 1e-9)
            assert np.max(np.abs(grads[l] - fd)) / scale < 1e-5

    def test_scalar_chain_hand_calculus(self):
        """W = (a, b), input d, target T: dL/da = -2(T - abd) * bd."""
        a, b, d, target = 0.7, -1.2, 1.5, 0.3
        net = Network([np.array([[a]]), np.array([[b]])], [LINEAR, LINEAR])
        _, grads = backprop(net, np.array([d]), np.array([target]))
        assert grads[0][0, 0] == pytest.approx(-2 * (target - a * b * d) * b * d, rel=1e-12)
        assert grads[1][0, 0] == pytest.approx(-2 * (target - a * b * d) * a * d, rel=1e-12)

    def test_adjoint_seed_is_loss_gradient(self):
        net = build_network(mlp_spec([3, 3, 3], seed=2))
        rng = np.random.default_rng(1)
        d, target = rng.normal(size=3), rng.normal(size=3)
        adj, _ = backprop(net, d, target)
        out = forward_pass(net, d)[-1]
        assert np.allclose(adj.deltas[-1], -2.0 * (target - out), atol=1e-14)

    def test_batched_gradients_are_batch_means(self):
        net = build_network(mlp_spec([3, 4, 2], seed=3))
        rng = np.random.default_rng(2)
        ds, ts = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
        _, batched = backprop(net, ds, ts)
        singles = [backprop(net, ds[i], ts[i])[1] for i in range(4)]
        for l in range(2):
            mean = np.mean([s[l] for s in singles], axis=0)
            assert np.max(np.abs(batched[l] - mean)) < 1e-12


class TestFirstStepEquivalence:
    def test_energy_gradient_equals_partial_loss_gradient_at_ff(self):
        """With feedforward init and a clamped target, dF/dx equals dL/dx
        exactly at every layer."""
        net = build_network(mlp_spec([5, 4, 4, 3], hidden=TANH, output=LINEAR, seed=4))
        rng = np.random.default_rng(3)
        mode = ClampMode.both(rng.normal(size=5), rng.normal(size=3))
        state = init_activities(net, mode, InitMode.feedforward())
        total = metrics.activity_gradient(net, state)
        loss_g = metrics.loss_activity_gradient(net, state)
        for l in range(len(total)):
            assert np.max(np.abs(total[l] - loss_g[l])) < 1e-10

    def test_error_wavefront_is_backprop_adjoint(self):
        """Stepping from feedforward init, the error wave reaches one layer
        per step, and the first nonzero energy gradient at layer l equals
        step^(L-1-l) times the backprop adjoint delta_l exactly (the step's
        half factor and the gradient's factor two cancel per wave)."""
        from pcn.inference import activity_step

        net = build_network(mlp_spec([5, 5, 5, 5], hidden=TANH, output=LINEAR, seed=5))
        rng = np.random.default_rng(4)
        d, target = rng.normal(size=5), rng.normal(size=5)
        mode = ClampMode.both(d, target)
        adj, _ = backprop(net, d, target)
        step = 0.5
        state = init_activities(net, mode, InitMode.feedforward())
        top = net.num_weight_layers
        for wave in range(top - 1):
            layer = top - 1 - wave
            grad = metrics.activity_gradient(net, state)[layer]
            expected = step**wave * adj.deltas[layer - 1]
            scale = max(np.max(np.abs(expected)), 1e-12)
            assert np.max(np.abs(grad - expected)) / scale < 1e-10
            # layers the wave has not reached are still exactly zero
            for below in range(1, layer):
                assert not metrics.activity_gradient(net, state)[below].any()
            state = activity_step(net, state, mode, step)


class TestTargetprop:
    def test_identity_weights_keep_target(self):
        net = Network([np.eye(3), np.eye(3)], [LINEAR, LINEAR])
        t = np.array([0.3, -0.2, 0.9])
        tp = targetprop_targets(net, t)
        for layer_target in tp.targets:
            assert np.allclose(layer_target, t, atol=1e-12)

    def test_round_trip_through_forward_pass(self):
        """Square invertible weights: pushing t_l through the layer above
        reproduces t_{l+1}."""
        net = scaled_orthogonal_net([5, 5, 5, 5], seed=1)
        rng = np.random.default_rng(5)
        target = forward_pass(net, rng.normal(0, 1, 5))[-1]
        tp = targetprop_targets(net, target)
        from pcn.network import activation_apply

        for l in range(net.num_weight_layers):
            pushed = activation_apply(
                net.activations[l], net.weights[l] @ np.asarray(tp.targets[l])
            )
            assert np.max(np.abs(pushed - np.asarray(tp.targets[l + 1]))) < 1e-8

    def test_matches_input_unclamped_equilibrium(self):
        net = scaled_orthogonal_net([5, 5, 5], seed=3)
        rng = np.random.default_rng(6)
        target = forward_pass(net, rng.normal(0, 1, 5))[-1]
        tp = targetprop_targets(net, target)
        state, tr = run_inference(
            net,
            ClampMode.output_only(target),
            InferenceSettings(0.5, 100_000, 1e-12, InitMode.random(0.5, 7), record_every=10**9),
        )
        assert max(
            np.max(np.abs(a - np.asarray(t))) for a, t in zip(state.activities, tp.targets)
        ) < 1e-5

    def test_relu_rejected(self):
        net = build_network(mlp_spec([3, 3, 3], hidden=RELU, output=LINEAR, seed=0))
        with pytest.raises(NonInvertibleActivationError):
            targetprop_targets(net, np.zeros(3))

    def test_tanh_domain_error(self):
        net = build_network(mlp_spec([3, 3, 3], hidden=TANH, output=TANH, seed=0))
        with pytest.raises(DomainError):
            targetprop_targets(net, np.array([0.0, 0.5, 1.5]))

    def test_down_to_skips_lower_layers(self):
        net = build_network(mlp_spec([3, 3, 3], hidden=TANH, output=LINEAR, seed=6))
        tp = targetprop_targets(net, np.array([5.0, -4.0, 3.0]), down_to=1)
        assert tp.targets[0] is None
        assert tp.targets[1] is not None

    def test_orthogonal_weights_align_with_adjoints(self):
        """For orthogonal linear layers (transpose = inverse) the inverse
        targets and the backprop descent direction coincide in direction."""
        net = scaled_orthogonal_net([4, 4, 4], seed=5, scale=1.0, hidden=LINEAR, output=LINEAR)
        rng = np.random.default_rng(8)
        d, target = rng.normal(size=4), rng.normal(size=4)
        ff = forward_pass(net, d)
        tp = targetprop_targets(net, target)
        adj, _ = backprop(net, d, target)
        for l in range(1, 2):
            gap = np.asarray(tp.targets[l]) - ff[l]
            cos = metrics.cosine_similarity(gap, -adj.deltas[l - 1])
            assert cos == pytest.approx(1.0, abs=1e-8)


class TestPrecisionRatioLimit:
    def test_cosine_to_adjoints_rises_as_ratio_falls(self):
        """Feedback/feedforward ratio -> 0 drives the equilibrium errors
        onto the backprop descent direction."""
        rows = {r: [] for r in (1.0, 1e-1, 1e-2, 1e-3)}
        for seed in range(10):
            net0 = build_network(mlp_spec([5, 5, 5], hidden=TANH, output=LINEAR, seed=seed))
            rng = np.random.default_rng(seed + 40)
            d, target = rng.normal(1, 1, 5), rng.normal(-1, 1, 5)
            adj, _ = backprop(net0, d, target)
            for ratio in rows:
                net = net0.with_precisions([np.eye(5), ratio * np.eye(5)])
                state, _ = run_inference(
                    net,
                    ClampMode.both(d, target),
                    InferenceSettings(0.05, 200_000, 1e-11, InitMode.feedforward(),
                                      record_every=10**9),
                )
                rows[ratio].append(
                    metrics.cosine_similarity(state.errors[0], -adj.deltas[0])
                )
        medians = [float(np.median(rows[r])) for r in (1.0, 1e-1, 1e-2, 1e-3)]
        assert all(a < b for a, b in zip(medians, medians[1:]))
        assert medians[-1] >= 0.999


class TestBpTrain:
    def test_zero_like_lr_keeps_weights(self):
        net = build_network(mlp_spec([4, 3, 2], seed=7))
        ds = synthetic_gaussian(4, 4, 2, seed=0)
        settings = TrainSettings(weight_lr=1e-300, epochs=2,
                                 inference=InferenceSettings(record_every=10**9))
        trained, _ = bp_train(net, ds, settings)
        for a, b in zip(net.weights, trained.weights):
            assert np.max(np.abs(a - b)) < 1e-250

    def test_single_step_scalar_chain(self):
        a, b, d, target = 0.5, 1.1, 2.0, -1.0
        net = Network([np.array([[a]]), np.array([[b]])], [LINEAR, LINEAR])
        from pcn.data import Dataset

        ds = Dataset(np.array([[d]]), np.array([[target]]))
        lr = 0.01
        settings = TrainSettings(weight_lr=lr, epochs=1,
                                 inference=InferenceSettings(record_every=10**9))
        trained, _ = bp_train(net, ds, settings)
        ga = -2 * (target - a * b * d) * b * d
        gb = -2 * (target - a * b * d) * a * d
        assert trained.weights[0][0, 0] == pytest.approx(a - lr * ga, rel=1e-12)
        assert trained.weights[1][0, 0] == pytest.approx(b - lr * gb, rel=1e-12)

    def test_shares_record_schema(self, tmp_path):
        net = build_network(mlp_spec([4, 3, 2], seed=8))
        ds = synthetic_gaussian(4, 4, 2, seed=1)
        settings = TrainSettings(weight_lr=1e-3, epochs=2,
                                 inference=InferenceSettings(record_every=10**9))
        _, record = bp_train(net, ds, settings)
        path = tmp_path / "bp.csv"
        record.to_csv(path)
        assert path.read_text().splitlines()[0].startswith(
            "epoch,loss,bp_grad_norm,pc_grad_norm,accuracy,delta_L_inference"
        )
