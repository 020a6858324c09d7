"""Weight gradients, EM training loop, optimizers, monitors."""

import numpy as np
import pytest

import pcn.metrics as metrics
from pcn.analytic import linear_equilibrium_layer
from pcn.baselines import backprop, backprop_through_activities
from pcn.data import Dataset, synthetic_gaussian
from pcn.inference import (
    ClampMode,
    InferenceSettings,
    InitMode,
    compute_errors,
    init_activities,
    run_inference,
)
from pcn.learning import (
    SgdMomentum,
    TrainSettings,
    em_train_step,
    energy_gradient_bound_check,
    mse_loss,
    train,
    weight_gradient,
)
from pcn.network import ActivationKind, Network, build_network, forward_pass, mlp_spec

TANH = ActivationKind.TANH
LINEAR = ActivationKind.LINEAR


def _net(widths=(4, 4, 4), seed=0, hidden=TANH, output=LINEAR):
    return build_network(mlp_spec(widths, hidden=hidden, output=output, seed=seed))


def _settings(**kw):
    inference = kw.pop(
        "inference",
        InferenceSettings(0.05, 200, 1e-10, InitMode.feedforward(), record_every=10**9),
    )
    base = dict(weight_lr=0.01, epochs=1, inference=inference)
    base.update(kw)
    return TrainSettings(**base)


class TestMseLoss:
    def test_identical_is_zero(self):
        assert mse_loss(np.ones(3), np.ones(3)) == 0.0

    def test_scalar_case(self):
        assert mse_loss(np.array([0.0]), np.array([2.0])) == 4.0

    def test_matches_independent_sum(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=7), rng.normal(size=7)
        assert mse_loss(a, b) == pytest.approx(sum((x - y) ** 2 for x, y in zip(b, a)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(np.ones(3), np.ones(2))


class TestWeightGradient:
    def test_zero_errors_zero_gradients(self):
        net = _net(seed=1)
        state = init_activities(net, ClampMode.input_only(np.ones(4)), InitMode.feedforward())
        for g in weight_gradient(net, state):
            assert not g.any()

    def test_matches_finite_differences(self):
        """dF/dW against central differences of the total energy on a
        3-layer tanh net."""
        net = _net((3, 4, 2), seed=2)
        rng = np.random.default_rng(1)
        mode = ClampMode.both(rng.normal(size=3), rng.normal(size=2))
        state = init_activities(net, mode, InitMode.random(1.0, 3))
        grads = weight_gradient(net, state)
        h = 1e-6
        for l, w in enumerate(net.weights):
            fd = np.zeros_like(w)
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    for sign in (1.0, -1.0):
                        net.weights[l][i, j] += sign * h
                        st = state.copy()
                        st.errors = compute_errors(net, st.activities)
                        fd[i, j] += sign * metrics.total_energy(net, st) / (2 * h)
                        net.weights[l][i, j] -= sign * h
            scale = max(np.max(np.abs(fd)), 1e-9)
            assert np.max(np.abs(grads[l] - fd)) / scale < 1e-5

    def test_precision_weighted_matches_finite_differences(self):
        net = _net((3, 3, 3), seed=3)
        rng = np.random.default_rng(2)
        net = net.with_precisions(
            [np.diag(rng.uniform(0.5, 2.0, 3)), np.diag(rng.uniform(0.5, 2.0, 3))]
        )
        mode = ClampMode.both(rng.normal(size=3), rng.normal(size=3))
        state = init_activities(net, mode, InitMode.random(1.0, 4))
        grads = weight_gradient(net, state)
        h = 1e-6
        l = 1
        fd = np.zeros_like(net.weights[l])
        for i in range(3):
            for j in range(3):
                for sign in (1.0, -1.0):
                    net.weights[l][i, j] += sign * h
                    st = state.copy()
                    st.errors = compute_errors(net, st.activities)
                    fd[i, j] += sign * metrics.total_energy(net, st) / (2 * h)
                    net.weights[l][i, j] -= sign * h
        assert np.max(np.abs(grads[l] - fd)) / max(np.max(np.abs(fd)), 1e-9) < 1e-5

    def test_backsubstitution_equals_backprop_at_feedforward(self):
        """Back-substituted consolidation gradients at feedforward
        activities reproduce exact backprop for every layer."""
        net = _net((5, 4, 3, 2), seed=4)
        rng = np.random.default_rng(3)
        d, t = rng.normal(size=5), rng.normal(size=2)
        state = init_activities(net, ClampMode.both(d, t), InitMode.feedforward())
        adj_grads = backprop_through_activities(net, state.activities)
        _, bp_grads = backprop(net, d, t)
        for a, b in zip(adj_grads, bp_grads):
            assert np.max(np.abs(a - b)) <= 1e-12

    def test_local_rule_matches_backsubstitution_at_equilibrium(self):
        """At a converged equilibrium the local Hebbian gradient equals
        backprop through the equilibrium activities."""
        net = _net(seed=5)
        rng = np.random.default_rng(4)
        mode = ClampMode.both(rng.normal(size=4), rng.normal(size=4))
        state, tr = run_inference(net, mode, InferenceSettings(0.05, 200_000, 1e-12))
        assert tr.converged
        local = weight_gradient(net, state)
        adj = backprop_through_activities(net, state.activities)
        for a, b in zip(local, adj):
            assert np.max(np.abs(a - b)) < 1e-6

    def test_equilibrium_errors_satisfy_adjoint_recursion(self):
        """eps*_l equals the recursion through equilibrium activities."""
        net = _net(seed=6)
        rng = np.random.default_rng(5)
        mode = ClampMode.both(rng.normal(size=4), rng.normal(size=4))
        state, tr = run_inference(net, mode, InferenceSettings(0.05, 200_000, 1e-12))
        assert tr.converged
        from pcn.network import activation_derivative

        pre = state.activities[1] @ net.weights[1].T
        rhs = (state.errors[1] * activation_derivative(net.activations[1], pre)) @ net.weights[1]
        assert np.max(np.abs(state.errors[0] - rhs)) < 1e-6


class TestBoundCheck:
    def test_feedforward_start_trivially_satisfied(self):
        net = _net(seed=7)
        rng = np.random.default_rng(6)
        mode = ClampMode.both(rng.normal(size=4), rng.normal(size=4))
        state = init_activities(net, mode, InitMode.feedforward())
        result = energy_gradient_bound_check(net, state, mode)
        assert result.satisfied and result.lhs == 0.0 and result.rhs >= 0.0

    def test_equilibrium_is_equality_case(self):
        net = _net(seed=8)
        rng = np.random.default_rng(7)
        mode = ClampMode.both(rng.normal(size=4), rng.normal(size=4))
        state, _ = run_inference(net, mode, InferenceSettings(0.05, 200_000, 1e-12))
        result = energy_gradient_bound_check(net, state, mode)
        assert abs(result.lhs - result.rhs) / max(1.0, abs(result.rhs)) < 1e-6

    def test_sign_agrees_with_fd_loss_rate(self):
        """The satisfied flag equals the sign of the instantaneous loss
        change along the dynamics, evaluated by finite differences."""
        from pcn.inference import activity_step

        rng = np.random.default_rng(8)
        agreements = 0
        for seed in range(20):
            net = _net(seed=seed)
            mode = ClampMode.both(rng.normal(size=4), rng.normal(size=4))
            state = init_activities(net, mode, InitMode.random(1.5, seed + 30))
            result = energy_gradient_bound_check(net, state, mode)
            h = 1e-7
            lp = metrics.energy_report(net, activity_step(net, state, mode, h)).output_loss
            lm = metrics.energy_report(net, activity_step(net, state, mode, -h)).output_loss
            rate = (lp - lm) / (2 * h)
            if result.satisfied == (rate <= 1e-10):
                agreements += 1
        assert agreements == 20


class TestEmTrainStep:
    def test_zero_like_lr_keeps_weights(self):
        net = _net(seed=9)
        rng = np.random.default_rng(9)
        batch = (rng.normal(size=(3, 4)), rng.normal(size=(3, 4)))
        new_net, sm = em_train_step(net, batch, _settings(weight_lr=1e-300))
        for a, b in zip(net.weights, new_net.weights):
            assert np.max(np.abs(a - b)) < 1e-250
        assert np.isfinite(sm.pre_loss) and np.isfinite(sm.post_loss)

    def test_scalar_chain_hand_computed(self):
        """1-1-1 linear chain: equilibrium and update match hand algebra."""
        w1, w2 = 0.8, -1.3
        net = Network([np.array([[w1]]), np.array([[w2]])], [LINEAR, LINEAR])
        d, t = 1.5, -0.7
        x1 = (w1 * d + w2 * t) / (1.0 + w2 * w2)  # layer equilibrium
        assert np.allclose(
            linear_equilibrium_layer(net.weights[0], net.weights[1], [d], [t]), x1
        )
        lr = 0.01
        settings = _settings(
            weight_lr=lr,
            inference=InferenceSettings(0.1, 100_000, 1e-14, InitMode.feedforward(),
                                        record_every=10**9),
        )
        new_net, _ = em_train_step(net, (np.array([[d]]), np.array([[t]])), settings)
        eps1 = x1 - w1 * d
        eps2 = t - w2 * x1
        assert new_net.weights[0][0, 0] == pytest.approx(w1 + lr * 2 * eps1 * d, rel=1e-8)
        assert new_net.weights[1][0, 0] == pytest.approx(w2 + lr * 2 * eps2 * x1, rel=1e-8)

    def test_inference_never_raises_loss_on_relu_net(self):
        """Feedforward-initialized phases only lower the output loss."""
        net = build_network(
            mlp_spec([20, 20, 20, 20], hidden=ActivationKind.RELU, output=LINEAR, seed=0)
        )
        ds = synthetic_gaussian(16, 20, 20, seed=1)
        settings = _settings(
            weight_lr=2e-3,
            epochs=20,
            inference=InferenceSettings(0.1, 100, 1e-10, InitMode.feedforward(),
                                        record_every=10**9),
        )
        _, record = train(net, ds, settings)
        assert max(record.delta_L_inference) <= 1e-12
        assert all(record.bound_ok)


class TestTrain:
    def test_zero_epochs_keeps_network(self):
        net = _net(seed=10)
        ds = synthetic_gaussian(4, 4, 4, seed=2)
        trained, record = train(net, ds, _settings(epochs=0))
        for a, b in zip(net.weights, trained.weights):
            assert np.array_equal(a, b)
        assert record.epoch == []

    def test_empty_dataset_rejected(self):
        net = _net(seed=11)
        ds = Dataset(np.zeros((0, 4)), np.zeros((0, 4)))
        with pytest.raises(ValueError):
            train(net, ds, _settings())

    def test_m_step_descends_energy_at_fixed_equilibrium(self):
        """One small plain-SGD weight update cannot raise the energy
        evaluated at the frozen equilibrium activities."""
        net = _net(seed=12)
        rng = np.random.default_rng(10)
        mode = ClampMode.both(rng.normal(size=4), rng.normal(size=4))
        state, _ = run_inference(net, mode, InferenceSettings(0.05, 100_000, 1e-12))
        before = metrics.total_energy(net, state)
        grads = weight_gradient(net, state)
        new_net = net.copy()
        SgdMomentum(1e-4).step(new_net.weights, grads)
        frozen = state.copy()
        frozen.errors = compute_errors(new_net, frozen.activities)
        assert metrics.total_energy(new_net, frozen) <= before + 1e-12

    def test_em_training_loss_nonincreasing_full_batch(self):
        """Full-batch EM with feedforward init and a small step never
        raises the training loss."""
        net = _net((5, 5, 5), seed=13)
        ds = synthetic_gaussian(8, 5, 5, seed=3)
        settings = _settings(
            weight_lr=2e-3,
            epochs=30,
            inference=InferenceSettings(0.05, 500, 1e-11, InitMode.feedforward(),
                                        record_every=10**9),
        )
        _, record = train(net, ds, settings)
        losses = np.asarray(record.loss)
        assert np.all(np.diff(losses) <= 1e-10 * np.maximum(losses[:-1], 1e-30))

    def test_pc_and_bp_updates_differ(self):
        """Per-layer cosine between consolidation and backprop updates
        stays measurably below 1 for at least one hidden layer."""
        net = _net((6, 6, 6, 6), seed=14)
        ds = synthetic_gaussian(10, 6, 6, seed=4)
        settings = _settings(
            weight_lr=1e-3,
            epochs=5,
            inference=InferenceSettings(0.1, 300, 1e-11, InitMode.feedforward(),
                                        record_every=10**9),
        )
        _, record = train(net, ds, settings)
        means = np.asarray(record.cos_sim_layers).mean(axis=0)
        assert means[:-1].min() < 0.999

    def test_record_csv_schema(self, tmp_path):
        net = _net(seed=15)
        ds = synthetic_gaussian(4, 4, 4, seed=5)
        _, record = train(net, ds, _settings(epochs=2))
        path = tmp_path / "record.csv"
        record.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == (
            "epoch,loss,bp_grad_norm,pc_grad_norm,accuracy,delta_L_inference,"
            "cos_sim_layer_1,cos_sim_layer_2"
        )

    def test_deterministic_given_seed(self):
        net = _net(seed=16)
        ds = synthetic_gaussian(6, 4, 4, seed=6)
        settings = _settings(epochs=3, batch_size=2, shuffle_seed=9)
        _, r1 = train(net, ds, settings)
        _, r2 = train(net, ds, settings)
        assert r1.loss == r2.loss


class TestOptimizer:
    def test_plain_sgd_step(self):
        opt = SgdMomentum(0.1)
        w = [np.ones((2, 2))]
        opt.step(w, [np.ones((2, 2))])
        assert np.allclose(w[0], 0.9)

    def test_momentum_accumulates(self):
        opt = SgdMomentum(0.1, momentum=0.5)
        w = [np.zeros(1)]
        g = [np.ones(1)]
        opt.step(w, g)   # v=1, w=-0.1
        opt.step(w, g)   # v=1.5, w=-0.25
        assert w[0][0] == pytest.approx(-0.25)

    def test_nesterov_lookahead(self):
        opt = SgdMomentum(0.1, momentum=0.5, nesterov=True)
        w = [np.zeros(1)]
        g = [np.ones(1)]
        opt.step(w, g)   # v=1, update = g + 0.5*v = 1.5 -> w=-0.15
        assert w[0][0] == pytest.approx(-0.15)

    def test_validation(self):
        with pytest.raises(ValueError):
            SgdMomentum(0.0)
        with pytest.raises(ValueError):
            SgdMomentum(0.1, momentum=1.0)
