"""Weight learning: the consolidation update, EM training loop, and monitors.

Training alternates an E-step (relax activities to equilibrium with both
ends clamped, feedforward-initialized, per-sample) with an M-step (one
optimizer update of all weights from the batch-averaged gradient).

The weight gradient is the exact gradient of the reported energy
F = sum_l ||eps_l||^2 at the equilibrium activities,

    dF/dW_l = -2 (Pi_l eps_l * f'(W_l x_{l-1})) x_{l-1}',

so it matches finite differences of the energy and coincides with the
exact output-loss gradient whenever the activities sit at their
feedforward values.  The trainer subtracts learning_rate * gradient.

Per-sample E-steps within a batch are independent (they run vectorized
over the batch rows); the M-step requires exclusive weight access.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import baselines, metrics
from .data import Dataset
from .exceptions import DivergenceError
from .inference import (
    ActivityState,
    ClampMode,
    InferenceSettings,
    init_activities,
    run_inference,
)
from .network import Network, activation_derivative, forward_pass

__all__ = [
    "TrainSettings",
    "TrainRecord",
    "StepMetrics",
    "SgdMomentum",
    "mse_loss",
    "weight_gradient",
    "energy_gradient_bound_check",
    "em_train_step",
    "train",
    "accuracy",
]


def mse_loss(output, target) -> float:
    """Sum-of-squares loss ||target - output||^2 (matches the output energy)."""
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch {output.shape} vs {target.shape}")
    d = target - output
    return float(np.sum(d * d))


def weight_gradient(net: Network, state: ActivityState) -> list[np.ndarray]:
    """Gradient of the total energy w.r.t. each weight matrix.

    Expects fresh errors (normally the post-inference equilibrium).  For
    batched states the gradient is averaged over the batch rows.
    """
    pres = metrics._preactivations(net, state.activities)
    eff = metrics._weighted_errors(net, state.errors)
    grads = []
    for l, kind in enumerate(net.activations):
        e = eff[l] * activation_derivative(kind, pres[l])
        x = state.activities[l]
        if e.ndim == 1:
            grads.append(-2.0 * np.outer(e, x))
        else:
            grads.append(-2.0 * (e.T @ x) / e.shape[0])
    return grads


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    satisfied: bool


def energy_gradient_bound_check(
    net: Network, state: ActivityState, mode: ClampMode | None = None
) -> BoundCheck:
    """Evaluate -dL/dx . dE_tilde/dx <= ||dL/dx||^2 summed over free layers.

    Satisfied means the output loss cannot be increasing under the current
    activity dynamics; at equilibrium the two sides are equal.  With
    ``mode`` omitted both end layers are assumed clamped.
    """
    lhs, rhs = metrics.bound_values(net, state, mode)
    return BoundCheck(lhs, rhs, lhs <= rhs + 1e-12)


class SgdMomentum:
    """SGD with optional (Nesterov) momentum; velocities persist across steps.

    Plain momentum: v <- mu v + g, w <- w - lr v.
    Nesterov:       v <- mu v + g, w <- w - lr (g + mu v).
    """

    def __init__(self, lr: float, momentum: float = 0.0, nesterov: bool = False):
        if lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.lr = lr
        self.momentum = momentum
        self.nesterov = nesterov
        self._velocity: list[np.ndarray] | None = None

    def step(self, weights: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._velocity is None:
            self._velocity = [np.zeros_like(w) for w in weights]
        for w, g, v in zip(weights, grads, self._velocity):
            if self.momentum == 0.0:
                w -= self.lr * g
                continue
            v *= self.momentum
            v += g
            w -= self.lr * (g + self.momentum * v) if self.nesterov else self.lr * v


@dataclass(frozen=True)
class TrainSettings:
    """Hyperparameters for EM training."""

    weight_lr: float
    epochs: int
    momentum: float = 0.0
    nesterov: bool = False
    batch_size: int = 0  # 0 = full batch
    inference: InferenceSettings = field(default_factory=InferenceSettings)
    loss_monitor: bool = True
    record_gradient_similarity: bool = True
    similarity_every: int = 1  # record update cosines every k-th epoch
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.weight_lr <= 0:
            raise ValueError("weight_lr must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class StepMetrics:
    """Record of one EM step on one batch."""

    pre_loss: float
    post_loss: float
    delta_loss: float
    bound_ok: bool
    pc_grad_norm: float
    converged: bool


@dataclass
class TrainRecord:
    """Per-epoch training quantities (finite, or flagged diverged)."""

    epoch: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    bp_grad_norm: list[float] = field(default_factory=list)
    pc_grad_norm: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    delta_L_inference: list[float] = field(default_factory=list)
    cos_sim_layers: list[list[float]] = field(default_factory=list)
    bound_ok: list[bool] = field(default_factory=list)
    diverged: bool = False

    def to_csv(self, path) -> None:
        n_layers = len(self.cos_sim_layers[0]) if self.cos_sim_layers else 0
        header = ["epoch", "loss", "bp_grad_norm", "pc_grad_norm", "accuracy", "delta_L_inference"]
        header += [f"cos_sim_layer_{l + 1}" for l in range(n_layers)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, e in enumerate(self.epoch):
                row = [
                    e,
                    repr(float(self.loss[i])),
                    repr(float(self.bp_grad_norm[i])),
                    repr(float(self.pc_grad_norm[i])),
                    repr(float(self.accuracy[i])),
                    repr(float(self.delta_L_inference[i])),
                ]
                row += [repr(float(c)) for c in self.cos_sim_layers[i]]
                writer.writerow(row)


def accuracy(net: Network, dataset: Dataset) -> float:
    """Fraction of samples whose argmax output matches the argmax target."""
    out = forward_pass(net, dataset.inputs)[-1]
    return float(np.mean(np.argmax(out, axis=-1) == np.argmax(dataset.targets, axis=-1)))


def _grad_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def _pc_batch_gradient(net, X, Y, settings):
    """E-step on one batch; returns (grads, step metrics).

    The gradient bound is checked at the phase initialization, which is
    the condition the convergence argument needs.
    """
    n = X.shape[0] if X.ndim == 2 else 1
    mode = ClampMode.both(X, Y)
    bound_ok = True
    if settings.loss_monitor:
        start = init_activities(net, mode, settings.inference.init)
        bound_ok = energy_gradient_bound_check(net, start, mode).satisfied
    state, trace = run_inference(net, mode, settings.inference)
    pre_loss = trace.energies[0].output_loss / n
    post_loss = trace.energies[-1].output_loss / n
    if settings.inference.lambda_weight is not None:
        grads = baselines.backprop_through_activities(net, state.activities)
    else:
        grads = weight_gradient(net, state)
    sm = StepMetrics(
        pre_loss=pre_loss,
        post_loss=post_loss,
        delta_loss=post_loss - pre_loss,
        bound_ok=bound_ok,
        pc_grad_norm=_grad_norm(grads),
        converged=trace.converged,
    )
    return grads, sm


def em_train_step(
    net: Network,
    batch: tuple[np.ndarray, np.ndarray],
    settings: TrainSettings,
    optimizer: SgdMomentum | None = None,
) -> tuple[Network, StepMetrics]:
    """One E-step followed by one M-step on a single batch.

    Returns a new network; the input network is not mutated.  Pass an
    optimizer to carry momentum state across calls.
    """
    X, Y = (np.asarray(v, dtype=np.float64) for v in batch)
    new_net = net.copy()
    grads, sm = _pc_batch_gradient(new_net, X, Y, settings)
    opt = optimizer or SgdMomentum(settings.weight_lr, settings.momentum, settings.nesterov)
    opt.step(new_net.weights, grads)
    return new_net, sm


def _batches(n: int, batch_size: int, rng: np.random.Generator | None):
    if batch_size <= 0 or batch_size >= n:
        yield np.arange(n)
        return
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _train_loop(
    net: Network,
    dataset: Dataset,
    settings: TrainSettings,
    gradient: str,
    eval_dataset: Dataset | None = None,
) -> tuple[Network, TrainRecord]:
    """Shared trainer for the EM ("pc") and pure-backprop ("bp") paths.

    Per-epoch record fields: ``loss`` and ``bp_grad_norm`` are evaluated on
    the full training set after the epoch's updates; ``pc_grad_norm``,
    ``delta_L_inference`` and the per-layer gradient cosines are averages
    over the epoch's batches (NaN where not applicable).
    """
    net = net.copy()
    record = TrainRecord()
    opt = SgdMomentum(settings.weight_lr, settings.momentum, settings.nesterov)
    X_all = np.asarray(dataset.inputs, dtype=np.float64)
    Y_all = np.asarray(dataset.targets, dtype=np.float64)
    n = X_all.shape[0]
    rng = np.random.default_rng(settings.shuffle_seed) if settings.batch_size > 0 else None
    acc_ds = eval_dataset if eval_dataset is not None else dataset
    n_layers = net.num_weight_layers
    classification = Y_all.shape[-1] > 1

    for epoch in range(settings.epochs):
        cos_acc = np.zeros(n_layers)
        pc_norms: list[float] = []
        deltas: list[float] = []
        bound_ok = True
        n_batches = 0
        record_cos = (
            gradient == "pc"
            and settings.record_gradient_similarity
            and epoch % settings.similarity_every == 0
        )
        try:
            for idx in _batches(n, settings.batch_size, rng):
                X, Y = X_all[idx], Y_all[idx]
                if gradient == "pc":
                    grads, sm = _pc_batch_gradient(net, X, Y, settings)
                    pc_norms.append(sm.pc_grad_norm)
                    deltas.append(sm.delta_loss)
                    bound_ok = bound_ok and sm.bound_ok
                    if record_cos:
                        _, bp_grads = baselines.backprop(net, X, Y)
                        for l in range(n_layers):
                            cos_acc[l] += metrics.cosine_similarity(grads[l], bp_grads[l])
                else:
                    _, grads = baselines.backprop(net, X, Y)
                opt.step(net.weights, grads)
                n_batches += 1
        except DivergenceError:
            record.diverged = True
            break

        # one full-train forward serves the loss, gradient-norm, and (for
        # training-set evaluation) accuracy records
        values = forward_pass(net, X_all)
        _, bp_full = baselines.backprop_from_values(net, values, Y_all)
        gap = Y_all - values[-1]
        if classification:
            if eval_dataset is None:
                acc = float(np.mean(np.argmax(values[-1], axis=-1) == np.argmax(Y_all, axis=-1)))
            else:
                acc = accuracy(net, acc_ds)
        else:
            acc = float("nan")
        record.epoch.append(epoch + 1)
        record.loss.append(float(np.mean(np.sum(gap * gap, axis=-1))))
        record.bp_grad_norm.append(_grad_norm(bp_full))
        record.pc_grad_norm.append(float(np.mean(pc_norms)) if pc_norms else float("nan"))
        record.accuracy.append(acc)
        record.delta_L_inference.append(float(np.mean(deltas)) if deltas else float("nan"))
        if record_cos and n_batches:
            record.cos_sim_layers.append(list(cos_acc / n_batches))
        else:
            record.cos_sim_layers.append([float("nan")] * n_layers)
        record.bound_ok.append(bound_ok)

    return net, record


def train(
    net: Network,
    dataset: Dataset,
    settings: TrainSettings,
    eval_dataset: Dataset | None = None,
) -> tuple[Network, TrainRecord]:
    """Full EM training: inference to equilibrium, then one weight update,
    per batch.  Deterministic for a fixed network, dataset and settings."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    return _train_loop(net, dataset, settings, "pc", eval_dataset)
