"""Exact backpropagation and exact target propagation for the same networks.

Both serve as oracles for the inference dynamics and as comparison
trainers.  Backprop returns true gradients of the sum-of-squares loss
||T - x_L||^2 (adjoint seed dL/dx_L = -2(T - x_L)); target propagation
computes layerwise inverse targets with pseudoinverse weights, so it is
exact for square invertible weights and a least-squares approximation
otherwise.

All functions are pure over immutable networks and freely concurrent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NonInvertibleActivationError
from .linalg import pseudoinverse
from .network import (
    Network,
    activation_apply,
    activation_derivative,
    activation_inverse,
    forward_pass,
)

__all__ = [
    "Adjoints",
    "TPTargets",
    "backprop",
    "backprop_through_activities",
    "targetprop_targets",
    "bp_train",
]


@dataclass
class Adjoints:
    """Loss gradients w.r.t. activities, deltas[l-1] = dL/dx_l for l = 1..L."""

    deltas: list[np.ndarray]


@dataclass
class TPTargets:
    """Layerwise inverse targets t_0..t_L with t_L the output target."""

    targets: list[np.ndarray]


def backprop(net: Network, x0, target) -> tuple[Adjoints, list[np.ndarray]]:
    """Adjoint recursion at the feedforward-pass activities.

    Returns (adjoints, weight gradients); gradients of batched inputs are
    averaged over the batch.  dL/dW_l = (delta_l * f'(W_l x_{l-1})) x_{l-1}'.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    return backprop_from_values(net, forward_pass(net, x0), target)


def backprop_from_values(net: Network, values, target) -> tuple[Adjoints, list[np.ndarray]]:
    """Adjoint recursion over an already-computed forward pass."""
    target = np.asarray(target, dtype=np.float64)
    pres = [values[l] @ w.T for l, w in enumerate(net.weights)]
    top = net.num_weight_layers

    deltas: list[np.ndarray | None] = [None] * top
    deltas[top - 1] = -2.0 * (target - values[top])
    for l in range(top - 1, 0, -1):
        fprime = activation_derivative(net.activations[l], pres[l])
        deltas[l - 1] = (deltas[l] * fprime) @ net.weights[l]

    grads = []
    for l in range(top):
        e = deltas[l] * activation_derivative(net.activations[l], pres[l])
        if e.ndim == 1:
            grads.append(np.outer(e, values[l]))
        else:
            grads.append((e.T @ values[l]) / e.shape[0])
    return Adjoints(list(deltas)), grads


def backprop_through_activities(net: Network, activities) -> list[np.ndarray]:
    """Back-substitute the current output error through the current state.

    Seeds the adjoint with the output-layer prediction error of the given
    activities and runs the same recursion as :func:`backprop`, evaluated
    at those activities instead of the feedforward pass.  At an inference
    equilibrium this reproduces the consolidation gradient; at feedforward
    activities it reproduces backprop exactly.
    """
    top = net.num_weight_layers
    pres = [activities[l] @ w.T for l, w in enumerate(net.weights)]
    eps_top = activities[top] - activation_apply(net.activations[top - 1], pres[top - 1])
    delta = -2.0 * eps_top
    grads: list[np.ndarray | None] = [None] * top
    for l in range(top - 1, -1, -1):
        e = delta * activation_derivative(net.activations[l], pres[l])
        if e.ndim == 1:
            grads[l] = np.outer(e, activities[l])
        else:
            grads[l] = (e.T @ activities[l]) / e.shape[0]
        if l > 0:
            delta = e @ net.weights[l]
    return list(grads)


def targetprop_targets(net: Network, target, down_to: int = 0) -> TPTargets:
    """Inverse targets t_L = T, t_l = pinv(W_{l+1}) f^-1(t_{l+1}) down to t_{down_to}.

    Requires invertible activation kinds; tanh targets outside (-1, 1)
    raise a domain error.  Non-square weights use pseudoinverse targets.
    With ``down_to > 0`` the recursion stops early and the remaining lower
    layers are reported as None (useful when the full inverse chain leaves
    the activation's range).
    """
    for kind in net.activations[down_to:]:
        if not kind.invertible:
            raise NonInvertibleActivationError(
                "target propagation requires invertible activations"
            )
    t = np.asarray(target, dtype=np.float64)
    targets: list[np.ndarray | None] = [t]
    for l in range(net.num_weight_layers - 1, down_to - 1, -1):
        pre = activation_inverse(net.activations[l], targets[0])
        targets.insert(0, pre @ pseudoinverse(net.weights[l]).T)
    targets = [None] * down_to + targets
    return TPTargets(targets)


def bp_train(net: Network, dataset, settings, eval_dataset=None):
    """Backprop trainer sharing the EM trainer's loop and record schema."""
    from .learning import _train_loop

    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    return _train_loop(net, dataset, settings, "bp", eval_dataset)
