"""Energy decomposition and the similarity/distance quantities used in traces.

The total energy F = sum_l E_l with E_l = ||eps_l||^2 (precision-weighted:
eps_l' Pi_l eps_l) splits exactly into the output loss L = E_L and the
residual energy E_tilde = sum_{l<L} E_l.  The gradient helpers here return
exact gradients of these reported quantities (including the factor 2 from
the square), so they match finite differences directly; the inference
integrator steps along half of the total gradient, which only rescales the
step size.

Everything in this module is a pure function; all are freely concurrent.
For batched states (rows = samples) the energies aggregate over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .network import Network, activation_apply, activation_derivative

if TYPE_CHECKING:  # pragma: no cover
    from .inference import ActivityState, ClampMode

__all__ = [
    "EnergyReport",
    "energy_report",
    "total_energy",
    "cosine_similarity",
    "cosine_similarity_with_flag",
    "energy_term_gradients",
    "activity_gradient",
    "loss_activity_gradient",
    "residual_activity_gradient",
    "marginal_condition_residual",
    "distance_to_reference",
    "lambda_energy",
    "ProbeRefs",
    "make_probe",
]

# Vectors with squared norm below this are treated as degenerate in cosines.
_COSINE_EPS = 1e-300


@dataclass(frozen=True)
class EnergyReport:
    """Energy decomposition: total = output_loss + residual, exactly."""

    total: float
    output_loss: float
    residual: float
    per_layer: tuple[float, ...]


def _preactivations(net: Network, activities: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [activities[l] @ w.T for l, w in enumerate(net.weights)]


def _weighted_errors(net: Network, errors: Sequence[np.ndarray]) -> list[np.ndarray]:
    if net.precisions is None:
        return list(errors)
    return [e @ pi.T for e, pi in zip(errors, net.precisions)]


def energy_report(net: Network, state: "ActivityState") -> EnergyReport:
    """Per-layer energies and their exact decomposition.

    Requires fresh errors.  The total is computed as output_loss + residual
    in that order, so the decomposition identity holds bit-for-bit.
    """
    weighted = _weighted_errors(net, state.errors)
    per_layer = tuple(float(np.sum(e * we)) for e, we in zip(state.errors, weighted))
    residual = float(sum(per_layer[:-1]))
    output_loss = per_layer[-1]
    return EnergyReport(output_loss + residual, output_loss, residual, per_layer)


def total_energy(net: Network, state: "ActivityState") -> float:
    return energy_report(net, state).total


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|) in [-1, 1]; 0.0 when either argument is near zero."""
    return cosine_similarity_with_flag(a, b)[0]


def cosine_similarity_with_flag(a, b) -> tuple[float, bool]:
    """Cosine similarity plus a flag marking the degenerate near-zero case."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    na = float(np.dot(a, a))
    nb = float(np.dot(b, b))
    if na < _COSINE_EPS or nb < _COSINE_EPS:
        return 0.0, True
    value = float(np.dot(a, b) / np.sqrt(na * nb))
    return min(1.0, max(-1.0, value)), False


def energy_term_gradients(
    net: Network, state: "ActivityState", layers: Iterable[int]
) -> list[np.ndarray]:
    """Exact gradient of sum_{m in layers} E_m w.r.t. every activity.

    ``layers`` indexes the per-layer energies E_1..E_L; E_m depends on x_m
    directly and on x_{m-1} through the prediction.  Precision weighting is
    honored when the network carries precisions.
    """
    pres = _preactivations(net, state.activities)
    eff = _weighted_errors(net, state.errors)
    grads = [np.zeros_like(a) for a in state.activities]
    for m in layers:
        grads[m] = grads[m] + 2.0 * eff[m - 1]
        fprime = activation_derivative(net.activations[m - 1], pres[m - 1])
        grads[m - 1] = grads[m - 1] - 2.0 * ((eff[m - 1] * fprime) @ net.weights[m - 1])
    return grads


def activity_gradient(net: Network, state: "ActivityState") -> list[np.ndarray]:
    """Exact gradient of the total energy F w.r.t. every activity layer."""
    return energy_term_gradients(net, state, range(1, net.num_weight_layers + 1))


def loss_activity_gradient(net: Network, state: "ActivityState") -> list[np.ndarray]:
    """Gradient of the output loss L = E_L w.r.t. every activity.

    Only the top two layers carry nonzero entries: the output layer
    directly, and the penultimate layer through the output prediction
    evaluated at the current (not feedforward) activities.
    """
    top = net.num_weight_layers
    return energy_term_gradients(net, state, [top])


def residual_activity_gradient(net: Network, state: "ActivityState") -> list[np.ndarray]:
    """Gradient of the residual energy E_tilde = sum_{l<L} E_l."""
    top = net.num_weight_layers
    return energy_term_gradients(net, state, range(1, top))


def _free_layers(num_layers: int, mode: "ClampMode | None") -> list[int]:
    top = num_layers - 1
    if mode is None:
        return list(range(1, top))
    return [l for l in range(num_layers) if not mode.is_clamped(l, top)]


def marginal_condition_residual(
    net: Network, state: "ActivityState", mode: "ClampMode | None" = None
) -> float:
    """Max over free layers of ||dL/dx_l + dE_tilde/dx_l||_inf.

    Zero at an exact inference equilibrium (the two gradients are equal and
    opposite there).  With ``mode`` omitted, both end layers are assumed
    clamped, the training configuration.
    """
    loss_g = loss_activity_gradient(net, state)
    res_g = residual_activity_gradient(net, state)
    free = _free_layers(len(state.activities), mode)
    if not free:
        return 0.0
    return max(float(np.max(np.abs(loss_g[l] + res_g[l]))) for l in free)


def bound_values(
    net: Network, state: "ActivityState", mode: "ClampMode | None" = None
) -> tuple[float, float]:
    """(lhs, rhs) of the initialization bound -dL.dE_tilde <= ||dL||^2.

    Both sides are summed over the free layers.  lhs <= rhs means the
    instantaneous change of the output loss under the activity dynamics is
    non-positive; equality is the marginal condition at equilibrium.
    """
    loss_g = loss_activity_gradient(net, state)
    res_g = residual_activity_gradient(net, state)
    free = _free_layers(len(state.activities), mode)
    lhs = -sum(float(np.sum(loss_g[l] * res_g[l])) for l in free)
    rhs = sum(float(np.sum(loss_g[l] * loss_g[l])) for l in free)
    return lhs, rhs


def distance_to_reference(
    state: "ActivityState", reference: Sequence[np.ndarray], layers: Sequence[int] | None = None
) -> float:
    """Euclidean norm of the concatenated activity differences.

    ``layers`` selects which layers enter (default: every layer present in
    ``reference``); shapes must match layerwise.
    """
    idx = range(len(state.activities)) if layers is None else layers
    total = 0.0
    for l in idx:
        a, r = state.activities[l], np.asarray(reference[l], dtype=np.float64)
        if a.shape != r.shape:
            raise ValueError(f"layer {l}: shape mismatch {a.shape} vs {r.shape}")
        d = a - r
        total += float(np.sum(d * d))
    return float(np.sqrt(total))


def lambda_energy(report: EnergyReport, lam: float) -> float:
    """Interpolating objective lambda * L + (1 - lambda) * E_tilde.

    lambda = 1 drops the pull toward the feedforward values (inference
    becomes unconstrained target seeking); lambda = 0 drops the output
    drive (activities stay at their initialization).
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return lam * report.output_loss + (1.0 - lam) * report.residual


@dataclass
class ProbeRefs:
    """Reference quantities probes may compare the running state against."""

    mode: "ClampMode | None" = None
    ff: Sequence[np.ndarray] | None = None
    tp: Sequence[np.ndarray] | None = None
    eq: Sequence[np.ndarray] | None = None
    bp_deltas: Sequence[np.ndarray] | None = None


def make_probe(name: str, refs: ProbeRefs | None = None):
    """Resolve a metric by string name into a (name, fn) probe.

    Recognized names:

    - ``F``, ``L``, ``E_tilde``, ``max_abs_eps``
    - ``marginal_residual``
    - ``bound_lhs``, ``bound_rhs``, ``bound_satisfied``
    - ``dist_ff`` / ``dist_tp`` / ``dist_eq`` (free layers, needs refs)
    - ``dist_ff_l{i}`` / ``dist_tp_l{i}`` / ``dist_eq_l{i}`` (single layer)
    - ``cos_eps_bp_l{i}``: cosine between eps_i and the backpropagated
      descent direction -delta_i (needs refs.bp_deltas)
    - ``cos_x_tp_l{i}``: cosine between x_i and its inverse-computed target
    """
    refs = refs or ProbeRefs()

    def need(attr):
        value = getattr(refs, attr)
        if value is None:
            raise ValueError(f"probe {name!r} needs refs.{attr}")
        return value

    if name == "F":
        return name, lambda net, state: energy_report(net, state).total
    if name == "L":
        return name, lambda net, state: energy_report(net, state).output_loss
    if name == "E_tilde":
        return name, lambda net, state: energy_report(net, state).residual
    if name == "max_abs_eps":
        return name, lambda net, state: max(float(np.max(np.abs(e))) for e in state.errors)
    if name == "marginal_residual":
        return name, lambda net, state: marginal_condition_residual(net, state, refs.mode)
    if name in ("bound_lhs", "bound_rhs", "bound_satisfied"):

        def bound_fn(net, state, which=name):
            lhs, rhs = bound_values(net, state, refs.mode)
            if which == "bound_lhs":
                return lhs
            if which == "bound_rhs":
                return rhs
            return 1.0 if lhs <= rhs + 1e-12 else 0.0

        return name, bound_fn

    for prefix, attr in (("dist_ff", "ff"), ("dist_tp", "tp"), ("dist_eq", "eq")):
        if name == prefix:
            ref = need(attr)

            def dist_fn(net, state, ref=ref):
                free = _free_layers(len(state.activities), refs.mode)
                return distance_to_reference(state, ref, free)

            return name, dist_fn
        if name.startswith(prefix + "_l"):
            layer = int(name[len(prefix) + 2 :])
            ref = need(attr)
            return name, lambda net, state, ref=ref, l=layer: distance_to_reference(
                state, ref, [l]
            )

    if name.startswith("cos_eps_bp_l"):
        layer = int(name[len("cos_eps_bp_l") :])
        deltas = need("bp_deltas")
        return name, lambda net, state, l=layer: cosine_similarity(
            state.errors[l - 1], -np.asarray(deltas[l - 1])
        )
    if name.startswith("cos_x_tp_l"):
        layer = int(name[len("cos_x_tp_l") :])
        targets = need("tp")
        return name, lambda net, state, l=layer: cosine_similarity(
            state.activities[l], targets[l]
        )
    raise ValueError(f"unknown probe name {name!r}")
