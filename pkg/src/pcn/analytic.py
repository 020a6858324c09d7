"""Closed-form equilibrium oracles for linear networks.

For linear predictions the stationarity conditions of the activity
dynamics can be solved exactly:

    x*_l = (I + W_{l+1}' W_{l+1})^-1 [ W_l x*_{l-1} + W_{l+1}' x*_{l+1} ]

with a precision-weighted generalization, a whole-network block solver,
the closed-form single-layer trajectory, and a convexity certificate
(the per-layer curvature I + W'W never dips below the identity).

Pure functions; freely concurrent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NonConvergenceError
from .linalg import matrix_exponential, solve_spd
from .network import ActivationKind, Network

__all__ = [
    "EquilibriumSolution",
    "linear_equilibrium_layer",
    "precision_equilibrium_layer",
    "solve_linear_network_equilibrium",
    "path_to_convergence",
    "convexity_certificate",
]


@dataclass
class EquilibriumSolution:
    """Equilibrium activities plus the residual of the stationarity system."""

    activities: list[np.ndarray]
    residual: float
    method: str


def linear_equilibrium_layer(W_l, W_lp1, x_below, x_above) -> np.ndarray:
    """Equilibrium of one linear layer given fixed neighbors.

    Evaluates (I + W_{l+1}'W_{l+1})^-1 [W_l x_below + W_{l+1}' x_above]
    through an SPD solve (the prefactor is an identity-shifted Gram matrix,
    always SPD).
    """
    W_l = np.asarray(W_l, dtype=np.float64)
    W_lp1 = np.asarray(W_lp1, dtype=np.float64)
    a = np.eye(W_lp1.shape[1]) + W_lp1.T @ W_lp1
    b = W_l @ np.asarray(x_below, dtype=np.float64) + W_lp1.T @ np.asarray(
        x_above, dtype=np.float64
    )
    return solve_spd(a, b)


def precision_equilibrium_layer(W_l, W_lp1, Pi_l, Pi_lp1, x_below, x_above) -> np.ndarray:
    """Precision-weighted layer equilibrium.

    Evaluates (I + Pi_l^-1 W'Pi' W)^-1 [W_l x_below + Pi_l^-1 W'Pi' x_above]
    where W = W_{l+1}, Pi' = Pi_{l+1}.  The prefactor is similar to an SPD
    matrix but not symmetric, so a general LU solve is used; a singular
    prefactor (impossible for SPD precisions) raises.  Reduces to
    :func:`linear_equilibrium_layer` when both precisions are the identity.
    """
    W_l = np.asarray(W_l, dtype=np.float64)
    W_lp1 = np.asarray(W_lp1, dtype=np.float64)
    Pi_l = np.asarray(Pi_l, dtype=np.float64)
    Pi_lp1 = np.asarray(Pi_lp1, dtype=np.float64)
    feedback = np.linalg.solve(Pi_l, W_lp1.T @ Pi_lp1)
    m = np.eye(W_lp1.shape[1]) + feedback @ W_lp1
    rhs = W_l @ np.asarray(x_below, dtype=np.float64) + feedback @ np.asarray(
        x_above, dtype=np.float64
    )
    try:
        return np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise NonConvergenceError(f"singular equilibrium prefactor: {exc}") from exc


def _layer_precisions(net: Network) -> list[np.ndarray]:
    if net.precisions is not None:
        return net.precisions
    return [np.eye(w.shape[0]) for w in net.weights]


def _check_linear(net: Network) -> None:
    if any(kind is not ActivationKind.LINEAR for kind in net.activations):
        raise ValueError("analytic equilibria require a fully linear network")


def _stationarity_residual(net: Network, acts: list[np.ndarray]) -> float:
    """Sup-norm of Pi_l eps_l - W_{l+1}' Pi_{l+1} eps_{l+1} over hidden layers."""
    pis = _layer_precisions(net)
    eps = [acts[l + 1] - w @ acts[l] for l, w in enumerate(net.weights)]
    worst = 0.0
    for l in range(1, len(acts) - 1):
        r = pis[l - 1] @ eps[l - 1] - net.weights[l].T @ (pis[l] @ eps[l])
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


def solve_linear_network_equilibrium(
    net: Network, data, target, method: str = "direct", max_sweeps: int = 200_000
) -> EquilibriumSolution:
    """Equilibrium of all hidden layers of a linear net, both ends clamped.

    ``direct`` assembles the block-tridiagonal stationarity system over the
    stacked hidden activities (it is the SPD curvature of the energy) and
    solves it at once; ``gauss_seidel`` sweeps the layer formula until the
    sup-norm change drops below 1e-12.  Honors network precisions.
    """
    _check_linear(net)
    data = np.asarray(data, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    widths = net.layer_widths
    L = net.num_weight_layers
    if L < 2:
        raise ValueError("need at least one hidden layer")
    pis = _layer_precisions(net)

    if method == "direct":
        hidden = list(range(1, L))
        sizes = [widths[l] for l in hidden]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        dim = int(offsets[-1])
        A = np.zeros((dim, dim))
        b = np.zeros(dim)
        for i, l in enumerate(hidden):
            sl = slice(offsets[i], offsets[i + 1])
            A[sl, sl] = pis[l - 1] + net.weights[l].T @ pis[l] @ net.weights[l]
            if i > 0:
                sl_prev = slice(offsets[i - 1], offsets[i])
                A[sl, sl_prev] = -pis[l - 1] @ net.weights[l - 1]
                A[sl_prev, sl] = -net.weights[l - 1].T @ pis[l - 1]
            if l == 1:
                b[sl] += pis[0] @ (net.weights[0] @ data)
            if l == L - 1:
                b[sl] += net.weights[L - 1].T @ (pis[L - 1] @ target)
        x = solve_spd(A, b)
        acts = [data] + [x[offsets[i] : offsets[i + 1]] for i in range(len(hidden))] + [target]
        return EquilibriumSolution(acts, _stationarity_residual(net, acts), "direct")

    if method == "gauss_seidel":
        acts = [data] + [np.zeros(widths[l]) for l in range(1, L)] + [target]
        identity = net.identity_precisions()
        for _ in range(max_sweeps):
            change = 0.0
            for l in range(1, L):
                if identity:
                    new = linear_equilibrium_layer(
                        net.weights[l - 1], net.weights[l], acts[l - 1], acts[l + 1]
                    )
                else:
                    new = precision_equilibrium_layer(
                        net.weights[l - 1],
                        net.weights[l],
                        pis[l - 1],
                        pis[l],
                        acts[l - 1],
                        acts[l + 1],
                    )
                change = max(change, float(np.max(np.abs(new - acts[l]))))
                acts[l] = new
            if change < 1e-12:
                return EquilibriumSolution(
                    acts, _stationarity_residual(net, acts), "gauss_seidel"
                )
        raise NonConvergenceError(f"gauss_seidel did not converge in {max_sweeps} sweeps")

    raise ValueError(f"unknown method {method!r}")


def path_to_convergence(W_l, W_lp1, x_below, x_above, x0, t: float) -> np.ndarray:
    """Closed-form trajectory of one linear layer with fixed neighbors.

    Solves x' = -(A x - b) with A = I + W_{l+1}'W_{l+1} and
    b = W_l x_below + W_{l+1}' x_above:

        x(t) = exp(-A t) x0 + (I - exp(-A t)) A^-1 b.

    The decaying sign is forced by the convex energy: A is SPD, so the
    descent dynamics relax exponentially onto the layer equilibrium.
    """
    W_l = np.asarray(W_l, dtype=np.float64)
    W_lp1 = np.asarray(W_lp1, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    a = np.eye(W_lp1.shape[1]) + W_lp1.T @ W_lp1
    b = W_l @ np.asarray(x_below, dtype=np.float64) + W_lp1.T @ np.asarray(
        x_above, dtype=np.float64
    )
    decay = matrix_exponential(-a, t)
    fixed = solve_spd(a, b)
    return decay @ x0 + fixed - decay @ fixed


def convexity_certificate(net: Network) -> tuple[list[float], bool]:
    """Per-hidden-layer minimum eigenvalue of I + W_{l+1}'W_{l+1}.

    The shifted Gram structure guarantees every eigenvalue is >= 1, so the
    energy is convex in each layer's activities; ``convex`` is the check
    against 1 - 1e-9.
    """
    _check_linear(net)
    min_eigs = []
    for l in range(1, net.num_weight_layers):
        w = net.weights[l]
        h = np.eye(w.shape[1]) + w.T @ w
        min_eigs.append(float(np.linalg.eigvalsh(h)[0]))
    convex = all(e >= 1.0 - 1e-9 for e in min_eigs)
    return min_eigs, convex
