"""Prospective-configuration inference: relaxing activities to equilibrium.

The activity dynamics perform explicit-Euler descent on the squared-error
energy F = sum_l ||eps_l||^2 (precision-weighted: sum_l eps_l' Pi_l eps_l),
with eps_l = x_l - f(W_l x_{l-1}).  The per-step update direction is the
conventional half-gradient

    d_l = -eps_l + (eps_{l+1} * f'(W_{l+1} x_l)) W_{l+1}

so step sizes match the usual convention; :func:`activity_gradient` returns
the exact gradient of the reported energy (twice the negated direction).

All stepping functions accept either single-sample states (vectors per
layer) or batched states (rows are independent samples); the math is
identical row-wise.  Updates are synchronous: every layer's direction is
computed from the pre-step state, then applied simultaneously.

A run owns its state: independent (network, seed) runs may execute
concurrently, but a single run is single-threaded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .exceptions import DivergenceError
from .metrics import activity_gradient, energy_term_gradients
from .network import Network, activation_apply, activation_derivative, forward_pass

__all__ = [
    "ClampMode",
    "InitMode",
    "InferenceSettings",
    "ActivityState",
    "InferenceTrace",
    "init_activities",
    "compute_errors",
    "activity_step",
    "precision_activity_step",
    "run_inference",
    "activity_gradient",
    "energy_term_gradients",
    "trace_to_csv",
]


@dataclass(frozen=True)
class ClampMode:
    """Which end layers are clamped, and to what values.

    ``data``/``target`` may be single vectors or (n, width) batches; both
    ends of a batched mode must agree on n.
    """

    input_clamped: bool
    output_clamped: bool
    data: np.ndarray | None = None
    target: np.ndarray | None = None

    def __post_init__(self):
        if self.input_clamped and self.data is None:
            raise ValueError("input_clamped requires a data vector")
        if self.output_clamped and self.target is None:
            raise ValueError("output_clamped requires a target vector")
        for name in ("data", "target"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=np.float64))
        if self.data is not None and self.target is not None:
            if self.data.ndim != self.target.ndim or (
                self.data.ndim == 2 and self.data.shape[0] != self.target.shape[0]
            ):
                raise ValueError(
                    f"data/target batch shapes disagree: {self.data.shape} vs {self.target.shape}"
                )

    @staticmethod
    def both(data, target) -> "ClampMode":
        """Training mode: input fixed to data, output fixed to the target."""
        return ClampMode(True, True, data, target)

    @staticmethod
    def input_only(data) -> "ClampMode":
        """Testing mode: output free to relax to the feedforward prediction."""
        return ClampMode(True, False, data, None)

    @staticmethod
    def output_only(target) -> "ClampMode":
        """Input-unconstrained mode: every layer below the output is free."""
        return ClampMode(False, True, None, target)

    def is_clamped(self, layer: int, top: int) -> bool:
        if layer == 0:
            return self.input_clamped
        if layer == top:
            return self.output_clamped
        return False


@dataclass(frozen=True)
class InitMode:
    """How free activities are initialized before stepping."""

    kind: str
    std: float = 1.0
    seed: int = 0

    @staticmethod
    def feedforward() -> "InitMode":
        return InitMode("feedforward")

    @staticmethod
    def random(std: float = 1.0, seed: int = 0) -> "InitMode":
        return InitMode("random", std=std, seed=seed)

    @staticmethod
    def zero() -> "InitMode":
        return InitMode("zero")


@dataclass(frozen=True)
class InferenceSettings:
    """Euler step size, iteration budget, and stopping rule.

    Convergence is declared when the sup-norm of the update direction
    (per-step activity change divided by step_size) falls below
    ``convergence_tol``.  ``lambda_weight`` switches to the interpolating
    objective: direct error terms are scaled by (1 - lambda) and feedback
    terms by lambda, so 0 freezes the activities at their initialization
    and 1 removes the pull toward the feedforward values entirely.
    """

    step_size: float = 0.05
    max_steps: int = 100
    convergence_tol: float = 1e-8
    init: InitMode = field(default_factory=InitMode.feedforward)
    record_activities: bool = False
    lambda_weight: float | None = None
    record_every: int = 1

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.lambda_weight is not None and not 0.0 <= self.lambda_weight <= 1.0:
            raise ValueError("lambda_weight must lie in [0, 1]")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class ActivityState:
    """Per-layer activities x_0..x_L and fresh prediction errors eps_1..eps_L."""

    activities: list[np.ndarray]
    errors: list[np.ndarray]

    def copy(self) -> "ActivityState":
        return ActivityState([a.copy() for a in self.activities], [e.copy() for e in self.errors])


@dataclass
class InferenceTrace:
    """Per-step record of energies and requested probe values."""

    steps: list[int] = field(default_factory=list)
    energies: list[metrics.EnergyReport] = field(default_factory=list)
    probe_values: dict[str, list[float]] = field(default_factory=dict)
    activities: list[list[np.ndarray]] | None = None
    converged: bool = False
    steps_taken: int = 0


def compute_errors(net: Network, activities: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Fresh prediction errors eps_l = x_l - f(W_l x_{l-1})."""
    errors = []
    for l, (w, kind) in enumerate(zip(net.weights, net.activations), start=1):
        pred = activation_apply(kind, activities[l - 1] @ w.T)
        errors.append(activities[l] - pred)
    return errors


def _batch_shape(net: Network, mode: ClampMode) -> tuple:
    for v in (mode.data, mode.target):
        if v is not None and v.ndim == 2:
            return (v.shape[0],)
    return ()


def init_activities(net: Network, mode: ClampMode, init: InitMode) -> ActivityState:
    """Build a starting state honoring the clamps.

    Feedforward init rolls the data (which must be supplied, clamped or
    not) through the network, then overwrites the output with the target
    when it is clamped.  Random init draws Gaussian(0, std^2) activities
    from a seeded generator.
    """
    widths = net.layer_widths
    top = len(widths) - 1
    lead = _batch_shape(net, mode)
    if mode.data is not None and mode.data.shape[-1] != widths[0]:
        raise ValueError(f"data width {mode.data.shape[-1]} != input width {widths[0]}")
    if mode.target is not None and mode.target.shape[-1] != widths[-1]:
        raise ValueError(f"target width {mode.target.shape[-1]} != output width {widths[-1]}")

    if init.kind == "feedforward":
        if mode.data is None:
            raise ValueError("feedforward init requires a data vector")
        acts = forward_pass(net, mode.data)
    elif init.kind == "random":
        rng = np.random.default_rng(init.seed)
        acts = [rng.normal(0.0, init.std, size=lead + (w,)) for w in widths]
    elif init.kind == "zero":
        acts = [np.zeros(lead + (w,)) for w in widths]
    else:
        raise ValueError(f"unknown init kind {init.kind!r}")

    if mode.input_clamped:
        acts[0] = mode.data.copy()
    if mode.output_clamped:
        acts[top] = mode.target.copy()
    return ActivityState(acts, compute_errors(net, acts))


def _directions(
    net: Network,
    state: ActivityState,
    mode: ClampMode,
    *,
    precision_weighted: bool,
    lam: float | None = None,
    pres: list[np.ndarray] | None = None,
) -> list[np.ndarray | None]:
    """Per-layer update directions (None at clamped layers).

    Layer 0 has no generative prediction onto it, so when free it moves on
    the feedback term alone; the top layer, when free, moves on its own
    error alone.
    """
    top = net.num_weight_layers
    if pres is None:
        pres = metrics._preactivations(net, state.activities)
    eff = (
        metrics._weighted_errors(net, state.errors)
        if precision_weighted
        else list(state.errors)
    )
    w_direct = 1.0 if lam is None else 1.0 - lam
    w_feedback = 1.0 if lam is None else lam

    dirs: list[np.ndarray | None] = []
    for l in range(top + 1):
        if mode.is_clamped(l, top):
            dirs.append(None)
            continue
        d = None
        if l >= 1:
            d = -w_direct * eff[l - 1]
        if l <= top - 1:
            fprime = activation_derivative(net.activations[l], pres[l])
            feedback = w_feedback * ((eff[l] * fprime) @ net.weights[l])
            d = feedback if d is None else d + feedback
        dirs.append(d)
    return dirs


def _apply(net, state, mode, dirs, step_size) -> ActivityState:
    acts = [
        a if d is None else a + step_size * d
        for a, d in zip(state.activities, dirs)
    ]
    return ActivityState(acts, compute_errors(net, acts))


def _apply_cached(net, state, dirs, step_size, pres) -> tuple[ActivityState, list[np.ndarray]]:
    """Step and refresh errors, recomputing only the pre-activations whose
    source layer moved (a clamped input keeps its prediction cached, which
    is the dominant cost for wide-input training phases)."""
    acts = list(state.activities)
    moved = [False] * len(acts)
    for l, d in enumerate(dirs):
        if d is not None:
            acts[l] = acts[l] + step_size * d
            moved[l] = True
    new_pres = [
        acts[l] @ net.weights[l].T if moved[l] else pres[l]
        for l in range(net.num_weight_layers)
    ]
    errors = [
        acts[l + 1] - activation_apply(kind, new_pres[l])
        for l, kind in enumerate(net.activations)
    ]
    return ActivityState(acts, errors), new_pres


def activity_step(net: Network, state: ActivityState, mode: ClampMode, step_size: float) -> ActivityState:
    """One synchronous Euler step of the plain (identity-precision) dynamics."""
    dirs = _directions(net, state, mode, precision_weighted=False)
    return _apply(net, state, mode, dirs, step_size)


def precision_activity_step(
    net: Network, state: ActivityState, mode: ClampMode, step_size: float
) -> ActivityState:
    """One Euler step of the precision-weighted dynamics.

    Every error enters as Pi_l eps_l; with identity precisions this reduces
    exactly to :func:`activity_step`.
    """
    dirs = _directions(net, state, mode, precision_weighted=True)
    return _apply(net, state, mode, dirs, step_size)


def _sup_direction(dirs) -> float:
    # max(abs(...)) propagates NaN, so this doubles as the divergence probe
    vals = [float(np.max(np.abs(d))) for d in dirs if d is not None and d.size]
    if not vals:
        return 0.0
    return float(np.max(vals))


def run_inference(
    net: Network,
    mode: ClampMode,
    settings: InferenceSettings,
    probes: Sequence[tuple[str, Callable[[Network, ActivityState], float]]] = (),
) -> tuple[ActivityState, InferenceTrace]:
    """Iterate activity steps until the update direction is below tolerance.

    Uses the precision-weighted step whenever the network carries
    non-identity precisions (the two paths coincide bitwise at identity).
    Raises :class:`DivergenceError` naming the step index if activities
    stop being finite.
    """
    lam = settings.lambda_weight
    precision_weighted = not net.identity_precisions()
    if lam is not None and precision_weighted:
        raise ValueError("lambda-weighted inference requires identity precisions")

    state = init_activities(net, mode, settings.init)
    trace = InferenceTrace(activities=[] if settings.record_activities else None)
    for name, _ in probes:
        trace.probe_values[name] = []

    def record(step: int) -> None:
        trace.steps.append(step)
        trace.energies.append(metrics.energy_report(net, state))
        for name, fn in probes:
            trace.probe_values[name].append(float(fn(net, state)))
        if trace.activities is not None:
            trace.activities.append([a.copy() for a in state.activities])

    record(0)
    converged = False
    steps_taken = 0
    pres = metrics._preactivations(net, state.activities)
    for k in range(settings.max_steps):
        dirs = _directions(
            net, state, mode, precision_weighted=precision_weighted, lam=lam, pres=pres
        )
        # a NaN/Inf anywhere surfaces in the sup-norm, so one scalar check
        # guards the whole state
        sup = _sup_direction(dirs)
        if not np.isfinite(sup):
            raise DivergenceError(k)
        if sup < settings.convergence_tol:
            converged = True
            break
        state, pres = _apply_cached(net, state, dirs, settings.step_size, pres)
        steps_taken = k + 1
        if steps_taken % settings.record_every == 0 or steps_taken == settings.max_steps:
            record(steps_taken)
    else:
        dirs = _directions(
            net, state, mode, precision_weighted=precision_weighted, lam=lam, pres=pres
        )
        converged = _sup_direction(dirs) < settings.convergence_tol

    if trace.steps[-1] != steps_taken:
        record(steps_taken)
    trace.converged = converged
    trace.steps_taken = steps_taken
    return state, trace


def trace_to_csv(trace: InferenceTrace, path) -> None:
    """Write the trace as CSV: step, F, L, E_tilde, then one probe column each."""
    names = list(trace.probe_values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "F", "L", "E_tilde", *names])
        for i, step in enumerate(trace.steps):
            rep = trace.energies[i]
            row = [step, repr(float(rep.total)), repr(float(rep.output_loss)), repr(float(rep.residual))]
            row += [repr(float(trace.probe_values[n][i])) for n in names]
            writer.writerow(row)
