"""Multilayer network structure: weights, activations, precisions, forward pass.

Layer convention: activities x_0 .. x_L, where x_0 is the input layer and
x_L the output layer.  Weight matrix ``weights[l-1]`` (shape w_l x w_{l-1})
maps layer l-1 to the pre-activation of layer l, and ``activations[l-1]``
is the elementwise function producing layer l.  There are no bias terms:
they would change the analytic equilibria this package verifies.

Networks are immutable during inference; the trainer mutates weights only
between inference phases.  Instances are therefore safe to share read-only
across workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import DefinitenessError, DomainError, NonInvertibleActivationError

__all__ = [
    "ActivationKind",
    "NetworkSpec",
    "Network",
    "mlp_spec",
    "build_network",
    "activation_apply",
    "activation_derivative",
    "activation_inverse",
    "forward_pass",
    "save_network",
    "load_network",
]

# atanh saturates: inputs are clipped to |v| <= 1 - TANH_INVERSE_BAND before
# inversion so targets in saturated regimes stay bounded.
TANH_INVERSE_BAND = 1e-12


class ActivationKind(Enum):
    LINEAR = "linear"
    TANH = "tanh"
    RELU = "relu"

    @property
    def invertible(self) -> bool:
        return self is not ActivationKind.RELU


def activation_apply(kind: ActivationKind, v: np.ndarray) -> np.ndarray:
    """Elementwise f(v)."""
    v = np.asarray(v, dtype=np.float64)
    if kind is ActivationKind.LINEAR:
        return v.copy()
    if kind is ActivationKind.TANH:
        return np.tanh(v)
    return np.maximum(v, 0.0)


def activation_derivative(kind: ActivationKind, preact: np.ndarray) -> np.ndarray:
    """Elementwise f'(preact).  The ReLU derivative at exactly 0 is 0."""
    preact = np.asarray(preact, dtype=np.float64)
    if kind is ActivationKind.LINEAR:
        return np.ones_like(preact)
    if kind is ActivationKind.TANH:
        y = np.tanh(preact)
        return 1.0 - y * y
    return np.where(preact > 0.0, 1.0, 0.0)


def activation_inverse(kind: ActivationKind, v: np.ndarray) -> np.ndarray:
    """Elementwise f^-1(v) for invertible kinds.

    Tanh inputs must lie strictly inside (-1, 1); values inside the band
    but within TANH_INVERSE_BAND of +-1 are clipped before atanh.
    """
    v = np.asarray(v, dtype=np.float64)
    if kind is ActivationKind.LINEAR:
        return v.copy()
    if kind is ActivationKind.RELU:
        raise NonInvertibleActivationError("relu is not invertible")
    if np.any(np.abs(v) >= 1.0):
        raise DomainError("tanh inverse requires all inputs strictly inside (-1, 1)")
    bound = 1.0 - TANH_INVERSE_BAND
    return np.arctanh(np.clip(v, -bound, bound))


@dataclass(frozen=True)
class NetworkSpec:
    """Construction recipe for a network.

    ``activations`` has one entry per weight layer (len(layer_widths) - 1);
    the last entry is the output activation.
    """

    layer_widths: tuple[int, ...]
    activations: tuple[ActivationKind, ...]
    weight_init_std: float = float(np.sqrt(0.05))
    seed: int = 0

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ValueError("a network needs at least 2 layers")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("all layer widths must be >= 1")
        if len(self.activations) != len(self.layer_widths) - 1:
            raise ValueError(
                f"need {len(self.layer_widths) - 1} activation kinds, "
                f"got {len(self.activations)}"
            )
        if self.weight_init_std < 0:
            raise ValueError("weight_init_std must be >= 0")


def mlp_spec(
    layer_widths,
    hidden: ActivationKind = ActivationKind.TANH,
    output: ActivationKind = ActivationKind.LINEAR,
    weight_init_std: float = float(np.sqrt(0.05)),
    seed: int = 0,
) -> NetworkSpec:
    """Spec with one activation for all hidden layers and one for the output.

    The identity output activation is the default and is configurable.
    """
    widths = tuple(int(w) for w in layer_widths)
    kinds = (hidden,) * (len(widths) - 2) + (output,)
    return NetworkSpec(widths, kinds, weight_init_std=weight_init_std, seed=seed)


@dataclass
class Network:
    """Weights, per-layer activation kinds, and optional precision matrices.

    ``precisions`` is either None (all layers at identity precision, the
    default) or a list of SPD matrices, one per weight layer (precision of
    layer l's prediction error is ``precisions[l-1]``).
    """

    weights: list[np.ndarray]
    activations: list[ActivationKind]
    precisions: list[np.ndarray] | None = None

    def __post_init__(self):
        if not self.weights:
            raise ValueError("network needs at least one weight matrix")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        for a, b in zip(self.weights, self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError(
                    f"weight shape chain broken: {a.shape} feeds {b.shape}"
                )
        if len(self.activations) != len(self.weights):
            raise ValueError("need one activation kind per weight layer")
        if self.precisions is not None:
            self._validate_precisions(self.precisions)

    def _validate_precisions(self, pis: list[np.ndarray]) -> None:
        if len(pis) != len(self.weights):
            raise ValueError("need one precision matrix per weight layer")
        for pi, w in zip(pis, self.weights):
            pi = np.asarray(pi, dtype=np.float64)
            if pi.shape != (w.shape[0], w.shape[0]):
                raise ValueError(
                    f"precision shape {pi.shape} does not match layer width {w.shape[0]}"
                )
            if np.max(np.abs(pi - pi.T)) > 1e-10 * max(1.0, np.max(np.abs(pi))):
                raise DefinitenessError("precision matrix is not symmetric")
            if np.linalg.eigvalsh(pi)[0] <= 0.0:
                raise DefinitenessError("precision matrix is not positive-definite")

    @property
    def num_weight_layers(self) -> int:
        return len(self.weights)

    @property
    def layer_widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def identity_precisions(self) -> bool:
        """True when every precision is exactly the identity (or unset)."""
        if self.precisions is None:
            return True
        return all(
            pi.shape[0] == pi.shape[1] and np.array_equal(pi, np.eye(pi.shape[0]))
            for pi in self.precisions
        )

    def with_precisions(self, precisions: list[np.ndarray] | None) -> "Network":
        """Copy of this network with the given precision matrices attached."""
        pis = None if precisions is None else [np.array(p, dtype=np.float64) for p in precisions]
        return Network([w.copy() for w in self.weights], list(self.activations), pis)

    def copy(self) -> "Network":
        pis = None if self.precisions is None else [p.copy() for p in self.precisions]
        return Network([w.copy() for w in self.weights], list(self.activations), pis)


def build_network(spec: NetworkSpec) -> Network:
    """Sample i.i.d. Gaussian(0, weight_init_std^2) weights from a seeded RNG.

    Precisions default to identity (left unset).  The same spec always
    produces bitwise-identical networks.
    """
    rng = np.random.default_rng(spec.seed)
    weights = [
        rng.normal(0.0, spec.weight_init_std, size=(spec.layer_widths[l + 1], spec.layer_widths[l]))
        for l in range(len(spec.layer_widths) - 1)
    ]
    return Network(weights, list(spec.activations))


def forward_pass(net: Network, x0: np.ndarray) -> list[np.ndarray]:
    """Propagate an input through the network: x_l = f_l(W_l x_{l-1}).

    ``x0`` may be a single vector (w_0,) or a batch (n, w_0); every layer of
    the result has the matching leading shape.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape[-1] != net.layer_widths[0]:
        raise ValueError(
            f"input width {x0.shape[-1]} does not match layer 0 width {net.layer_widths[0]}"
        )
    values = [x0]
    for w, kind in zip(net.weights, net.activations):
        values.append(activation_apply(kind, values[-1] @ w.T))
    return values


# Binary container: magic "PCN1", then little-endian u32 layer count (L+1),
# u32 widths, u8 activation codes (one per weight layer), then row-major
# float64 weight matrices W_1..W_L followed by precision matrices P_1..P_L
# (identity matrices are materialized when precisions are unset).
_MAGIC = b"PCN1"
_ACT_CODES = {ActivationKind.LINEAR: 0, ActivationKind.TANH: 1, ActivationKind.RELU: 2}
_CODE_ACTS = {v: k for k, v in _ACT_CODES.items()}


def save_network(net: Network, path) -> None:
    widths = net.layer_widths
    parts = [_MAGIC, struct.pack("<I", len(widths))]
    parts.append(struct.pack(f"<{len(widths)}I", *widths))
    parts.append(bytes(_ACT_CODES[k] for k in net.activations))
    for w in net.weights:
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
    pis = net.precisions or [np.eye(w.shape[0]) for w in net.weights]
    for pi in pis:
        parts.append(np.ascontiguousarray(pi, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    off = 4
    (n_layers,) = struct.unpack_from("<I", blob, off)
    off += 4
    widths = struct.unpack_from(f"<{n_layers}I", blob, off)
    off += 4 * n_layers
    codes = blob[off : off + n_layers - 1]
    off += n_layers - 1
    kinds = [_CODE_ACTS[c] for c in codes]
    weights = []
    for l in range(n_layers - 1):
        count = widths[l + 1] * widths[l]
        w = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(
            widths[l + 1], widths[l]
        )
        weights.append(w.astype(np.float64))
        off += count * 8
    pis = []
    for l in range(n_layers - 1):
        count = widths[l + 1] * widths[l + 1]
        pi = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(
            widths[l + 1], widths[l + 1]
        )
        pis.append(pi.astype(np.float64))
        off += count * 8
    if off != len(blob):
        raise ValueError("trailing bytes in network file")
    net = Network(weights, kinds)
    if not all(np.array_equal(pi, np.eye(pi.shape[0])) for pi in pis):
        net = net.with_precisions(pis)
    return net
