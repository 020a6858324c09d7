"""scikit-learn style estimators wrapping the trainers.

``PCClassifier`` / ``PCRegressor`` expose the EM trainer (or the backprop
baseline, via ``algorithm="bp"``) through the familiar fit/predict/score
surface with ``get_params``/``set_params`` support, so the engine composes
with pipelines, grid search, and cross-validation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import baselines, learning
from .data import Dataset
from .inference import InferenceSettings, InitMode
from .network import ActivationKind, Network, forward_pass

__all__ = ["PCClassifier", "PCRegressor"]

_KINDS = {k.value: k for k in ActivationKind}


class _PCBase(BaseEstimator):
    def __init__(
        self,
        hidden_layers=(32,),
        activation="tanh",
        output_activation="linear",
        algorithm="pc",
        weight_lr=1e-3,
        momentum=0.9,
        nesterov=True,
        epochs=50,
        batch_size=32,
        inference_lr=0.1,
        inference_steps=30,
        weight_init_std=None,
        random_state=0,
    ):
        self.hidden_layers = hidden_layers
        self.activation = activation
        self.output_activation = output_activation
        self.algorithm = algorithm
        self.weight_lr = weight_lr
        self.momentum = momentum
        self.nesterov = nesterov
        self.epochs = epochs
        self.batch_size = batch_size
        self.inference_lr = inference_lr
        self.inference_steps = inference_steps
        self.weight_init_std = weight_init_std
        self.random_state = random_state

    def _settings(self) -> learning.TrainSettings:
        return learning.TrainSettings(
            weight_lr=self.weight_lr,
            epochs=self.epochs,
            momentum=self.momentum,
            nesterov=self.nesterov,
            batch_size=self.batch_size,
            inference=InferenceSettings(
                step_size=self.inference_lr,
                max_steps=self.inference_steps,
                init=InitMode.feedforward(),
            ),
            record_gradient_similarity=False,
            shuffle_seed=self.random_state,
        )

    def _build_network(self, widths):
        """Fan-in-scaled Gaussian init by default; a float fixes one std."""
        kinds = [_KINDS[self.activation]] * (len(widths) - 2) + [_KINDS[self.output_activation]]
        rng = np.random.default_rng(self.random_state)
        weights = []
        for l in range(len(widths) - 1):
            std = (
                float(np.sqrt(2.0 / widths[l]))
                if self.weight_init_std is None
                else self.weight_init_std
            )
            weights.append(rng.normal(0.0, std, size=(widths[l + 1], widths[l])))
        return Network(weights, kinds)

    def _fit_targets(self, X, Y):
        if self.algorithm not in ("pc", "bp"):
            raise ValueError(f"algorithm must be 'pc' or 'bp', got {self.algorithm!r}")
        widths = [X.shape[1], *map(int, self.hidden_layers), Y.shape[1]]
        net = self._build_network(widths)
        ds = Dataset(X, Y, "fit")
        trainer = learning.train if self.algorithm == "pc" else baselines.bp_train
        self.network_, self.record_ = trainer(net, ds, self._settings())
        self.n_features_in_ = X.shape[1]
        return self

    def _raw_output(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return forward_pass(self.network_, X)[-1]


class PCClassifier(_PCBase, ClassifierMixin):
    """Classifier trained by relaxation-then-consolidation (or backprop).

    Targets are one-hot encoded and fit with the squared-error loss;
    prediction takes the argmax output unit.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        Y = np.zeros((X.shape[0], len(self.classes_)))
        Y[np.arange(X.shape[0]), encoded] = 1.0
        return self._fit_targets(X, Y)

    def decision_function(self, X):
        return self._raw_output(X)

    def predict(self, X):
        out = self._raw_output(X)
        return self.classes_[np.argmax(out, axis=-1)]


class PCRegressor(_PCBase, RegressorMixin):
    """Vector-output regressor trained with the squared-error loss."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True)
        Y = y.reshape(-1, 1) if y.ndim == 1 else y
        self._single_output = y.ndim == 1
        return self._fit_targets(X, Y)

    def predict(self, X):
        out = self._raw_output(X)
        return out[:, 0] if self._single_output else out
