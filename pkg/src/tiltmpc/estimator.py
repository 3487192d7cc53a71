"""Scikit-learn estimator facade over the residual-dynamics trainer.

Only the learning surface speaks this protocol: features are the 16-entry
network input vectors, targets the 3-vector acceleration residuals. The
control side keeps its own functional API; wrapping the solver or the
plant in estimator semantics would fit nothing.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .network import N_IN, forward
from .params import PhysicalParams
from .training import Dataset, TrainConfig, train


class ResidualDynamicsRegressor(RegressorMixin, BaseEstimator):
    """MLP residual-acceleration model trained with the energy-regularized loss.

    Parameters mirror TrainConfig; `step_dt` is the discretization interval
    the energy term integrates over (labels from logs are built at the same
    spacing). `physical_params` defaults to the shipped platform constants.

    Attributes set by fit: `net_` (trained MlpParams), `curve_` (per-epoch
    mean loss breakdown over the train split), `n_features_in_`.
    """

    def __init__(self, lambda_e=1e3, epochs=130, batch_size=64, seed=0,
                 weight_decay=1e-3, energy_variant="relu", val_fraction=0.1,
                 step_dt=0.1, physical_params=None):
        self.lambda_e = lambda_e
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.weight_decay = weight_decay
        self.energy_variant = energy_variant
        self.val_fraction = val_fraction
        self.step_dt = step_dt
        self.physical_params = physical_params

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        if X.shape[1] != N_IN:
            raise ValueError(f"expected {N_IN} features, got {X.shape[1]}")
        if y.ndim != 2 or y.shape[1] != 3:
            raise ValueError("targets must be residual accelerations of shape (n, 3)")
        dataset = Dataset(xi=X, labels=y, dt=np.full(X.shape[0], self.step_dt))
        cfg = TrainConfig(
            lambda_e=self.lambda_e,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            weight_decay=self.weight_decay,
            energy_variant=self.energy_variant,
            val_fraction=self.val_fraction,
        )
        params = self.physical_params if self.physical_params is not None else PhysicalParams()
        result = train(dataset, cfg, params)
        self.net_ = result.net
        self.curve_ = result.curve
        self.n_features_in_ = N_IN
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return forward(self.net_, X)
