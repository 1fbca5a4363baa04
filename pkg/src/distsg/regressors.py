"""scikit-learn style wrappers around the network recursions.

The data layout is a panel: ``X`` has shape (steps, n, m), one regressor per
sensor and step, and ``y`` has shape (steps, n). ``fit`` restarts from the
initial estimates; ``partial_fit`` continues the online recursion.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_is_fitted

from ._validation import check_panel, check_step_sizes
from .estimator import (
    AlgorithmParams,
    TrajectoryRecorder,
    default_q,
    init_network,
    network_step,
    standard_sg_network_step,
)
from .exceptions import ValidationError
from .graph import Topology, WeightMatrix, build_metropolis, weight_matrix_from_array


class _NetworkRegressor(RegressorMixin, BaseEstimator):

    def _init_state(self, n, m):
        self.state_ = init_network(n, m, self.theta_hat_0)
        self.n_sensors_, self.n_features_ = n, m
        self._recorder = TrajectoryRecorder(self.state_.theta_hat) if self.record else None

    def fit(self, X, y):
        X, y = check_panel(X, y)
        self._init_state(X.shape[1], X.shape[2])
        return self._consume(X, y)

    def partial_fit(self, X, y):
        if not hasattr(self, "state_"):
            return self.fit(X, y)
        X, y = check_panel(X, y, self.n_sensors_, self.n_features_)
        return self._consume(X, y)

    def _consume(self, X, y):
        step = self._stepper(X.shape[1])
        for phi, obs in zip(X, y):
            self.state_ = step(self.state_, phi, obs)
            if self._recorder is not None:
                self._recorder.append(phi, obs, np.full(obs.shape, np.nan), self.state_)
        self.coef_ = self.state_.theta_hat.copy()
        self.n_steps_ = self.state_.k
        return self

    @property
    def trajectory_(self):
        """Recorded steps as a TrajectoryRecord (noise column is NaN: it is not observed)."""
        if getattr(self, "_recorder", None) is None:
            raise AttributeError("trajectory_ is only available when record=True")
        return self._recorder.record()

    def predict(self, X):
        """Per-sensor predictions ``phi_i^T theta_hat_i`` with the current estimates."""
        check_is_fitted(self, "coef_")
        squeeze = np.asarray(X).ndim == 2
        X = check_panel(X, n=self.n_sensors_, m=self.n_features_)
        pred = np.einsum("kij,ij->ki", X, self.coef_)
        return pred[0] if squeeze else pred

    def score(self, X, y, sample_weight=None):
        # flatten the panel so every (step, sensor) pair is one sample
        X, y = check_panel(X, y, self.n_sensors_, self.n_features_)
        pred = self.predict(X).reshape(-1)
        return r2_score(y.reshape(-1), pred, sample_weight=sample_weight)


class DistributedSGRegressor(_NetworkRegressor):
    """Cooperative SG estimator for a sensor network.

    Parameters
    ----------
    weights : Topology, WeightMatrix or array-like, optional
        Communication graph. A Topology gets Metropolis weights; an array is
        validated as a symmetric stochastic matrix. May be omitted for n = 1.
    mu, nu : float
        Innovation and consensus step sizes, ``mu * (1 + 4 nu) <= 1``.
    Q : int, optional
        Diffusion depth; defaults to the graph diameter (at least 1).
    theta_hat_0 : array-like, optional
        Initial estimates, shape (m,) or (n, m). Zeros by default.
    record : bool
        Keep a TrajectoryRecord of the fitted steps in ``trajectory_``.
    """

    def __init__(self, weights=None, mu=0.25, nu=0.7, Q=None, theta_hat_0=None, record=False):
        self.weights = weights
        self.mu = mu
        self.nu = nu
        self.Q = Q
        self.theta_hat_0 = theta_hat_0
        self.record = record

    def _resolve_weights(self, n):
        w = self.weights
        if w is None:
            if n != 1:
                raise ValidationError("weights are required when there is more than one sensor")
            return build_metropolis(Topology(1))
        if isinstance(w, Topology):
            return build_metropolis(w)
        if isinstance(w, WeightMatrix):
            return w
        return weight_matrix_from_array(w)

    def _stepper(self, n):
        check_step_sizes(self.mu, self.nu)
        w = self._resolve_weights(n)
        if w.n != n:
            raise ValidationError(f"weights are for {w.n} sensors, data has {n}")
        topo = w.topology
        if topo is None:
            rows, cols = np.nonzero(np.triu(w.a > 0, k=1))
            topo = Topology(n, frozenset((int(i) + 1, int(j) + 1) for i, j in zip(rows, cols)))
        Q = default_q(topo) if self.Q is None else self.Q
        params = AlgorithmParams(self.mu, self.nu, Q)
        params.check_graph(topo)
        self.weights_, self.params_ = w, params
        return lambda state, phi, obs: network_step(state, w, params, phi, obs)


class StandardSGRegressor(_NetworkRegressor):
    """Non-cooperative baseline: each sensor runs standard SG on its own data."""

    def __init__(self, mu=0.25, theta_hat_0=None, record=False):
        self.mu = mu
        self.theta_hat_0 = theta_hat_0
        self.record = record

    def _stepper(self, n):
        if not 0 <= self.mu <= 1:
            raise ValidationError(f"mu must lie in [0, 1], got {self.mu}")
        mu = self.mu
        return lambda state, phi, obs: standard_sg_network_step(state, mu, phi, obs)
