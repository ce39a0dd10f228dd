"""scikit-learn style regressors over lists of variable-length sequences.

``X`` is a list of arrays of shape ``(m_t, p)`` (or a 3-D array when all
sequences share a length) and ``y`` the matching labels. Training is online:
``partial_fit`` consumes the sequences in order, ``fit`` starts from a fresh
model. ``predict`` scores each sequence from the current state without
updating it.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .data import as_sequences
from .distributed import Graph, load_graph
from .exceptions import DimensionError
from .lstm import as_pooling
from .state_space import LstmStateSpace, NoiseSpec
from .trainers import DekfTrainer, DpfTrainer, EkfTrainer, PfTrainer, SgdTrainer


def check_sequences(X, y=None, p: int | None = None):
    """Validate sequences (and labels); return a list of (m, p) float arrays (and a label array)."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        raise DimensionError("X must be a list of 2-D sequences or a 3-D array, got a 2-D array")
    seqs = as_sequences(list(X), p)
    if y is None:
        return seqs
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != len(seqs):
        raise ValueError(f"got {len(seqs)} sequences but {y.shape[0]} labels")
    if not np.all(np.isfinite(y)):
        raise ValueError("labels must be finite")
    return seqs, y


class _OnlineLSTMRegressor(RegressorMixin, BaseEstimator):
    def _make_trainer(self, model, K, graph=None):
        raise NotImplementedError

    def _n_nodes(self):
        return 1

    def _graph(self):
        return None

    def _start(self, p):
        self.n_features_in_ = p
        self.model_ = LstmStateSpace(self.n_units, p, as_pooling(self.pooling))
        self.trainer_ = self._make_trainer(self.model_, self._n_nodes(), self._graph())
        self.t_ = 0
        self.prequential_errors_ = []

    def fit(self, X, y):
        seqs, y = check_sequences(X, y)
        if not seqs:
            raise ValueError("cannot fit on zero sequences")
        self._start(seqs[0].shape[1])
        return self._consume(seqs, y)

    def partial_fit(self, X, y):
        p = getattr(self, "n_features_in_", None)
        seqs, y = check_sequences(X, y, p)
        if not hasattr(self, "trainer_"):
            if not seqs:
                return self
            self._start(seqs[0].shape[1])
        return self._consume(seqs, y)

    def _consume(self, seqs, y):
        for X, d in zip(seqs, y):
            self.t_ += 1
            d_hat = self.trainer_.step(self.t_, [(X, d)])
            self.prequential_errors_.append(float((d - d_hat[0]) ** 2))
        return self

    def predict(self, X):
        check_is_fitted(self, "trainer_")
        seqs = check_sequences(X, p=self.n_features_in_)
        return np.array([self.trainer_.predict(0, s) for s in seqs])

    @property
    def coef_(self):
        """Current flat LSTM parameter estimate."""
        check_is_fitted(self, "trainer_")
        return self.trainer_.estimate(0)[self.model_.theta_slice]


class SGDLSTMRegressor(_OnlineLSTMRegressor):
    """LSTM regressor trained by plain stochastic gradient descent."""

    def __init__(self, n_units=2, pooling="mean", learning_rate=0.1, init_scale=0.1, random_state=0):
        self.n_units = n_units
        self.pooling = pooling
        self.learning_rate = learning_rate
        self.init_scale = init_scale
        self.random_state = random_state

    def _make_trainer(self, model, K, graph=None):
        return SgdTrainer(model, K, self.random_state, mu=self.learning_rate, init_scale=self.init_scale)


class EKFLSTMRegressor(_OnlineLSTMRegressor):
    """LSTM regressor trained by an extended Kalman filter on the augmented state."""

    def __init__(self, n_units=2, pooling="mean", process_noise=0.0004, measurement_noise=0.01,
                 initial_covariance=None, init_scale=0.1, random_state=0):
        self.n_units = n_units
        self.pooling = pooling
        self.process_noise = process_noise
        self.measurement_noise = measurement_noise
        self.initial_covariance = initial_covariance
        self.init_scale = init_scale
        self.random_state = random_state

    def _sigma0(self):
        return self.process_noise if self.initial_covariance is None else self.initial_covariance

    def _make_trainer(self, model, K, graph=None):
        noise = NoiseSpec.isotropic(model.dim, self.process_noise, self.measurement_noise)
        return EkfTrainer(model, K, self.random_state, noise=noise, sigma0=self._sigma0(),
                          init_scale=self.init_scale)


class PFLSTMRegressor(_OnlineLSTMRegressor):
    """LSTM regressor trained by a bootstrap particle filter."""

    def __init__(self, n_units=2, pooling="mean", n_particles=80, process_noise=0.0004,
                 measurement_noise=0.01, init_scale=0.1, random_state=0):
        self.n_units = n_units
        self.pooling = pooling
        self.n_particles = n_particles
        self.process_noise = process_noise
        self.measurement_noise = measurement_noise
        self.init_scale = init_scale
        self.random_state = random_state

    def _make_trainer(self, model, K, graph=None):
        noise = NoiseSpec.isotropic(model.dim, self.process_noise, self.measurement_noise)
        return PfTrainer(model, K, self.random_state, noise=noise, particles=self.n_particles,
                         init_scale=self.init_scale)


class DistributedLSTMRegressor(_OnlineLSTMRegressor):
    """Simulated network of nodes training one LSTM regressor with DEKF or MCDPF.

    ``fit`` deals the sequences to the nodes round-robin, one per node per
    round; a trailing partial round is dropped. ``predict`` uses the model
    held by ``predict_node``.
    """

    def __init__(self, algorithm="dpf", n_nodes=4, graph="ring", n_units=2, pooling="mean",
                 n_particles=80, n_steps=3, process_noise=0.0004, measurement_noise=0.01,
                 initial_covariance=None, init_scale=0.1, predict_node=0, random_state=0):
        self.algorithm = algorithm
        self.n_nodes = n_nodes
        self.graph = graph
        self.n_units = n_units
        self.pooling = pooling
        self.n_particles = n_particles
        self.n_steps = n_steps
        self.process_noise = process_noise
        self.measurement_noise = measurement_noise
        self.initial_covariance = initial_covariance
        self.init_scale = init_scale
        self.predict_node = predict_node
        self.random_state = random_state

    def _n_nodes(self):
        return self.n_nodes

    def _graph(self):
        if isinstance(self.graph, Graph):
            return self.graph
        builders = {"ring": Graph.ring, "complete": Graph.complete, "path": Graph.path}
        if self.graph in builders:
            return builders[self.graph](self.n_nodes)
        return load_graph(self.graph)

    def _make_trainer(self, model, K, graph=None):
        noise = NoiseSpec.isotropic(model.dim, self.process_noise, self.measurement_noise)
        if self.algorithm == "dekf":
            sigma0 = self.process_noise if self.initial_covariance is None else self.initial_covariance
            return DekfTrainer(model, K, self.random_state, noise=noise, sigma0=sigma0, graph=graph,
                               init_scale=self.init_scale)
        if self.algorithm == "dpf":
            return DpfTrainer(model, K, self.random_state, noise=noise, particles=self.n_particles,
                              steps=self.n_steps, graph=graph, init_scale=self.init_scale)
        raise ValueError(f"algorithm must be 'dekf' or 'dpf', got {self.algorithm!r}")

    def _consume(self, seqs, y):
        K = self.n_nodes
        for start in range(0, len(seqs) - K + 1, K):
            self.t_ += 1
            obs = [(seqs[start + k], y[start + k]) for k in range(K)]
            d_hat = self.trainer_.step(self.t_, obs)
            self.prequential_errors_.extend(float((d - dh) ** 2) for (_, d), dh in zip(obs, d_hat))
        return self

    def predict(self, X):
        check_is_fitted(self, "trainer_")
        seqs = check_sequences(X, p=self.n_features_in_)
        return np.array([self.trainer_.predict(self.predict_node, s) for s in seqs])

    @property
    def coef_(self):
        check_is_fitted(self, "trainer_")
        return self.trainer_.estimate(self.predict_node)[self.model_.theta_slice]
