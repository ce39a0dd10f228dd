"""Multi-node online trainers with a common predict-then-update round.

Each trainer owns the state of all ``K`` nodes. ``step(t, observations)``
first scores every node's incoming sequence with the current model, then
trains on the label, and returns the ``K`` predictions made before the
label was seen.
"""

from __future__ import annotations

import logging

import numpy as np

from .distributed import (
    Graph,
    dekf_predict,
    dekf_update,
    mcdpf_propose,
    mcdpf_update,
    metropolis_weights,
)
from .exceptions import EmptyNodeError
from .filters import (
    EkfState,
    ParticleSet,
    ekf_measurement_update,
    ekf_time_update,
    init_particles,
    pf_estimate,
    pf_predict,
    pf_propose,
    pf_weight_update,
    resample,
)
from .lstm import CellState
from .sgd import SgdState, sgd_predict, sgd_step
from .state_space import LstmStateSpace, NoiseSpec
from .streams import round_streams, substream

logger = logging.getLogger(__name__)

ALGORITHMS = ("sgd", "ekf", "pf", "dekf", "dpf")


class Trainer:
    name = ""
    distributed = False

    def __init__(self, model: LstmStateSpace, K: int, seed: int, *, init_scale: float = 0.1,
                 graph: Graph | None = None):
        self.model = model
        self.K = K
        self.seed = seed
        self.init_scale = init_scale
        self.graph = graph if graph is not None else Graph.isolated(K)
        if self.graph.K != K:
            raise ValueError(f"graph has {self.graph.K} nodes, expected {K}")

    def _init_theta(self, k):
        rng = substream(self.seed, "init", k)
        return rng.uniform(-self.init_scale, self.init_scale, self.model.n_theta)

    def step(self, t: int, observations, map_fn=map) -> np.ndarray:
        raise NotImplementedError

    def predict(self, k: int, X) -> float:
        raise NotImplementedError

    def estimate(self, k: int) -> np.ndarray:
        """Current augmented-state estimate ``[c; ybar; theta]`` at node ``k``."""
        raise NotImplementedError


class SgdTrainer(Trainer):
    name = "sgd"

    def __init__(self, model, K, seed, *, mu: float = 0.1, **kw):
        super().__init__(model, K, seed, **kw)
        n = model.n
        self.states = [SgdState(self._init_theta(k), mu, CellState.zeros(n)) for k in range(K)]

    def predict(self, k, X):
        m = self.model
        return sgd_predict(self.states[k], X, m.n, m.p, m.pooling)

    def step(self, t, observations, map_fn=map):
        m = self.model

        def one(k):
            X, d = observations[k]
            d_hat = sgd_predict(self.states[k], X, m.n, m.p, m.pooling)
            return d_hat, sgd_step(self.states[k], X, d, m.n, m.p, m.pooling)

        out = list(map_fn(one, range(self.K)))
        self.states = [s for _, s in out]
        return np.array([d for d, _ in out])

    def estimate(self, k):
        s = self.states[k]
        return self.model.join(s.carry.c, s.carry.y, s.theta)


class EkfTrainer(Trainer):
    name = "ekf"

    def __init__(self, model, K, seed, *, noise: NoiseSpec, sigma0: float, **kw):
        super().__init__(model, K, seed, **kw)
        self.noise = noise
        cov0 = sigma0 * np.eye(model.dim)
        self.states = [EkfState(model.initial_state(self._init_theta(k)), cov0.copy()) for k in range(K)]

    def predict(self, k, X):
        return self.model.measurement(self.model.transition(self.states[k].a, X))

    def step(self, t, observations, map_fn=map):
        m, noise = self.model, self.noise

        def one(k):
            X, d = observations[k]
            pred = ekf_time_update(self.states[k], X, m, noise)
            return m.measurement(pred.a), ekf_measurement_update(pred, d, noise.R, m)

        out = list(map_fn(one, range(self.K)))
        self.states = [s for _, s in out]
        return np.array([d for d, _ in out])

    def estimate(self, k):
        return self.states[k].a.copy()


class DekfTrainer(EkfTrainer):
    name = "dekf"
    distributed = True

    def __init__(self, model, K, seed, **kw):
        super().__init__(model, K, seed, **kw)
        self.weights = metropolis_weights(self.graph)

    def step(self, t, observations, map_fn=map):
        m = self.model
        Xs = [X for X, _ in observations]
        ds = [d for _, d in observations]
        predicted = dekf_predict(self.states, Xs, m, self.noise, map_fn)
        d_hat = np.array([m.measurement(s.a) for s in predicted])
        self.states = dekf_update(predicted, ds, self.graph, self.weights, self.noise.R, m, map_fn)
        return d_hat


class PfTrainer(Trainer):
    name = "pf"

    def __init__(self, model, K, seed, *, noise: NoiseSpec, particles: int, **kw):
        super().__init__(model, K, seed, **kw)
        self.noise = noise
        self.sets = [
            init_particles(model, particles, substream(seed, "init", k), home=k, scale=self.init_scale)
            for k in range(K)
        ]

    def predict(self, k, X):
        ps = self.sets[k]
        return pf_predict(ParticleSet(self.model.transition_batch(ps.states, X), ps.logw, ps.home), self.model)

    def step(self, t, observations, map_fn=map):
        m, noise = self.model, self.noise
        rng_for = round_streams(self.seed, t)

        def one(k):
            X, d = observations[k]
            prop = pf_propose(self.sets[k], X, m, noise, rng_for("propose", k))
            d_hat = pf_predict(prop, m)
            ps = pf_weight_update(prop, d, noise.R, m)
            return d_hat, resample(ps, rng_for("resample", k))

        out = list(map_fn(one, range(self.K)))
        self.sets = [s for _, s in out]
        return np.array([d for d, _ in out])

    def estimate(self, k):
        return pf_estimate(self.sets[k])


class DpfTrainer(PfTrainer):
    name = "dpf"
    distributed = True

    def __init__(self, model, K, seed, *, steps: int = 3, **kw):
        super().__init__(model, K, seed, **kw)
        self.steps = steps
        self.estimates = [pf_estimate(ps) for ps in self.sets]
        self.visits = None

    def predict(self, k, X):
        if len(self.sets[k]) == 0:
            return self.model.measurement(self.model.transition(self.estimates[k], X))
        return super().predict(k, X)

    def step(self, t, observations, map_fn=map):
        m = self.model
        rng_for = round_streams(self.seed, t)
        Xs = [X for X, _ in observations]
        proposal = mcdpf_propose(self.sets, Xs, m, self.noise, rng_for, map_fn)
        d_hat = np.empty(self.K)
        for k in range(self.K):
            try:
                d_hat[k] = proposal.predict(k, m)
            except EmptyNodeError:
                # no resident particles: fall back to the node's last estimate
                d_hat[k] = m.measurement(m.transition(self.estimates[k], Xs[k]))
        self.sets, estimates, self.visits = mcdpf_update(
            proposal, observations, self.graph, self.steps, m, self.noise.R, rng_for
        )
        for k, est in enumerate(estimates):
            if est is None:
                logger.warning("round %d: node %d holds no particles; keeping its previous estimate", t, k)
            else:
                self.estimates[k] = est
        return d_hat

    def estimate(self, k):
        return self.estimates[k].copy()


TRAINERS = {cls.name: cls for cls in (SgdTrainer, EkfTrainer, PfTrainer, DekfTrainer, DpfTrainer)}
