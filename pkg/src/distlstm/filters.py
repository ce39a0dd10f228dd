"""Single-node trainers: extended Kalman filter and bootstrap particle filter.

Both operate on any model exposing ``transition``/``measurement`` (and, for
the EKF, their Jacobians), so linear test doubles can stand in for
:class:`~distlstm.state_space.LstmStateSpace`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .exceptions import CovarianceError, DegenerateLikelihoodError, EmptyNodeError

LOG_2PI = np.log(2.0 * np.pi)


# -- EKF ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EkfState:
    a: np.ndarray
    cov: np.ndarray


def _symmetrize(M):
    return 0.5 * (M + M.T)


def ekf_time_update(state: EkfState, X, model, noise) -> EkfState:
    """Propagate the mean through the model and the covariance through its Jacobian.

    The Jacobian is taken at the incoming (posterior) mean.
    """
    F = model.transition_jacobian(state.a, X)
    a = model.transition(state.a, X)
    cov = _symmetrize(F @ state.cov @ F.T + noise.Q)
    return EkfState(a, cov)


def _scalar_update(a, cov, H, innovation, R):
    PH = cov @ H
    r = float(H @ PH) + R
    if not r > 0:
        raise CovarianceError(f"innovation variance {r!r} is not positive")
    a = a + PH * (innovation / r)
    cov = _symmetrize(cov - np.outer(PH, PH) / r)
    return a, cov


def ekf_measurement_update(state: EkfState, d: float, R: float, model) -> EkfState:
    if not R > 0:
        raise CovarianceError("measurement variance R must be positive")
    H = model.measurement_jacobian(state.a)
    innovation = d - model.measurement(state.a)
    a, cov = _scalar_update(state.a, state.cov, H, innovation, R)
    return EkfState(a, cov)


# -- particle filter ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParticleSet:
    """Struct-of-arrays particle set: states (N, D), log-weights (N,), home nodes (N,)."""

    states: np.ndarray
    logw: np.ndarray
    home: np.ndarray

    @classmethod
    def uniform(cls, states, home: int = 0) -> "ParticleSet":
        states = np.asarray(states, dtype=float)
        N = states.shape[0]
        logw = np.full(N, -np.log(N)) if N else np.zeros(0)
        return cls(states, logw, np.full(N, home, dtype=int))

    def __len__(self):
        return self.states.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.logw)


def init_particles(model, N: int, rng: np.random.Generator, home: int = 0, scale: float = 0.1):
    """Prior draw: zero cell state, parameters uniform on ``[-scale, scale)``."""
    states = np.zeros((N, model.dim))
    states[:, model.theta_slice] = rng.uniform(-scale, scale, (N, model.n_theta))
    return ParticleSet.uniform(states, home)


def pf_propose(particles: ParticleSet, X, model, noise, rng) -> ParticleSet:
    """Sample from the transition prior; weights are unchanged."""
    gamma = noise.sample(rng, len(particles))
    states = model.transition_batch(particles.states, X) + gamma
    return replace(particles, states=states)


def gaussian_loglik(d: float, pred, R: float) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    return -0.5 * (LOG_2PI + np.log(R) + (d - pred) ** 2 / R)


def normalize(logw) -> np.ndarray:
    """Normalise log-weights so their exponentials sum to one."""
    logw = np.asarray(logw, dtype=float)
    if logw.size == 0:
        raise EmptyNodeError("cannot normalise an empty particle set")
    top = logw.max()
    if not np.isfinite(top):
        raise DegenerateLikelihoodError("degenerate likelihood: all particle weights vanished")
    # shift first: at large magnitudes logsumexp's own rounding leaks into the weights
    shifted = logw - top
    return shifted - logsumexp(shifted)


def pf_weight_update(particles: ParticleSet, d: float, R: float, model) -> ParticleSet:
    if not R > 0:
        raise CovarianceError("measurement variance R must be positive")
    loglik = gaussian_loglik(d, model.measurement_batch(particles.states), R)
    return replace(particles, logw=normalize(particles.logw + loglik))


def systematic_indices(weights, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Systematic resampling: one uniform offset, ``size`` evenly spaced pointers."""
    weights = np.asarray(weights, dtype=float)
    N = weights.size if size is None else size
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    positions = (rng.uniform() + np.arange(N)) / N
    return np.searchsorted(cdf, positions, side="right")


def resample(particles: ParticleSet, rng, tol: float = 1e-9) -> ParticleSet:
    w = particles.weights
    if len(particles) == 0:
        raise EmptyNodeError("cannot resample an empty particle set")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"weights are not normalised (sum={w.sum()!r})")
    idx = systematic_indices(w, rng)
    N = len(particles)
    return ParticleSet(particles.states[idx], np.full(N, -np.log(N)), particles.home[idx])


def pf_estimate(particles: ParticleSet) -> np.ndarray:
    if len(particles) == 0:
        raise EmptyNodeError("cannot estimate from an empty particle set")
    if np.all(particles.logw == particles.logw[0]):
        return particles.states.mean(axis=0)
    return particles.weights @ particles.states


def pf_predict(particles: ParticleSet, model) -> float:
    """Posterior-predictive mean of the label, ``sum_i w_i * d_hat(a_i)``."""
    if len(particles) == 0:
        raise EmptyNodeError("cannot predict from an empty particle set")
    preds = model.measurement_batch(particles.states)
    if np.all(particles.logw == particles.logw[0]):
        return float(preds.mean())
    return float(particles.weights @ preds)


def ess(particles: ParticleSet) -> float:
    w = particles.weights
    return float(1.0 / np.sum(w * w))
