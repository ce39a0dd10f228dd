"""Augmented nonlinear state-space form of the LSTM regressor.

The hidden state is ``a = [c; ybar; theta]``: the memory of the last unit,
the pooled output and the flat parameter vector. One transition runs the
LSTM over a new sequence starting from the carried ``(c, ybar)``; the
parameters follow a random walk and the label is observed as ``w . ybar``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import CovarianceError, DimensionError, NonFiniteError
from .lstm import CellState, Pooling, as_pooling, n_params, run_sequence_batch


@dataclass(frozen=True)
class LstmStateSpace:
    n: int
    p: int
    pooling: Pooling = Pooling.MEAN

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise DimensionError("n and p must be positive")
        object.__setattr__(self, "pooling", as_pooling(self.pooling))

    @property
    def n_theta(self) -> int:
        return n_params(self.n, self.p)

    @property
    def dim(self) -> int:
        return 2 * self.n + self.n_theta

    @property
    def theta_slice(self) -> slice:
        return slice(2 * self.n, self.dim)

    @property
    def readout_slice(self) -> slice:
        return slice(2 * self.n, 3 * self.n)

    def split(self, a):
        """Return views ``(c, ybar, theta)`` of an augmented state."""
        a = self._check_state(a)
        n = self.n
        return a[:n], a[n : 2 * n], a[2 * n :]

    def join(self, c, ybar, theta) -> np.ndarray:
        a = np.concatenate([np.ravel(c), np.ravel(ybar), np.ravel(theta)]).astype(float)
        return self._check_state(a)

    def initial_state(self, theta) -> np.ndarray:
        return self.join(np.zeros(self.n), np.zeros(self.n), theta)

    def cell_state(self, a) -> CellState:
        c, ybar, _ = self.split(a)
        return CellState(ybar.copy(), c.copy())

    def _check_state(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != (self.dim,):
            raise DimensionError(f"augmented state must have length {self.dim}, got {a.shape}")
        return a

    def _check_batch(self, A) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[1] != self.dim:
            raise DimensionError(f"state batch must be (B, {self.dim}), got {A.shape}")
        return A

    # -- maps -------------------------------------------------------------

    def transition_batch(self, A, X) -> np.ndarray:
        A = self._check_batch(A)
        n = self.n
        ybar, c_last, _ = run_sequence_batch(
            A[:, 2 * n :], X, n, self.p, self.pooling, c0=A[:, :n], y0=A[:, n : 2 * n]
        )
        out = A.copy()
        out[:, :n] = c_last
        out[:, n : 2 * n] = ybar
        return out

    def transition(self, a, X) -> np.ndarray:
        """Noise-free state map: run the sequence, keep the parameters."""
        a = self._check_state(a)
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("augmented state contains non-finite values")
        return self.transition_batch(a[None, :], X)[0]

    def measurement_batch(self, A) -> np.ndarray:
        A = self._check_batch(A)
        n = self.n
        return np.einsum("bn,bn->b", A[:, 2 * n : 3 * n], A[:, n : 2 * n])

    def measurement(self, a) -> float:
        a = self._check_state(a)
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("augmented state contains non-finite values")
        n = self.n
        return float(a[2 * n : 3 * n] @ a[n : 2 * n])

    def measurement_jacobian(self, a) -> np.ndarray:
        a = self._check_state(a)
        n = self.n
        H = np.zeros(self.dim)
        H[n : 2 * n] = a[2 * n : 3 * n]
        H[2 * n : 3 * n] = a[n : 2 * n]
        return H

    def transition_jacobian(self, a, X, step: float = 1e-6) -> np.ndarray:
        """Jacobian of :meth:`transition` at ``a``.

        The (c, ybar) rows use central differences with per-coordinate step
        ``max(step, step * |a_i|)``; the parameter rows are exactly ``[0 0 I]``.
        The perturbed sequences run in extended precision so that rounding
        stays below the truncation error even for the smallest default step.
        """
        a = self._check_state(a)
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("augmented state contains non-finite values")
        D, n = self.dim, self.n
        m = 2 * n
        ext = np.longdouble
        h = np.maximum(step, step * np.abs(a)).astype(ext)
        both = np.vstack([a + np.diag(h), a - np.diag(h)])
        ybar, c_last, _ = run_sequence_batch(
            both[:, m:], X, n, self.p, self.pooling, c0=both[:, :n], y0=both[:, n:m], dtype=ext
        )
        out = np.hstack([c_last, ybar])
        spacing = (a + h) - (a - h)
        F = np.zeros((D, D))
        F[:m, :] = ((out[:D] - out[D:]) / spacing[:, None]).T.astype(float)
        F[m:, m:] = np.eye(D - m)
        return F


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Process-noise covariance ``Q`` of the augmented state and label variance ``R``."""

    Q: np.ndarray
    R: float
    _factor: np.ndarray = field(init=False, repr=False)
    _diag: bool = field(init=False, repr=False)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionError("Q must be a square matrix")
        if not np.all(np.isfinite(Q)):
            raise NonFiniteError("Q contains non-finite values")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise CovarianceError("Q must be symmetric")
        if not (np.isfinite(self.R) and self.R > 0):
            raise CovarianceError("R must be a positive finite variance")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", float(self.R))
        diag = np.count_nonzero(Q - np.diag(np.diag(Q))) == 0
        object.__setattr__(self, "_diag", diag)
        if diag:
            if np.any(np.diag(Q) < 0):
                raise CovarianceError("Q has negative variances")
            object.__setattr__(self, "_factor", np.sqrt(np.diag(Q)))
            return
        try:
            L = np.linalg.cholesky(Q)
        except np.linalg.LinAlgError:
            # semidefinite Q: fall back to a symmetric square root
            vals, vecs = np.linalg.eigh(Q)
            if vals.min() < -1e-10 * max(1.0, vals.max()):
                raise CovarianceError("Q is not positive semidefinite") from None
            L = vecs * np.sqrt(np.clip(vals, 0.0, None))
        object.__setattr__(self, "_factor", L)

    @classmethod
    def isotropic(cls, dim: int, q0: float, R: float) -> "NoiseSpec":
        return cls(q0 * np.eye(dim), R)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` process-noise vectors, shape (size, dim)."""
        z = rng.standard_normal((size, self.dim))
        if self._diag:
            return z * self._factor
        return z @ self._factor.T
