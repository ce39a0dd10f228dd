"""First-order baseline: exact squared-error gradient by backpropagation through time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError
from .lstm import (
    CellState,
    LstmParams,
    Pooling,
    as_pooling,
    check_sequence,
    n_params,
    pack,
    sigmoid,
    unpack,
)


def _forward(params: LstmParams, X, init: CellState | None):
    n = params.n
    y = np.zeros(n) if init is None else np.asarray(init.y, dtype=float)
    c = np.zeros(n) if init is None else np.asarray(init.c, dtype=float)
    cache = []
    for x in X:
        z = np.tanh(params.W_z @ x + params.R_z @ y + params.b_z)
        i = sigmoid(params.W_i @ x + params.R_i @ y + params.b_i)
        f = sigmoid(params.W_f @ x + params.R_f @ y + params.b_f)
        o = sigmoid(params.W_o @ x + params.R_o @ y + params.b_o)
        c_new = i * z + f * c
        tc = np.tanh(c_new)
        y_new = o * tc
        cache.append((x, y, c, z, i, f, o, tc))
        y, c = y_new, c_new
    outputs = np.array([o * tc for (_, _, _, _, _, _, o, tc) in cache])
    return outputs, CellState(y, c), cache


def _pooled(outputs, mode):
    if mode is Pooling.MEAN:
        return outputs.mean(axis=0)
    if mode is Pooling.MAX:
        return outputs.max(axis=0)
    return outputs[-1].copy()


def _unpack_checked(theta, n, p):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n_params(n, p),):
        raise DimensionError(f"theta must have length {n_params(n, p)}")
    return unpack(theta, n, p)


def loss(theta, X, d, n: int, p: int, mode=Pooling.MEAN, init: CellState | None = None) -> float:
    """Half squared prediction error."""
    params = _unpack_checked(theta, n, p)
    X = check_sequence(X, p)
    outputs, _, _ = _forward(params, X, init)
    d_hat = float(params.w @ _pooled(outputs, as_pooling(mode)))
    return 0.5 * (d - d_hat) ** 2


def loss_and_gradient(theta, X, d, n: int, p: int, mode=Pooling.MEAN, init: CellState | None = None):
    """Return ``(loss, gradient, final)``; ``final`` is the carry for the next sequence.

    The initial cell state is treated as a constant input. Max pooling
    routes each component's gradient to its first maximising step.
    """
    params = _unpack_checked(theta, n, p)
    X = check_sequence(X, p)
    mode = as_pooling(mode)
    outputs, last, cache = _forward(params, X, init)
    m = len(cache)
    ybar = _pooled(outputs, mode)
    err = float(params.w @ ybar) - d  # dL/dd_hat

    dy_pool = np.zeros((m, n))
    g_ybar = err * params.w
    if mode is Pooling.MEAN:
        dy_pool[:] = g_ybar / m
    elif mode is Pooling.MAX:
        dy_pool[np.argmax(outputs, axis=0), np.arange(n)] = g_ybar
    else:
        dy_pool[-1] = g_ybar

    grads = {name: np.zeros_like(getattr(params, name)) for name in ("W_z", "W_i", "W_f", "W_o",
                                                                     "R_z", "R_i", "R_f", "R_o",
                                                                     "b_z", "b_i", "b_f", "b_o")}
    grads["w"] = err * ybar
    dy_rec = np.zeros(n)
    dc_next = np.zeros(n)
    for l in range(m - 1, -1, -1):
        x, y_prev, c_prev, z, i, f, o, tc = cache[l]
        dy = dy_pool[l] + dy_rec
        dc = dy * o * (1.0 - tc * tc) + dc_next
        pre = {
            "z": dc * i * (1.0 - z * z),
            "i": dc * z * i * (1.0 - i),
            "f": dc * c_prev * f * (1.0 - f),
            "o": dy * tc * o * (1.0 - o),
        }
        dc_next = dc * f
        dy_rec = np.zeros(n)
        for g, dpre in pre.items():
            grads["W_" + g] += np.outer(dpre, x)
            grads["R_" + g] += np.outer(dpre, y_prev)
            grads["b_" + g] += dpre
            dy_rec += getattr(params, "R_" + g).T @ dpre
    final = CellState(ybar, last.c)
    return 0.5 * err * err, pack(LstmParams(**grads)), final


def gradient(theta, X, d, n: int, p: int, mode=Pooling.MEAN, init: CellState | None = None) -> np.ndarray:
    return loss_and_gradient(theta, X, d, n, p, mode, init)[1]


@dataclass(frozen=True, eq=False)
class SgdState:
    theta: np.ndarray
    mu: float
    carry: CellState

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("learning rate must be positive")


def sgd_predict(state: SgdState, X, n: int, p: int, mode=Pooling.MEAN) -> float:
    params = _unpack_checked(state.theta, n, p)
    X = check_sequence(X, p)
    outputs, _, _ = _forward(params, X, state.carry)
    return float(params.w @ _pooled(outputs, as_pooling(mode)))


def sgd_step(state: SgdState, X, d, n: int, p: int, mode=Pooling.MEAN) -> SgdState:
    _, g, final = loss_and_gradient(state.theta, X, d, n, p, mode, state.carry)
    return SgdState(state.theta - state.mu * g, state.mu, final)
