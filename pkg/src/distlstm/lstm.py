"""LSTM forward pass over one variable-length sequence, pooling and readout.

Sequences are stored as arrays of shape ``(m, p)``: row ``l`` is the input
column ``x^(l)`` fed to the ``l``-th unit.

Flat parameter layout (length ``4n(n+p) + 5n``)::

    w, W_z, R_z, b_z, W_i, R_i, b_i, W_f, R_f, b_f, W_o, R_o, b_o

with every matrix flattened column-major.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum
from typing import NamedTuple

import numpy as np

from .exceptions import DimensionError, NonFiniteError

GATES = ("z", "i", "f", "o")


class Pooling(str, Enum):
    MEAN = "mean"
    MAX = "max"
    LAST = "last"


def as_pooling(mode) -> Pooling:
    try:
        return Pooling(mode.value if isinstance(mode, Pooling) else str(mode).lower())
    except ValueError:
        raise ValueError(f"unknown pooling mode {mode!r}; expected mean, max or last") from None


def n_params(n: int, p: int) -> int:
    """Length of the flat parameter vector for ``n`` units and ``p`` inputs."""
    return 4 * n * (n + p) + 5 * n


def sigmoid(x):
    """Logistic function, evaluated without overflow for any finite input."""
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    with np.errstate(under="ignore"):
        e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class CellState(NamedTuple):
    y: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "CellState":
        return cls(np.zeros(n), np.zeros(n))


@dataclass(frozen=True, eq=False)
class LstmParams:
    """Weights of one LSTM layer plus its linear readout ``w``."""

    W_z: np.ndarray
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    R_z: np.ndarray
    R_i: np.ndarray
    R_f: np.ndarray
    R_o: np.ndarray
    b_z: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, np.asarray(getattr(self, f.name), dtype=float))
        n, p = self.W_z.shape if self.W_z.ndim == 2 else (-1, -1)
        for g in GATES:
            if getattr(self, "W_" + g).shape != (n, p):
                raise DimensionError(f"W_{g} must be {n}x{p}")
            if getattr(self, "R_" + g).shape != (n, n):
                raise DimensionError(f"R_{g} must be {n}x{n}")
            if getattr(self, "b_" + g).shape != (n,):
                raise DimensionError(f"b_{g} must have length {n}")
        if self.w.shape != (n,):
            raise DimensionError(f"w must have length {n}")

    @property
    def n(self) -> int:
        return self.W_z.shape[0]

    @property
    def p(self) -> int:
        return self.W_z.shape[1]

    @classmethod
    def zeros(cls, n: int, p: int) -> "LstmParams":
        return unpack(np.zeros(n_params(n, p)), n, p)

    @classmethod
    def random(cls, n: int, p: int, rng: np.random.Generator, scale: float = 0.1) -> "LstmParams":
        return unpack(rng.uniform(-scale, scale, n_params(n, p)), n, p)

    def replace(self, **changes) -> "LstmParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return LstmParams(**values)

    def __eq__(self, other):
        if not isinstance(other, LstmParams):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self)
        )


def _blocks(n: int, p: int):
    """Yield ``(name, shape)`` in flat-layout order."""
    yield "w", (n,)
    for g in GATES:
        yield "W_" + g, (n, p)
        yield "R_" + g, (n, n)
        yield "b_" + g, (n,)


def pack(params: LstmParams) -> np.ndarray:
    return np.concatenate(
        [getattr(params, name).ravel(order="F") for name, _ in _blocks(params.n, params.p)]
    )


def unpack(theta, n: int, p: int) -> LstmParams:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size != n_params(n, p):
        raise DimensionError(
            f"flat parameter vector must have length {n_params(n, p)} for n={n}, p={p}, "
            f"got shape {theta.shape}"
        )
    out, offset = {}, 0
    for name, shape in _blocks(n, p):
        size = int(np.prod(shape))
        out[name] = theta[offset : offset + size].reshape(shape, order="F").copy()
        offset += size
    return LstmParams(**out)


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")


def lstm_cell_step(params: LstmParams, x, prev: CellState) -> CellState:
    x = np.asarray(x, dtype=float)
    n, p = params.n, params.p
    if x.shape != (p,):
        raise DimensionError(f"input column must have length {p}, got shape {x.shape}")
    y_prev = np.asarray(prev.y, dtype=float)
    c_prev = np.asarray(prev.c, dtype=float)
    if y_prev.shape != (n,) or c_prev.shape != (n,):
        raise DimensionError(f"previous cell state must have length {n}")
    _check_finite("input", x)
    _check_finite("previous state", np.concatenate([y_prev, c_prev]))

    i = sigmoid(params.W_i @ x + params.R_i @ y_prev + params.b_i)
    f = sigmoid(params.W_f @ x + params.R_f @ y_prev + params.b_f)
    c = i * np.tanh(params.W_z @ x + params.R_z @ y_prev + params.b_z) + f * c_prev
    o = sigmoid(params.W_o @ x + params.R_o @ y_prev + params.b_o)
    y = o * np.tanh(c)
    return CellState(y, c)


def check_sequence(X, p: int | None = None) -> np.ndarray:
    """Validate one sequence and return it as a float array of shape (m, p)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"a sequence must be 2-D (m, p), got shape {X.shape}")
    if X.shape[0] < 1:
        raise DimensionError("empty sequence")
    if p is not None and X.shape[1] != p:
        raise DimensionError(f"sequence has {X.shape[1]} features, expected {p}")
    _check_finite("sequence", X)
    return X


def pool(outputs: np.ndarray, mode) -> np.ndarray:
    """Reduce per-step outputs along the step axis (axis 0)."""
    mode = as_pooling(mode)
    if mode is Pooling.MEAN:
        return outputs.mean(axis=0)
    if mode is Pooling.MAX:
        return outputs.max(axis=0)
    return outputs[-1].copy()


def run_sequence(params: LstmParams, X, mode=Pooling.MEAN, init: CellState | None = None):
    """Run the LSTM over every row of ``X`` and pool the unit outputs.

    Returns ``(ybar, final)`` where ``final`` is the state of the last unit.
    The recursion starts from ``init``, or from zeros when omitted.
    """
    X = check_sequence(X, params.p)
    state = CellState.zeros(params.n) if init is None else init
    outputs = []
    for x in X:
        state = lstm_cell_step(params, x, state)
        outputs.append(state.y)
    return pool(np.array(outputs), mode), state


def predict(w, ybar) -> float:
    w = np.asarray(w, dtype=float)
    ybar = np.asarray(ybar, dtype=float)
    if w.shape != ybar.shape or w.ndim != 1:
        raise DimensionError(f"readout length {w.shape} does not match pooled output {ybar.shape}")
    return float(w @ ybar)


# -- batched path ---------------------------------------------------------
# Used by the filters, where hundreds of parameter vectors run on one sequence.


def unpack_batch(thetas: np.ndarray, n: int, p: int):
    """Split a (B, n_theta) array into ``w`` (B, n) and stacked gate weights.

    Gate rows are stacked in z, i, f, o order: ``W`` is (B, 4n, p),
    ``R`` is (B, 4n, n) and ``b`` is (B, 4n).
    """
    B = thetas.shape[0]
    w = thetas[:, :n]
    Ws, Rs, bs = [], [], []
    offset = n
    for _ in GATES:
        Ws.append(thetas[:, offset : offset + n * p].reshape(B, p, n).transpose(0, 2, 1))
        offset += n * p
        Rs.append(thetas[:, offset : offset + n * n].reshape(B, n, n).transpose(0, 2, 1))
        offset += n * n
        bs.append(thetas[:, offset : offset + n])
        offset += n
    return w, np.concatenate(Ws, axis=1), np.concatenate(Rs, axis=1), np.concatenate(bs, axis=1)


def run_sequence_batch(thetas, X, n: int, p: int, mode=Pooling.MEAN, c0=None, y0=None, dtype=float):
    """Vectorised :func:`run_sequence` over a batch of parameter vectors.

    ``thetas`` is (B, n_theta); ``c0`` and ``y0`` are (B, n) initial states.
    Returns ``(ybar, c_last, w)``, each (B, n), computed in ``dtype``.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=dtype))
    if thetas.shape[1] != n_params(n, p):
        raise DimensionError(f"parameter batch must have {n_params(n, p)} columns")
    X = check_sequence(X, p).astype(dtype)
    B = thetas.shape[0]
    w, W, R, b = unpack_batch(thetas, n, p)
    c = np.zeros((B, n), dtype) if c0 is None else np.array(c0, dtype=dtype)
    y = np.zeros((B, n), dtype) if y0 is None else np.asarray(y0, dtype=dtype)
    # input projections for all steps at once: (m, B, 4n)
    proj = np.einsum("bgp,mp->mbg", W, X) + b
    mode = as_pooling(mode)
    acc = None
    for pre_x in proj:
        pre = pre_x + np.einsum("bgn,bn->bg", R, y)
        z = np.tanh(pre[:, :n])
        gates = sigmoid(pre[:, n:])
        i, f, o = gates[:, :n], gates[:, n : 2 * n], gates[:, 2 * n :]
        c = i * z + f * c
        y = o * np.tanh(c)
        if mode is Pooling.MEAN:
            acc = y.copy() if acc is None else acc + y
        elif mode is Pooling.MAX:
            acc = y.copy() if acc is None else np.maximum(acc, y)
    if mode is Pooling.MEAN:
        ybar = acc / X.shape[0]
    elif mode is Pooling.MAX:
        ybar = acc
    else:
        ybar = y
    return ybar, c, w
