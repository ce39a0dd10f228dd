import math

import numpy as np
import pytest

from distlstm.lstm import LstmParams


def scalar_sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def reference_cell(params: LstmParams, x, y_prev, c_prev):
    """Straight-line scalar transcription of the LSTM cell equations."""
    n, p = params.n, params.p

    def affine(W, R, b, r):
        return (sum(W[r][j] * x[j] for j in range(p))
                + sum(R[r][j] * y_prev[j] for j in range(n)) + b[r])

    y, c = [], []
    for r in range(n):
        i = scalar_sigmoid(affine(params.W_i, params.R_i, params.b_i, r))
        f = scalar_sigmoid(affine(params.W_f, params.R_f, params.b_f, r))
        z = math.tanh(affine(params.W_z, params.R_z, params.b_z, r))
        o = scalar_sigmoid(affine(params.W_o, params.R_o, params.b_o, r))
        c_r = i * z + f * c_prev[r]
        c.append(c_r)
        y.append(o * math.tanh(c_r))
    return np.array(y), np.array(c)


def reference_sequence(params, X, mode="mean", y0=None, c0=None):
    n = params.n
    y = np.zeros(n) if y0 is None else np.asarray(y0, float)
    c = np.zeros(n) if c0 is None else np.asarray(c0, float)
    outs = []
    for x in X:
        y, c = reference_cell(params, x, y, c)
        outs.append(y)
    outs = np.array(outs)
    pooled = {"mean": outs.mean(axis=0), "max": outs.max(axis=0), "last": outs[-1]}[mode]
    return pooled, y, c


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
