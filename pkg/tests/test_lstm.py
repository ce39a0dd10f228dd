import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import reference_cell, reference_sequence
from distlstm.exceptions import DimensionError, NonFiniteError
from distlstm.lstm import (
    CellState,
    LstmParams,
    Pooling,
    lstm_cell_step,
    n_params,
    pack,
    predict,
    run_sequence,
    run_sequence_batch,
    sigmoid,
    unpack,
)


def test_zero_params_give_zero_state():
    params = LstmParams.zeros(3, 2)
    out = lstm_cell_step(params, np.array([0.7, -1.3]), CellState.zeros(3))
    np.testing.assert_array_equal(out.y, 0.0)
    np.testing.assert_array_equal(out.c, 0.0)


def test_scalar_hand_evaluation():
    params = LstmParams.zeros(1, 1).replace(b_z=np.array([100.0]))
    out = lstm_cell_step(params, np.array([0.3]), CellState.zeros(1))
    c = 0.5 * math.tanh(100.0)
    assert out.c[0] == pytest.approx(c, abs=1e-15)
    assert out.y[0] == pytest.approx(0.5 * math.tanh(c), abs=1e-15)
    assert out.y[0] == pytest.approx(0.231059, abs=1e-6)


@pytest.mark.parametrize("n,p", [(1, 1), (2, 3), (4, 2)])
def test_cell_matches_scalar_transcription(rng, n, p):
    for _ in range(10):
        params = LstmParams.random(n, p, rng, scale=1.0)
        x = rng.normal(size=p)
        prev = CellState(rng.uniform(-1, 1, n), rng.normal(size=n))
        out = lstm_cell_step(params, x, prev)
        y_ref, c_ref = reference_cell(params, x, prev.y, prev.c)
        np.testing.assert_allclose(out.y, y_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(out.c, c_ref, rtol=0, atol=1e-12)


def test_cell_rejects_bad_input():
    params = LstmParams.zeros(2, 2)
    with pytest.raises(DimensionError):
        lstm_cell_step(params, np.zeros(3), CellState.zeros(2))
    with pytest.raises(DimensionError):
        lstm_cell_step(params, np.zeros(2), CellState.zeros(3))
    with pytest.raises(NonFiniteError):
        lstm_cell_step(params, np.array([np.nan, 0.0]), CellState.zeros(2))
    with pytest.raises(NonFiniteError):
        lstm_cell_step(params, np.zeros(2), CellState(np.array([np.inf, 0.0]), np.zeros(2)))


def test_sigmoid_is_stable_and_bounded():
    x = np.array([-800.0, -40.0, -1.0, 0.0, 1.0, 40.0, 800.0])
    with np.errstate(over="raise", invalid="raise"):
        s = sigmoid(x)
    assert np.all((s >= 0) & (s <= 1))
    assert s[3] == 0.5
    np.testing.assert_allclose(s + sigmoid(-x), 1.0, atol=1e-15)


@pytest.mark.parametrize("mode", list(Pooling))
def test_single_column_pooling_is_identity(rng, mode):
    params = LstmParams.random(3, 2, rng, scale=1.0)
    X = rng.normal(size=(1, 2))
    ybar, final = run_sequence(params, X, mode)
    np.testing.assert_array_equal(ybar, final.y)


def test_max_pooling_is_componentwise():
    from distlstm.lstm import pool

    outs = np.array([[0.1, -0.2], [0.0, 0.3]])
    np.testing.assert_array_equal(pool(outs, "max"), [0.1, 0.3])
    np.testing.assert_array_equal(pool(outs, "last"), [0.0, 0.3])
    np.testing.assert_allclose(pool(outs, "mean"), [0.05, 0.05])


def test_mean_pooling_with_closed_forget_gate(rng):
    params = LstmParams.random(2, 3, rng, scale=1.0)
    zero = np.zeros((2, 2))
    params = params.replace(R_z=zero, R_i=zero, R_f=zero, R_o=zero, b_f=np.full(2, -100.0))
    X = np.tile(rng.normal(size=3), (4, 1))
    per_step = []
    state = CellState.zeros(2)
    for x in X:
        state = lstm_cell_step(params, x, state)
        per_step.append(state.y)
    for y in per_step[1:]:
        np.testing.assert_allclose(y, per_step[0], atol=1e-15)
    ybar, _ = run_sequence(params, X, "mean")
    np.testing.assert_allclose(ybar, per_step[0], atol=1e-15)


def test_empty_sequence_rejected():
    with pytest.raises(DimensionError):
        run_sequence(LstmParams.zeros(2, 2), np.zeros((0, 2)))


def test_run_sequence_matches_reference_with_init(rng):
    params = LstmParams.random(3, 2, rng, scale=1.0)
    X = rng.normal(size=(5, 2))
    init = CellState(rng.uniform(-1, 1, 3), rng.normal(size=3))
    for mode in ("mean", "max", "last"):
        ybar, final = run_sequence(params, X, mode, init)
        ref, y_last, c_last = reference_sequence(params, X, mode, init.y, init.c)
        np.testing.assert_allclose(ybar, ref, atol=1e-12)
        np.testing.assert_allclose(final.y, y_last, atol=1e-12)
        np.testing.assert_allclose(final.c, c_last, atol=1e-12)


@pytest.mark.parametrize("mode", ["mean", "max", "last"])
def test_batch_matches_single(rng, mode):
    n, p = 3, 2
    thetas = rng.uniform(-1, 1, (6, n_params(n, p)))
    c0 = rng.normal(size=(6, n))
    y0 = rng.uniform(-1, 1, (6, n))
    X = rng.normal(size=(4, p))
    ybar, c_last, w = run_sequence_batch(thetas, X, n, p, mode, c0, y0)
    for b in range(6):
        params = unpack(thetas[b], n, p)
        ref, final = run_sequence(params, X, mode, CellState(y0[b], c0[b]))
        np.testing.assert_allclose(ybar[b], ref, atol=1e-12)
        np.testing.assert_allclose(c_last[b], final.c, atol=1e-12)
        np.testing.assert_array_equal(w[b], params.w)


@pytest.mark.parametrize(
    "w,ybar,expected",
    [([0.0, 0.0], [0.4, -0.9], 0.0), ([1.0, 0.0], [0.7, -0.3], 0.7), ([1.0, 2.0], [0.5, -0.25], 0.0)],
)
def test_predict(w, ybar, expected):
    assert predict(w, ybar) == pytest.approx(expected, abs=1e-15)


def test_predict_length_mismatch():
    with pytest.raises(DimensionError):
        predict([1.0, 2.0], [1.0])


@pytest.mark.parametrize("n,p,expected", [(1, 1, 13), (2, 2, 42), (3, 5, 111)])
def test_parameter_count(n, p, expected):
    assert n_params(n, p) == expected
    assert pack(LstmParams.zeros(n, p)).size == expected


def test_layout_order_and_column_major():
    n, p = 2, 3
    theta = np.arange(n_params(n, p), dtype=float)
    params = unpack(theta, n, p)
    np.testing.assert_array_equal(params.w, [0, 1])
    # W_z starts right after w and is filled column by column
    np.testing.assert_array_equal(params.W_z, [[2, 4, 6], [3, 5, 7]])
    np.testing.assert_array_equal(params.R_z, [[8, 10], [9, 11]])
    np.testing.assert_array_equal(params.b_z, [12, 13])
    assert params.W_i[0, 0] == 14
    assert params.b_o[-1] == theta[-1]


def test_unpack_wrong_length():
    with pytest.raises(DimensionError):
        unpack(np.zeros(41), 2, 2)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 8), p=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_pack_unpack_roundtrip(n, p, seed):
    rng = np.random.default_rng(seed)
    params = LstmParams.random(n, p, rng, scale=5.0)
    flat = pack(params)
    assert flat.size == 4 * n * (n + p) + 5 * n
    assert unpack(flat, n, p) == params
    np.testing.assert_array_equal(pack(unpack(flat, n, p)), flat)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    scale=st.floats(0.01, 20.0),
)
def test_gates_and_outputs_bounded(seed, scale):
    rng = np.random.default_rng(seed)
    params = LstmParams.random(3, 2, rng, scale=scale)
    x = rng.normal(size=2) * scale
    prev = CellState(rng.uniform(-1, 1, 3), rng.normal(size=3) * scale)
    out = lstm_cell_step(params, x, prev)
    assert np.all(np.abs(out.y) <= 1.0)
    assert np.all(np.isfinite(out.c))
    gate = sigmoid(params.W_i @ x + params.R_i @ prev.y + params.b_i)
    assert np.all((gate >= 0) & (gate <= 1))


def test_cell_is_deterministic(rng):
    params = LstmParams.random(4, 3, rng, scale=1.0)
    x = rng.normal(size=3)
    prev = CellState(rng.uniform(-1, 1, 4), rng.normal(size=4))
    a = lstm_cell_step(params, x, prev)
    b = lstm_cell_step(params, x, prev)
    assert a.y.tobytes() == b.y.tobytes() and a.c.tobytes() == b.c.tobytes()
