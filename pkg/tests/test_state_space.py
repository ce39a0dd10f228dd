import numpy as np
import pytest

from distlstm.exceptions import CovarianceError, DimensionError, NonFiniteError
from distlstm.lstm import CellState, LstmParams, n_params, pack, predict, run_sequence, sigmoid, unpack
from distlstm.state_space import LstmStateSpace, NoiseSpec


def random_state(model, rng, scale=0.5):
    n = model.n
    return np.concatenate([rng.normal(size=n) * scale, rng.uniform(-0.9, 0.9, n),
                           rng.uniform(-scale, scale, model.n_theta)])


def fd_jacobian_rows(model, a, X, h):
    """Central differences of transition, full matrix, fixed absolute step."""
    D = model.dim
    J = np.zeros((D, D))
    for i in range(D):
        e = np.zeros(D)
        e[i] = h
        J[:, i] = (model.transition(a + e, X) - model.transition(a - e, X)) / (2 * h)
    return J


def test_dimensions():
    model = LstmStateSpace(2, 2)
    assert model.n_theta == 42
    assert model.dim == 46
    a = np.arange(46.0)
    c, y, theta = model.split(a)
    np.testing.assert_array_equal(model.join(c, y, theta), a)
    with pytest.raises(DimensionError):
        model.split(np.zeros(45))


def test_transition_zero_case():
    model = LstmStateSpace(2, 3)
    a = np.zeros(model.dim)
    np.testing.assert_array_equal(model.transition(a, np.ones((3, 3))), 0.0)


@pytest.mark.parametrize("mode", ["mean", "max", "last"])
def test_transition_keeps_theta_and_matches_run_sequence(rng, mode):
    model = LstmStateSpace(3, 2, mode)
    for _ in range(5):
        a = random_state(model, rng)
        X = rng.normal(size=(rng.integers(1, 5), 2))
        out = model.transition(a, X)
        np.testing.assert_array_equal(out[model.theta_slice], a[model.theta_slice])
        c, y, theta = model.split(a)
        ybar, final = run_sequence(unpack(theta, 3, 2), X, mode, CellState(y, c))
        np.testing.assert_allclose(out[:3], final.c, atol=1e-12)
        np.testing.assert_allclose(out[3:6], ybar, atol=1e-12)


def test_transition_rejects_non_finite():
    model = LstmStateSpace(1, 1)
    a = np.zeros(model.dim)
    a[0] = np.nan
    with pytest.raises(NonFiniteError):
        model.transition(a, np.ones((1, 1)))


def test_measurement(rng):
    model = LstmStateSpace(3, 2)
    a = random_state(model, rng)
    a0 = a.copy()
    a0[model.readout_slice] = 0.0
    assert model.measurement(a0) == 0.0
    a1 = a.copy()
    a1[3:6] = 0.0
    assert model.measurement(a1) == 0.0
    _, y, theta = model.split(a)
    assert model.measurement(a) == pytest.approx(predict(unpack(theta, 3, 2).w, y), abs=1e-15)
    assert model.measurement_batch(a[None, :])[0] == pytest.approx(model.measurement(a), abs=1e-15)


def test_measurement_jacobian_hand_case():
    model = LstmStateSpace(2, 1)
    n = 2
    assert np.all(model.measurement_jacobian(np.zeros(model.dim)) == 0)
    a = np.zeros(model.dim)
    a[n + 0] = 1.0  # ybar = e1
    a[2 * n + 1] = 1.0  # w = e2
    H = model.measurement_jacobian(a)
    expected = np.zeros(model.dim)
    expected[n + 1] = 1.0
    expected[2 * n + 0] = 1.0
    np.testing.assert_array_equal(H, expected)


def test_measurement_jacobian_finite_differences(rng):
    model = LstmStateSpace(3, 2)
    h = 1e-6
    for _ in range(20):
        a = random_state(model, rng, scale=1.0)
        H = model.measurement_jacobian(a)
        fd = np.array([
            (model.measurement(a + h * e) - model.measurement(a - h * e)) / (2 * h)
            for e in np.eye(model.dim)
        ])
        assert np.max(np.abs(H - fd)) < 1e-7


def test_transition_jacobian_theta_rows_are_identity(rng):
    model = LstmStateSpace(2, 2)
    a = random_state(model, rng)
    F = model.transition_jacobian(a, rng.normal(size=(3, 2)))
    m = 2 * model.n
    np.testing.assert_array_equal(F[m:, m:], np.eye(model.n_theta))
    np.testing.assert_array_equal(F[m:, :m], 0.0)


def test_transition_jacobian_at_origin_matches_tight_fd(rng):
    model = LstmStateSpace(2, 2)
    a = np.zeros(model.dim)
    X = rng.normal(size=(1, 2))
    F = model.transition_jacobian(a, X)
    ref = fd_jacobian_rows(model, a, X, 1e-7)
    scale = np.max(np.abs(ref))
    assert np.max(np.abs(F - ref)) <= 1e-5 * scale


def test_transition_jacobian_forget_gate_hand_derivative(rng):
    model = LstmStateSpace(1, 1)
    params = LstmParams.random(1, 1, rng, scale=1.0)
    params = params.replace(R_z=np.zeros((1, 1)), R_i=np.zeros((1, 1)),
                            R_f=np.zeros((1, 1)), R_o=np.zeros((1, 1)))
    x = np.array([[0.8]])
    a = model.join([0.3], [0.2], pack(params))
    F = model.transition_jacobian(a, x)
    f = sigmoid(params.W_f[0, 0] * 0.8 + params.b_f[0])
    assert F[0, 0] == pytest.approx(f, abs=1e-8)


def test_transition_jacobian_random_instances_match_fd(rng):
    for _ in range(5):
        n, p, m = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 5)
        model = LstmStateSpace(int(n), int(p), "mean")
        a = random_state(model, rng)
        X = rng.normal(size=(m, p))
        F = model.transition_jacobian(a, X)
        ref = fd_jacobian_rows(model, a, X, 1e-5)
        assert np.max(np.abs(F - ref)) < 1e-6


def test_jacobian_step_refinement_converges(rng):
    """Differences between successive step halvings shrink as the step shrinks."""
    for _ in range(10):
        n, p, m = (int(v) for v in (rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 5)))
        model = LstmStateSpace(n, p)
        a = random_state(model, rng)
        X = rng.normal(size=(m, p))
        gaps = []
        for h in (1e-4, 1e-5, 1e-6):
            gaps.append(np.max(np.abs(model.transition_jacobian(a, X, h) - model.transition_jacobian(a, X, h / 2))))
        assert gaps[0] > gaps[1] > gaps[2], gaps


def test_noise_spec_validation():
    NoiseSpec(np.zeros((3, 3)), 0.1)
    with pytest.raises(CovarianceError):
        NoiseSpec(np.array([[1.0, 2.0], [0.0, 1.0]]), 0.1)
    with pytest.raises(CovarianceError):
        NoiseSpec(np.array([[1.0, 2.0], [2.0, 1.0]]), 0.1)
    with pytest.raises(CovarianceError):
        NoiseSpec(np.eye(2), 0.0)
    with pytest.raises(CovarianceError):
        NoiseSpec(-np.eye(2), 1.0)


def test_noise_sampling_moments(rng):
    Q = np.array([[0.5, 0.2, 0.0], [0.2, 0.3, 0.05], [0.0, 0.05, 0.1]])
    noise = NoiseSpec(Q, 1.0)
    N = 100_000
    g = noise.sample(rng, N)
    sd = np.sqrt(np.diag(Q))
    assert np.all(np.abs(g.mean(axis=0)) < 3 * sd / np.sqrt(N))
    cov = np.cov(g.T)
    assert np.linalg.norm(cov - Q) < 0.05 * np.linalg.norm(Q)


def test_semidefinite_noise_sampling(rng):
    v = np.array([1.0, 1.0, 0.0])
    noise = NoiseSpec(np.outer(v, v), 1.0)
    g = noise.sample(rng, 1000)
    np.testing.assert_allclose(g[:, 0], g[:, 1], atol=1e-12)
    np.testing.assert_allclose(g[:, 2], 0.0, atol=1e-12)
