import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from classunc.errors import NonFiniteError
from classunc.losses import LossSpec
from classunc.nn import (MlpModel, SgdState, backward_and_step, forward, gradients, init_model,
                         load_model, save_model, softmax)

from oracles import central_diff, mlp_forward
from oracles import softmax as softmax_oracle


def test_init_shapes_and_zero_biases():
    m = init_model([2, 4, 3], seed=7)
    assert [w.shape for w in m.weights] == [(2, 4), (4, 3)]
    assert all(np.all(b == 0) for b in m.biases)
    assert m.num_classes == 3


def test_init_is_deterministic():
    a, b = init_model([5, 8, 3], 11), init_model([5, 8, 3], 11)
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)


@pytest.mark.parametrize("dims", [[2], [], [3, 0, 2]])
def test_init_rejects_degenerate_dims(dims):
    with pytest.raises(ValueError):
        init_model(dims, 0)


def test_zero_model_gives_zero_logits():
    m = init_model([3, 5, 4], 0)
    for p in m.parameters():
        p[...] = 0
    assert np.all(forward(m, np.random.default_rng(0).normal(size=(6, 3))) == 0)


def test_identity_layer():
    m = MlpModel([2, 2], [np.eye(2)], [np.zeros(2)])
    assert forward(m, [[1.0, 2.0]]).tolist() == [[1.0, 2.0]]


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(3)
    m = init_model([4, 7, 5, 3], 3)
    for b in m.biases:
        b[...] = rng.normal(size=b.shape)
    x = rng.normal(size=(5, 4))
    got = forward(m, x)
    ws = [w.tolist() for w in m.weights]
    bs = [b.tolist() for b in m.biases]
    for i in range(5):
        np.testing.assert_allclose(got[i], mlp_forward(ws, bs, x[i].tolist()), rtol=0, atol=1e-12)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(init_model([3, 2], 0), np.zeros((2, 4)))


def test_forward_rejects_nan():
    with pytest.raises(NonFiniteError):
        forward(init_model([2, 2], 0), [[np.nan, 0.0]])


@pytest.mark.parametrize("logits,expected", [
    ([0.0, 0.0], [0.5, 0.5]),
    ([np.log(2), 0.0], [2 / 3, 1 / 3]),
])
def test_softmax_examples(logits, expected):
    np.testing.assert_allclose(softmax(logits), expected, atol=1e-15)


@given(st.floats(-1e3, 1e3))
def test_softmax_shift_invariance(c):
    np.testing.assert_allclose(softmax([c] * 4), [0.25] * 4, atol=1e-15)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
def test_softmax_matches_oracle(row):
    np.testing.assert_allclose(softmax(row), softmax_oracle(row), atol=1e-12)


def test_softmax_overflow_safe():
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p)) and p[0] == 1.0


def _flat_loss(model, x, y, spec):
    shapes = [p.shape for p in model.parameters()]

    def f(flat):
        m = model.copy()
        off = 0
        for p, shp in zip(m.parameters(), shapes):
            n = int(np.prod(shp))
            p[...] = np.reshape(flat[off:off + n], shp)
            off += n
        return gradients(m, x, y, spec)[0]

    return f


@pytest.mark.parametrize("spec", [LossSpec("ce"), LossSpec("focal", focal_gamma=2.0)])
def test_parameter_gradients_match_finite_differences(spec):
    rng = np.random.default_rng(1)
    m = init_model([3, 6, 4], 1)
    x, y = rng.normal(size=(5, 3)), rng.integers(0, 4, size=5)
    _, grads = gradients(m, x, y, spec)
    flat = np.concatenate([p.ravel() for p in m.parameters()]).tolist()
    fd = np.array(central_diff(_flat_loss(m, x, y, spec), flat))
    an = np.concatenate([g.ravel() for g in grads])
    assert np.max(np.abs(an - fd)) / max(np.max(np.abs(fd)), 1e-12) <= 1e-4


def test_zero_learning_rate_keeps_parameters():
    m = init_model([3, 4, 2], 0)
    before = [p.copy() for p in m.parameters()]
    state = SgdState.for_model(m, 0.0, momentum=0.9)
    x, y = np.ones((2, 3)), [0, 1]
    _, loss = backward_and_step(m, state, x, y, LossSpec("ce"))
    assert loss > 0
    for p, q in zip(before, m.parameters()):
        assert np.array_equal(p, q)


def test_plain_sgd_step_matches_finite_difference_gradient():
    rng = np.random.default_rng(5)
    m = init_model([3, 4, 3], 5)
    x, y = rng.normal(size=(4, 3)), rng.integers(0, 3, size=4)
    flat = np.concatenate([p.ravel() for p in m.parameters()])
    g = np.array(central_diff(_flat_loss(m, x, y, LossSpec("ce")), flat.tolist()))
    backward_and_step(m, SgdState.for_model(m, 0.1, momentum=0.0), x, y, LossSpec("ce"))
    after = np.concatenate([p.ravel() for p in m.parameters()])
    expected = flat - 0.1 * g
    assert np.max(np.abs(after - expected)) / np.max(np.abs(0.1 * g)) <= 1e-4


def test_momentum_two_step_recursion():
    rng = np.random.default_rng(2)
    m = init_model([3, 5, 2], 2)
    x, y = rng.normal(size=(4, 3)), rng.integers(0, 2, size=4)
    spec, lr, mu = LossSpec("ce"), 0.05, 0.9
    theta0 = [p.copy() for p in m.parameters()]
    _, g1 = gradients(m, x, y, spec)
    state = SgdState.for_model(m, lr, momentum=mu)
    backward_and_step(m, state, x, y, spec)
    theta1 = [p.copy() for p in m.parameters()]
    _, g2 = gradients(m, x, y, spec)
    backward_and_step(m, state, x, y, spec)
    for t0, t1, t2, a, b in zip(theta0, theta1, m.parameters(), g1, g2):
        np.testing.assert_allclose(t1, t0 - lr * a, atol=1e-14)
        np.testing.assert_allclose(t2, t1 + mu * (-lr * a) - lr * b, atol=1e-14)


def test_training_is_deterministic():
    def go():
        m = init_model([2, 4, 2], 9)
        st_ = SgdState.for_model(m, 0.1)
        rng = np.random.default_rng(9)
        for _ in range(5):
            backward_and_step(m, st_, rng.normal(size=(8, 2)), rng.integers(0, 2, 8), LossSpec("ce"))
        return m

    for p, q in zip(go().parameters(), go().parameters()):
        assert np.array_equal(p, q)


def test_checkpoint_round_trip(tmp_path):
    m = init_model([3, 7, 4], 13)
    path = tmp_path / "m.npz"
    save_model(m, path)
    back = load_model(path)
    assert back.dims == m.dims
    for p, q in zip(m.parameters(), back.parameters()):
        assert np.array_equal(p, q)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(2, 5), st.integers(0, 2**31))
def test_forward_output_shape(rows, din, dout, seed):
    m = init_model([din, 3, dout], seed)
    assert forward(m, np.zeros((rows, din))).shape == (rows, dout)
