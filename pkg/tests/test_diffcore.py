import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgbcc import diffcore as dc
from mgbcc.diffcore import Adam, AdamState, Tensor, adam_step

from oracles import max_rel_error, numerical_grad


def param(a):
    return Tensor(np.array(a, dtype=float), requires_grad=True)


def check_grad(build, *arrays, tol=1e-5):
    """Compare backward() against central differences for every input."""
    params = [param(a) for a in arrays]
    build(*params).backward()
    for p in params:
        num = numerical_grad(lambda: build(*params).item(), p.value)
        assert max_rel_error(p.grad, num) < tol


# -- matmul -----------------------------------------------------------------

def test_matmul_identity():
    out = dc.matmul(np.eye(2), np.array([[3., 4.], [5., 6.]]))
    np.testing.assert_array_equal(out.value, [[3, 4], [5, 6]])


def test_matmul_row_by_column():
    assert dc.matmul([[1., 2.]], [[3.], [4.]]).item() == 11.0


def test_matmul_grad_matches_finite_differences():
    A = param([[1., 2.], [3., 4.]])
    B = Tensor(np.ones((2, 2)))
    dc.total(A @ B).backward()
    num = numerical_grad(lambda: dc.total(A @ B).item(), A.value)
    np.testing.assert_allclose(num, [[2, 2], [2, 2]], atol=1e-8)
    np.testing.assert_allclose(A.grad, num, rtol=1e-8)


def test_matmul_shape_error():
    with pytest.raises(dc.ShapeError):
        dc.matmul(np.ones((2, 3)), np.ones((2, 3)))


# -- relu -------------------------------------------------------------------

def test_relu_values():
    np.testing.assert_array_equal(dc.relu([[-1., 0., 2.]]).value, [[0, 0, 2]])


def test_relu_all_negative():
    x = param([[-1., -2., -0.5]])
    out = dc.relu(x)
    dc.total(out).backward()
    assert not out.value.any()
    assert not x.grad.any()


def test_relu_grad():
    x = param([[-1., 3.]])
    dc.total(dc.relu(x)).backward()
    num = numerical_grad(lambda: dc.total(dc.relu(x)).item(), x.value)
    np.testing.assert_allclose(num, [[0, 1]], atol=1e-9)
    np.testing.assert_array_equal(x.grad, [[0, 1]])


def test_relu_subgradient_at_zero():
    x = param([[0.0]])
    dc.total(dc.relu(x)).backward()
    assert x.grad[0, 0] == 0.0


# -- standardize ------------------------------------------------------------

def test_standardize_two_rows():
    out = dc.standardize([[1.], [3.]])
    np.testing.assert_allclose(out.value, [[-1], [1]], atol=1e-7)


def test_standardize_constant_column():
    out = dc.standardize([[5.], [5.], [5.]])
    np.testing.assert_array_equal(out.value, 0.0)


def test_standardize_zero_mean():
    rng = np.random.default_rng(0)
    out = dc.standardize(rng.normal(3, 2, size=(20, 5)))
    np.testing.assert_allclose(out.value.mean(0), 0, atol=1e-9)


def test_standardize_needs_two_rows():
    with pytest.raises(ValueError):
        dc.standardize([[1., 2.]])


def test_standardize_grad():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(6, 3))
    check_grad(lambda h: dc.total(dc.mul(dc.standardize(h), w)), rng.normal(size=(6, 3)))


# -- cosine -----------------------------------------------------------------

@pytest.mark.parametrize("u, v, want", [
    ([1., 0.], [1., 0.], 1.0),
    ([1., 0.], [0., 1.], 0.0),
    ([1., 1.], [2., 2.], 1.0),
])
def test_cosine_examples(u, v, want):
    assert dc.cosine_matrix([u], [v]).item() == pytest.approx(want, abs=1e-9)


def test_cosine_zero_row_is_finite():
    out = dc.cosine_matrix([[0., 0.], [1., 0.]], [[1., 0.]])
    assert np.all(np.isfinite(out.value))
    assert out.value[0, 0] == 0.0


def test_cosine_grad():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(4, 5))
    check_grad(lambda u, v: dc.total(dc.mul(dc.cosine_matrix(u, v), w)),
               rng.normal(size=(4, 3)), rng.normal(size=(5, 3)))


def test_cosine_self_grad():
    # same tensor on both sides; gradients from both uses must add up
    rng = np.random.default_rng(3)
    w = rng.normal(size=(5, 5))
    check_grad(lambda c: dc.total(dc.mul(dc.cosine_matrix(c, c), w)), rng.normal(size=(5, 4)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100), st.floats(0.01, 100))
def test_cosine_scale_invariance(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
    a = dc.cosine_matrix(u, v).value
    b = dc.cosine_matrix(alpha * u, beta * v).value
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert np.all(np.abs(a) <= 1 + 1e-9)


# -- other ops --------------------------------------------------------------

def test_row_norms_and_l2_grad():
    rng = np.random.default_rng(4)
    w = rng.normal(size=(4, 3))
    check_grad(lambda x: dc.total(dc.mul(dc.l2_normalize_rows(x), w)), rng.normal(size=(4, 3)))
    check_grad(lambda x: dc.total(dc.row_norms(x)), rng.normal(size=(4, 3)))


def test_take_rows_vstack_squared_error_grad():
    rng = np.random.default_rng(5)
    t = rng.normal(size=(3, 2))
    check_grad(lambda a, b: dc.squared_error(dc.take_rows(dc.vstack([a, b]), [0, 2, 2]), t),
               rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))


def test_bias_broadcast_grad():
    rng = np.random.default_rng(6)
    w = rng.normal(size=(4, 3))
    check_grad(lambda x, b: dc.total(dc.mul(dc.relu(dc.add(x, b)), w)),
               rng.normal(size=(4, 3)), rng.normal(size=(1, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_random_three_layer_graph(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 5))
    target = rng.normal(size=(8, 2))

    def net(W1, b1, W2, b2, W3):
        h = dc.relu(dc.add(dc.matmul(x, W1), b1))
        h = dc.standardize(dc.relu(dc.add(dc.matmul(h, W2), b2)))
        return dc.mse(dc.matmul(h, W3), target)

    check_grad(net, rng.normal(size=(5, 7)), rng.normal(size=(1, 7)),
               rng.normal(size=(7, 6)), rng.normal(size=(1, 6)), rng.normal(size=(6, 2)))


# -- backward semantics -------------------------------------------------------

def test_backward_sum():
    W = param(np.ones((2, 2)) * 3)
    dc.total(W).backward()
    np.testing.assert_array_equal(W.grad, np.ones((2, 2)))


def test_backward_self_target_mse():
    x = param([[1., 2.], [3., 4.]])
    dc.mse(x, x).backward()
    np.testing.assert_array_equal(x.grad, 0.0)


def test_backward_requires_scalar():
    with pytest.raises(dc.ShapeError):
        param(np.ones((2, 2))).backward()


def test_backward_accumulates_and_is_deterministic():
    rng = np.random.default_rng(7)
    W = param(rng.normal(size=(3, 3)))
    x = rng.normal(size=(4, 3))
    loss = dc.total(dc.square(dc.relu(dc.matmul(x, W))))
    loss.backward()
    first = W.grad.copy()
    loss.backward()
    np.testing.assert_allclose(W.grad, 2 * first)
    W.zero_grad()
    loss.backward()
    assert np.array_equal(W.grad, first)


def test_diamond_graph_visits_once():
    x = param([[2.0]])
    y = dc.add(dc.square(x), dc.scale(x, 3.0))  # x^2 + 3x
    dc.total(y).backward()
    assert x.grad[0, 0] == pytest.approx(7.0)


# -- adam -------------------------------------------------------------------

def test_adam_zero_grad_leaves_params():
    p = param([[1.0, -2.0]])
    opt = Adam([p])
    opt.step()
    np.testing.assert_array_equal(p.value, [[1.0, -2.0]])


def test_adam_first_step_moves_by_lr():
    p = param([[0.5]])
    st_ = AdamState()
    adam_step(st_, [p], [np.ones((1, 1))])
    # m_hat = v_hat = 1  ->  step = lr / (1 + eps)
    assert p.value[0, 0] == pytest.approx(0.5 - 1e-4 / (1 + 1e-8), abs=1e-15)
    assert st_.step == 1


def test_adam_identical_params_stay_identical():
    a, b = param([[1.0, 2.0]]), param([[1.0, 2.0]])
    opt = Adam([a, b], lr=1e-2)
    for i in range(5):
        g = np.array([[np.sin(i), np.cos(i)]])
        a.grad, b.grad = g.copy(), g.copy()
        opt.step()
    np.testing.assert_array_equal(a.value, b.value)
    assert opt.state.step == 5


def test_adam_shape_mismatch():
    with pytest.raises(dc.ShapeError):
        adam_step(AdamState(), [param([[1.0, 2.0]])], [np.ones((2, 1))])


def test_adam_weight_decay_pulls_toward_zero():
    p = param([[2.0]])
    adam_step(AdamState(lr=0.1, weight_decay=1.0), [p], [np.zeros((1, 1))])
    assert p.value[0, 0] < 2.0


def test_reflected_operators_with_arrays():
    W = param([[1.0, 2.0], [3.0, 4.0]])
    x = np.array([[1.0, 1.0]])
    out = x @ W
    assert isinstance(out, Tensor)
    np.testing.assert_array_equal(out.value, [[4, 6]])
    np.testing.assert_array_equal((x - out).value, [[-3, -5]])
    np.testing.assert_array_equal((x + out).value, [[5, 7]])
    dc.total(out).backward()
    np.testing.assert_array_equal(W.grad, [[1, 1], [1, 1]])
