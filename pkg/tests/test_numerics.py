import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtseqpv.numerics import (ArgumentError, DimensionError, Param, ProtocolError, Rng, Tensor,
                              activation, concat, dropout_mask, finite_difference_gradient,
                              getitem, log, lstm_sequence, lstm_update, matmul, mul, no_grad,
                              relative_error, reshape, scale, sigmoid, softmax, softmax_op, stack,
                              sub, take_rows, tanh, tensor_sum, xavier_init)


def test_matmul_identity_and_hand_sum():
    m = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(matmul(np.eye(3), m).value, m)
    np.testing.assert_array_equal(matmul(np.array([[1.0, 2], [3, 4]]), np.array([[1.0], [1]])).value,
                                  [[3], [7]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    want = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(4):
                want[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(matmul(a, b).value - want)) < 1e-12


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 1\)"):
        matmul(np.zeros((2, 3)), np.zeros((4, 1)))


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0.0, 0, 0]), [1 / 3] * 3)
    np.testing.assert_allclose(softmax([2.0, 0]), [0.8808, 0.1192], atol=1e-4)
    out = softmax([1000.0, 0])
    assert np.all(np.isfinite(out)) and out[0] == pytest.approx(1.0) and out[1] < 1e-300


@pytest.mark.parametrize("bad", [[], [np.nan, 1.0], [np.inf]])
def test_softmax_rejects_bad_input(bad):
    with pytest.raises(ArgumentError):
        softmax(bad)


def test_activations():
    assert activation([0.0], "tanh")[0] == 0.0
    assert activation([0.0], "sigmoid")[0] == 0.5
    assert activation([3.0], "sigmoid")[0] == pytest.approx(0.9526, abs=1e-4)
    x = np.random.default_rng(1).normal(size=50)
    np.testing.assert_array_equal(activation(-x, "tanh"), -activation(x, "tanh"))
    with pytest.raises(ArgumentError):
        activation([1.0], "relu")


def test_xavier_bounds_determinism_and_mean():
    w = xavier_init(100, 100, Rng(5))
    assert np.all(np.abs(w) <= np.sqrt(6 / 200))
    np.testing.assert_array_equal(w, xavier_init(100, 100, Rng(5)))
    assert abs(xavier_init(200, 200, Rng(9)).mean()) < 0.01
    with pytest.raises(ArgumentError):
        xavier_init(0, 3, Rng(0))


def test_dropout_mask():
    np.testing.assert_array_equal(dropout_mask(7, 0.0, Rng(0)), np.ones(7))
    m = dropout_mask(10000, 0.5, Rng(3))
    assert abs(np.mean(m > 0) - 0.5) < 0.02
    assert set(np.unique(m)) <= {0.0, 2.0}
    with pytest.raises(ArgumentError):
        dropout_mask(3, 1.0, Rng(0))


def test_rng_streams_are_reproducible():
    a, b = Rng(11), Rng(11)
    assert a.permutation(20).tolist() == b.permutation(20).tolist()
    assert a.spawn().random() == b.spawn().random()


def test_fd_quadratic_and_tanh():
    theta = Param(np.array([0.3, -1.2, 2.0]), "p", "shared")
    half_sq = lambda: 0.5 * float(np.sum(theta.value ** 2))
    np.testing.assert_allclose(finite_difference_gradient(half_sq, [theta])["p"], theta.value, atol=1e-7)
    sum_tanh = lambda: float(np.sum(np.tanh(theta.value)))
    np.testing.assert_allclose(finite_difference_gradient(sum_tanh, [theta])["p"],
                               1 - np.tanh(theta.value) ** 2, atol=1e-6)


def test_fd_rejects_nondeterministic_loss():
    theta = Param(np.zeros(2), "p", "shared")
    gen = np.random.default_rng(0)
    with pytest.raises(ProtocolError):
        finite_difference_gradient(lambda: gen.random(), [theta])


def test_fd_probes_selected_indices_only():
    theta = Param(np.array([1.0, 2.0, 3.0]), "p", "shared")
    g = finite_difference_gradient(lambda: float(np.sum(theta.value ** 2)), [theta], indices={"p": [1]})["p"]
    assert np.isnan(g[0]) and np.isnan(g[2]) and g[1] == pytest.approx(4.0)
    assert relative_error(np.array([0.0, 4.0, 0.0]), g) < 1e-9


def _check_grad(build, shapes, seed=0, tol=1e-6):
    rng = np.random.default_rng(seed)
    params = [Param(rng.normal(size=s) * 0.7, f"p{i}", "shared") for i, s in enumerate(shapes)]
    weights = None

    def loss():
        nonlocal weights
        out = build(*params)
        if weights is None:
            weights = np.random.default_rng(seed + 1).normal(size=out.shape)
        return tensor_sum(mul(out, weights))

    for p in params:
        p.zero_grad()
    loss().backward()
    with no_grad():
        num = finite_difference_gradient(lambda: loss().value, params)
    for p in params:
        assert relative_error(p.grad, num[p.name]) < tol, p.name


@pytest.mark.parametrize("build,shapes", [
    (lambda a, b: matmul(a, b), [(3, 4), (4, 2)]),
    (lambda a, b: matmul(a, b), [(4,), (4, 2)]),
    (lambda a, b: sub(mul(a, b), tanh(a)), [(3,), (3,)]),
    (lambda a: sigmoid(scale(a, 2.0)), [(5,)]),
    (lambda a: log(sigmoid(a)), [(4,)]),
    (lambda a: softmax_op(a), [(6,)]),
    (lambda a, b: concat([a, b], axis=-1), [(2, 3), (2, 2)]),
    (lambda a, b: stack([a, b]), [(3,), (3,)]),
    (lambda a: getitem(reshape(a, (3, 4)), (slice(None), slice(1, 3))), [(12,)]),
    (lambda a: take_rows(a, [2, 0, 2]), [(4, 3)]),
])
def test_op_gradients(build, shapes):
    _check_grad(build, shapes)


def test_lstm_update_gradient():
    _check_grad(lambda z, c, h: lstm_update(z, c, h, mask=np.array([[1.0], [0.0]])),
                [(2, 12), (2, 3), (2, 3)])


@pytest.mark.parametrize("reverse", [False, True])
def test_lstm_sequence_gradient(reverse):
    mask = np.array([[1, 1], [1, 1], [1, 0], [1, 0]], dtype=bool)
    _check_grad(lambda p, w: lstm_sequence(reshape(p, (4, 2, 12)), w, mask=mask, reverse=reverse),
                [(96,), (3, 12)])


def test_lstm_sequence_matches_stepwise_updates():
    rng = np.random.default_rng(4)
    proj, w_h = rng.normal(size=(5, 8)), rng.normal(size=(2, 8))
    h, c = np.zeros(2), np.zeros(2)
    rows = []
    for t in range(5):
        hc = lstm_update(proj[t] + h @ w_h, c).value
        h, c = hc[:2], hc[2:]
        rows.append(h)
    np.testing.assert_allclose(lstm_sequence(proj, w_h).value, np.array(rows), atol=1e-14)


def test_gradients_accumulate_over_two_backward_calls():
    p = Param(np.array([1.0, 2.0]), "p", "shared")
    tensor_sum(mul(p, p)).backward()
    tensor_sum(mul(p, p)).backward()
    np.testing.assert_array_equal(p.grad, 4 * p.value)


def test_no_grad_records_nothing():
    p = Param(np.ones(3), "p", "shared")
    with no_grad():
        out = tensor_sum(mul(p, p))
    assert not out.requires_grad and out.parents == ()


def test_backward_without_seed_needs_scalar():
    with pytest.raises(ArgumentError):
        Tensor(np.ones(2)).backward()


def test_param_group_is_validated():
    with pytest.raises(ArgumentError):
        Param(np.zeros(1), "x", "nowhere")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
def test_softmax_is_a_distribution(v):
    out = softmax(v)
    assert np.all(out >= 0) and abs(out.sum() - 1) < 1e-12
