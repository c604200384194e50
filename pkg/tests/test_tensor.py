import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import numeric_grad
from motionstitch.tensor import (
    Tensor, concat, cross, default_dtype, dropout, gelu, get_default_dtype, grad, layer_norm, matmul, no_grad,
    softmax, stack, where,
)


def loop_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for r in range(k):
                out[i, j] += a[i, r] * b[r, j]
    return out


def check_grad(fn, *shapes, seed=0, tol=1e-6):
    """Compare backward() with central differences for every input of ``fn``."""
    rng = np.random.default_rng(seed)
    xs = [rng.normal(size=s) for s in shapes]
    with default_dtype(np.float64):
        ts = [Tensor(x.copy(), requires_grad=True) for x in xs]
        fn(*ts).backward()
        for k, t in enumerate(ts):

            def f(v, k=k):
                args = [Tensor(v if j == k else xs[j]) for j in range(len(xs))]
                return float(fn(*args).data)

            num = numeric_grad(f, xs[k].copy())
            np.testing.assert_allclose(t.grad, num, rtol=tol, atol=tol)


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    with default_dtype(np.float64):
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, loop_matmul(a, b), atol=1e-12)


def test_matmul_shape_mismatch_raises():
    with pytest.raises(ValueError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_needs_matrices():
    with pytest.raises(ValueError):
        matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


def test_default_precision_is_float32():
    assert get_default_dtype() == np.float32
    assert Tensor([1.0, 2.0]).data.dtype == np.float32


def test_float32_graph_stays_float32():
    x = Tensor(np.ones((2, 4)), requires_grad=True)
    y = gelu(layer_norm(x * 3.0 + 1.0)).sum()
    y.backward()
    assert y.data.dtype == np.float32 and x.grad.dtype == np.float32


def test_default_dtype_context_restores():
    with default_dtype(np.float64):
        assert Tensor(1.0).data.dtype == np.float64
    assert Tensor(1.0).data.dtype == np.float32


@pytest.mark.parametrize(
    "fn,shapes",
    [
        (lambda a, b: (a * b + a / (b * b + 1.0) - b).sum(), [(3, 4), (3, 4)]),
        (lambda a, b: (a + b).sum(), [(3, 4), (4,)]),  # broadcasting
        (lambda a, b: (a * b).mean(), [(2, 1, 4), (3, 1)]),
        (lambda a, b: (a @ b).tanh().sum(), [(2, 3, 4), (4, 5)]),
        (lambda a: (a * a + 1.0).sqrt().log().sum(), [(5,)]),
        (lambda a: (a.exp() ** 2).sum(), [(2, 3)]),
        (lambda a: softmax(a, axis=-1)[..., 0].sum(), [(3, 5)]),
        (lambda a, g, b: (layer_norm(a, g, b) ** 2 * np.arange(6.0)).sum(), [(4, 6), (6,), (6,)]),
        (lambda a: gelu(a).sum(), [(10,)]),
        (lambda a, b: (cross(a, b) * np.array([1.0, 2.0, 3.0])).sum(), [(4, 3), (4, 3)]),
        (lambda a: a.reshape(6, 2).T[1].sum(), [(3, 4)]),
        (lambda a: a.transpose(2, 0, 1).swapaxes(0, 1)[0, 1].sum(), [(2, 3, 4)]),
        (lambda a: a[np.array([0, 2, 0])].sum(), [(3, 2)]),  # repeated fancy index accumulates
        (lambda a, b: concat([a, b], axis=1).sum(axis=1).sum(), [(2, 3), (2, 1)]),
        (lambda a, b: (stack([a, b], axis=0) ** 3).sum(), [(2, 2), (2, 2)]),
        (lambda a, b: where(np.array([True, False, True]), a, b).sum(), [(3,), (3,)]),
        (lambda a: (-a).relu().sum() + (1.0 - a).sum() * 0.5, [(7,)]),
        (lambda a: (2.0 / (a * a + 1.0)).sum(), [(4,)]),
    ],
)
def test_gradients_match_finite_differences(fn, shapes):
    check_grad(fn, *shapes)


def test_grad_function_returns_zeros_for_unused():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    ga, gb = grad((a * 2.0).sum(), [a, b])
    np.testing.assert_allclose(ga, 2.0)
    np.testing.assert_allclose(gb, 0.0)


def test_gradients_accumulate_across_backward_calls():
    a = Tensor(np.ones(2), requires_grad=True)
    (a * 3.0).sum().backward()
    (a * 3.0).sum().backward()
    np.testing.assert_allclose(a.grad, 6.0)
    a.zero_grad()
    assert a.grad is None


def test_shared_subexpression_counts_both_paths():
    with default_dtype(np.float64):
        a = Tensor(np.array([2.0]), requires_grad=True)
        b = a * a
        (b + b * a).sum().backward()
        np.testing.assert_allclose(a.grad, [2 * 2.0 + 3 * 4.0])


def test_backward_requires_scalar():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (a * 2.0).backward()


def test_no_grad_records_nothing():
    a = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        b = (a * 2.0).sum()
    assert not b.requires_grad
    with pytest.raises(ValueError):
        b.backward()


def test_deep_chain_does_not_recurse():
    a = Tensor(np.ones(1), requires_grad=True)
    x = a
    for _ in range(5000):
        x = x + 0.0
    x.sum().backward()
    np.testing.assert_allclose(a.grad, 1.0)


def test_dropout_inverted_scaling_and_eval_identity(rng):
    x = Tensor(np.ones(100000))
    y = dropout(x, 0.25, rng, training=True)
    assert abs(y.data.mean() - 1.0) < 0.02
    np.testing.assert_allclose(np.unique(y.data), [0.0, 1 / 0.75], rtol=1e-6)
    assert dropout(x, 0.25, None, training=False) is x
    with pytest.raises(ValueError):
        dropout(x, 0.25, None, training=True)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)), elements=st.floats(-50, 50)))
def test_softmax_rows_are_distributions(x):
    with default_dtype(np.float64):
        p = softmax(Tensor(x)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 8)), elements=st.floats(-1e3, 1e3)))
def test_layer_norm_standardises(x):
    if np.any(x.std(-1) < 1e-3):
        return
    with default_dtype(np.float64):
        y = layer_norm(Tensor(x)).data
    np.testing.assert_allclose(y.mean(-1), 0.0, atol=1e-9)
    np.testing.assert_allclose(y.var(-1), x.var(-1) / (x.var(-1) + 1e-5), rtol=1e-9)
