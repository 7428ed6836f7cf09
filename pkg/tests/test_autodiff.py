import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnqa import autodiff as ad


def setup_function(_):
    ad.clear_tape()


def test_softmax_symmetry():
    out = ad.softmax(ad.tensor([0.0, 0.0]))
    np.testing.assert_allclose(out.data, [0.5, 0.5])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    x = ad.tensor(rng.normal(size=(4, 7)) * 10)
    y = ad.softmax(x).data
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-9)
    assert (y >= 0).all() and (y <= 1).all()


def test_softmax_rejects_non_finite():
    with pytest.raises(ValueError):
        ad.softmax(ad.tensor([1.0, float("nan")]))


def test_layer_norm_constant_vector_is_zero():
    x = ad.tensor([3.0, 3.0, 3.0, 3.0])
    gain = ad.tensor(np.ones(4))
    bias = ad.tensor(np.zeros(4))
    out = ad.layer_norm(x, gain, bias)
    np.testing.assert_allclose(out.data, 0.0, atol=1e-6)


def test_cross_entropy_uniform_logits():
    # closed form: -log(1/3)
    loss = ad.cross_entropy(ad.tensor([1.0, 1.0, 1.0]), 2)
    assert loss.item() == pytest.approx(math.log(3.0), abs=1e-12)


def test_matmul_identity():
    a = ad.tensor([[1.0, 2.0], [3.0, 4.0]])
    out = ad.matmul(a, ad.tensor(np.eye(2)))
    np.testing.assert_array_equal(out.data, a.data)


def test_matmul_shape_mismatch_names_shapes():
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        ad.matmul(ad.tensor(np.zeros((2, 3))), ad.tensor(np.zeros((2, 2))))


def test_backward_linear():
    x = ad.tensor([1.0, 2.0], requires_grad=True)
    loss = ad.tsum(ad.scale(x, 3.0))
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, [3.0, 3.0])


def test_backward_cross_entropy_closed_form():
    logits = ad.tensor([0.2, -1.0, 0.5], requires_grad=True)
    loss = ad.cross_entropy(logits, 1)
    ad.backward(loss)
    z = logits.data - logits.data.max()
    probs = np.exp(z) / np.exp(z).sum()
    expected = probs.copy()
    expected[1] -= 1.0
    np.testing.assert_allclose(logits.grad, expected, atol=1e-12)


def test_backward_requires_scalar():
    x = ad.tensor([1.0, 2.0], requires_grad=True)
    y = ad.scale(x, 2.0)
    with pytest.raises(ad.ShapeError):
        ad.backward(y)


def test_double_backward_raises():
    x = ad.tensor([1.0, 2.0], requires_grad=True)
    loss = ad.tsum(x)
    ad.backward(loss)
    with pytest.raises(ad.TapeError):
        ad.backward(loss)


def test_grad_accumulates_on_reuse():
    x = ad.tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    loss = ad.tsum(ad.matmul(x, x))
    ad.backward(loss)
    # d/dx sum(x @ x) via finite differences, independently
    report = ad.grad_check(lambda t: ad.tsum(ad.matmul(t, t)), x, h=1e-5, tol=1e-6)
    assert report.passed, report


def test_grad_check_sum_of_squares():
    rng = np.random.default_rng(3)
    x = ad.tensor(rng.normal(size=3), requires_grad=True)
    report = ad.grad_check(lambda t: ad.tsum(ad.matmul(ad.reshape(t, (1, 3)), ad.reshape(t, (3, 1)))), x)
    assert report.max_rel_error < 1e-6


def test_grad_check_matmul_softmax_chain():
    rng = np.random.default_rng(4)
    w = ad.tensor(rng.normal(size=(3, 3)))
    v = ad.tensor(rng.normal(size=(3, 1)))
    x = ad.tensor(rng.normal(size=(2, 3)), requires_grad=True)

    def f(t):
        return ad.tsum(ad.matmul(ad.softmax(ad.matmul(t, w)), v))

    report = ad.grad_check(f, x, h=1e-5)
    assert report.max_rel_error < 1e-4


def test_grad_check_linear_is_exact():
    x = ad.tensor([1.0, -2.0, 0.5], requires_grad=True)
    report = ad.grad_check(lambda t: ad.tsum(ad.scale(t, 2.5)), x)
    assert report.max_rel_error < 1e-9


@pytest.mark.parametrize(
    "name,f",
    [
        ("matmul", lambda t, aux: ad.tsum(ad.matmul(t, aux["w"]))),
        ("add", lambda t, aux: ad.tsum(ad.add(t, aux["b"]))),
        ("add_bcast", lambda t, aux: ad.tsum(ad.add(t, aux["row"]))),
        ("scale", lambda t, aux: ad.tsum(ad.scale(t, -1.7))),
        ("relu", lambda t, aux: ad.tsum(ad.relu(t))),
        ("gelu", lambda t, aux: ad.tsum(ad.gelu(t))),
        ("softmax", lambda t, aux: ad.tsum(ad.matmul(ad.softmax(t), aux["w"]))),
        ("layer_norm", lambda t, aux: ad.tsum(ad.matmul(ad.layer_norm(t, aux["g"], aux["bb"]), aux["w"]))),
        ("reshape", lambda t, aux: ad.tsum(ad.reshape(t, (4, 3)))),
        ("transpose", lambda t, aux: ad.tsum(ad.matmul(ad.transpose(t, (1, 0)), aux["w34"]))),
        ("index_last", lambda t, aux: ad.tsum(ad.index_last(t, 1))),
        ("dropout", lambda t, aux: ad.tsum(ad.dropout(t, 0.5, True, 99))),
    ],
)
def test_kernel_gradients(name, f):
    rng = np.random.default_rng(11)
    x = ad.tensor(rng.normal(size=(3, 4)) + 0.3, requires_grad=True)  # offset keeps relu off its kink
    aux = {
        "w": ad.tensor(rng.normal(size=(4, 2))),
        "w34": ad.tensor(rng.normal(size=(3, 2))),
        "b": ad.tensor(rng.normal(size=(3, 4))),
        "row": ad.tensor(rng.normal(size=(4,))),
        "g": ad.tensor(rng.normal(size=(4,)) + 1.0),
        "bb": ad.tensor(rng.normal(size=(4,))),
    }
    report = ad.grad_check(lambda t: f(t, aux), x, h=1e-5, tol=1e-4)
    assert report.passed, f"{name}: {report}"


def test_layer_norm_param_gradients():
    rng = np.random.default_rng(12)
    x = ad.tensor(rng.normal(size=(2, 5)))
    gain = ad.tensor(rng.normal(size=5) + 1.0, requires_grad=True)
    bias = ad.tensor(rng.normal(size=5), requires_grad=True)
    w = ad.tensor(rng.normal(size=(5, 1)))

    rep_g = ad.grad_check(lambda t: ad.tsum(ad.matmul(ad.layer_norm(x, t, bias), w)), gain)
    assert rep_g.passed
    rep_b = ad.grad_check(lambda t: ad.tsum(ad.matmul(ad.layer_norm(x, gain, t), w)), bias)
    assert rep_b.passed


def test_embedding_lookup_gradient():
    table = ad.tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    ids = np.array([[0, 2], [2, 3]])
    out = ad.embedding_lookup(table, ids)
    np.testing.assert_array_equal(out.data, table.data[ids])
    ad.backward(ad.tsum(out))
    expected = np.zeros((4, 3))
    expected[0] += 1
    expected[2] += 2
    expected[3] += 1
    np.testing.assert_array_equal(table.grad, expected)


def test_embedding_lookup_rejects_bad_ids():
    table = ad.tensor(np.zeros((4, 3)))
    with pytest.raises(ad.ShapeError):
        ad.embedding_lookup(table, [0, 4])
    with pytest.raises(ad.ShapeError):
        ad.embedding_lookup(table, [-1])


def test_dropout_identity_cases():
    x = ad.tensor([1.0, 2.0, 3.0])
    assert ad.dropout(x, 0.0, True, 1) is x
    assert ad.dropout(x, 0.5, False, 1) is x


def test_dropout_deterministic_per_seed():
    x = ad.tensor(np.ones(1000))
    a = ad.dropout(x, 0.25, True, 7).data
    b = ad.dropout(x, 0.25, True, 7).data
    c = ad.dropout(x, 0.25, True, 8).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    # inverted scaling keeps the expectation near 1
    assert abs(a.mean() - 1.0) < 0.1


@settings(max_examples=100, deadline=None)
@given(
    rows=st.integers(1, 4),
    cols=st.integers(1, 4),
    batch=st.integers(1, 3),
    seed=st.integers(0, 10_000),
)
def test_add_broadcast_matches_tiling(rows, cols, batch, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(batch, rows, cols))
    b = rng.normal(size=(rows, cols))
    out = ad.add(ad.tensor(a), ad.tensor(b)).data
    tiled = a + np.tile(b, (batch, 1, 1))
    np.testing.assert_allclose(out, tiled)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), rows=st.integers(1, 5), cols=st.integers(2, 8))
def test_softmax_distribution_property(seed, rows, cols):
    rng = np.random.default_rng(seed)
    y = ad.softmax(ad.tensor(rng.normal(size=(rows, cols)) * 5)).data
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-9)
    assert ((y >= 0) & (y <= 1)).all()


def test_batched_cross_entropy_matches_rows():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(3, 6))
    targets = np.array([1, 4, 0])
    batched = ad.cross_entropy(ad.tensor(logits), targets).data
    single = [ad.cross_entropy(ad.tensor(logits[i]), int(targets[i])).item() for i in range(3)]
    np.testing.assert_allclose(batched, single, atol=1e-12)
