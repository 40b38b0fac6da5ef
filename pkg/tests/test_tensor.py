import gc
import math
import weakref

import numpy as np
import pytest

from seqdiff.rng import RngStream
from seqdiff.tensor import (ShapeMismatchError, Tape, Tensor, add, backward,
                            cross_entropy_logits, cross_entropy_rows, dropout,
                            embedding_lookup, gather_rows, layer_norm, matmul,
                            mean_all, mul, relu, reshape, sample_gaussian,
                            sigmoid, softmax, sum_all, tanh, transpose)
from conftest import finite_diff_grad, max_rel_error


def test_matmul_identity():
    eye = Tensor(np.eye(2))
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(eye, m).data, m.data)


def test_matmul_hand_product():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal(matmul(a, b).data, [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeMismatchError) as err:
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))
    assert "(2, 3)" in str(err.value) and "(2, 2)" in str(err.value)


def test_softmax_uniform_on_equal_logits():
    out = softmax(Tensor([0.0, 0.0, 0.0]), axis=-1)
    assert np.allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_softmax_hand_case():
    out = softmax(Tensor([0.0, math.log(2.0)]), axis=-1)
    assert np.allclose(out.data, [1 / 3, 2 / 3], atol=1e-15)


def test_softmax_large_logits_no_overflow():
    out = softmax(Tensor([1000.0, 1000.0]), axis=-1)
    assert np.allclose(out.data, [0.5, 0.5])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(7, 11)) * 10)
    out = softmax(x, axis=1)
    assert np.all(out.data >= 0)
    assert np.abs(out.data.sum(axis=1) - 1.0).max() < 1e-12


def test_softmax_invalid_axis():
    with pytest.raises(ValueError):
        softmax(Tensor([1.0, 2.0]), axis=2)


def test_layer_norm_identity_on_standardized_input():
    x = np.array([[-1.0, 1.0, -1.0, 1.0]])  # zero mean, unit variance
    out = layer_norm(Tensor(x), Tensor(np.ones(4)), Tensor(np.zeros(4)), eps=1e-12)
    assert np.allclose(out.data, x, atol=1e-6)


def test_layer_norm_constant_rows_become_zero():
    out = layer_norm(Tensor(np.full((3, 5), 2.7)), Tensor(np.ones(5)),
                     Tensor(np.zeros(5)))
    assert np.allclose(out.data, 0.0)


def test_layer_norm_pre_affine_rows_centered():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(6, 9)) * 5)
    out = layer_norm(x, Tensor(np.ones(9)), Tensor(np.zeros(9)))
    assert np.abs(out.data.mean(axis=-1)).max() < 1e-9


def test_layer_norm_shape_check():
    with pytest.raises(ShapeMismatchError):
        layer_norm(Tensor(np.zeros((2, 4))), Tensor(np.ones(3)), Tensor(np.zeros(4)))


def test_cross_entropy_uniform_logits():
    loss = cross_entropy_logits(Tensor(np.zeros(100)), 7)
    assert loss.item() == pytest.approx(math.log(100), abs=1e-12)


def test_cross_entropy_hand_case():
    loss = cross_entropy_logits(Tensor([10.0, 0.0]), 0)
    assert loss.item() == pytest.approx(math.log(1 + math.exp(-10)), rel=1e-12)


def test_cross_entropy_target_out_of_range():
    with pytest.raises(ValueError):
        cross_entropy_logits(Tensor([1.0, 2.0, 3.0]), 5)


def test_cross_entropy_rows_ignored_column_gets_no_probability():
    logits = Tensor(np.array([[5.0, 1.0, 2.0], [9.0, 3.0, 3.0]]), requires_grad=True)
    with Tape() as tape:
        loss = cross_entropy_rows(logits, np.array([1, 2]), ignore_col=0)
        backward(tape, loss)
    assert np.all(logits.grad[:, 0] == 0.0)
    expected = np.mean([math.log(1 + math.e), math.log(2)])
    assert loss.item() == pytest.approx(expected, rel=1e-12)


def test_backward_of_sum_is_ones():
    x = Tensor(np.random.default_rng(2).normal(size=(3, 4)), requires_grad=True)
    with Tape() as tape:
        backward(tape, sum_all(x))
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_backward_of_dot_is_2x():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    with Tape() as tape:
        backward(tape, sum_all(mul(x, x)))
    assert np.allclose(x.grad, 2 * x.data)


def test_backward_rejects_non_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = mul(x, x)
        with pytest.raises(ValueError):
            backward(tape, y)


def test_backward_accumulates_shared_inputs():
    x = Tensor(np.array([2.0]), requires_grad=True)
    with Tape() as tape:
        y = add(mul(x, x), x)  # x^2 + x -> dy/dx = 2x + 1
        backward(tape, sum_all(y))
    assert np.allclose(x.grad, [5.0])


def test_tape_clear_releases_intermediates():
    x = Tensor(np.ones((4, 4)), requires_grad=True)
    tape = Tape()
    with tape:
        y = mul(x, x)
    ref = weakref.ref(y)
    del y
    gc.collect()
    assert ref() is not None  # the tape still holds it
    tape.clear()
    gc.collect()
    assert ref() is None
    assert len(tape) == 0


@pytest.mark.parametrize("op,shapes", [
    ("matmul", ((3, 4), (4, 2))),
    ("matmul_batched", ((2, 3, 4), (2, 4, 5))),
    ("add_broadcast", ((5, 3, 4), (4,))),
    ("mul_broadcast", ((5, 3, 4), (5, 1, 4))),
    ("softmax", ((4, 6),)),
    ("layer_norm", ((5, 8),)),
    ("relu", ((4, 4),)),
    ("sigmoid", ((3, 5),)),
    ("tanh", ((3, 5),)),
    ("transpose", ((2, 3, 4),)),
    ("reshape", ((3, 4),)),
    ("mean", ((6, 2),)),
])
def test_gradients_match_finite_differences(op, shapes):
    rng = np.random.default_rng(hash(op) % 2**32)
    tensors = [Tensor(rng.normal(size=s) * 2, requires_grad=True) for s in shapes]

    def forward():
        if op == "matmul" or op == "matmul_batched":
            out = matmul(tensors[0], tensors[1])
        elif op == "add_broadcast":
            out = add(tensors[0], tensors[1])
        elif op == "mul_broadcast":
            out = mul(tensors[0], tensors[1])
        elif op == "softmax":
            out = softmax(tensors[0], axis=-1)
        elif op == "layer_norm":
            gain = Tensor(np.linspace(0.5, 1.5, 8))
            bias = Tensor(np.zeros(8))
            out = layer_norm(tensors[0], gain, bias)
        elif op == "relu":
            out = relu(tensors[0])
        elif op == "sigmoid":
            out = sigmoid(tensors[0])
        elif op == "tanh":
            out = tanh(tensors[0])
        elif op == "transpose":
            out = transpose(tensors[0], (2, 0, 1))
        elif op == "reshape":
            out = reshape(tensors[0], (2, 6))
        elif op == "mean":
            out = mean_all(tensors[0])
        # weight the output so the pseudo-loss is not permutation-blind
        w = np.linspace(-1.0, 1.0, out.size).reshape(out.shape)
        return sum_all(mul(out, Tensor(w)))

    with Tape() as tape:
        backward(tape, forward())
    for t in tensors:
        numeric = finite_diff_grad(lambda: forward().item(), t)
        assert max_rel_error(t.grad, numeric) < 1e-7


def test_layer_norm_gain_bias_gradients():
    rng = np.random.default_rng(9)
    x = Tensor(rng.normal(size=(4, 6)))
    gain = Tensor(rng.normal(size=6), requires_grad=True)
    bias = Tensor(rng.normal(size=6), requires_grad=True)

    def forward():
        out = layer_norm(x, gain, bias)
        w = np.linspace(0.3, 1.7, out.size).reshape(out.shape)
        return sum_all(mul(out, Tensor(w)))

    with Tape() as tape:
        backward(tape, forward())
    for t in (gain, bias):
        numeric = finite_diff_grad(lambda: forward().item(), t)
        assert max_rel_error(t.grad, numeric) < 1e-7


def test_embedding_lookup_scatter_gradient():
    table = Tensor(np.random.default_rng(3).normal(size=(6, 4)), requires_grad=True)
    idx = np.array([[1, 1, 5], [0, 2, 1]])
    with Tape() as tape:
        out = embedding_lookup(table, idx)
        backward(tape, sum_all(out))
    # row 1 appears three times, rows 0/2/5 once, rows 3/4 never
    assert np.allclose(table.grad[1], 3.0)
    assert np.allclose(table.grad[0], 1.0)
    assert np.allclose(table.grad[3], 0.0)


def test_embedding_lookup_bounds():
    table = Tensor(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        embedding_lookup(table, np.array([4]))


def test_gather_rows_picks_and_scatters():
    x = Tensor(np.arange(24, dtype=float).reshape(2, 3, 4), requires_grad=True)
    pos = np.array([2, 0])
    with Tape() as tape:
        out = gather_rows(x, pos)
        assert np.array_equal(out.data, x.data[[0, 1], pos])
        backward(tape, sum_all(out))
    assert np.allclose(x.grad[0, 2], 1.0) and np.allclose(x.grad[1, 0], 1.0)
    assert x.grad.sum() == 8.0


def test_dropout_eval_mode_is_identity():
    x = Tensor(np.ones((3, 3)))
    assert dropout(x, 0.5, RngStream(0), train=False) is x


def test_dropout_preserves_expected_scale():
    rng = RngStream(4)
    x = Tensor(np.ones((200, 200)))
    out = dropout(x, 0.3, rng, train=True)
    kept = out.data != 0
    assert abs(kept.mean() - 0.7) < 0.01
    assert np.allclose(out.data[kept], 1.0 / 0.7)


def test_cross_entropy_rows_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    logits = Tensor(rng.normal(size=(3, 7)), requires_grad=True)
    targets = np.array([2, 1, 6])

    def forward():
        return cross_entropy_rows(logits, targets, ignore_col=0).item()

    with Tape() as tape:
        backward(tape, cross_entropy_rows(logits, targets, ignore_col=0))
    numeric = finite_diff_grad(forward, logits)
    assert max_rel_error(logits.grad, numeric) < 1e-7


def test_sample_gaussian_requires_nonnegative_std():
    with pytest.raises(ValueError):
        sample_gaussian(RngStream(0), (3,), 0.0, -1.0)


def test_sample_gaussian_std_zero_is_constant():
    out = sample_gaussian(RngStream(0), (5,), mean=2.5, std=0.0)
    assert np.array_equal(out.data, np.full(5, 2.5))


def test_sample_gaussian_deterministic_per_seed():
    a = sample_gaussian(RngStream(99), (4, 4))
    b = sample_gaussian(RngStream(99), (4, 4))
    assert np.array_equal(a.data, b.data)


def test_sample_gaussian_monte_carlo_moments():
    out = sample_gaussian(RngStream(7), (100_000,))
    assert -0.02 < out.data.mean() < 0.02
    assert 0.99 < out.data.std() < 1.01


def test_ops_outside_tape_do_not_track():
    x = Tensor(np.ones(3), requires_grad=True)
    y = mul(x, x)
    assert not y.requires_grad


def test_backward_diamond_graph_visits_nodes_once():
    # y feeds two consumers; its node must run after both, exactly once:
    # loss = sum((y + c) + 2y) with y = x*x  ->  d/dx = 6x
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    with Tape() as tape:
        y = mul(x, x)
        a = add(y, Tensor(np.ones(2)))
        b = mul(y, Tensor(np.full(2, 2.0)))
        backward(tape, sum_all(add(a, b)))
    assert np.allclose(x.grad, 6 * x.data)
