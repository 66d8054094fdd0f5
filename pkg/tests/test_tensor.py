from __future__ import annotations

import numpy as np
import pytest

from autodiff.gradcheck import check_gradients, relative_error
from autodiff.tensor import (
    Tape,
    Tensor,
    add_bias,
    backward,
    gelu,
    matmul,
    reduce,
    reshape,
    scale,
    set_debug_finite,
    sum_all,
    transpose_last2,
    weighted_sum,
)
from utils.errors import ContractError, NonFiniteError, ShapeError


def test_ops_outside_a_tape_are_not_recorded():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    out = sum_all(a)
    assert not out.requires_grad
    with pytest.raises(ContractError):
        backward(out)


def test_inputs_without_requires_grad_are_not_recorded():
    with Tape() as tape:
        out = sum_all(Tensor(np.ones(4)))
    assert len(tape) == 0
    assert not out.requires_grad


def test_backward_needs_a_scalar_loss():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        y = scale(x, 2.0)
        with pytest.raises(ContractError):
            tape.backward(y)


def test_backward_rejects_a_loss_from_another_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape():
        loss = sum_all(x)
    with Tape() as other:
        with pytest.raises(ContractError):
            other.backward(loss)


def test_gradients_accumulate_until_zeroed():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True, dtype=np.float64)
    for _ in range(2):
        with Tape() as tape:
            tape.backward(sum_all(scale(x, 3.0)))
    np.testing.assert_array_equal(x.grad, np.full(3, 6.0))
    x.zero_grad()
    assert x.grad is None


def test_reused_input_gets_both_contributions():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True, dtype=np.float64)
    with Tape() as tape:
        loss = sum_all(matmul(x, x))
        tape.backward(loss)
    ones = np.ones((2, 2))
    expected = ones @ x.data.T + x.data.T @ ones
    np.testing.assert_allclose(x.grad, expected)


def test_intermediate_tensors_receive_grad():
    x = Tensor(np.ones(3), requires_grad=True, dtype=np.float64)
    with Tape() as tape:
        h = scale(x, 2.0)
        tape.backward(sum_all(h))
    np.testing.assert_array_equal(h.grad, np.ones(3))


def test_matmul_shape_errors_name_the_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeError):
        matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


def test_reshape_infers_minus_one_and_rejects_bad_sizes():
    x = Tensor(np.arange(12.0))
    assert reshape(x, (3, -1)).shape == (3, 4)
    with pytest.raises(ShapeError):
        reshape(x, (5, -1))
    with pytest.raises(ShapeError):
        reshape(x, (2, 2))


def test_max_splits_gradient_across_ties():
    x = Tensor(np.array([[1.0, 3.0, 3.0], [0.0, -1.0, 2.0]]), requires_grad=True, dtype=np.float64)
    with Tape() as tape:
        tape.backward(sum_all(reduce(x, 1, "max")))
    np.testing.assert_array_equal(x.grad, [[0.0, 0.5, 0.5], [0.0, 0.0, 1.0]])


def test_reduce_axis_out_of_range():
    with pytest.raises(ShapeError):
        reduce(Tensor(np.ones((2, 2))), 2)


@pytest.mark.parametrize("kind", ["sum", "mean", "max"])
def test_reducing_the_only_axis_gives_a_scalar(kind):
    out = reduce(Tensor([1.0, 2.0, 3.0]), 0, kind)
    assert out.shape == ()
    assert Tensor(np.float64(2.5)).shape == ()


def test_sum_of_vector_has_unit_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = reduce(x, 0, "sum")
        tape.backward(loss)
    assert loss.item() == pytest.approx(6.0)
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])


def test_scalar_losses_backpropagate(rng):
    x = Tensor(rng.normal(size=(2, 3)), requires_grad=True, dtype=np.float64)
    w = rng.normal(size=(2, 3))
    with Tape() as tape:
        loss = weighted_sum(x, w)
        assert loss.shape == ()
        tape.backward(loss)
    np.testing.assert_allclose(x.grad, w, rtol=1e-12)

    x.zero_grad()
    with Tape() as tape:
        loss = reduce(reshape(x, (6,)), 0, "mean")
        tape.backward(loss)
    np.testing.assert_allclose(x.grad, np.full((2, 3), 1.0 / 6.0), rtol=1e-12)


def test_gelu_matches_erf_definition():
    from scipy.special import erf

    x = np.linspace(-4, 4, 17)
    out = gelu(Tensor(x, dtype=np.float64)).data
    np.testing.assert_allclose(out, 0.5 * x * (1 + erf(x / np.sqrt(2))), rtol=1e-14, atol=1e-15)


def test_primitive_gradients_pass_finite_differences(rng):
    w = rng.standard_normal((2, 4, 5))
    errors = check_gradients(
        lambda t: weighted_sum(gelu(add_bias(matmul(t["x"], t["w"]), t["b"])), w),
        {"x": rng.standard_normal((2, 4, 3)), "w": rng.standard_normal((3, 5)), "b": rng.standard_normal(5)},
    )
    assert max(errors.values()) <= 1e-6


def test_layout_and_reduction_gradients(rng):
    w = rng.standard_normal((3, 2))
    errors = check_gradients(
        lambda t: weighted_sum(reduce(reshape(transpose_last2(t["x"]), (3, 2, 2)), 2, "mean"), w),
        {"x": rng.standard_normal((4, 3))},
    )
    assert errors["x"] <= 1e-6


def test_relative_error_is_scale_free():
    a = np.array([1000.0, 2000.0])
    assert relative_error(a, a * (1 + 1e-6)) == pytest.approx(1e-6, rel=1e-3)
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


def test_debug_mode_flags_non_finite_results():
    old = set_debug_finite(True)
    try:
        with pytest.raises(NonFiniteError, match="scale"):
            scale(Tensor(np.array([1e308]), dtype=np.float64), 10.0)
    finally:
        set_debug_finite(old)
