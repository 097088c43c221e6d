import doctest

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from nbeatsp import tensor
from nbeatsp.exceptions import DimensionError
from nbeatsp.tensor import (Tensor, affine, backward, concat, div, getitem, guarded_div, mask, matmul, mean,
                            mul, no_grad, pad, parameter, relu, reshape, stack, sub, tabs, transpose, tsum)

from conftest import central_difference


def check_grad(build, *arrays, tol=1e-6):
    """Compare backward() with central differences for every entry of every input."""
    params = [parameter(a.copy()) for a in arrays]
    grads = backward(build(*params))
    for p in params:
        for idx in np.ndindex(p.shape):
            fd = central_difference(lambda: float(build(*params).data.sum()), p.data, idx)
            np.testing.assert_allclose(grads[p][idx], fd, rtol=tol, atol=tol)


def test_module_doctest():
    assert doctest.testmod(tensor).failed == 0


class TestForward:
    def test_affine_example(self):
        y = affine(Tensor([[1.0, 2.0]]), Tensor([[1.0], [1.0]]), Tensor([0.5]))
        np.testing.assert_array_equal(y.data, [[3.5]])

    def test_broadcast_add(self):
        y = Tensor(np.ones((2, 3))) + Tensor([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(y.data, [[2, 3, 4], [2, 3, 4]])

    def test_relu_and_mask(self):
        x = Tensor([-1.0, 0.0, 2.0])
        np.testing.assert_array_equal(relu(x).data, [0, 0, 2])
        np.testing.assert_array_equal(mask(x, [1, 0, 1]).data, [-1, 0, 2])

    def test_guarded_div_zero_denominator(self):
        y = guarded_div(Tensor([0.0]), Tensor([0.0]))
        assert y.data[0] == 0.0

    def test_scalar_reduction_is_zero_dim(self):
        assert tsum(Tensor(np.ones((2, 3)))).shape == ()

    def test_float32_preserved_by_python_scalars(self):
        x = Tensor(np.ones(3, dtype=np.float32))
        assert (x * 2.0 + 1.0).dtype == np.float32


class TestErrors:
    def test_affine_mismatch_names_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
            affine(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_bias_mismatch(self):
        with pytest.raises(DimensionError):
            affine(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))), Tensor(np.ones(3)))

    def test_matmul_inner(self):
        with pytest.raises(DimensionError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_add_incompatible(self):
        with pytest.raises(DimensionError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))

    def test_mask_shape(self):
        with pytest.raises(DimensionError):
            mask(Tensor(np.ones((2, 3))), np.ones((3, 2)))

    def test_backward_needs_scalar(self):
        with pytest.raises(DimensionError):
            backward(parameter(np.ones(3)) * 2.0)

    def test_errors_are_value_errors(self):
        assert issubclass(DimensionError, ValueError)


class TestGradients:
    def test_affine_relu_chain(self, rng):
        check_grad(lambda x, W, b: tsum(relu(affine(x, W, b)) * relu(affine(x, W, b))),
                   rng.normal(size=(4, 3)), rng.normal(size=(3, 5)), rng.normal(size=5))

    def test_batched_matmul(self, rng):
        check_grad(lambda a, b: tsum(matmul(a, b) * matmul(a, b)),
                   rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 2)))

    def test_broadcast_batch_matmul(self, rng):
        check_grad(lambda a, b: tsum(tabs(matmul(a, b))), rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 2)))

    def test_div_and_guarded_div(self, rng):
        a, b = rng.normal(size=(3, 2)), rng.uniform(0.5, 2, size=(3, 2))
        check_grad(lambda x, y: tsum(div(x, y)), a, b)
        check_grad(lambda x, y: tsum(guarded_div(x, y)), a, b)

    def test_sub_mul_broadcast(self, rng):
        check_grad(lambda x, y: tsum(mul(sub(x, y), x)), rng.normal(size=(3, 4)), rng.normal(size=(1, 4)))

    def test_shape_ops(self, rng):
        check_grad(lambda x: tsum(transpose(reshape(x, (3, 2, 2)), (2, 0, 1)) * np.arange(12.0).reshape(2, 3, 2)),
                   rng.normal(size=(4, 3)))
        check_grad(lambda x: tsum(pad(x, ((1, 0), (0, 2))) * np.arange(20.0).reshape(4, 5)),
                   rng.normal(size=(3, 3)))
        check_grad(lambda x: tsum(getitem(x, (slice(None), [0, 2, 2])) * np.arange(6.0).reshape(2, 3)),
                   rng.normal(size=(2, 3)))

    def test_concat_stack_mean(self, rng):
        check_grad(lambda x, y: tsum(concat([x, y], axis=1) * concat([y, x], axis=1)),
                   rng.normal(size=(2, 3)), rng.normal(size=(2, 3)))
        check_grad(lambda x, y: mean(stack([x, y], axis=0) * stack([y, y], axis=0), axis=(0, 1)).sum(),
                   rng.normal(size=(2, 3)), rng.normal(size=(2, 3)))

    def test_shared_subexpression_accumulates(self):
        x = parameter(np.array([3.0]))
        grads = backward(tsum(x * x + x))
        np.testing.assert_allclose(grads[x], [7.0])

    def test_backward_resets_between_calls(self):
        x = parameter(np.array([2.0]))
        y = tsum(x * x)
        first = backward(y)[x].copy()
        second = backward(y)[x]
        np.testing.assert_array_equal(first, second)

    def test_no_grad_records_nothing(self):
        x = parameter(np.array([1.0]))
        with no_grad():
            y = x * 3.0
        assert not y.requires_grad
        assert (x * 3.0).requires_grad

    @settings(max_examples=30, deadline=None)
    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=4),
                      elements=st.floats(-3, 3)))
    def test_sum_of_squares_gradient(self, a):
        x = parameter(a)
        np.testing.assert_allclose(backward(tsum(x * x))[x], 2 * a)
