import math
import threading
import unittest

import numpy as np
import pytest

from sigma2r.autodiff import OPERATIONS
from sigma2r.autodiff import Tape
from sigma2r.autodiff import Tensor
from sigma2r.autodiff import backward
from sigma2r.autodiff import broadcast
from sigma2r.autodiff import concat
from sigma2r.autodiff import forward_op
from sigma2r.autodiff import gradient_check
from sigma2r.autodiff import is_grad_enabled
from sigma2r.autodiff import logistic
from sigma2r.autodiff import no_grad
from sigma2r.autodiff import pairwise_sqdist
from sigma2r.exc import BackwardError
from sigma2r.exc import DomainError
from sigma2r.exc import ShapeError


def param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


class ForwardTest(unittest.TestCase):
    def test_add(self):
        self.assertEqual(
            forward_op('add', ([1, 2], [3, 4])).data.tolist(), [4.0, 6.0])

    def test_matmul_identity(self):
        a = np.arange(9.0).reshape(3, 3)
        out = Tensor(np.eye(3)) @ Tensor(a)
        np.testing.assert_array_equal(out.data, a)

    def test_pairwise_sqdist(self):
        out = pairwise_sqdist([[0.0, 0.0]], [[3.0, 4.0]])
        self.assertEqual(out.data.tolist(), [[25.0]])

    def test_pairwise_sqdist_self_is_exactly_zero(self):
        x = np.random.default_rng(3).standard_normal((6, 4)) * 1e3
        out = pairwise_sqdist(x, x).data
        self.assertTrue(np.all(np.diag(out) == 0.0))

    def test_logistic(self):
        self.assertEqual(logistic(0.0).item(), 0.5)
        self.assertEqual(logistic(1000.0).item(), 1.0)
        self.assertEqual(logistic(-1000.0).item(), 0.0)
        self.assertAlmostEqual(logistic(math.log(3)).item(), 0.75, 15)

    def test_leading_dimension_broadcast(self):
        out = Tensor(np.ones((2, 3))) + Tensor([1.0, 2.0, 3.0])
        self.assertEqual(out.data.tolist(), [[2.0, 3.0, 4.0]] * 2)

    def test_explicit_broadcast_of_size_one_axis(self):
        out = broadcast(Tensor([[1.0], [2.0]]), (2, 3))
        self.assertEqual(out.data.tolist(), [[1.0] * 3, [2.0] * 3])

    def test_registry(self):
        for kind in ('add', 'sub', 'mul', 'div', 'neg', 'exp', 'log',
                     'sqrt', 'logistic', 'matmul', 'pairwise_sqdist',
                     'sum', 'mean', 'max', 'select', 'broadcast',
                     'reshape', 'transpose', 'concat', 'conv2d',
                     'maxpool2x2', 'prelu'):
            self.assertIn(kind, OPERATIONS)
            self.assertEqual(OPERATIONS[kind].kind, kind)

    def test_unknown_operation(self):
        with self.assertRaises(ValueError):
            forward_op('softmax', ([1.0],))

    def test_data_is_read_only(self):
        x = Tensor([1.0, 2.0])
        with self.assertRaises(ValueError):
            x.data[0] = 3.0


class ErrorTest(unittest.TestCase):
    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError) as context:
            Tensor([1.0, 2.0]) + Tensor([1.0, 2.0, 3.0])
        self.assertIn("op 'add'", str(context.exception))
        self.assertIn("(2,)", str(context.exception))

    def test_trailing_broadcast_is_rejected(self):
        with self.assertRaises(ShapeError):
            Tensor(np.ones((2, 3))) * Tensor(np.ones((2, 1)))

    def test_matmul_shapes(self):
        with self.assertRaises(ShapeError):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))

    def test_shape_error_is_value_error(self):
        self.assertTrue(issubclass(ShapeError, ValueError))

    def test_log_of_negative(self):
        with self.assertRaises(DomainError):
            Tensor([-1.0]).log()

    def test_sqrt_of_negative(self):
        with self.assertRaises(DomainError):
            Tensor([4.0, -1e-12]).sqrt()

    def test_non_scalar_root(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with self.assertRaises(BackwardError):
            backward(x * 2.0)

    def test_leaf_root(self):
        with self.assertRaises(BackwardError):
            backward(Tensor(1.0, requires_grad=True))

    def test_second_backward_is_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape():
            loss = (x * x).sum()
            backward(loss)
            with self.assertRaises(BackwardError) as context:
                backward(loss)
        self.assertIn("run the forward pass again", str(context.exception))

    def test_assign_to_op_output(self):
        x = Tensor([1.0], requires_grad=True)
        with self.assertRaises(BackwardError):
            (x * 2.0).assign([3.0])


class GradientTest(unittest.TestCase):
    def test_sum(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward(x.sum())
        self.assertEqual(x.grad.tolist(), [1.0, 1.0, 1.0])

    def test_square(self):
        x = Tensor([2.0], requires_grad=True)
        backward((x * x).sum())
        self.assertEqual(x.grad.tolist(), [4.0])

    def test_shared_input_accumulates(self):
        x = Tensor(3.0, requires_grad=True)
        backward(x * x + x)
        self.assertEqual(x.grad.tolist(), 7.0)

    def test_sqrt_at_zero(self):
        x = Tensor([0.0, 4.0], requires_grad=True)
        backward(x.sqrt().sum())
        self.assertEqual(x.grad.tolist(), [0.0, 0.25])

    def test_max_goes_to_first_maximum(self):
        x = Tensor([1.0, 5.0, 5.0], requires_grad=True)
        backward(x.max())
        self.assertEqual(x.grad.tolist(), [0.0, 1.0, 0.0])

    def test_no_grad(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            self.assertFalse(is_grad_enabled())
            y = x * 2.0
        self.assertTrue(is_grad_enabled())
        self.assertFalse(y.requires_grad)

    def test_no_grad_is_thread_local(self):
        seen = []
        with no_grad():
            thread = threading.Thread(
                target=lambda: seen.append(is_grad_enabled()))
            thread.start()
            thread.join()
        self.assertEqual(seen, [True])

    def test_detach_stops_gradient(self):
        x = Tensor([2.0], requires_grad=True)
        backward((x * x.detach()).sum())
        self.assertEqual(x.grad.tolist(), [2.0])


CHECKS = {
    'arithmetic': lambda a, b: ((a * b - a / (b * b + 1.0)) + (-a)).sum(),
    'exp_log': lambda a, b: ((a * a + 1.0).log() + (b * 0.1).exp()).sum(),
    'power_sqrt': lambda a, b: ((a * a + 0.5).sqrt() + (b ** 2) * 0.5).sum(),
    'logistic': lambda a, b: logistic(a * b).sum(),
    'matmul': lambda a, b: (a @ b.T).sum(),
    'pairwise': lambda a, b: pairwise_sqdist(a, b).mean(),
    'reductions': lambda a, b: (
        a.mean(axis=0) * b.sum(axis=0) + a.max(axis=1).sum()).sum(),
    'indexing': lambda a, b: (a[(np.array([0, 2, 2]),)] * b[1]).sum(),
    'shape': lambda a, b: (
        concat([a.reshape(-1), b.T.reshape(-1)]) * 1.5).sum(),
    'broadcast': lambda a, b: (
        broadcast(a.sum(axis=1, keepdims=True), (3, 4)) * b).sum(),
}


SEEDS = range(100)


@pytest.mark.parametrize('seed', SEEDS)
@pytest.mark.parametrize('name', sorted(CHECKS))
def test_gradient_check(name, seed):
    rng = np.random.default_rng([sorted(CHECKS).index(name), seed])
    a, b = param(rng, 3, 4), param(rng, 3, 4)
    errors = gradient_check(lambda: CHECKS[name](a, b), [a, b])
    assert max(errors) < 1e-5


@pytest.mark.parametrize('seed', SEEDS)
def test_conv2d_gradient(seed):
    rng = np.random.default_rng([7, seed])
    x = param(rng, 2, 2, 5, 5)
    w = param(rng, 3, 2, 3, 3)
    b = param(rng, 3)
    errors = gradient_check(
        lambda: (forward_op('conv2d', (x, w, b)) ** 2).mean(), [x, w, b])
    assert max(errors) < 1e-5


def test_conv2d_matches_direct_sum():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((1, 2, 3, 3))
    out = forward_op('conv2d', (x, w, [0.5])).data
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    expected = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            expected[i, j] = np.sum(padded[0, :, i:i + 3, j:j + 3] * w[0])
    np.testing.assert_allclose(out[0, 0], expected + 0.5, atol=1e-12)


@pytest.mark.parametrize('seed', SEEDS)
def test_pooling_and_prelu_gradient(seed):
    rng = np.random.default_rng([9, seed])
    x = param(rng, 2, 3, 4, 4)
    slope = Tensor([0.25], requires_grad=True)
    errors = gradient_check(
        lambda: (forward_op(
            'prelu', (forward_op('maxpool2x2', (x,)), slope)) ** 2).sum(),
        [x, slope])
    assert max(errors) < 1e-5


def test_determinism():
    def run():
        rng = np.random.default_rng(11)
        a, b = param(rng, 5, 3), param(rng, 4, 3)
        loss = (pairwise_sqdist(a, b).sqrt() * 0.3).exp().mean()
        backward(loss)
        return loss.data.tobytes(), a.grad.tobytes(), b.grad.tobytes()

    assert run() == run()
