import unittest

import numpy as np
import pytest

from sigma2r.autodiff import Tape
from sigma2r.autodiff import Tensor
from sigma2r.autodiff import backward
from sigma2r.exc import CheckpointError
from sigma2r.exc import ShapeError
from sigma2r.layers import Dense
from sigma2r.layers import Flatten
from sigma2r.layers import Model
from sigma2r.layers import build_lenet
from sigma2r.layers import build_model
from sigma2r.layers import build_small_convnet
from sigma2r.layers import load_checkpoint
from sigma2r.layers import save_checkpoint
from sigma2r.losses import LossState
from sigma2r.losses import cross_entropy
from sigma2r.losses import joint_loss


class ModelTest(unittest.TestCase):
    def test_lenet_shapes(self):
        model = build_lenet(1, 28, 64, 10)
        logits, features = model.forward_with_features(
            Tensor(np.zeros((4, 1, 28, 28))))
        self.assertEqual(logits.shape, (4, 10))
        self.assertEqual(features.shape, (4, 64))

    def test_two_dimensional_features(self):
        model = build_lenet(3, 32, 2, 3)
        self.assertEqual(model.feature_dim, 2)
        self.assertEqual(model.num_classes, 3)
        _, features = model.forward_with_features(
            Tensor(np.zeros((5, 3, 32, 32))))
        self.assertEqual(features.shape, (5, 2))

    def test_small_convnet(self):
        model = build_small_convnet(3, 2, 3)
        logits, features = model.forward_with_features(
            Tensor(np.random.default_rng(0).random((2, 3, 32, 32))))
        self.assertEqual((logits.shape, features.shape), ((2, 3), (2, 2)))

    def test_parameter_count(self):
        model = build_lenet(1, 28, 64, 10)
        self.assertEqual(model.parameter_count(), 105169)

    def test_parameter_names(self):
        names = list(build_lenet(1, 28, 64, 10).parameters())
        self.assertEqual(names[:3], [
            'layers.0.weight', 'layers.0.bias', 'layers.1.slope'])
        self.assertIn('layers.10.bias', names)

    def test_initialization_is_seeded(self):
        a = build_lenet(1, 28, 8, 10, rng=np.random.default_rng(5))
        b = build_lenet(1, 28, 8, 10, rng=np.random.default_rng(5))
        for (name, x), (_, y) in zip(
                a.named_parameters(), b.named_parameters()):
            self.assertEqual(x.data.tobytes(), y.data.tobytes(), name)

    def test_zero_weights_give_uniform_logits(self):
        model = build_lenet(1, 28, 16, 10)
        for tensor in model.parameters().values():
            tensor.assign(np.zeros(tensor.shape))
        x = Tensor(np.random.default_rng(1).random((3, 1, 28, 28)))
        logits = model(x).data
        self.assertTrue(np.all(logits == logits[0, 0]))
        loss = cross_entropy(model(x), [0, 4, 9]).item()
        self.assertAlmostEqual(loss, np.log(10), delta=1e-12)

    def test_wrong_input_shape(self):
        with self.assertRaises(ShapeError):
            build_lenet(1, 28, 8, 10)(Tensor(np.zeros((1, 1, 32, 32))))

    def test_unsupported_configurations(self):
        with self.assertRaises(ValueError):
            build_lenet(1, 30, 8, 10)
        with self.assertRaises(ValueError):
            build_lenet(1, 28, 1, 10)
        with self.assertRaises(ValueError):
            build_model('small-convnet', (1, 28, 28), 8, 10)
        with self.assertRaises(ValueError):
            build_model('resnet18', (3, 32, 32), 8, 10)

    def test_feature_tap_before_head(self):
        with self.assertRaises(ValueError):
            Model([Flatten(), Dense(4, 2)], feature_tap=1, input_shape=(4,))


def test_gradients_reach_every_parameter():
    rng = np.random.default_rng(2)
    model = build_lenet(1, 28, 4, 3, rng=rng)
    state = LossState.create(3, 4, rng=rng, n=2)
    x = Tensor(rng.random((6, 1, 28, 28)))
    labels = np.array([0, 1, 2, 0, 1, 2])
    with Tape():
        logits, features = model.forward_with_features(x)
        backward(joint_loss(logits, features, labels, state).total)
    for name, tensor in model.named_parameters():
        assert tensor.grad is not None, name
        assert tensor.grad.shape == tensor.shape
    assert state.centers.grad is not None
    assert state.growth_weights.grad is not None


@pytest.mark.parametrize('kind', ['center', 'snn', 'sigma2r'])
def test_joint_gradient_is_additive(kind):
    rng = np.random.default_rng(3)
    model = build_small_convnet(3, 2, 3, rng=rng)
    state = LossState.create(3, 2, rng=rng, n=2, lam=0.5)
    x = Tensor(rng.random((6, 3, 32, 32)))
    labels = np.array([0, 1, 2, 2, 1, 0])
    params = model.parameters()

    def gradients(select):
        for tensor in params.values():
            tensor.zero_grad()
        with Tape():
            logits, features = model.forward_with_features(x)
            output = joint_loss(logits, features, labels, state, kind)
            backward(select(output))
        return {name: t.grad.copy() for name, t in params.items()}

    total = gradients(lambda output: output.total)
    xent = gradients(lambda output: output.xent)
    aux = gradients(lambda output: output.aux)
    for name in params:
        np.testing.assert_allclose(
            total[name], xent[name] + 0.5 * aux[name], rtol=1e-9, atol=1e-12)


class CheckpointTest(unittest.TestCase):
    def setUp(self):
        import tempfile
        self.tmp = tempfile.TemporaryDirectory()
        self.path = self.tmp.name + '/checkpoint.npz'
        rng = np.random.default_rng(4)
        self.model = build_lenet(3, 32, 2, 3, rng=rng)
        self.state = LossState.create(3, 2, rng=rng, n=5, lam=0.1)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        save_checkpoint(self.path, self.model, self.state, seed=3)
        model, state = load_checkpoint(self.path)
        x = Tensor(np.random.default_rng(0).random((2, 3, 32, 32)))
        self.assertEqual(
            model(x).data.tobytes(), self.model(x).data.tobytes())
        self.assertEqual(model.feature_tap, self.model.feature_tap)
        self.assertEqual(state.constants(), self.state.constants())
        np.testing.assert_array_equal(
            state.centers.data, self.state.centers.data)
        self.assertTrue(state.growth_weights.requires_grad)

    def test_without_loss_state(self):
        save_checkpoint(self.path, self.model)
        _, state = load_checkpoint(self.path)
        self.assertIsNone(state)

    def test_bytes_are_reproducible(self):
        save_checkpoint(self.path, self.model, self.state)
        with open(self.path, 'rb') as f:
            first = f.read()
        save_checkpoint(self.path, self.model, self.state)
        with open(self.path, 'rb') as f:
            self.assertEqual(f.read(), first)

    def test_not_a_checkpoint(self):
        with open(self.path, 'wb') as f:
            f.write(b'not a zip file')
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path + '.missing')
