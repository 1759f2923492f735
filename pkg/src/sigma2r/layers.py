"""Layers, reference models and checkpoints.

A :class:`Model` is an ordered list of layers with a *feature tap*:
the index of the layer whose output is the deep-feature vector fed to
the auxiliary loss. The layers after the tap form the classifier head.

>>> model = build_lenet(1, 28, 64, 10)
>>> x = Tensor(np.zeros((4, 1, 28, 28)))
>>> logits, features = forward_with_features(model, x)
>>> logits.shape, features.shape
((4, 10), (4, 64))
"""

from __future__ import annotations

import json
import logging
from typing import TYPE_CHECKING
from typing import Any
from typing import ClassVar

import numpy as np

from sigma2r.autodiff import Tensor
from sigma2r.autodiff import forward_op
from sigma2r.exc import CheckpointError
from sigma2r.exc import ShapeError
from sigma2r.losses import LossState
from sigma2r.utils import write_npz


if TYPE_CHECKING:
    from collections.abc import Iterator
    from collections.abc import Sequence

    from _typeshed import StrPath

    Shape = tuple[int, ...]


log = logging.getLogger('sigma2r.layers')

CHECKPOINT_FORMAT = 'sigma2r-checkpoint'
CHECKPOINT_VERSION = 1

LAYERS: dict[str, type[Layer]] = {}


def _default_rng(rng: np.random.Generator | None) -> np.random.Generator:
    return np.random.default_rng(0) if rng is None else rng


def kaiming_uniform(
    shape: Shape,
    fan_in: int,
    rng: np.random.Generator
) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    kind: ClassVar[str]

    def __init_subclass__(cls, **kwargs: Any) -> None:
        super().__init_subclass__(**kwargs)
        LAYERS[cls.kind] = cls

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def hyperparams(self) -> dict[str, int]:
        return {}

    def output_shape(self, shape: Shape) -> Shape:
        return shape

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError("Must be implemented by subclass.")

    def spec(self) -> dict[str, Any]:
        return {'kind': self.kind, **self.hyperparams()}

    @classmethod
    def from_spec(cls, spec: dict[str, Any]) -> Layer:
        spec = dict(spec)
        kind = spec.pop('kind')
        try:
            factory = LAYERS[kind]
        except KeyError:
            raise CheckpointError("unknown layer kind: %r." % kind) from None
        return factory(**spec)

    def __repr__(self) -> str:
        args = ", ".join("%s=%d" % item for item in self.hyperparams().items())
        return "%s(%s)" % (type(self).__name__, args)


class Conv2d(Layer):
    kind = 'conv2d'

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 5,
        rng: np.random.Generator | None = None
    ) -> None:

        if kernel_size % 2 == 0:
            raise ValueError(
                "kernel size must be odd, got %d." % kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Tensor(
            kaiming_uniform(
                (out_channels, in_channels, kernel_size, kernel_size),
                fan_in, _default_rng(rng)),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {'weight': self.weight, 'bias': self.bias}

    def hyperparams(self) -> dict[str, int]:
        return {
            'in_channels': self.in_channels,
            'out_channels': self.out_channels,
            'kernel_size': self.kernel_size,
        }

    def output_shape(self, shape: Shape) -> Shape:
        if len(shape) != 3 or shape[0] != self.in_channels:
            raise ShapeError('conv2d', shape)
        return (self.out_channels,) + tuple(shape[1:])

    def forward(self, x: Tensor) -> Tensor:
        return forward_op('conv2d', (x, self.weight, self.bias))


class Dense(Layer):
    kind = 'dense'

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator | None = None
    ) -> None:

        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(
            kaiming_uniform(
                (in_features, out_features), in_features, _default_rng(rng)),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {'weight': self.weight, 'bias': self.bias}

    def hyperparams(self) -> dict[str, int]:
        return {
            'in_features': self.in_features,
            'out_features': self.out_features,
        }

    def output_shape(self, shape: Shape) -> Shape:
        if tuple(shape) != (self.in_features,):
            raise ShapeError('dense', shape, (self.in_features,))
        return (self.out_features,)

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class PReLU(Layer):
    kind = 'prelu'

    def __init__(self, init: float = 0.25) -> None:
        self.slope = Tensor([init], requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {'slope': self.slope}

    def forward(self, x: Tensor) -> Tensor:
        return forward_op('prelu', (x, self.slope))


class MaxPool2x2(Layer):
    kind = 'maxpool2x2'

    def output_shape(self, shape: Shape) -> Shape:
        if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
            raise ShapeError('maxpool2x2', shape)
        return (shape[0], shape[1] // 2, shape[2] // 2)

    def forward(self, x: Tensor) -> Tensor:
        return forward_op('maxpool2x2', (x,))


class Flatten(Layer):
    kind = 'flatten'

    def output_shape(self, shape: Shape) -> Shape:
        return (int(np.prod(shape)),)

    def forward(self, x: Tensor) -> Tensor:
        return x.reshape(x.shape[0], -1)


class Model:
    """Feed-forward stack of layers with a named feature tap."""

    def __init__(
        self,
        layers: Sequence[Layer],
        feature_tap: int,
        input_shape: Sequence[int],
        name: str = 'model'
    ) -> None:

        self.layers = list(layers)
        self.feature_tap = feature_tap
        self.input_shape = tuple(input_shape)
        self.name = name

        if not 0 <= feature_tap < len(self.layers) - 1:
            raise ValueError(
                "feature tap must precede the classifier head.")

        # validates the layer chain
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        self.feature_shape = shapes[feature_tap + 1]
        self.output_shape = shapes[-1]
        if len(self.feature_shape) != 1 or len(self.output_shape) != 1:
            raise ShapeError('model', self.feature_shape, self.output_shape)

    def __repr__(self) -> str:
        return "<Model %s features=%d classes=%d params=%d>" % (
            self.name, self.feature_dim, self.num_classes,
            self.parameter_count())

    @property
    def feature_dim(self) -> int:
        return self.feature_shape[0]

    @property
    def num_classes(self) -> int:
        return self.output_shape[0]

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for i, layer in enumerate(self.layers):
            for name, tensor in layer.parameters().items():
                yield 'layers.%d.%s' % (i, name), tensor

    def parameters(self) -> dict[str, Tensor]:
        params = dict(self.named_parameters())
        for name, tensor in params.items():
            tensor.name = name
        return params

    def parameter_count(self) -> int:
        return sum(t.size for _, t in self.named_parameters())

    def forward_with_features(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(self.name, x.shape[1:], self.input_shape)

        features = None
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if i == self.feature_tap:
                features = x

        assert features is not None
        return x, features

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward_with_features(x)[0]


def forward_with_features(model: Model, x: Tensor) -> tuple[Tensor, Tensor]:
    """Return ``(logits, features)`` computed in one pass."""

    return model.forward_with_features(x)


def build_lenet(
    in_channels: int,
    in_size: int,
    feature_dim: int,
    num_classes: int,
    rng: np.random.Generator | None = None
) -> Model:
    """Two convolution blocks and three dense layers with PReLU.

    The second-last dense layer has width ``feature_dim`` and is the
    feature tap.
    """

    if in_size not in (28, 32):
        raise ValueError(
            "unsupported input size: %d (expected 28 or 32)." % in_size)
    if feature_dim < 2:
        raise ValueError("feature_dim must be at least 2.")

    rng = _default_rng(rng)
    pooled = in_size // 4
    layers: list[Layer] = [
        Conv2d(in_channels, 6, 5, rng=rng),
        PReLU(),
        MaxPool2x2(),
        Conv2d(6, 16, 5, rng=rng),
        PReLU(),
        MaxPool2x2(),
        Flatten(),
        Dense(16 * pooled * pooled, 120, rng=rng),
        PReLU(),
        Dense(120, feature_dim, rng=rng),
        Dense(feature_dim, num_classes, rng=rng),
    ]
    return Model(
        layers, feature_tap=9, input_shape=(in_channels, in_size, in_size),
        name='lenet')


def build_small_convnet(
    in_channels: int,
    feature_dim: int,
    num_classes: int,
    rng: np.random.Generator | None = None
) -> Model:
    """Three 3x3 convolution blocks for 32x32 inputs."""

    if feature_dim < 2:
        raise ValueError("feature_dim must be at least 2.")

    rng = _default_rng(rng)
    layers: list[Layer] = []
    channels = in_channels
    for width in (8, 16, 32):
        layers += [Conv2d(channels, width, 3, rng=rng), PReLU(), MaxPool2x2()]
        channels = width
    layers += [
        Flatten(),
        Dense(32 * 4 * 4, 64, rng=rng),
        PReLU(),
        Dense(64, feature_dim, rng=rng),
        Dense(feature_dim, num_classes, rng=rng),
    ]
    return Model(
        layers, feature_tap=len(layers) - 2,
        input_shape=(in_channels, 32, 32), name='small-convnet')


MODELS = {
    'lenet': build_lenet,
    'small-convnet': build_small_convnet,
}


def build_model(
    kind: str,
    input_shape: Sequence[int],
    feature_dim: int,
    num_classes: int,
    rng: np.random.Generator | None = None
) -> Model:
    channels, size = input_shape[0], input_shape[1]
    if kind == 'lenet':
        return build_lenet(channels, size, feature_dim, num_classes, rng)
    if kind == 'small-convnet':
        if size != 32:
            raise ValueError(
                "small-convnet requires 32x32 inputs, got %dx%d." % (
                    size, size))
        return build_small_convnet(channels, feature_dim, num_classes, rng)
    raise ValueError(
        "unknown model: %r (expected one of %s)." % (
            kind, ", ".join(sorted(MODELS))))


# checkpoints

def save_checkpoint(
    path: StrPath,
    model: Model,
    state: LossState | None = None,
    **extra: Any
) -> None:
    header = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'name': model.name,
        'input_shape': list(model.input_shape),
        'feature_tap': model.feature_tap,
        'layers': [layer.spec() for layer in model.layers],
        'loss_state': state.constants() if state is not None else None,
        'extra': extra,
    }

    arrays = {
        'model/' + name: tensor.data
        for name, tensor in model.named_parameters()
    }
    if state is not None:
        for name, tensor in state.parameters().items():
            arrays['loss/' + name] = tensor.data

    arrays["header"] = np.array(json.dumps(header, sort_keys=True))
    write_npz(path, arrays)
    log.debug("checkpoint written: %s." % path)


def load_checkpoint(path: StrPath) -> tuple[Model, LossState | None]:
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError("cannot read checkpoint: %s." % exc) from exc

    with archive:
        try:
            header = json.loads(str(archive['header']))
        except (KeyError, ValueError) as exc:
            raise CheckpointError("checkpoint header missing.") from exc

        if header.get('format') != CHECKPOINT_FORMAT:
            raise CheckpointError("not a checkpoint: %s." % path)
        if header.get('version') != CHECKPOINT_VERSION:
            raise CheckpointError(
                "unsupported checkpoint version: %r." % header.get('version'))

        layers = [Layer.from_spec(spec) for spec in header['layers']]
        model = Model(
            layers, header['feature_tap'], header['input_shape'],
            name=header['name'])

        for name, tensor in model.named_parameters():
            try:
                tensor.assign(archive['model/' + name])
            except KeyError:
                raise CheckpointError(
                    "parameter missing from checkpoint: %s." % name) from None

        state = None
        constants = header.get('loss_state')
        if constants is not None:
            state = LossState(
                centers=Tensor(archive['loss/centers'], requires_grad=True),
                growth_weights=Tensor(
                    archive['loss/growth_weights'], requires_grad=True),
                **constants)

    return model, state
