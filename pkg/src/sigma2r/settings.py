"""Run configuration.

A run is described by a flat ``key = value`` file:

>>> config = parse("dataset = fuzzy-rgb\\nepochs = 3\\naux_kind = center\\n")
>>> config.epochs, config.aux_kind, config.lam, config.model_lr
(3, 'center', 0.01, 0.001)

>>> parse("aux_kind = sigma3r")
Traceback (most recent call last):
 ...
sigma2r.exc.ConfigError: invalid value for aux_kind: expected one of none, center, snn, sigma2r
<BLANKLINE>
 - String:     "sigma3r"
 - Location:   (line 1: col 11)
 - Source:     aux_kind = sigma3r
                          ^^^^^^^
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING
from typing import Any
from typing import NamedTuple

from sigma2r.config import TRUE
from sigma2r.data import AUGMENT_OPS
from sigma2r.exc import ConfigError
from sigma2r.layers import MODELS
from sigma2r.losses import AUX_KINDS
from sigma2r.tokenize import Token
from sigma2r.tokenize import iter_lines
from sigma2r.tokenize import split_assignment


if TYPE_CHECKING:
    from collections.abc import Callable

    from _typeshed import StrPath


log = logging.getLogger('sigma2r.settings')

FALSE = ('n', 'no', 'f', 'false', 'off', '0')

# Default model learning rates by dataset.
PROFILES = {
    'cifar10': 0.4,
    'cifar100': 0.4,
}
DEFAULT_MODEL_LR = 0.001


def default_model_lr(dataset: str) -> float:
    return PROFILES.get(dataset, DEFAULT_MODEL_LR)


def _bool(value: str) -> bool:
    value = value.lower()
    if value in TRUE:
        return True
    if value in FALSE:
        return False
    raise ValueError(value)


def _ops(value: str) -> tuple[str, ...]:
    ops = tuple(str(op).strip() for op in value.split(',') if op.strip())
    if set(ops) - set(AUGMENT_OPS):
        raise ValueError(value)
    return ops


def _choice(*choices: str) -> Callable[[str], str]:
    def convert(value: str) -> str:
        if value not in choices:
            raise ValueError(value)
        return str(value)
    return convert


def _positive(value: float) -> bool:
    return value > 0


def _non_negative(value: float) -> bool:
    return value >= 0


class Option(NamedTuple):
    attr: str
    convert: Callable[[str], Any]
    expected: str
    check: Callable[[Any], bool] | None = None


OPTIONS = {
    'epochs': Option('epochs', int, "a non-negative integer", _non_negative),
    'batch_size': Option(
        'batch_size', int, "an integer of at least 2", lambda v: v >= 2),
    'model_lr': Option('model_lr', float, "a positive number", _positive),
    'loss_lr': Option('loss_lr', float, "a positive number", _positive),
    'lambda': Option('lam', float, "a non-negative number", _non_negative),
    'Z': Option('Z', float, "a positive number", _positive),
    'n': Option('n', int, "an integer of at least 2", lambda v: v >= 2),
    'epsilon': Option('epsilon', float, "a positive number", _positive),
    'T': Option('T', float, "a positive number", _positive),
    'aux_kind': Option(
        'aux_kind', _choice(*AUX_KINDS),
        "one of %s" % ", ".join(AUX_KINDS)),
    'seed': Option('seed', int, "a non-negative integer", _non_negative),
    'dataset': Option('dataset', str, "a dataset name", bool),
    'data_dir': Option('data_dir', str, "a directory"),
    'per_class': Option(
        'per_class', int, "a positive integer", _positive),
    'test_per_class': Option(
        'test_per_class', int, "a positive integer", _positive),
    'subset': Option(
        'subset', int, "a non-negative integer", _non_negative),
    'model': Option(
        'model', _choice(*MODELS), "one of %s" % ", ".join(MODELS)),
    'feature_dim': Option(
        'feature_dim', int, "an integer of at least 2", lambda v: v >= 2),
    'augment': Option('augment', _bool, "a boolean"),
    'augment_ops': Option(
        'augment_ops', _ops,
        "a comma-separated subset of %s" % ", ".join(AUGMENT_OPS)),
    'repeats': Option('repeats', int, "a positive integer", _positive),
    'output_dir': Option('output_dir', str, "a directory", bool),
    'checkpoint': Option('checkpoint', str, "a file name", bool),
    'metrics': Option('metrics', str, "a file name", bool),
}

KEYS = {option.attr: key for key, option in OPTIONS.items()}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    model_lr: float = 0.0
    loss_lr: float = 0.1
    lam: float = 0.01
    Z: float = 40.0
    n: int = 7
    epsilon: float = 1e-6
    T: float = 1.0
    aux_kind: str = 'sigma2r'
    seed: int = 0
    dataset: str = 'fuzzy-rgb'
    data_dir: str = ''
    per_class: int = 300
    test_per_class: int = 100
    subset: int = 0
    model: str = 'lenet'
    feature_dim: int = 64
    augment: bool = False
    augment_ops: tuple[str, ...] = AUGMENT_OPS
    repeats: int = 1
    output_dir: str = 'runs'
    checkpoint: str = 'checkpoint.npz'
    metrics: str = 'metrics.csv'

    def __post_init__(self) -> None:
        # a zero learning rate selects the dataset profile
        if not self.model_lr:
            object.__setattr__(
                self, 'model_lr', default_model_lr(self.dataset))

        for key, option in OPTIONS.items():
            value = getattr(self, option.attr)
            valid = option.check is None or option.check(value)
            if option.attr == 'aux_kind':
                valid = value in AUX_KINDS
            elif option.attr == 'model':
                valid = value in MODELS
            elif option.attr == 'augment_ops':
                valid = set(value) <= set(AUGMENT_OPS)
            if not valid:
                raise ConfigError(
                    "invalid value for %s: expected %s" % (
                        key, option.expected), Token(key))

    def replace(self, **changes: Any) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    def run_seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.repeats)]

    def loss_constants(self) -> dict[str, Any]:
        return {
            'Z': self.Z, 'epsilon': self.epsilon, 'n': self.n,
            'lam': self.lam, 'T': self.T,
        }

    def items(self) -> list[tuple[str, Any]]:
        return sorted(
            (KEYS[f.name], getattr(self, f.name))
            for f in dataclasses.fields(self))

    def dumps(self) -> str:
        """Serialize to the configuration file format, keys sorted."""

        lines = []
        for key, value in self.items():
            if isinstance(value, bool):
                value = 'true' if value else 'false'
            elif isinstance(value, tuple):
                value = ','.join(value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append("%s = %s" % (key, value))
        return "\n".join(lines) + "\n"


def parse(body: str, filename: str | None = None) -> TrainConfig:
    values: dict[str, Any] = {}
    seen: dict[str, Token] = {}

    for line in iter_lines(body, filename):
        pair = split_assignment(line)
        if pair is None:
            raise ConfigError("expected a 'key = value' assignment", line)
        key, value = pair
        option = OPTIONS.get(key)
        if option is None:
            raise ConfigError(
                "unknown key (expected one of %s)" % ", ".join(OPTIONS), key)
        if key in seen:
            raise ConfigError("duplicate key: %s" % key, key)
        seen[key] = key

        try:
            converted = option.convert(value)
        except ValueError:
            converted = None
        if converted is None or (
                option.check is not None and not option.check(converted)):
            raise ConfigError(
                "invalid value for %s: expected %s" % (key, option.expected),
                value)
        values[option.attr] = converted

    if 'lam' not in values:
        log.info("defaulting lambda to %r." % TrainConfig.lam)

    return TrainConfig(**values)


def load_config(path: StrPath) -> TrainConfig:
    with open(path, encoding='utf-8') as f:
        body = f.read()
    return parse(body, str(path))
