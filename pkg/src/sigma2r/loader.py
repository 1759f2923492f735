from __future__ import annotations

import logging
import os
from threading import RLock
from typing import TYPE_CHECKING
from typing import Any
from typing import cast

from sigma2r.config import DATA_DIRECTORY
from sigma2r.data import generate_fuzzy_rgb
from sigma2r.data import load_cifar10_binary
from sigma2r.data import load_cifar100_binary
from sigma2r.data import load_idx


if TYPE_CHECKING:
    from collections.abc import Callable
    from collections.abc import Sequence
    from typing import TypeVar

    from sigma2r.data import Dataset

    _F = TypeVar('_F', bound=Callable[..., Any])


lock = RLock()

log = logging.getLogger('sigma2r.loader')

FMNIST_FILES = {
    'train': ('train-images-idx3-ubyte', 'train-labels-idx1-ubyte'),
    'test': ('t10k-images-idx3-ubyte', 't10k-labels-idx1-ubyte'),
}

SUBDIRECTORIES = ('', 'fmnist', 'fashion-mnist')

DATASETS = (
    'fmnist', 'cifar10', 'cifar100', 'fuzzy-rgb', 'idx:<images>,<labels>',
)


def cache(func: _F) -> _F:
    def load(self: Any, *args: Any, **kwargs: Any) -> Any:
        key = args + tuple(sorted(kwargs.items()))
        with lock:
            dataset = self.registry.get(key)
            if dataset is None:
                self.registry[key] = dataset = func(self, *args, **kwargs)
            else:
                log.debug("dataset registry hit: %s." % (key,))
        return dataset
    return cast('_F', load)


class DatasetLoader:
    """Dataset loader class.

    Resolves dataset names against a sequence of directories (or a
    single directory) given as ``search_path``; the directory named by
    ``SIGMA2R_DATA`` is searched first.

    Supported names are ``fmnist``, ``cifar10``, ``cifar100``,
    ``fuzzy-rgb`` (generated, nothing is read) and
    ``idx:<images>,<labels>`` for an explicit IDX file pair; a test
    split of the latter uses ``<images>.test`` and ``<labels>.test``
    when they exist.

    Loaded datasets are kept in a registry, so each one is read once.
    """

    registry: dict[tuple[Any, ...], Dataset]

    def __init__(
        self,
        search_path: Sequence[str] | str | None = None
    ) -> None:

        if search_path is None:
            search_path = []
        if isinstance(search_path, str):
            search_path = [search_path]
        search_path = list(search_path)
        if DATA_DIRECTORY is not None:
            search_path.insert(0, DATA_DIRECTORY)
        self.search_path = search_path
        self.registry = {}

    def find(self, *names: str) -> str:
        """First search path directory holding all ``names``.

        Compressed (``.gz``) variants are accepted.
        """

        for path in self.search_path:
            for sub in SUBDIRECTORIES:
                base = os.path.join(path, sub)
                if all(os.path.exists(os.path.join(base, name)) or
                       os.path.exists(os.path.join(base, name + '.gz'))
                       for name in names):
                    return base
        raise FileNotFoundError(
            "Dataset files not found: %s (searched %s)." % (
                ", ".join(names), ", ".join(self.search_path) or "nothing"))

    def _path(self, base: str, name: str) -> str:
        path = os.path.join(base, name)
        if not os.path.exists(path):
            path += '.gz'
        return path

    @cache
    def load(
        self,
        spec: str,
        split: str = 'train',
        per_class: int = 300,
        seed: int = 0
    ) -> Dataset:

        spec = spec.strip()
        if split not in ('train', 'test'):
            raise ValueError("Unknown split: %s." % split)

        if spec == 'fuzzy-rgb':
            # the test split uses its own stream of the same seed
            stream = seed if split == 'train' else seed + 1
            return generate_fuzzy_rgb(per_class, stream, split=split)

        if spec == 'fmnist':
            names = FMNIST_FILES[split]
            base = self.find(*names)
            dataset = load_idx(
                self._path(base, names[0]), self._path(base, names[1]),
                class_count=10, split=split, name='fmnist')
        elif spec in ('cifar10', 'cifar100'):
            loader = load_cifar10_binary if spec == 'cifar10' \
                else load_cifar100_binary
            for path in self.search_path:
                try:
                    dataset = loader(path, split)
                    break
                except FileNotFoundError:
                    continue
            else:
                raise FileNotFoundError(
                    "Dataset not found: %s (searched %s)." % (
                        spec, ", ".join(self.search_path) or "nothing"))
        elif spec.startswith('idx:'):
            images, _, labels = spec[4:].partition(',')
            if not labels:
                raise ValueError(
                    "Expected idx:<images>,<labels>, got: %s." % spec)
            images, labels = (self.resolve(images), self.resolve(labels))
            class_count = None
            if split == 'test':
                if not os.path.exists(images + '.test'):
                    raise FileNotFoundError(
                        "No test split for %s." % spec)
                images, labels = images + '.test', labels + '.test'
                # both splits share the class count of the training labels
                class_count = self.load(spec, 'train').class_count
            dataset = load_idx(
                images, labels, class_count=class_count, split=split,
                name='idx')
        else:
            raise ValueError(
                "Dataset not supported: %s (expected one of %s)." % (
                    spec, ", ".join(DATASETS)))

        log.info("loaded %r." % dataset)
        return dataset

    def resolve(self, name: str) -> str:
        if os.path.isabs(name) or os.path.exists(name):
            return name
        for path in self.search_path:
            candidate = os.path.join(path, name)
            if os.path.exists(candidate):
                return candidate
        raise FileNotFoundError("Dataset file not found: %s." % name)
