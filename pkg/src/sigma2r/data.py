"""Datasets, binary formats, augmentation and balanced batches.

Images are stored as ``N x C x H x W`` arrays of doubles in [0, 1].

>>> data = generate_fuzzy_rgb(2, seed=0)
>>> data.images.shape, data.labels.tolist()
((6, 3, 32, 32), [0, 0, 1, 1, 2, 2])

Batch quotas are split round-robin over the classes:

>>> class_quotas(10, 256).tolist()
[26, 26, 26, 26, 26, 26, 25, 25, 25, 25]
"""

from __future__ import annotations

import gzip
import logging
import os
import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from sigma2r.exc import BadMagicError
from sigma2r.exc import CountMismatchError
from sigma2r.exc import DatasetFormatError
from sigma2r.exc import LabelError
from sigma2r.exc import SamplerError
from sigma2r.exc import ShapeError
from sigma2r.exc import TruncatedFileError
from sigma2r.utils import atomic_write


if TYPE_CHECKING:
    from collections.abc import Iterable
    from collections.abc import Iterator
    from collections.abc import Sequence

    from _typeshed import StrPath
    from numpy.typing import NDArray


log = logging.getLogger('sigma2r.data')

IDX_LABELS = 0x00000801
IDX_IMAGES = 0x00000803
IDX_IMAGES_CHANNELS = 0x00000804

CIFAR10_TRAIN = ['data_batch_%d.bin' % i for i in range(1, 6)]
CIFAR10_TEST = ['test_batch.bin']
CIFAR_PIXELS = 3 * 32 * 32

AUGMENT_OPS = ('crop', 'rotate', 'hflip', 'vflip')


@dataclass(frozen=True)
class Dataset:
    images: NDArray[np.float64]
    labels: NDArray[np.intp]
    class_count: int
    split: str = 'train'
    name: str = ''

    def __post_init__(self) -> None:
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.intp)
        if images.ndim != 4:
            raise ShapeError('dataset', images.shape)
        if images.shape[0] != labels.shape[0]:
            raise CountMismatchError(
                "%d images but %d labels." % (
                    images.shape[0], labels.shape[0]))
        if labels.size and (
                labels.min() < 0 or labels.max() >= self.class_count):
            raise LabelError(
                "labels outside [0, %d)." % self.class_count)
        images.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, 'images', images)
        object.__setattr__(self, 'labels', labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __repr__(self) -> str:
        return "<Dataset %s:%s n=%d shape=%s classes=%d>" % (
            self.name or '?', self.split, len(self), self.image_shape,
            self.class_count)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        c, h, w = self.images.shape[1:]
        return c, h, w

    def class_counts(self) -> NDArray[np.intp]:
        return np.bincount(self.labels, minlength=self.class_count)

    def take(self, indices: Sequence[int] | NDArray[np.intp]) -> Dataset:
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(
            self.images[indices], self.labels[indices], self.class_count,
            self.split, self.name)

    def subset(self, count: int, seed: int) -> Dataset:
        """Class-stratified random subset of ``count`` samples."""

        if count >= len(self):
            return self
        rng = np.random.default_rng(seed)
        quotas = class_quotas(self.class_count, count)
        chosen = []
        for label, quota in enumerate(quotas):
            pool = np.flatnonzero(self.labels == label)
            chosen.append(rng.permutation(pool)[:quota])
        return self.take(np.sort(np.concatenate(chosen)))


class Batch(NamedTuple):
    images: NDArray[np.float64]
    labels: NDArray[np.intp]
    indices: NDArray[np.intp]


# generation

def generate_fuzzy_rgb(
    per_class: int,
    seed: int,
    size: int = 32,
    split: str = 'train'
) -> Dataset:
    """Three classes of uniform-colour images (red, green, blue).

    The class channel is drawn from [0.2, 1.0), the two other channels
    from [0.0, 0.2).
    """

    if per_class < 1:
        raise ValueError("per_class must be at least 1.")

    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(3), per_class)
    count = labels.shape[0]
    colours = rng.uniform(0.0, 0.2, size=(count, 3))
    colours[np.arange(count), labels] = rng.uniform(0.2, 1.0, size=count)
    images = np.broadcast_to(
        colours[:, :, None, None], (count, 3, size, size)).copy()
    return Dataset(images, labels, 3, split, 'fuzzy-rgb')


# IDX

def _open(path: StrPath) -> bytes:
    path = os.fspath(path)
    opener = gzip.open if path.endswith('.gz') else open
    with opener(path, 'rb') as f:
        return f.read()


def read_idx(path: StrPath, magics: Iterable[int]) -> NDArray[np.uint8]:
    """Read an unsigned-byte IDX file whose magic is one of ``magics``."""

    raw = _open(path)
    if len(raw) < 4:
        raise TruncatedFileError("%s: missing IDX header." % path)
    magic, = struct.unpack('>I', raw[:4])
    if magic not in magics:
        raise BadMagicError(
            "%s: bad magic 0x%08x (expected %s)." % (
                path, magic,
                " or ".join("0x%08x" % m for m in magics)))

    ndim = magic & 0xff
    offset = 4 + 4 * ndim
    if len(raw) < offset:
        raise TruncatedFileError("%s: truncated IDX header." % path)
    dims = struct.unpack('>%dI' % ndim, raw[4:offset])
    expected = int(np.prod(dims))
    if len(raw) - offset < expected:
        raise TruncatedFileError(
            "%s: expected %d data bytes, found %d." % (
                path, expected, len(raw) - offset))

    log.debug("read IDX %s: %s." % (path, dims))
    return np.frombuffer(raw, np.uint8, expected, offset).reshape(dims)


def load_idx(
    images_path: StrPath,
    labels_path: StrPath,
    class_count: int | None = None,
    split: str = 'train',
    name: str = 'idx'
) -> Dataset:
    images = read_idx(images_path, (IDX_IMAGES, IDX_IMAGES_CHANNELS))
    labels = read_idx(labels_path, (IDX_LABELS,))

    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            "%s has %d images but %s has %d labels." % (
                images_path, images.shape[0], labels_path, labels.shape[0]))
    if images.ndim == 3:
        images = images[:, None, :, :]
    if class_count is None:
        class_count = int(labels.max()) + 1 if labels.size else 0

    return Dataset(
        images / 255.0, labels.astype(np.intp), class_count, split, name)


def _idx_bytes(magic: int, array: NDArray[np.uint8]) -> bytes:
    header = struct.pack('>I', magic)
    header += struct.pack('>%dI' % array.ndim, *array.shape)
    return header + np.ascontiguousarray(array, np.uint8).tobytes()


def quantize(images: NDArray[np.float64]) -> NDArray[np.uint8]:
    return np.round(np.clip(images, 0.0, 1.0) * 255).astype(np.uint8)


def write_idx(
    images_path: StrPath,
    labels_path: StrPath,
    dataset: Dataset
) -> None:
    """Persist a dataset as an IDX pair; pixels are quantized to bytes."""

    images = quantize(dataset.images)
    if images.shape[1] == 1:
        data = _idx_bytes(IDX_IMAGES, images[:, 0])
    else:
        data = _idx_bytes(IDX_IMAGES_CHANNELS, images)
    atomic_write(images_path, data)
    atomic_write(
        labels_path, _idx_bytes(IDX_LABELS, dataset.labels.astype(np.uint8)))


# CIFAR

def _read_records(
    path: StrPath,
    label_bytes: int
) -> tuple[NDArray[np.uint8], NDArray[np.uint8]]:
    raw = _open(path)
    size = label_bytes + CIFAR_PIXELS
    if len(raw) == 0 or len(raw) % size:
        raise TruncatedFileError(
            "%s: size %d is not a multiple of the %d-byte record." % (
                path, len(raw), size))
    records = np.frombuffer(raw, np.uint8).reshape(-1, size)
    images = records[:, label_bytes:].reshape(-1, 3, 32, 32)
    return images, records[:, label_bytes - 1]


def _find(directory: StrPath, names: Sequence[str], subdir: str) -> list[str]:
    for base in (os.fspath(directory), os.path.join(directory, subdir)):
        paths = [os.path.join(base, name) for name in names]
        if all(os.path.exists(path) for path in paths):
            return paths
    raise FileNotFoundError(
        "missing %s under %s." % (", ".join(names), directory))


def _load_cifar(
    paths: Sequence[str],
    label_bytes: int,
    class_count: int,
    split: str,
    name: str
) -> Dataset:
    parts = [_read_records(path, label_bytes) for path in paths]
    images = np.concatenate([images for images, _ in parts])
    labels = np.concatenate([labels for _, labels in parts])
    return Dataset(
        images / 255.0, labels.astype(np.intp), class_count, split, name)


def load_cifar10_binary(directory: StrPath, split: str = 'train') -> Dataset:
    """Records of one label byte and 3072 channel-major pixel bytes."""

    names = CIFAR10_TRAIN if split == 'train' else CIFAR10_TEST
    paths = _find(directory, names, 'cifar-10-batches-bin')
    return _load_cifar(paths, 1, 10, split, 'cifar10')


def load_cifar100_binary(directory: StrPath, split: str = 'train') -> Dataset:
    """Records of a coarse and a fine label byte; the fine label is kept."""

    paths = _find(directory, ['%s.bin' % split], 'cifar-100-binary')
    return _load_cifar(paths, 2, 100, split, 'cifar100')


# augmentation

def hflip(images: NDArray[np.float64]) -> NDArray[np.float64]:
    return images[..., ::-1]


def vflip(images: NDArray[np.float64]) -> NDArray[np.float64]:
    return images[..., ::-1, :]


def rotate(image: NDArray[np.float64], angle: float) -> NDArray[np.float64]:
    """Rotate a ``C x H x W`` image about its center, keeping its size."""

    if angle == 0:
        return image
    out = ndimage.rotate(
        image, angle, axes=(2, 1), reshape=False, order=1,
        mode='constant', cval=0.0)
    return np.clip(out, 0.0, 1.0)


def crop(
    image: NDArray[np.float64],
    pad: int,
    top: int,
    left: int
) -> NDArray[np.float64]:
    """Zero-pad by ``pad`` and cut a window of the original size."""

    _, h, w = image.shape
    padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)))
    return padded[:, top:top + h, left:left + w]


def augment(
    images: NDArray[np.float64],
    ops: Sequence[str],
    rng: np.random.Generator | int,
    pad: int = 4,
    degrees: float = 15.0,
    probability: float = 0.5
) -> NDArray[np.float64]:
    """Random label-preserving transforms of a batch of images.

    Each sample is cropped, rotated and flipped independently; every
    transform in ``ops`` is applied with the given probability.
    """

    unknown = set(ops) - set(AUGMENT_OPS)
    if unknown:
        raise ValueError(
            "unknown augmentation: %s (expected %s)." % (
                ", ".join(sorted(unknown)), ", ".join(AUGMENT_OPS)))
    if not ops:
        return images
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    out = np.array(images, dtype=np.float64)
    for i in range(out.shape[0]):
        image = out[i]
        if 'crop' in ops and rng.random() < probability:
            top, left = rng.integers(0, 2 * pad + 1, size=2)
            image = crop(image, pad, top, left)
        if 'rotate' in ops and rng.random() < probability:
            image = rotate(image, rng.uniform(-degrees, degrees))
        if 'hflip' in ops and rng.random() < probability:
            image = hflip(image)
        if 'vflip' in ops and rng.random() < probability:
            image = vflip(image)
        out[i] = image
    return out


# sampling

def class_quotas(
    class_count: int,
    batch_size: int,
    offset: int = 0
) -> NDArray[np.intp]:
    """Split ``batch_size`` over the classes; ``offset`` rotates the remainder."""

    base, extra = divmod(batch_size, class_count)
    quotas = np.full(class_count, base, dtype=np.intp)
    quotas[(offset + np.arange(extra)) % class_count] += 1
    return quotas


class BalancedSampler:
    """Class-balanced batches from one circular stream per class.

    Every class stream is reshuffled at the start of each epoch; a
    class exhausted within an epoch wraps around.
    """

    def __init__(
        self,
        labels: NDArray[np.intp],
        class_count: int,
        batch_size: int,
        seed: int
    ) -> None:

        if batch_size < 2 * class_count:
            raise SamplerError(
                "batch size %d is too small for %d classes "
                "(need at least %d)." % (
                    batch_size, class_count, 2 * class_count))

        self.labels = np.asarray(labels, dtype=np.intp)
        self.class_count = class_count
        self.batch_size = batch_size
        self.seed = seed
        self.pools = [
            np.flatnonzero(self.labels == label)
            for label in range(class_count)
        ]
        empty = [label for label, pool in enumerate(self.pools) if not pool.size]
        if empty:
            raise SamplerError(
                "classes without samples: %s." % ", ".join(map(str, empty)))

    @property
    def batches_per_epoch(self) -> int:
        return max(1, len(self.labels) // self.batch_size)

    def epoch(self, epoch: int) -> Iterator[NDArray[np.intp]]:
        rng = np.random.default_rng([self.seed, epoch])
        streams = [rng.permutation(pool) for pool in self.pools]
        cursors = [0] * self.class_count
        extra = self.batch_size % self.class_count

        for b in range(self.batches_per_epoch):
            quotas = class_quotas(
                self.class_count, self.batch_size, offset=b * extra)
            parts = []
            for label, quota in enumerate(quotas):
                stream = streams[label]
                positions = (cursors[label] + np.arange(quota)) % len(stream)
                parts.append(stream[positions])
                cursors[label] += quota
            yield np.concatenate(parts)


def balanced_batches(
    dataset: Dataset,
    batch_size: int,
    seed: int,
    epoch: int = 0
) -> Iterator[Batch]:
    sampler = BalancedSampler(
        dataset.labels, dataset.class_count, batch_size, seed)
    for indices in sampler.epoch(epoch):
        yield Batch(dataset.images[indices], dataset.labels[indices], indices)
