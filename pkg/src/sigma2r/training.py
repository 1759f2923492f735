from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING

import numpy as np

from sigma2r.autodiff import Tape
from sigma2r.autodiff import Tensor
from sigma2r.autodiff import backward
from sigma2r.autodiff import no_grad
from sigma2r.config import DEBUG_MODE
from sigma2r.config import EVAL_WORKERS
from sigma2r.data import BalancedSampler
from sigma2r.data import augment
from sigma2r.exc import DivergenceError
from sigma2r.layers import build_model
from sigma2r.layers import save_checkpoint
from sigma2r.loader import DatasetLoader
from sigma2r.losses import LossState
from sigma2r.losses import joint_loss
from sigma2r.optim import Adam
from sigma2r.optim import check_disjoint
from sigma2r.optim import cosine_lr


if TYPE_CHECKING:
    from collections.abc import Sequence

    from _typeshed import StrPath
    from numpy.typing import NDArray

    from sigma2r.data import Dataset
    from sigma2r.layers import Model
    from sigma2r.settings import TrainConfig


log = logging.getLogger('sigma2r.training')

# Loss parameters stepped by the loss optimizer, by auxiliary loss.
LOSS_PARAMETERS = {
    'none': (),
    'center': ('centers',),
    'snn': (),
    'sigma2r': ('centers', 'growth_weights'),
}

COLUMNS = (
    'epoch', 'train_accuracy', 'test_accuracy',
    'loss_total', 'loss_xent', 'loss_aux', 'model_lr', 'loss_lr',
)
PER_CLASS = ('train_icj', 'test_icj', 'w_k', 'k')


@dataclass
class MetricsRecord:
    epoch: int
    train_accuracy: float
    test_accuracy: float
    loss_total: float
    loss_xent: float
    loss_aux: float
    model_lr: float
    loss_lr: float
    train_icj: list[float] = field(default_factory=list)
    test_icj: list[float] = field(default_factory=list)
    w_k: list[float] = field(default_factory=list)
    k: list[float] = field(default_factory=list)

    def row(self) -> list[str]:
        values: list[float] = [getattr(self, name) for name in COLUMNS[1:]]
        for name in PER_CLASS:
            values.extend(getattr(self, name))
        return [str(self.epoch)] + [repr(float(v)) for v in values]


def metrics_header(class_count: int) -> list[str]:
    header = list(COLUMNS)
    for name in PER_CLASS:
        header.extend('%s_%d' % (name, j) for j in range(class_count))
    return header


class MetricsWriter:
    """Append-only CSV log with one row per epoch."""

    def __init__(self, path: StrPath, class_count: int) -> None:
        self.path = os.fspath(path)
        self.class_count = class_count
        with open(self.path, 'w', newline='') as f:
            csv.writer(f).writerow(metrics_header(class_count))

    def append(self, record: MetricsRecord) -> None:
        with open(self.path, 'a', newline='') as f:
            csv.writer(f).writerow(record.row())


def read_metrics(path: StrPath) -> list[MetricsRecord]:
    with open(path, newline='') as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0][:len(COLUMNS)]) != COLUMNS:
        raise ValueError("not a metrics file: %s." % path)

    class_count = (len(rows[0]) - len(COLUMNS)) // len(PER_CLASS)
    records = []
    for row in rows[1:]:
        values = [float(v) for v in row[1:len(COLUMNS)]]
        rest = [float(v) for v in row[len(COLUMNS):]]
        per_class = [
            rest[i * class_count:(i + 1) * class_count]
            for i in range(len(PER_CLASS))
        ]
        records.append(MetricsRecord(int(row[0]), *values, *per_class))
    return records


@dataclass
class EvalResult:
    accuracy: float
    icj: NDArray[np.float64]
    features: NDArray[np.float64]
    labels: NDArray[np.intp]
    predictions: NDArray[np.intp]


@dataclass
class TrainResult:
    model: Model
    state: LossState
    metrics_path: str
    checkpoint_path: str
    records: list[MetricsRecord]
    config: TrainConfig


def intra_class_variance(
    features: NDArray[np.float64],
    labels: NDArray[np.intp],
    class_count: int
) -> NDArray[np.float64]:
    """Spread of every class around its mean feature.

    The square root of the summed squared deviation norms over
    ``count - 1``; zero for classes with fewer than two samples.

    >>> intra_class_variance(np.array([[0.0], [2.0]]), np.array([0, 0]), 1)
    array([1.41421356])
    """

    out = np.zeros(class_count)
    for label in range(class_count):
        points = features[labels == label]
        if len(points) < 2:
            continue
        dev = points - points.mean(axis=0)
        out[label] = math.sqrt(np.sum(dev * dev) / (len(points) - 1))
    return out


def evaluate(
    model: Model,
    dataset: Dataset,
    batch_size: int = 500,
    workers: int | None = None
) -> EvalResult:
    """Accuracy and intra-class spread of the feature tap outputs.

    Shards are evaluated by up to ``workers`` threads and merged in
    order.
    """

    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset.")
    if workers is None:
        workers = EVAL_WORKERS

    chunks = [
        slice(i, i + batch_size) for i in range(0, len(dataset), batch_size)
    ]

    def run(chunk: slice) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        with no_grad():
            logits, features = model.forward_with_features(
                Tensor(dataset.images[chunk]))
        return logits.data, features.data

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            outputs = list(pool.map(run, chunks))
    else:
        outputs = [run(chunk) for chunk in chunks]

    logits = np.concatenate([out[0] for out in outputs])
    features = np.concatenate([out[1] for out in outputs])
    predictions = np.argmax(logits, axis=1)
    accuracy = float(np.mean(predictions == dataset.labels))
    icj = intra_class_variance(features, dataset.labels, dataset.class_count)
    return EvalResult(accuracy, icj, features, dataset.labels, predictions)


def load_datasets(
    config: TrainConfig,
    loader: DatasetLoader | None = None
) -> tuple[Dataset, Dataset | None]:
    if loader is None:
        loader = DatasetLoader(config.data_dir or None)

    if config.dataset == 'fuzzy-rgb':
        train_set = loader.load(
            'fuzzy-rgb', 'train', per_class=config.per_class, seed=config.seed)
        test_set: Dataset | None = loader.load(
            'fuzzy-rgb', 'test', per_class=config.test_per_class,
            seed=config.seed)
    else:
        train_set = loader.load(config.dataset, 'train')
        try:
            test_set = loader.load(config.dataset, 'test')
        except FileNotFoundError as exc:
            log.warning("no test split: %s" % exc)
            test_set = None

    if config.subset:
        train_set = train_set.subset(config.subset, config.seed)
    return train_set, test_set


def train(
    config: TrainConfig,
    output_dir: StrPath,
    train_set: Dataset | None = None,
    test_set: Dataset | None = None
) -> TrainResult:
    """Train a model jointly with its loss parameters.

    Writes the metrics file and the final checkpoint to
    ``output_dir``. Model weights and loss parameters are stepped by
    two separate Adam optimizers.
    """

    if train_set is None:
        train_set, test_set = load_datasets(config)

    os.makedirs(output_dir, exist_ok=True)
    metrics_path = os.path.join(output_dir, config.metrics)
    checkpoint_path = os.path.join(output_dir, config.checkpoint)

    model_seq, loss_seq, augment_seq = \
        np.random.SeedSequence(config.seed).spawn(3)
    model = build_model(
        config.model, train_set.image_shape, config.feature_dim,
        train_set.class_count, rng=np.random.default_rng(model_seq))
    state = LossState.create(
        train_set.class_count, config.feature_dim,
        rng=np.random.default_rng(loss_seq), **config.loss_constants())
    augment_rng = np.random.default_rng(augment_seq)

    model_optimizer = Adam(model.parameters(), config.model_lr)
    loss_params = state.parameters()
    loss_optimizer = Adam(
        {name: loss_params[name]
         for name in LOSS_PARAMETERS[config.aux_kind]},
        config.loss_lr)
    check_disjoint(model_optimizer, loss_optimizer)

    sampler = BalancedSampler(
        train_set.labels, train_set.class_count, config.batch_size,
        config.seed)
    writer = MetricsWriter(metrics_path, train_set.class_count)
    records = []

    log.info(
        "training %r on %r (aux_kind=%s, lambda=%g, seed=%d)." % (
            model, train_set, config.aux_kind, config.lam, config.seed))

    for epoch in range(config.epochs):
        model_lr = cosine_lr(config.model_lr, epoch, config.epochs)
        loss_lr = cosine_lr(config.loss_lr, epoch, config.epochs)
        sums = {'total': 0.0, 'xent': 0.0, 'aux': 0.0}
        count = 0

        for batch, indices in enumerate(sampler.epoch(epoch)):
            images = train_set.images[indices]
            labels = train_set.labels[indices]
            if config.augment:
                images = augment(images, config.augment_ops, augment_rng)

            model_optimizer.zero_grad()
            for tensor in loss_params.values():
                tensor.zero_grad()

            with Tape():
                logits, features = model.forward_with_features(
                    Tensor(images))
                output = joint_loss(
                    logits, features, labels, state, config.aux_kind)
                components = output.components
                if not math.isfinite(components['total']):
                    log.error(
                        "divergence in epoch %d, batch %d: %s; "
                        "class counts %s." % (
                            epoch + 1, batch, components,
                            np.bincount(labels).tolist()))
                    raise DivergenceError(epoch + 1, batch, components)
                backward(output.total)

            model_optimizer.step(model_lr)
            loss_optimizer.step(loss_lr)

            if DEBUG_MODE:
                log.debug("epoch %d, batch %d: %s." % (
                    epoch + 1, batch, components))
            for name in sums:
                sums[name] += components[name]
            count += 1

        train_eval = evaluate(model, train_set)
        if test_set is not None:
            test_eval = evaluate(model, test_set)
            test_accuracy, test_icj = test_eval.accuracy, test_eval.icj
        else:
            test_accuracy = math.nan
            test_icj = np.full(train_set.class_count, math.nan)

        record = MetricsRecord(
            epoch + 1,
            train_eval.accuracy,
            test_accuracy,
            sums['total'] / count,
            sums['xent'] / count,
            sums['aux'] / count,
            model_lr,
            loss_lr,
            train_eval.icj.tolist(),
            list(test_icj),
            state.growth_weights.data.tolist(),
            state.k_values().tolist(),
        )
        writer.append(record)
        records.append(record)
        log.info(
            "epoch %d/%d: loss %.6f, train accuracy %.4f, "
            "test accuracy %.4f, mean I %.6f." % (
                epoch + 1, config.epochs, record.loss_total,
                record.train_accuracy, record.test_accuracy,
                float(np.mean(train_eval.icj))))

    save_checkpoint(
        checkpoint_path, model, state, seed=config.seed,
        aux_kind=config.aux_kind)
    return TrainResult(
        model, state, metrics_path, checkpoint_path, records, config)


def train_repeats(
    config: TrainConfig,
    output_dir: StrPath,
    loader: DatasetLoader | None = None
) -> list[TrainResult]:
    """Train once per seed in ``config.run_seeds()``.

    All repeats share the datasets loaded for the first seed; with
    more than one repeat each run writes to its own subdirectory.
    """

    train_set, test_set = load_datasets(config, loader)
    seeds: Sequence[int] = config.run_seeds()
    results = []
    for seed in seeds:
        run_config = config.replace(seed=seed, repeats=1)
        run_dir = os.fspath(output_dir)
        if len(seeds) > 1:
            run_dir = os.path.join(run_dir, 'seed-%d' % seed)
        results.append(train(run_config, run_dir, train_set, test_set))
    return results
