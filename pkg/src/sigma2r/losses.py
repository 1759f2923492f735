"""Cross-entropy and the auxiliary feature losses.

All auxiliary losses return *unweighted* values; the weight ``lam`` is
applied exactly once, by :func:`joint_loss`.

The growth rate maps an unconstrained weight to a positive slope:

>>> round(growth_rate(0.0, 1e-6, 40.0).item(), 6)
20.000001

and ``beta`` is a sigmoid of the difference between the local spread
of an instance and that of its class center:

>>> beta(1.5, 1.5, 3.0, 40.0).item()
20.0
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING
from typing import Any

import numpy as np

from sigma2r.autodiff import Tensor
from sigma2r.autodiff import as_tensor
from sigma2r.autodiff import broadcast
from sigma2r.autodiff import concat
from sigma2r.autodiff import logistic
from sigma2r.autodiff import pairwise_sqdist
from sigma2r.autodiff import select
from sigma2r.exc import DegenerateBatchError
from sigma2r.exc import LabelError
from sigma2r.exc import ShapeError


if TYPE_CHECKING:
    from numpy.typing import ArrayLike
    from numpy.typing import NDArray


log = logging.getLogger('sigma2r.losses')

AUX_KINDS = ('none', 'center', 'snn', 'sigma2r')

# Masked log-sum-exp entries sit this far below the smallest kept
# entry of their row, which makes their exponential exactly zero.
MASK_OFFSET = 1000.0


@dataclass
class LossState:
    """Learnable loss parameters and the loss constants."""

    centers: Tensor
    growth_weights: Tensor
    Z: float = 40.0
    epsilon: float = 1e-6
    n: int = 7
    lam: float = 0.01
    T: float = 1.0

    def __post_init__(self) -> None:
        if self.Z <= 0:
            raise ValueError("Z must be positive, got %r." % self.Z)
        if self.epsilon <= 0:
            raise ValueError(
                "epsilon must be positive, got %r." % self.epsilon)
        if self.n < 2:
            raise ValueError("n must be at least 2, got %r." % self.n)
        if self.lam < 0:
            raise ValueError("lambda must be non-negative, got %r." % self.lam)
        if self.T <= 0:
            raise ValueError("T must be positive, got %r." % self.T)
        if self.centers.ndim != 2 or \
                self.growth_weights.shape != (self.centers.shape[0],):
            raise ShapeError(
                'loss_state', self.centers.shape, self.growth_weights.shape)

    @classmethod
    def create(
        cls,
        num_classes: int,
        feature_dim: int,
        rng: np.random.Generator | None = None,
        **constants: Any
    ) -> LossState:
        """Centers and growth weights drawn from a standard normal."""

        if rng is None:
            rng = np.random.default_rng(0)
        centers = rng.standard_normal((num_classes, feature_dim))
        weights = rng.standard_normal(num_classes)
        return cls(
            centers=Tensor(centers, requires_grad=True, name='centers'),
            growth_weights=Tensor(
                weights, requires_grad=True, name='growth_weights'),
            **constants)

    @property
    def num_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.centers.shape[1]

    def parameters(self) -> dict[str, Tensor]:
        return {'centers': self.centers, 'growth_weights': self.growth_weights}

    def constants(self) -> dict[str, Any]:
        return {
            'Z': self.Z, 'epsilon': self.epsilon, 'n': self.n,
            'lam': self.lam, 'T': self.T,
        }

    def k_values(self) -> NDArray[np.float64]:
        """The growth rate of every class."""

        return growth_rate(self.growth_weights.detach(), self.epsilon,
                           self.Z).numpy()


@dataclass
class LossOutput:
    total: Tensor
    xent: Tensor
    aux: Tensor | None = None
    aux_kind: str = 'none'
    lam: float = 0.0
    beta: NDArray[np.float64] | None = None
    sigma_centers: NDArray[np.float64] | None = None

    @property
    def components(self) -> dict[str, float]:
        return {
            'total': self.total.item(),
            'xent': self.xent.item(),
            'aux': self.aux.item() if self.aux is not None else 0.0,
        }


@dataclass
class Sigma2ROutput:
    """Value of the loss with its per-instance and per-class diagnostics.

    ``beta`` holds the weight of every batch row; ``sigma_centers``
    holds the neighbourhood spread of every center (NaN for classes
    absent from the batch).
    """

    value: Tensor
    beta: NDArray[np.float64]
    sigma_centers: NDArray[np.float64]


@dataclass
class ClassNeighbors:
    label: int
    members: NDArray[np.intp]
    # (count, k) class-local indices of each member's nearest mates
    instance_order: NDArray[np.intp]
    # class-local indices of the members nearest to the center
    center_order: NDArray[np.intp]


@dataclass
class NeighborPlan:
    """The discrete neighbour selection of one batch.

    Selection is not differentiated; a plan computed once can be
    passed back to the loss to hold it fixed.
    """

    classes: list[ClassNeighbors] = field(default_factory=list)
    size: int = 0


def check_labels(labels: ArrayLike, class_count: int) -> NDArray[np.intp]:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise LabelError("labels must be a vector, got shape %s." % (
            labels.shape,))
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        bad = labels[(labels < 0) | (labels >= class_count)][0]
        raise LabelError(
            "label %d out of range [0, %d)." % (bad, class_count))
    return labels.astype(np.intp)


def cross_entropy(logits: Tensor, labels: ArrayLike) -> Tensor:
    """Mean negative log-softmax of the labelled class."""

    if logits.ndim != 2:
        raise ShapeError('cross_entropy', logits.shape)
    m, k = logits.shape
    labels = check_labels(labels, k)
    if labels.shape[0] != m:
        raise ShapeError('cross_entropy', logits.shape, labels.shape)

    shift = logits.detach().max(axis=1, keepdims=True)
    shifted = logits - broadcast(shift, (m, k))
    log_norm = shifted.exp().sum(axis=1).log()
    picked = shifted[(np.arange(m), labels)]
    return (log_norm - picked).mean()


def center_loss(
    features: Tensor,
    labels: ArrayLike,
    state: LossState,
    scale: float = 1.0
) -> Tensor:
    """``scale / 2`` times the summed squared distances to the centers."""

    if features.ndim != 2 or features.shape[1] != state.feature_dim:
        raise ShapeError('center_loss', features.shape, state.centers.shape)
    labels = check_labels(labels, state.num_classes)
    diff = features - select(state.centers, labels)
    return (diff * diff).sum() * (0.5 * scale)


def _spread(distances: Tensor, axis: int | None = None) -> Tensor:
    """Population standard deviation of (unsquared) distances."""

    if axis is None:
        dev = distances - distances.mean()
        return (dev * dev).mean().sqrt()
    mean = distances.mean(axis=axis, keepdims=True)
    dev = distances - broadcast(mean, distances.shape)
    return (dev * dev).mean(axis=axis).sqrt()


def _nearest(sqdist: NDArray[np.float64], n: int) -> NDArray[np.intp]:
    # stable sort keeps the lowest index first on ties
    return np.argsort(sqdist, axis=-1, kind='stable')[..., :n]


def neighborhood_std(
    point: Any,
    same_class_points: Any,
    n: int,
    order: ArrayLike | None = None
) -> Tensor:
    """Spread of the distances from ``point`` to its nearest class mates.

    ``same_class_points`` must not contain ``point`` itself. With fewer
    than ``n`` mates all of them are used; with fewer than two the
    spread is zero.

    >>> neighborhood_std([0.0], [[1.0], [3.0]], 2).item()
    1.0
    >>> neighborhood_std([0.0, 0.0], [[5.0, 0.0], [0.0, 5.0], [3.0, 4.0]],
    ...                  3).item()
    0.0
    """

    point = as_tensor(point)
    points = as_tensor(same_class_points)
    if points.ndim != 2 or point.shape != (points.shape[1],):
        raise ShapeError('neighborhood_std', point.shape, points.shape)

    sqdist = pairwise_sqdist(point.reshape(1, -1), points).reshape(-1)
    if order is None:
        order = _nearest(sqdist.data, n)
    order = np.asarray(order, dtype=np.intp)
    if order.size < 2:
        return Tensor(0.0)
    return _spread(sqdist[order].sqrt())


def growth_rate(w: Any, epsilon: float, Z: float) -> Tensor:
    """``epsilon + Z * logistic(w)``, bounded within (epsilon, epsilon + Z)."""

    return logistic(w) * Z + epsilon


def beta(sigma_x: Any, sigma_c: Any, k: Any, Z: float) -> Tensor:
    """``Z / (1 + exp(-k * (sigma_x - sigma_c)))``."""

    sigma_x = as_tensor(sigma_x)
    return logistic(as_tensor(k) * (sigma_x - sigma_c)) * Z


def select_neighbors(
    features: ArrayLike,
    labels: ArrayLike,
    centers: ArrayLike,
    n: int
) -> NeighborPlan:
    """Nearest same-class batch mates of every instance and center."""

    features = np.asarray(features, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    labels = check_labels(labels, centers.shape[0])

    plan = NeighborPlan(size=labels.shape[0])
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        points = features[members]
        diff = points[:, None, :] - points[None, :, :]
        sq = np.einsum('ijk,ijk->ij', diff, diff)
        np.fill_diagonal(sq, np.inf)
        instance_order = _nearest(sq, min(n, len(members) - 1))
        diff = points - centers[label]
        center_order = _nearest(np.einsum('ij,ij->i', diff, diff), n)
        plan.classes.append(ClassNeighbors(
            int(label), members, instance_order, center_order))
    return plan


def _class_terms(
    features: Tensor,
    state: LossState,
    entry: ClassNeighbors
) -> tuple[Tensor, Tensor, Tensor]:
    """Squared center distances, beta and center spread of one class."""

    count = len(entry.members)
    points = features[entry.members]
    center = state.centers[entry.label]

    diff = points - center
    sq = (diff * diff).sum(axis=1)

    if entry.instance_order.shape[1] >= 2:
        mates = pairwise_sqdist(points, points)
        rows = np.arange(count)[:, None]
        dist = mates[(rows, entry.instance_order)].sqrt()
        sigma_x = _spread(dist, axis=1)
    else:
        sigma_x = Tensor(np.zeros(count))

    if entry.center_order.size >= 2:
        to_center = pairwise_sqdist(center.reshape(1, -1), points).reshape(-1)
        sigma_c = _spread(to_center[entry.center_order].sqrt())
    else:
        sigma_c = Tensor(0.0)

    k = growth_rate(state.growth_weights[entry.label], state.epsilon, state.Z)
    weight = beta(sigma_x, sigma_c, k, state.Z)
    return sq, weight, sigma_c


def sigma2r_loss(
    features: Tensor,
    labels: ArrayLike,
    state: LossState,
    plan: NeighborPlan | None = None
) -> Sigma2ROutput:
    """Center distances weighted per instance by ``beta``, averaged.

    Evaluated class by class; classes absent from the batch
    contribute nothing.
    """

    if features.ndim != 2 or features.shape[1] != state.feature_dim:
        raise ShapeError('sigma2r_loss', features.shape, state.centers.shape)
    m = features.shape[0]
    if m == 0:
        raise DegenerateBatchError("empty batch.")
    labels = check_labels(labels, state.num_classes)
    if plan is None:
        plan = select_neighbors(
            features.data, labels, state.centers.data, state.n)
    elif plan.size != m:
        raise ShapeError('sigma2r_loss', (plan.size,), features.shape)

    weights = np.zeros(m)
    sigma_centers = np.full(state.num_classes, np.nan)
    total: Tensor | None = None

    for entry in plan.classes:
        sq, weight, sigma_c = _class_terms(features, state, entry)
        term = (weight * sq).sum()
        total = term if total is None else total + term
        weights[entry.members] = weight.data
        sigma_centers[entry.label] = sigma_c.item()

    assert total is not None
    return Sigma2ROutput(total / m, weights, sigma_centers)


def sigma2r_per_instance(
    features: Tensor,
    labels: ArrayLike,
    state: LossState,
    plan: NeighborPlan | None = None
) -> Tensor:
    """The weighted squared distance of every row, instance by instance.

    Summing and dividing by the batch size gives :func:`sigma2r_loss`.
    """

    labels = check_labels(labels, state.num_classes)
    if plan is None:
        plan = select_neighbors(
            features.data, labels, state.centers.data, state.n)

    terms: list[Tensor | None] = [None] * labels.shape[0]
    for entry in plan.classes:
        points = features[entry.members]
        center = state.centers[entry.label]
        sigma_c = neighborhood_std(
            center, points, state.n, order=entry.center_order)
        k = growth_rate(
            state.growth_weights[entry.label], state.epsilon, state.Z)

        for local, row in enumerate(entry.members):
            others = np.delete(np.arange(len(entry.members)), local)
            # plan indices are class-local; drop the instance itself
            order = entry.instance_order[local]
            order = np.searchsorted(others, order)
            sigma_x = neighborhood_std(
                features[row], points[others], state.n, order=order)
            diff = features[row] - center
            weight = beta(sigma_x, sigma_c, k, state.Z)
            terms[row] = weight * (diff * diff).sum()

    return concat([t.reshape(1) for t in terms if t is not None])


def snn_loss(features: Tensor, labels: ArrayLike, T: float = 1.0) -> Tensor:
    """Soft nearest neighbour loss at temperature ``T``.

    Rows without a same-class partner are left out of the mean.
    """

    if features.ndim != 2:
        raise ShapeError('snn_loss', features.shape)
    m = features.shape[0]
    labels = np.asarray(labels)
    if m < 2 or labels.shape != (m,):
        raise DegenerateBatchError("degenerate batch for SNN.")

    others = ~np.eye(m, dtype=bool)
    same = (labels[:, None] == labels[None, :]) & others
    rows = np.flatnonzero(same.any(axis=1))
    if rows.size == 0:
        raise DegenerateBatchError("degenerate batch for SNN.")

    scores = pairwise_sqdist(features, features)[rows] * (-1.0 / T)
    fixed = scores.data
    floor = np.where(others[rows], fixed, np.inf).min(
        axis=1, keepdims=True) - MASK_OFFSET

    def log_sum_exp(mask: NDArray[np.bool_]) -> Tensor:
        shift = np.where(mask, fixed, -np.inf).max(axis=1, keepdims=True)
        fill = np.where(mask, 0.0, floor) - shift
        masked = scores * mask.astype(np.float64) + fill
        return masked.exp().sum(axis=1).log() + shift[:, 0]

    ratio = log_sum_exp(same[rows]) - log_sum_exp(others[rows])
    return -ratio.mean()


def joint_loss(
    logits: Tensor,
    features: Tensor,
    labels: ArrayLike,
    state: LossState,
    aux_kind: str = 'sigma2r',
    plan: NeighborPlan | None = None
) -> LossOutput:
    """Cross-entropy plus ``lam`` times the chosen auxiliary loss."""

    if aux_kind not in AUX_KINDS:
        raise ValueError(
            "unknown aux_kind: %r (expected one of %s)." % (
                aux_kind, ", ".join(AUX_KINDS)))

    xent = cross_entropy(logits, labels)
    if aux_kind == 'none':
        return LossOutput(total=xent, xent=xent)

    output = LossOutput(
        total=xent, xent=xent, aux_kind=aux_kind, lam=state.lam)
    if aux_kind == 'center':
        aux = center_loss(features, labels, state)
    elif aux_kind == 'snn':
        aux = snn_loss(features, labels, state.T)
    else:
        result = sigma2r_loss(features, labels, state, plan=plan)
        aux = result.value
        output.beta = result.beta
        output.sigma_centers = result.sigma_centers

    output.aux = aux
    output.total = xent + aux * state.lam
    return output
