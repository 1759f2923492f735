"""SVG figures rendered through page templates.

Data coordinates are mapped to pixels by a :class:`Frame`:

>>> frame = Frame(0.0, 10.0, 0.0, 1.0)
>>> frame.x(0.0), frame.x(10.0), frame.y(0.0), frame.y(1.0)
(60.0, 540.0, 420.0, 30.0)
"""

from __future__ import annotations

import logging
import os
from typing import TYPE_CHECKING
from typing import NamedTuple

import numpy as np
from chameleon import PageTemplateLoader

from sigma2r.exc import PlotError
from sigma2r.losses import beta
from sigma2r.utils import atomic_write


if TYPE_CHECKING:
    from collections.abc import Sequence

    from _typeshed import StrPath
    from numpy.typing import NDArray

    from sigma2r.training import MetricsRecord


log = logging.getLogger('sigma2r.plot')

templates = PageTemplateLoader(
    os.path.join(os.path.dirname(__file__), 'templates'))

PALETTE = (
    '#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd',
    '#8c564b', '#e377c2', '#7f7f7f', '#bcbd22', '#17becf',
)

TRAJECTORY_VALUES = ('k', 'w_k')


def colour(index: int) -> str:
    if index < len(PALETTE):
        return PALETTE[index]
    return 'hsl(%d, 60%%, 45%%)' % (index * 137 % 360)


def _fmt(value: float) -> str:
    return '%.2f' % value


class Tick(NamedTuple):
    position: str
    label: str


class Frame:
    """Linear mapping of a data rectangle onto the plot area."""

    def __init__(
        self,
        xmin: float,
        xmax: float,
        ymin: float,
        ymax: float,
        width: int = 640,
        height: int = 480,
        margin: int = 60,
        legend: int = 100
    ) -> None:

        if xmax <= xmin:
            xmin, xmax = xmin - 0.5, xmax + 0.5
        if ymax <= ymin:
            ymin, ymax = ymin - 0.5, ymax + 0.5
        self.xmin, self.xmax = xmin, xmax
        self.ymin, self.ymax = ymin, ymax
        self.width = width
        self.height = height
        self.left = margin
        self.top = margin // 2
        self.right = width - legend
        self.bottom = height - margin
        self.inner_width = self.right - self.left
        self.inner_height = self.bottom - self.top

    def x(self, value: float) -> float:
        return self.left + (value - self.xmin) / (self.xmax - self.xmin) \
            * self.inner_width

    def y(self, value: float) -> float:
        return self.bottom - (value - self.ymin) / (self.ymax - self.ymin) \
            * self.inner_height

    def _ticks(self, low: float, high: float, pixel: str) -> list[Tick]:
        mapping = self.x if pixel == 'x' else self.y
        return [
            Tick(_fmt(mapping(v)), '%.3g' % v)
            for v in np.linspace(low, high, 5)
        ]

    @property
    def xticks(self) -> list[Tick]:
        return self._ticks(self.xmin, self.xmax, 'x')

    @property
    def yticks(self) -> list[Tick]:
        return self._ticks(self.ymin, self.ymax, 'y')

    @classmethod
    def around(cls, xs: NDArray[np.float64], ys: NDArray[np.float64],
               pad: float = 0.05) -> Frame:
        xmin, xmax = float(np.min(xs)), float(np.max(xs))
        ymin, ymax = float(np.min(ys)), float(np.max(ys))
        dx, dy = (xmax - xmin) * pad, (ymax - ymin) * pad
        return cls(xmin - dx, xmax + dx, ymin - dy, ymax + dy)


class Group(NamedTuple):
    label: int
    colour: str
    points: list[tuple[str, str]]


class Center(NamedTuple):
    label: int
    colour: str
    path: str


class Line(NamedTuple):
    label: str
    colour: str
    points: str
    kind: str = 'trajectory'
    dash: str = 'none'


def _polyline(frame: Frame, xs: Sequence[float], ys: Sequence[float]) -> str:
    return " ".join(
        "%s,%s" % (_fmt(frame.x(x)), _fmt(frame.y(y)))
        for x, y in zip(xs, ys))


def features2d_svg(
    features: NDArray[np.float64],
    labels: NDArray[np.intp],
    centers: NDArray[np.float64] | None = None,
    title: str = 'deep features'
) -> str:
    """Scatter of two-dimensional features coloured by class.

    Centers, when given, are drawn as crosses in their class colour.
    """

    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[1] != 2:
        raise PlotError(
            "features2d needs 2-D features, got dimension %s; "
            "train a model with feature_dim = 2." % (
                features.shape[1] if features.ndim == 2 else features.shape,))
    if features.shape[0] == 0:
        raise PlotError("no features to plot.")

    xs, ys = features[:, 0], features[:, 1]
    if centers is not None:
        centers = np.asarray(centers, dtype=np.float64)
        xs = np.concatenate([xs, centers[:, 0]])
        ys = np.concatenate([ys, centers[:, 1]])
    frame = Frame.around(xs, ys)

    groups = []
    for label in np.unique(labels):
        points = features[labels == label]
        groups.append(Group(int(label), colour(int(label)), [
            (_fmt(frame.x(x)), _fmt(frame.y(y))) for x, y in points]))

    markers = []
    if centers is not None:
        for label in np.unique(labels):
            cx, cy = frame.x(centers[label, 0]), frame.y(centers[label, 1])
            path = "M %s %s L %s %s M %s %s L %s %s" % tuple(map(_fmt, (
                cx - 6, cy - 6, cx + 6, cy + 6,
                cx - 6, cy + 6, cx + 6, cy - 6)))
            markers.append(Center(int(label), colour(int(label)), path))

    return templates['scatter.pt'](
        frame=frame, title=title, groups=groups, centers=markers)


def trajectory_svg(
    records: Sequence[MetricsRecord],
    values: str = 'k',
    title: str = 'growth rate by class'
) -> str:
    """One polyline per class of the growth rate over epochs.

    ``values`` selects the normalized growth rate (``k``) or the raw
    learned weight (``w_k``).
    """

    if values not in TRAJECTORY_VALUES:
        raise PlotError("unknown trajectory values: %r." % values)
    if not records:
        raise PlotError("no epochs recorded in the metrics.")

    epochs = np.array([r.epoch for r in records], dtype=np.float64)
    series = np.array([getattr(r, values) for r in records])
    if series.ndim != 2 or series.shape[1] == 0:
        raise PlotError("metrics carry no per-class growth rates.")

    frame = Frame(float(epochs.min()), float(epochs.max()),
                  float(series.min()), float(series.max()))
    lines = [
        Line('class %d' % j, colour(j), _polyline(frame, epochs, series[:, j]))
        for j in range(series.shape[1])
    ]
    ylabel = 'K' if values == 'k' else 'w_K'
    return templates['lines.pt'](
        frame=frame, title=title, lines=lines, xlabel='epoch', ylabel=ylabel)


def beta_svg(
    k_values: Sequence[float] = (0.5, 1.0, 2.0, 5.0),
    Z: float = 40.0,
    span: float = 5.0,
    samples: int = 201,
    title: str = 'instance weight'
) -> str:
    """Weight curves against the spread difference, one per growth rate.

    The constant unit weight of the center loss is drawn for reference.
    """

    if not k_values:
        raise PlotError("no growth rates given.")
    if any(k <= 0 for k in k_values):
        raise PlotError("growth rates must be positive.")

    xs = np.linspace(-span, span, samples)
    frame = Frame(-span, span, 0.0, Z)
    lines = [
        Line('K = %g' % k, colour(j),
             _polyline(frame, xs, beta(xs, 0.0, k, Z).data), 'curve')
        for j, k in enumerate(k_values)
    ]
    lines.append(Line(
        'center loss', '#444444',
        _polyline(frame, (-span, span), (1.0, 1.0)), 'reference', '4 3'))
    return templates['lines.pt'](
        frame=frame, title=title, lines=lines,
        xlabel='sigma_x - sigma_c', ylabel='beta')


def write_svg(path: StrPath, svg: str) -> None:
    atomic_write(path, svg.encode('utf-8'))
    log.info("figure written: %s." % path)
