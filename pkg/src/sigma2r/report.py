"""Comparison of two runs.

Intra-class rows compare a baseline ``A`` against a proposal ``B``
as ``(A - B) / B``; accuracy rows as ``(B - A) / A``, both in percent:

>>> format_delta(spread_delta(0.5, 0.25))
'100.00'
>>> format_delta(accuracy_delta(0.8, 0.9))
'12.50'
>>> format_delta(spread_delta(0.3, 0.0))
'inf'
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING

from sigma2r.exc import ReportError
from sigma2r.manifest import load_manifest
from sigma2r.training import read_metrics
from sigma2r.utils import atomic_write


if TYPE_CHECKING:
    from collections.abc import Sequence

    from _typeshed import StrPath

    from sigma2r.training import MetricsRecord


log = logging.getLogger('sigma2r.report')

HEADER = ('row', 'A', 'B', 'delta_percent')


def spread_delta(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if b == 0:
        return math.inf
    return (a - b) / b * 100


def accuracy_delta(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if a == 0:
        return math.inf
    return (b - a) / a * 100


def format_delta(value: float) -> str:
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    if math.isnan(value):
        return 'nan'
    return '%.2f' % value


@dataclass
class RunMetrics:
    """The metrics of every repeat of one run."""

    name: str
    repeats: list[list[MetricsRecord]]

    @property
    def finals(self) -> list[MetricsRecord]:
        return [records[-1] for records in self.repeats]

    @property
    def class_count(self) -> int:
        return len(self.finals[0].train_icj)


def load_run(path: StrPath) -> RunMetrics:
    """Metrics of a run directory (through its manifest) or a CSV file."""

    path = os.fspath(path)
    if os.path.isdir(path):
        manifest = load_manifest(path)
        files = manifest.paths('metrics')
    else:
        files = [path]
    if not files:
        raise ReportError("no metrics in %s." % path)

    repeats = []
    for name in files:
        try:
            records = read_metrics(name)
        except (OSError, ValueError) as exc:
            raise ReportError(str(exc)) from exc
        if not records:
            raise ReportError("no epochs recorded in %s." % name)
        repeats.append(records)
    return RunMetrics(os.path.basename(path.rstrip(os.sep)), repeats)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


@dataclass
class ComparisonRow:
    label: str
    a: float
    b: float
    delta: float

    def cells(self) -> list[str]:
        return [
            self.label, '%.4f' % self.a, '%.4f' % self.b,
            format_delta(self.delta)]


@dataclass
class ComparisonReport:
    a: str
    b: str
    repeats: tuple[int, int]
    rows: list[ComparisonRow] = field(default_factory=list)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(HEADER)
        for row in self.rows:
            writer.writerow(row.cells())
        return out.getvalue()

    def to_text(self) -> str:
        header = ['', self.a, self.b, 'delta %']
        table = [header] + [row.cells() for row in self.rows]
        widths = [max(len(r[i]) for r in table) for i in range(4)]
        lines = [
            "  ".join(
                cell.ljust(w) if i == 0 else cell.rjust(w)
                for i, (cell, w) in enumerate(zip(r, widths))).rstrip()
            for r in table
        ]
        lines.insert(1, "-" * len(lines[0]))
        lines.append("")
        lines.append("repeats: %d vs %d" % self.repeats)
        return "\n".join(lines) + "\n"

    def write_csv(self, path: StrPath) -> None:
        atomic_write(path, self.to_csv().encode('utf-8'))


def compare(a: RunMetrics, b: RunMetrics) -> ComparisonReport:
    """Intra-class spread of the final epoch and accuracy over repeats."""

    if a.class_count != b.class_count:
        raise ReportError(
            "class count mismatch: %s has %d classes, %s has %d." % (
                a.name, a.class_count, b.name, b.class_count))

    report = ComparisonReport(
        a.name, b.name, (len(a.repeats), len(b.repeats)))

    for split in ('train', 'test'):
        attr = '%s_icj' % split
        for j in range(a.class_count):
            va = _mean([getattr(r, attr)[j] for r in a.finals])
            vb = _mean([getattr(r, attr)[j] for r in b.finals])
            if math.isnan(va) or math.isnan(vb):
                continue
            report.rows.append(ComparisonRow(
                "I %s class %d" % (split, j), va, vb, spread_delta(va, vb)))

    for split in ('train', 'test'):
        attr = '%s_accuracy' % split
        acc_a = [getattr(r, attr) for r in a.finals]
        acc_b = [getattr(r, attr) for r in b.finals]
        if any(map(math.isnan, acc_a + acc_b)):
            continue
        for label, reduce in (('avg', _mean), ('max', max)):
            va, vb = reduce(acc_a), reduce(acc_b)
            report.rows.append(ComparisonRow(
                "%s accuracy %s" % (split, label), va, vb,
                accuracy_delta(va, vb)))

    log.debug("compared %s and %s: %d rows." % (
        a.name, b.name, len(report.rows)))
    return report
