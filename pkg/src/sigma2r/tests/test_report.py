import math
import unittest

import pytest

from sigma2r.exc import ReportError
from sigma2r.manifest import RunManifest
from sigma2r.report import RunMetrics
from sigma2r.report import accuracy_delta
from sigma2r.report import compare
from sigma2r.report import format_delta
from sigma2r.report import load_run
from sigma2r.report import spread_delta
from sigma2r.training import MetricsRecord
from sigma2r.training import MetricsWriter


def record(epoch, train_icj, test_icj=(0.5, 0.5), train=0.9, test=0.8):
    return MetricsRecord(
        epoch, train, test, 1.0, 0.9, 10.0, 0.001, 0.1,
        list(train_icj), list(test_icj), [0.0, 0.0], [20.0, 20.0])


def run(name, *repeats):
    return RunMetrics(name, [list(records) for records in repeats])


class DeltaTest(unittest.TestCase):
    def test_spread(self):
        self.assertEqual(format_delta(spread_delta(0.8378, 0.1904)), '340.02')
        self.assertEqual(format_delta(spread_delta(0.5, 0.5)), '0.00')
        self.assertEqual(format_delta(spread_delta(0.5, 0.0)), 'inf')
        self.assertEqual(spread_delta(0.0, 0.0), 0.0)

    def test_accuracy(self):
        self.assertEqual(
            format_delta(accuracy_delta(89.71, 91.503)), '2.00')
        self.assertEqual(accuracy_delta(0.0, 0.5), math.inf)

    def test_negative(self):
        self.assertEqual(format_delta(spread_delta(0.1, 0.2)), '-50.00')
        self.assertEqual(format_delta(-math.inf), '-inf')


class CompareTest(unittest.TestCase):
    def test_identical_runs(self):
        a = run('a', [record(1, [0.3, 0.4]), record(2, [0.2, 0.1])])
        report = compare(a, a)
        self.assertTrue(report.rows)
        self.assertTrue(all(row.delta == 0.0 for row in report.rows))
        self.assertTrue(all(
            row.cells()[3] == '0.00' for row in report.rows))

    def test_final_epoch_rows(self):
        a = run('ce', [record(1, [9.0, 9.0]), record(2, [0.8378, 0.4])])
        b = run('s2r', [record(1, [9.0, 9.0]), record(2, [0.1904, 0.0])])
        rows = {row.label: row for row in compare(a, b).rows}
        self.assertEqual(rows['I train class 0'].cells()[3], '340.02')
        self.assertEqual(rows['I train class 1'].cells()[3], 'inf')
        self.assertIn('test accuracy avg', rows)
        self.assertIn('train accuracy max', rows)

    def test_repeats(self):
        a = run('a', [record(1, [1.0, 1.0], test=0.6)],
                [record(1, [3.0, 1.0], test=0.8)])
        b = run('b', [record(1, [1.0, 1.0], test=0.7)])
        report = compare(a, b)
        rows = {row.label: row for row in report.rows}
        self.assertEqual(rows['I train class 0'].a, 2.0)
        self.assertEqual(rows['test accuracy avg'].a, pytest.approx(0.7))
        self.assertEqual(rows['test accuracy max'].a, 0.8)
        self.assertEqual(report.repeats, (2, 1))
        self.assertIn('repeats: 2 vs 1', report.to_text())

    def test_missing_test_split(self):
        nan = float('nan')
        a = run('a', [record(1, [1.0, 1.0], (nan, nan), test=nan)])
        labels = [row.label for row in compare(a, a).rows]
        self.assertNotIn('I test class 0', labels)
        self.assertNotIn('test accuracy avg', labels)
        self.assertIn('train accuracy avg', labels)

    def test_class_count_mismatch(self):
        a = run('a', [record(1, [1.0, 1.0])])
        b = run('b', [record(1, [1.0, 1.0, 1.0])])
        with self.assertRaises(ReportError):
            compare(a, b)

    def test_csv(self):
        a = run('a', [record(1, [0.5, 0.5])])
        lines = compare(a, a).to_csv().splitlines()
        self.assertEqual(lines[0], 'row,A,B,delta_percent')
        self.assertEqual(lines[1], 'I train class 0,0.5000,0.5000,0.00')


def test_load_run_from_manifest(tmp_path):
    for seed in (0, 1):
        directory = tmp_path / ('seed-%d' % seed)
        directory.mkdir()
        writer = MetricsWriter(directory / 'metrics.csv', 2)
        writer.append(record(1, [seed, 1.0]))
    manifest = RunManifest('train', seeds=[0, 1], directory=str(tmp_path))
    manifest.add('metrics', tmp_path / 'seed-0' / 'metrics.csv')
    manifest.add('metrics', tmp_path / 'seed-1' / 'metrics.csv')
    manifest.write()

    metrics = load_run(tmp_path)
    assert len(metrics.repeats) == 2
    assert metrics.class_count == 2
    single = load_run(tmp_path / 'seed-1' / 'metrics.csv')
    assert single.finals[0].train_icj == [1.0, 1.0]


def test_load_run_errors(tmp_path):
    with pytest.raises(ReportError):
        load_run(tmp_path)
    MetricsWriter(tmp_path / 'metrics.csv', 2)
    with pytest.raises(ReportError):
        load_run(tmp_path / 'metrics.csv')
    with pytest.raises(ReportError):
        load_run(tmp_path / 'missing.csv')
