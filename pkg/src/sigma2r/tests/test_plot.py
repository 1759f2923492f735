import os
import unittest
import xml.etree.ElementTree as ET

import numpy as np

from sigma2r.exc import PlotError
from sigma2r.plot import beta_svg
from sigma2r.plot import features2d_svg
from sigma2r.plot import trajectory_svg
from sigma2r.plot import write_svg
from sigma2r.training import MetricsRecord


SVG = '{http://www.w3.org/2000/svg}'


def parse(svg):
    return ET.fromstring(svg.encode('utf-8'))


def records(classes, epochs=4):
    return [
        MetricsRecord(
            epoch, 0.9, 0.8, 1.0, 0.9, 10.0, 0.001, 0.1,
            [0.1] * classes, [0.1] * classes,
            [0.1 * j - 0.01 * epoch for j in range(classes)],
            [20.0 + j + epoch for j in range(classes)])
        for epoch in range(1, epochs + 1)
    ]


class FeaturesTest(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.labels = np.repeat(np.arange(3), 5)
        self.features = rng.standard_normal((15, 2)) + self.labels[:, None]
        self.centers = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])

    def test_groups_and_centers(self):
        root = parse(features2d_svg(
            self.features, self.labels, self.centers))
        groups = [
            g for g in root.iter(SVG + 'g') if g.get('class') == 'class']
        self.assertEqual(len(groups), 3)
        self.assertEqual(
            sorted(g.get('fill') for g in groups),
            sorted({'#1f77b4', '#ff7f0e', '#2ca02c'}))
        self.assertEqual(
            [len(list(g.iter(SVG + 'circle'))) for g in groups], [5, 5, 5])
        centers = [
            p for p in root.iter(SVG + 'path') if p.get('class') == 'center']
        self.assertEqual(len(centers), 3)

    def test_without_centers(self):
        root = parse(features2d_svg(self.features, self.labels))
        self.assertEqual(len(list(root.iter(SVG + 'path'))), 0)

    def test_wrong_dimension(self):
        with self.assertRaises(PlotError) as context:
            features2d_svg(np.zeros((4, 3)), np.zeros(4, dtype=int))
        self.assertIn('feature_dim = 2', str(context.exception))


class LinesTest(unittest.TestCase):
    def test_one_polyline_per_class(self):
        root = parse(trajectory_svg(records(10)))
        lines = list(root.iter(SVG + 'polyline'))
        self.assertEqual(len(lines), 10)
        self.assertEqual(len(lines[0].get('points').split()), 4)

    def test_raw_weights(self):
        root = parse(trajectory_svg(records(2), values='w_k'))
        self.assertEqual(len(list(root.iter(SVG + 'polyline'))), 2)
        labels = [t.text for t in root.iter(SVG + 'text')
                  if t.get('class') == 'ylabel']
        self.assertEqual(labels, ['w_K'])

    def test_empty_metrics(self):
        with self.assertRaises(PlotError):
            trajectory_svg([])

    def test_beta_curves(self):
        root = parse(beta_svg((0.5, 2.0), Z=40.0))
        lines = list(root.iter(SVG + 'polyline'))
        self.assertEqual(
            [line.get('class') for line in lines],
            ['curve', 'curve', 'reference'])
        self.assertEqual(len(lines[0].get('points').split()), 201)

    def test_beta_rejects_bad_rates(self):
        with self.assertRaises(PlotError):
            beta_svg(())
        with self.assertRaises(PlotError):
            beta_svg((1.0, -1.0))


def test_write_svg(tmp_path):
    path = tmp_path / 'beta.svg'
    write_svg(path, beta_svg())
    assert path.read_text().lstrip().startswith('<?xml')
    assert os.listdir(tmp_path) == ['beta.svg']
