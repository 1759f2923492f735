"""Training runs at desk scale.

These take minutes; set ``SIGMA2R_ACCEPTANCE=1`` to run them.
"""

import math
import xml.etree.ElementTree as ET

import pytest

from sigma2r.config import ACCEPTANCE
from sigma2r.plot import trajectory_svg
from sigma2r.settings import TrainConfig
from sigma2r.training import load_datasets
from sigma2r.training import train
from sigma2r.training import train_repeats


pytestmark = pytest.mark.skipif(
    not ACCEPTANCE, reason="set SIGMA2R_ACCEPTANCE=1 to run")

SVG = '{http://www.w3.org/2000/svg}'


def mean(values):
    return math.fsum(values) / len(values)


@pytest.fixture(scope='module')
def fuzzy_runs(tmp_path_factory):
    config = TrainConfig(
        dataset='fuzzy-rgb', model='small-convnet', feature_dim=2,
        epochs=30, per_class=300, test_per_class=100, lam=0.01, Z=40.0,
        n=7, seed=0)
    train_set, test_set = load_datasets(config)
    runs = {}
    for aux_kind in ('none', 'center', 'sigma2r'):
        out = tmp_path_factory.mktemp(aux_kind)
        runs[aux_kind] = train(
            config.replace(aux_kind=aux_kind), out, train_set, test_set)
    return runs


def test_variance_collapse(fuzzy_runs):
    spread = {
        kind: mean(result.records[-1].train_icj)
        for kind, result in fuzzy_runs.items()
    }
    assert spread['sigma2r'] < spread['center'] < spread['none']
    assert spread['sigma2r'] <= 0.5 * spread['center']


def test_growth_rate_dynamics(fuzzy_runs):
    records = fuzzy_runs['sigma2r'].records
    first, last = records[0].w_k, records[-1].w_k
    assert all(abs(b - a) > 0 for a, b in zip(first, last))

    root = ET.fromstring(trajectory_svg(records, values='w_k').encode('utf-8'))
    assert len(root.findall('.//%spolyline' % SVG)) == 3


def test_accuracy_trend(tmp_path):
    config = TrainConfig(
        dataset='fmnist', model='lenet', subset=5000, epochs=10,
        batch_size=250, repeats=5, seed=0)
    try:
        load_datasets(config)
    except (OSError, ValueError) as exc:
        pytest.skip("Fashion-MNIST is not available: %s" % exc)

    accuracy = {}
    for aux_kind in ('none', 'center', 'sigma2r'):
        results = train_repeats(
            config.replace(aux_kind=aux_kind), tmp_path / aux_kind)
        accuracy[aux_kind] = 100 * mean(
            [result.records[-1].test_accuracy for result in results])

    assert accuracy['sigma2r'] - accuracy['center'] >= -0.3
    assert accuracy['center'] - accuracy['none'] >= -0.3
    assert accuracy['sigma2r'] - accuracy['none'] >= 0.2
