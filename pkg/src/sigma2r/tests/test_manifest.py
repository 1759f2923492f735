import json

import pytest

from sigma2r.exc import ReportError
from sigma2r.manifest import RunManifest
from sigma2r.manifest import load_manifest


def test_round_trip(tmp_path):
    artifact = tmp_path / 'data' / 'labels.idx'
    artifact.parent.mkdir()
    artifact.write_bytes(b'\x00\x00\x08\x01')
    manifest = RunManifest(
        'gen-fuzzy', config='seed = 1\n', seeds=[1], directory=str(tmp_path))
    assert manifest.add('labels', artifact) == 'data/labels.idx'
    path = manifest.write()

    loaded = load_manifest(tmp_path)
    assert loaded.command == 'gen-fuzzy'
    assert loaded.seeds == [1]
    assert loaded.paths('labels') == [str(artifact)]
    assert len(loaded.digests['data/labels.idx']) == 64
    assert loaded.dumps() == manifest.dumps()
    assert load_manifest(path).config == 'seed = 1\n'


def test_identical_runs_write_identical_manifests(tmp_path):
    (tmp_path / 'a').write_text('x')
    texts = []
    for _ in range(2):
        manifest = RunManifest('train', directory=str(tmp_path))
        manifest.add('metrics', tmp_path / 'a')
        texts.append(manifest.dumps())
    assert texts[0] == texts[1]


def test_errors(tmp_path):
    with pytest.raises(ReportError):
        load_manifest(tmp_path)
    (tmp_path / 'manifest.json').write_text(json.dumps({'format': 'other'}))
    with pytest.raises(ReportError):
        load_manifest(tmp_path)
    (tmp_path / 'manifest.json').write_text(
        json.dumps({'format': 'sigma2r-manifest', 'version': 2}))
    with pytest.raises(ReportError):
        load_manifest(tmp_path)
