from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING
from typing import Any

from sigma2r.exc import ReportError
from sigma2r.utils import atomic_write
from sigma2r.utils import code_version
from sigma2r.utils import file_digest


if TYPE_CHECKING:
    from _typeshed import StrPath


log = logging.getLogger('sigma2r.manifest')

MANIFEST_NAME = 'manifest.json'
MANIFEST_FORMAT = 'sigma2r-manifest'
MANIFEST_VERSION = 1


@dataclass
class RunManifest:
    """The record of one command invocation and everything it wrote.

    Artifact paths are relative to the manifest's directory; the
    manifest carries no timestamps, so identical runs write identical
    manifests.
    """

    command: str
    config: str = ''
    seeds: list[int] = field(default_factory=list)
    artifacts: dict[str, list[str]] = field(default_factory=dict)
    digests: dict[str, str] = field(default_factory=dict)
    code_version: str = field(default_factory=code_version)
    directory: str = ''

    def add(self, kind: str, path: StrPath) -> str:
        relative = os.path.relpath(path, self.directory or '.')
        self.artifacts.setdefault(kind, []).append(relative)
        self.digests[relative] = file_digest(path)
        return relative

    def paths(self, kind: str) -> list[str]:
        return [
            os.path.join(self.directory, path)
            for path in self.artifacts.get(kind, [])
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            'format': MANIFEST_FORMAT,
            'version': MANIFEST_VERSION,
            'command': self.command,
            'code_version': self.code_version,
            'config': self.config,
            'seeds': self.seeds,
            'artifacts': self.artifacts,
            'digests': self.digests,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self) -> str:
        path = os.path.join(self.directory, MANIFEST_NAME)
        atomic_write(path, self.dumps().encode('utf-8'))
        log.info("manifest written: %s." % path)
        return path


def load_manifest(path: StrPath) -> RunManifest:
    """Read a manifest file, or the manifest of a run directory."""

    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(path, encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, ValueError) as exc:
        raise ReportError("cannot read manifest %s: %s." % (path, exc)) \
            from exc

    if data.get('format') != MANIFEST_FORMAT:
        raise ReportError("not a run manifest: %s." % path)
    if data.get('version') != MANIFEST_VERSION:
        raise ReportError(
            "unsupported manifest version: %r." % data.get('version'))

    return RunManifest(
        command=data['command'],
        config=data.get('config', ''),
        seeds=list(data.get('seeds', [])),
        artifacts={k: list(v) for k, v in data.get('artifacts', {}).items()},
        digests=dict(data.get('digests', {})),
        code_version=data.get('code_version', ''),
        directory=os.path.dirname(os.path.abspath(path)),
    )
