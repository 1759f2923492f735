from __future__ import annotations

import hashlib
import io
import logging
import os
import sys
import tempfile
import zipfile
from typing import TYPE_CHECKING
from typing import Any

import numpy as np


if TYPE_CHECKING:
    from collections.abc import Mapping

    from _typeshed import StrPath


if sys.version_info >= (3, 10):
    import importlib.metadata as importlib_metadata
else:
    import importlib_metadata


log = logging.getLogger('sigma2r.utils')

ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def atomic_write(path: StrPath, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file and rename.

    Readers never observe a partially written artifact.
    """

    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    base = os.path.basename(path)

    log.debug("writing %s (%d bytes)." % (path, len(data)))
    fd, fn = tempfile.mkstemp(prefix=base, suffix='.tmp', dir=directory)
    temp = os.fdopen(fd, 'wb')

    try:
        try:
            temp.write(data)
        finally:
            temp.close()
    except BaseException:
        os.remove(fn)
        raise

    os.replace(fn, path)


def file_digest(path: StrPath) -> str:
    sha = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            sha.update(chunk)
    return sha.hexdigest()


def safe_get_package_version(name: str) -> str | None:
    try:
        return importlib_metadata.version(name)
    except importlib_metadata.PackageNotFoundError:
        return None


def code_version() -> str:
    """Version string recorded in run manifests.

    Uses the installed distribution version, suffixed with a digest
    of the package sources so that edits to an unreleased checkout
    are visible (``0.1.0-dev-3fa2c41``).
    """

    version = safe_get_package_version('sigma2r') or '0+unknown'
    here = os.path.dirname(os.path.abspath(__file__))
    sha = hashlib.sha1()
    for name in sorted(os.listdir(here)):
        if name.endswith('.py'):
            with open(os.path.join(here, name), 'rb') as f:
                sha.update(f.read())
    return "%s-%s" % (version, sha.hexdigest()[:7])


def npz_bytes(arrays: Mapping[str, Any]) -> bytes:
    """An ``.npz`` archive with fixed member timestamps.

    Identical arrays always give identical bytes, unlike
    :func:`numpy.savez`, which stamps members with the current time.
    """

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, 'w', zipfile.ZIP_STORED) as archive:
        for name, array in arrays.items():
            info = zipfile.ZipInfo(name + '.npy', date_time=ZIP_EPOCH)
            with archive.open(info, 'w', force_zip64=True) as f:
                np.lib.format.write_array(
                    f, np.asanyarray(array), allow_pickle=False)
    return buf.getvalue()


def write_npz(path: StrPath, arrays: Mapping[str, Any]) -> None:
    atomic_write(path, npz_bytes(arrays))
