from __future__ import annotations

import logging
import os


log = logging.getLogger('sigma2r.config')
environment = {
    k[8:]: v for (k, v) in (
        (j.lower(), x) for (j, x) in os.environ.items())
    if k.startswith('sigma2r_')
}

# Define which values are read as true
TRUE = ('y', 'yes', 't', 'true', 'on', '1')

# Debug mode is mostly useful when working on the tensor engine or on
# a new loss. When enabled, every recorded operation checks its output
# for NaN and infinite values and training logs the loss components
# of every batch.
DEBUG_MODE = environment.pop('debug', 'false').lower() in TRUE

# If a data directory is specified, it is searched for dataset files
# before any directory given on the command line or in a run
# configuration.
path = environment.pop('data', None)
DATA_DIRECTORY: str | None
if path is not None:
    DATA_DIRECTORY = os.path.abspath(path)
    if not os.path.exists(DATA_DIRECTORY):
        raise ValueError(
            "Data directory does not exist: %s." % DATA_DIRECTORY
        )
    log.info("data directory: %s." % DATA_DIRECTORY)
else:
    DATA_DIRECTORY = None

# Number of threads used to evaluate a dataset; shards are merged in
# order so results do not depend on this setting.
workers = environment.pop('eval_workers', '1')
try:
    EVAL_WORKERS = max(1, int(workers))
except ValueError:
    log.warning("ignoring non-integer SIGMA2R_EVAL_WORKERS: %r." % workers)
    EVAL_WORKERS = 1

# The acceptance runs train real models for many epochs; they are
# skipped by the test-suite unless explicitly requested.
ACCEPTANCE = environment.pop('acceptance', 'false').lower() in TRUE

for key in environment:
    log.warning(
        "unknown environment variable set: \"SIGMA2R_%s\"." % key.upper()
    )

# This is the slice length of the configuration line displayed in a
# formatted configuration error
SOURCE_EXPRESSION_MARKER_LENGTH = 60
