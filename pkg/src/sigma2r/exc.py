from __future__ import annotations

from typing import TYPE_CHECKING
from typing import Any

from sigma2r.config import SOURCE_EXPRESSION_MARKER_LENGTH as LENGTH
from sigma2r.tokenize import Token


if TYPE_CHECKING:
    from collections.abc import Iterable
    from collections.abc import Iterator
    from collections.abc import Mapping
    from typing_extensions import Self


def compute_source_marker(
    line: str,
    column: int,
    expression: str,
    size: int
) -> tuple[str, str]:
    """Computes source marker location string.

    >>> def test(l, c, e, s):
    ...     s, marker = compute_source_marker(l, c, e, s)
    ...     out = s + '\\n' + marker
    ...
    ...     # Replace dot with middle-dot to work around doctest ellipsis
    ...     print(out.replace('...', '···'))

    >>> test('epochs = ten', 9, 'ten', 20)
    epochs = ten
             ^^^

    >>> test('   n = 1', 7, '1', 20)
    n = 1
        ^

    Long lines are cut around the marked expression.

    >>> test('aux_kind = ' + 'x' * 30 + ' sigma3r', 42, 'sigma3r', 12)
    ··· xxxx sigma3r
             ^^^^^^^
    """

    s = line.lstrip()
    column -= len(line) - len(s)
    s = s.rstrip()

    i = s.find(expression, max(column, 0))
    if i < 0:
        marker = "^"
    else:
        column = i
        marker = "^" * len(expression)

    if column + len(marker) > size:
        offset = column + len(marker) - size
        tail = s[offset:]
        r = tail.lstrip()
        column = column - offset - (len(tail) - len(r)) + 4
        s = "... " + r

    return s, column * " " + marker


def iter_source_marker_lines(
    source: Iterable[str],
    expression: str,
    line: int,
    column: int
) -> Iterator[str]:

    for i, l in enumerate(source):
        if i + 1 != line:
            continue

        s, marker = compute_source_marker(
            l, column, expression, LENGTH
        )

        yield " - Source:     %s" % s
        yield "               %s" % marker
        break


class Sigma2RError(Exception):
    """Base class of all errors raised by the package.

    The ``category`` is a short, stable name which the command-line
    front end prints so that scripts can dispatch on it.
    """

    category = "error"


class ShapeError(Sigma2RError, ValueError):
    """Operands of an operation have incompatible shapes.

    >>> str(ShapeError('add', (2,), (3,)))
    "op 'add': incompatible shapes (2,) and (3,)"
    """

    category = "shape"

    def __init__(self, op: str, *shapes: tuple[int, ...]) -> None:
        self.op = op
        self.shapes = shapes
        Exception.__init__(self, op, *shapes)

    def __str__(self) -> str:
        return "op '%s': incompatible shapes %s" % (
            self.op, " and ".join(str(tuple(s)) for s in self.shapes)
        )


class DomainError(Sigma2RError, ValueError):
    """An operation received input outside of its mathematical domain."""

    category = "domain"


class BackwardError(Sigma2RError):
    """Reverse pass requested from an invalid root or tape."""

    category = "backward"


class AnomalyError(Sigma2RError, FloatingPointError):
    """A recorded operation produced NaN or infinite values.

    Only raised in debug mode.
    """

    category = "anomaly"


class LabelError(Sigma2RError, ValueError):
    """Class label outside of ``[0, class_count)``."""

    category = "label"


class DegenerateBatchError(Sigma2RError, ValueError):
    """Batch composition makes a loss undefined."""

    category = "degenerate-batch"


class MissingGradientError(Sigma2RError):
    """A parameter was stepped without a gradient."""

    category = "missing-gradient"

    def __init__(self, name: str) -> None:
        Exception.__init__(self, name)

    def __str__(self) -> str:
        return "no gradient for parameter: %s." % self.args[0]


class DivergenceError(Sigma2RError, FloatingPointError):
    """Training produced a non-finite loss.

    Carries the batch index and the component values of the
    offending batch.
    """

    category = "divergence"

    def __init__(
        self,
        epoch: int,
        batch: int,
        components: Mapping[str, float]
    ) -> None:
        self.epoch = epoch
        self.batch = batch
        self.components = dict(components)
        Exception.__init__(self, epoch, batch, self.components)

    def __str__(self) -> str:
        values = ", ".join(
            "%s=%r" % item for item in sorted(self.components.items())
        )
        return "non-finite loss in epoch %d, batch %d (%s)" % (
            self.epoch, self.batch, values)


class DatasetFormatError(Sigma2RError, ValueError):
    """A dataset file does not follow its binary format."""

    category = "dataset-format"


class BadMagicError(DatasetFormatError):
    """Wrong magic number in an IDX file header."""

    category = "bad-magic"


class TruncatedFileError(DatasetFormatError):
    """A dataset file ends before its declared content."""

    category = "truncated"


class CountMismatchError(DatasetFormatError):
    """Image and label files declare different item counts."""

    category = "count-mismatch"


class SamplerError(Sigma2RError, ValueError):
    category = "sampler"


class CheckpointError(Sigma2RError):
    category = "checkpoint"


class ReportError(Sigma2RError):
    category = "report"


class PlotError(Sigma2RError):
    category = "plot"


class ConfigError(Sigma2RError, ValueError):
    """An error in a run configuration file.

    >>> token = Token('epochs', 0, 'epochs = -1', 'run.cfg')
    >>> message = 'must be non-negative'

    Make sure the exceptions can be copied:

    >>> from copy import copy
    >>> copy(ConfigError(message, token))
    ConfigError('must be non-negative', 'epochs')

    And pickle/unpickled:

    >>> from pickle import dumps, loads
    >>> loads(dumps(ConfigError(message, token), -1))
    ConfigError('must be non-negative', 'epochs')

    """

    category = "config"

    args: tuple[str, Token]

    def __init__(self, msg: str, token: Token | str) -> None:
        if not isinstance(token, Token):
            token = Token(token, 0)

        Exception.__init__(self, msg, token)

    def __copy__(self) -> Self:
        inst = Exception.__new__(type(self))
        inst.args = self.args
        return inst

    def __str__(self) -> str:
        text = "%s\n\n" % self.args[0]
        text += " - String:     \"%s\"" % self.token

        if self.filename:
            text += "\n"
            text += " - Filename:   %s" % self.filename

        lineno, column = self.location
        text += "\n"
        text += " - Location:   (line %d: col %d)" % (lineno, column)

        if lineno and self.token.source:
            lines = iter_source_marker_lines(
                self.token.source.splitlines(),
                self.token, lineno, column
            )
            for line in lines:
                text += "\n" + line

        return text

    def __repr__(self) -> str:
        return "{}('{}', '{}')".format(
            self.__class__.__name__, self.args[0], self.token
        )

    @property
    def token(self) -> Token:
        return self.args[1]

    @property
    def filename(self) -> str:
        return self.token.filename

    @property
    def location(self) -> tuple[int, int]:
        return self.token.location

    @property
    def summary(self) -> str:
        """One-line form used by the command-line front end."""
        lineno, column = self.location
        where = self.filename or "<string>"
        return "%s (%s, line %d: col %d)" % (
            self.args[0], where, lineno, column)
