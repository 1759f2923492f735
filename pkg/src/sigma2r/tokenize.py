"""Lexing of flat ``key = value`` run configuration files.

Every piece of text is returned as a :class:`Token`, a string which
remembers where it came from, so configuration errors can point at
the offending line and column.

>>> body = "# run\\nepochs = 30\\n\\nlambda=0.01  # weight\\n"
>>> [(str(k), str(v)) for k, v in iter_assignments(body)]
[('epochs', '30'), ('lambda', '0.01')]

>>> key, value = list(iter_assignments(body))[1]
>>> key.location
(4, 0)
>>> value.location
(4, 7)
"""

from __future__ import annotations

import re
from typing import TYPE_CHECKING
from typing import SupportsIndex
from typing import cast
from typing import overload


if TYPE_CHECKING:
    from collections.abc import Iterator
    from typing_extensions import Self


re_line = re.compile(r'[^\n]*')
re_assignment = re.compile(
    r'^(?P<key>[^=#]*?)\s*=\s*(?P<value>[^#]*?)\s*(?:#.*)?$'
)


def iter_lines(body: str, filename: str | None = None) -> Iterator[Token]:
    """Yield the significant lines of ``body``, comments stripped."""

    for match in re_line.finditer(body):
        string = match.group()
        if not string:
            continue
        token = Token(string, match.start(), body, filename)
        if '#' in token:
            token = token[:token.index('#')]
        token = token.strip()
        if token:
            yield token


def split_assignment(line: Token) -> tuple[Token, Token] | None:
    """Split a line into key and value tokens.

    Returns ``None`` if the line is not an assignment.
    """

    match = re_assignment.match(line)
    if match is None:
        return None
    key = line[match.start('key'):match.end('key')].strip()
    value = line[match.start('value'):match.end('value')].strip()
    return key, value


def iter_assignments(
    body: str,
    filename: str | None = None
) -> Iterator[tuple[Token, Token]]:
    for line in iter_lines(body, filename):
        pair = split_assignment(line)
        if pair is not None:
            yield pair


class Token(str):
    __slots__ = "pos", "source", "filename"

    pos: int
    source: str | None
    filename: str

    def __new__(
        cls,
        string: str,
        pos: int = 0,
        source: str | None = None,
        filename: str | None = None
    ) -> Self:

        inst = str.__new__(cls, string)
        inst.pos = pos
        inst.source = source
        inst.filename = filename or ""
        return inst

    @overload  # type: ignore[override]
    def __getitem__(self, index: slice) -> Token: ...

    @overload
    def __getitem__(self, index: SupportsIndex) -> str: ...

    def __getitem__(self, index: SupportsIndex | slice) -> str:
        s = str.__getitem__(self, index)
        if isinstance(index, slice):
            return Token(
                s, self.pos + (index.start or 0), self.source, self.filename)
        return s

    def __eq__(self, other: object) -> bool:
        return str.__eq__(self, other)

    def __hash__(self) -> int:
        return str.__hash__(self)

    def split(  # type: ignore[override]
        self,
        sep: str | None = None,
        maxsplit: SupportsIndex = -1
    ) -> list[Token]:

        parts = []
        pos = 0
        for s in str.split(self, sep, maxsplit):
            start = self.find(s, pos)
            parts.append(self[start:start + len(s)])
            pos = start + len(s)
        return cast('list[Token]', parts)

    def strip(self, chars: str | None = None, /) -> Token:
        return self.lstrip(chars).rstrip(chars)

    def lstrip(self, chars: str | None = None, /) -> Token:
        s = str.lstrip(self, chars)
        return Token(
            s, self.pos + len(self) - len(s), self.source, self.filename)

    def rstrip(self, chars: str | None = None, /) -> Token:
        s = str.rstrip(self, chars)
        return Token(s, self.pos, self.source, self.filename)

    @property
    def location(self) -> tuple[int, int]:
        if self.source is None:
            return 0, self.pos

        body = self.source[:self.pos]
        line = body.count('\n')
        return line + 1, self.pos - body.rfind('\n', 0) - 1
