"""Architecture strings: parse, format, and count block layouts.

The notation describes a stack of layers as repeated groups, e.g.
``(sfff)x6 (f)x8``: six repeats of [attention, ff, ff, ff] followed by
eight feed-forward layers. Grammar:

    spec  := group (ws group)*
    group := "(" [sf]+ ")" "x" uint

Only ``s`` (self-attention) and ``f`` (feed-forward) may appear in
strings. Identity is representable in an ArchSpec (searches produce
it) but is never written: ``compact()`` drops identities first, and
``format()`` refuses specs that still contain them.
"""

from __future__ import annotations

from dataclasses import dataclass

from .blocks import BlockKind
from .errors import ContractError, ParseError

_CHAR_TO_KIND = {"s": BlockKind.SELF_ATTENTION, "f": BlockKind.FEED_FORWARD}
_KIND_TO_CHAR = {
    BlockKind.SELF_ATTENTION: "s",
    BlockKind.FEED_FORWARD: "f",
    BlockKind.IDENTITY: "i",
}
_MAX_FORMAT_PERIOD = 8


@dataclass(frozen=True)
class BlockCounts:
    n_attention: int
    n_ff: int
    n_identity: int

    @property
    def total(self) -> int:
        return self.n_attention + self.n_ff + self.n_identity


class ArchSpec:
    """An ordered sequence of block kinds."""

    def __init__(self, blocks):
        blocks = tuple(blocks)
        for b in blocks:
            if not isinstance(b, BlockKind):
                raise ContractError(f"not a BlockKind: {b!r}")
        self.blocks = blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, ArchSpec) and self.blocks == other.blocks

    def __hash__(self) -> int:
        return hash(self.blocks)

    def __repr__(self) -> str:
        letters = "".join(_KIND_TO_CHAR[b] for b in self.blocks)
        return f"ArchSpec({letters!r})"


def parse(text: str) -> ArchSpec:
    """Parse an architecture string; errors carry the byte offset."""
    n = len(text)
    pos = 0
    blocks: list[BlockKind] = []
    first = True
    while True:
        if not first:
            if pos >= n:
                break
            if text[pos] != " ":
                raise ParseError(pos, f"expected space or end, found {text[pos]!r}")
            while pos < n and text[pos] == " ":
                pos += 1
            if pos >= n:
                raise ParseError(pos, "trailing whitespace after last group")
        first = False
        if pos >= n or text[pos] != "(":
            found = repr(text[pos]) if pos < n else "end of input"
            raise ParseError(pos, f"expected '(', found {found}")
        pos += 1
        group: list[BlockKind] = []
        while pos < n and text[pos] in _CHAR_TO_KIND:
            group.append(_CHAR_TO_KIND[text[pos]])
            pos += 1
        if not group:
            found = repr(text[pos]) if pos < n else "end of input"
            raise ParseError(pos, f"empty group: expected 's' or 'f', found {found}")
        if pos >= n or text[pos] != ")":
            found = repr(text[pos]) if pos < n else "end of input"
            raise ParseError(pos, f"expected ')', found {found}")
        pos += 1
        if pos >= n or text[pos] != "x":
            found = repr(text[pos]) if pos < n else "end of input"
            raise ParseError(pos, f"expected 'x', found {found}")
        pos += 1
        digits_start = pos
        while pos < n and text[pos].isdigit():
            pos += 1
        if pos == digits_start:
            found = repr(text[pos]) if pos < n else "end of input"
            raise ParseError(pos, f"expected repeat count, found {found}")
        count = int(text[digits_start:pos])
        if count == 0:
            raise ParseError(digits_start, "zero repeat count")
        blocks.extend(group * count)
    if not blocks:
        raise ParseError(0, "empty architecture string")
    return ArchSpec(blocks)


def format(spec: ArchSpec) -> str:
    """Render a spec in canonical grouped form; parse(format(s)) == s.

    Greedy left to right: at each position, try pattern periods 1..8
    and run-length counts; the longest total match wins, ties going to
    the smaller period. The output may regroup relative to whatever
    string the spec came from, but always expands back to it.
    """
    for b in spec:
        if b is BlockKind.IDENTITY:
            raise ContractError("format() forbids identity blocks; compact() first")
    letters = "".join(_KIND_TO_CHAR[b] for b in spec)
    n = len(letters)
    out = []
    i = 0
    while i < n:
        best_period, best_total = 1, 1
        for period in range(1, _MAX_FORMAT_PERIOD + 1):
            if i + period > n:
                break
            unit = letters[i : i + period]
            reps = 1
            while letters[i + reps * period : i + (reps + 1) * period] == unit:
                reps += 1
            total = reps * period
            if total > best_total:
                best_period, best_total = period, total
        unit = letters[i : i + best_period]
        out.append(f"({unit})x{best_total // best_period}")
        i += best_total
    return " ".join(out)


def compact(spec: ArchSpec) -> ArchSpec:
    """Drop identity blocks, preserving the order of the rest."""
    return ArchSpec(b for b in spec if b is not BlockKind.IDENTITY)


def count_blocks(spec: ArchSpec) -> BlockCounts:
    return BlockCounts(
        n_attention=sum(1 for b in spec if b is BlockKind.SELF_ATTENTION),
        n_ff=sum(1 for b in spec if b is BlockKind.FEED_FORWARD),
        n_identity=sum(1 for b in spec if b is BlockKind.IDENTITY),
    )
