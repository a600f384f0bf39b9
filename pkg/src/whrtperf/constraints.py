"""Weakly-hard window constraints on binary loss sequences.

A loss sequence is a finite word over {0, 1}, where 1 marks a successful
control attempt and 0 a lost one.  A window constraint restricts every
window of ``s`` consecutive attempts; four standard kinds are supported:

* ``AnyHit(r, s)``  -- at least r successes per window,
* ``RowHit(r, s)``  -- a run of at least r consecutive successes per window,
* ``AnyMiss(r, s)`` -- at most r losses per window,
* ``RowMiss(r, s)`` -- no run of more than r consecutive losses per window.

Only windows fully contained in a finite word are checked; a finite word
is treated as a prefix of some infinite sequence.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from enum import Enum

MAX_ENUMERATION_LENGTH = 24


class ConstraintError(ValueError):
    pass


class LengthTooLarge(ConstraintError):
    """Requested word length would make exhaustive enumeration explode."""


class Kind(Enum):
    ANY_HIT = "anyhit"
    ROW_HIT = "rowhit"
    ANY_MISS = "anymiss"
    ROW_MISS = "rowmiss"


@dataclass(frozen=True)
class WhrtConstraint:
    kind: Kind
    r: int
    s: int

    def __post_init__(self):
        if not (1 <= self.r <= self.s):
            raise ConstraintError(f"require 1 <= r <= s, got r={self.r}, s={self.s}")

    def __str__(self) -> str:
        return f"{self.kind.value}({self.r},{self.s})"

    @property
    def is_vacuous(self) -> bool:
        """True when every binary word is admissible.

        This happens exactly for AnyMiss(s, s) and RowMiss(s, s): a window
        of length s can never contain more than s losses (or a longer run).
        Vacuous constraints admit arbitrarily long loss runs, so they have
        no lifted representation.
        """
        return self.kind in (Kind.ANY_MISS, Kind.ROW_MISS) and self.r == self.s

    def window_ok(self, window) -> bool:
        """Check one complete window of length s."""
        if len(window) != self.s:
            raise ConstraintError(f"window length {len(window)} != s={self.s}")
        if self.kind is Kind.ANY_HIT:
            return sum(window) >= self.r
        if self.kind is Kind.ANY_MISS:
            return self.s - sum(window) <= self.r
        if self.kind is Kind.ROW_HIT:
            return _longest_run(window, 1) >= self.r
        return _longest_run(window, 0) <= self.r


def _longest_run(bits, value) -> int:
    best = run = 0
    for b in bits:
        run = run + 1 if b == value else 0
        best = max(best, run)
    return best


_CONSTRAINT_RE = re.compile(r"^(anyhit|rowhit|anymiss|rowmiss)\((\d+),(\d+)\)$")


def parse_constraint(text: str) -> WhrtConstraint:
    """Parse constraint syntax like ``anyhit(2,4)``.

    Case-insensitive; whitespace is ignored.
    """
    compact = re.sub(r"\s+", "", text).lower()
    m = _CONSTRAINT_RE.match(compact)
    if not m:
        raise ConstraintError(f"cannot parse constraint {text!r}")
    return WhrtConstraint(Kind(m.group(1)), int(m.group(2)), int(m.group(3)))


def parse_loss_sequence(text: str) -> tuple[int, ...]:
    compact = re.sub(r"\s+", "", text)
    if not compact or set(compact) - {"0", "1"}:
        raise ConstraintError(f"loss sequence must be a nonempty binary word, got {text!r}")
    return tuple(int(ch) for ch in compact)


def satisfies(seq, c: WhrtConstraint) -> bool:
    """True iff every complete length-s window of ``seq`` meets the constraint."""
    seq = tuple(seq)
    if not seq:
        raise ConstraintError("loss sequence must be nonempty")
    return all(c.window_ok(seq[i:i + c.s]) for i in range(len(seq) - c.s + 1))


def first_violating_window(seq, c: WhrtConstraint):
    """Index range ``(start, end)`` of the first violated window, or None."""
    seq = tuple(seq)
    for i in range(len(seq) - c.s + 1):
        if not c.window_ok(seq[i:i + c.s]):
            return (i, i + c.s - 1)
    return None


def enumerate_admissible(c: WhrtConstraint, length: int,
                         require_initial_success: bool = True) -> set[tuple[int, ...]]:
    """All admissible binary words of the given length (brute-force oracle).

    Kept deliberately simple: depth-first extension of prefixes, rejecting
    a prefix as soon as its newest complete window fails.  Since windows
    are checked exactly when they complete, this equals filtering all
    2^length words through :func:`satisfies`.
    """
    if length < 1:
        raise ConstraintError("length must be positive")
    if length > MAX_ENUMERATION_LENGTH:
        raise LengthTooLarge(f"length {length} exceeds guard {MAX_ENUMERATION_LENGTH}")
    out: set[tuple[int, ...]] = set()
    first_bits = (1,) if require_initial_success else (0, 1)
    stack = [(b,) for b in first_bits]
    while stack:
        w = stack.pop()
        if len(w) >= c.s and not c.window_ok(w[-c.s:]):
            continue
        if len(w) == length:
            out.add(w)
            continue
        stack.append(w + (0,))
        stack.append(w + (1,))
    return out


def is_harder(c2: WhrtConstraint, c1: WhrtConstraint, horizon: int | None = None,
              method: str = "graph") -> bool:
    """Decide whether c2 is harder than c1 (every c2-admissible infinite
    sequence is c1-admissible).

    method="graph" decides exactly by language inclusion between the two
    constraint automata.  method="enumerate" is a bounded brute-force
    cross-check over all admissible words up to ``horizon``; it can only
    refute hardness, never prove it, and exists as a test oracle.
    """
    if method == "graph":
        from . import graph as _graph  # deferred: graph builds on this module

        return _graph.language_included(c2, c1)
    if method == "enumerate":
        if horizon is None or horizon < max(c1.s, c2.s):
            raise ConstraintError("enumerate mode needs horizon >= max(c1.s, c2.s)")
        for length in range(1, horizon + 1):
            for w in enumerate_admissible(c2, length, require_initial_success=False):
                if not satisfies(w, c1):
                    return False
        return True
    raise ConstraintError(f"unknown method {method!r}")


def all_words(length: int):
    """All binary words of a given length, for test cross-checks."""
    return (tuple(bits) for bits in itertools.product((0, 1), repeat=length))
