"""Election data types, ballot-file parsing and quota arithmetic.

Ballots are never stored individually: a :class:`Profile` maps each ranking
(a tuple of candidate indices) to the number of ballots carrying it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

Signature = tuple[int, ...]

ELECTED = 1
ELIMINATED = 0


class ElectionError(ValueError):
    """Invalid election data (bad seats, bad rankings, bad orders)."""


class ParseError(ElectionError):
    """Malformed ballot file. ``line`` is 1-based, or None for whole-file errors."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.reason = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnsupportedFormatError(ParseError):
    pass


@dataclass(frozen=True)
class Candidate:
    index: int
    name: str


def droop_quota(total_votes: int, seats: int) -> int:
    if seats < 1:
        raise ElectionError("seats must be at least 1")
    if total_votes < 0:
        raise ElectionError("total_votes must be non-negative")
    return total_votes // (seats + 1) + 1


def check_signature(sig: Sequence[int], num_candidates: int) -> Signature:
    sig = tuple(int(c) for c in sig)
    if not sig:
        raise ElectionError("empty ranking")
    if len(set(sig)) != len(sig):
        raise ElectionError(f"duplicate candidate in ranking {sig}")
    for c in sig:
        if not 0 <= c < num_candidates:
            raise ElectionError(f"candidate index {c} out of range")
    return sig


class Profile:
    """Immutable multiset of ballot signatures."""

    __slots__ = ("_counts", "_total")

    def __init__(self, counts: Mapping[Sequence[int], int] | Iterable[tuple[Sequence[int], int]] = ()):
        items = counts.items() if isinstance(counts, Mapping) else counts
        merged: dict[Signature, int] = {}
        for sig, n in items:
            sig = tuple(sig)
            if not sig or len(set(sig)) != len(sig):
                raise ElectionError(f"invalid ranking {sig}")
            if int(n) != n or n < 0:
                raise ElectionError(f"count for {sig} must be a non-negative integer")
            if n:
                merged[sig] = merged.get(sig, 0) + int(n)
        self._counts = MappingProxyType(dict(sorted(merged.items())))
        self._total = sum(merged.values())

    @property
    def counts(self) -> Mapping[Signature, int]:
        return self._counts

    @property
    def total(self) -> int:
        return self._total

    def __getitem__(self, sig: Sequence[int]) -> int:
        return self._counts.get(tuple(sig), 0)

    def __iter__(self) -> Iterator[Signature]:
        return iter(self._counts)

    def __len__(self) -> int:
        return len(self._counts)

    def items(self):
        return self._counts.items()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Profile) and dict(self._counts) == dict(other._counts)

    def __hash__(self) -> int:
        return hash(tuple(self._counts.items()))

    def __repr__(self) -> str:
        return f"Profile({dict(self._counts)!r})"

    def max_candidate(self) -> int:
        return max((max(s) for s in self._counts), default=-1)


def primary_votes(profile: Profile, num_candidates: int) -> list[int]:
    tally = [0] * num_candidates
    for sig, n in profile.items():
        tally[sig[0]] += n
    return tally


@dataclass(frozen=True)
class Election:
    candidates: tuple[Candidate, ...]
    profile: Profile
    seats: int
    quota: int = -1
    winners: frozenset[int] | None = None

    def __post_init__(self):
        cands = tuple(self.candidates)
        object.__setattr__(self, "candidates", cands)
        if [c.index for c in cands] != list(range(len(cands))):
            raise ElectionError("candidate indices must be 0..n-1 in order")
        names = [c.name for c in cands]
        if len(set(names)) != len(names):
            raise ElectionError("candidate names must be unique")
        if not 1 <= self.seats < len(cands):
            raise ElectionError(f"seats must satisfy 1 <= seats < {len(cands)}, got {self.seats}")
        if self.profile.max_candidate() >= len(cands):
            raise ElectionError("profile mentions an unknown candidate")
        if self.quota < 0:
            object.__setattr__(self, "quota", droop_quota(self.profile.total, self.seats))
        if self.winners is not None:
            w = frozenset(self.winners)
            if len(w) != self.seats or any(not 0 <= c < len(cands) for c in w):
                raise ElectionError("winners must name exactly `seats` known candidates")
            object.__setattr__(self, "winners", w)

    @classmethod
    def from_names(cls, names: Sequence[str], ballots: Mapping[Sequence[str], int] | Iterable,
                   seats: int, quota: int | None = None) -> "Election":
        """Build from candidate names and ``{ranking-of-names: count}``."""
        index = {n: i for i, n in enumerate(names)}
        items = ballots.items() if isinstance(ballots, Mapping) else ballots
        counts = []
        for ranking, n in items:
            try:
                sig = tuple(index[x] for x in ranking)
            except KeyError as exc:
                raise ElectionError(f"unknown candidate {exc.args[0]!r}") from None
            counts.append((check_signature(sig, len(names)), n))
        cands = tuple(Candidate(i, n) for i, n in enumerate(names))
        return cls(cands, Profile(counts), seats, -1 if quota is None else quota)

    @property
    def num_candidates(self) -> int:
        return len(self.candidates)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.candidates]

    @property
    def total(self) -> int:
        return self.profile.total

    def index_of(self, name: str) -> int:
        for c in self.candidates:
            if c.name == name:
                return c.index
        raise ElectionError(f"unknown candidate {name!r}")

    def with_profile(self, profile: Profile) -> "Election":
        """Same candidates, seats and quota over a different profile."""
        return Election(self.candidates, profile, self.seats, self.quota, self.winners)

    def with_winners(self, winners: Iterable[int]) -> "Election":
        return Election(self.candidates, self.profile, self.seats, self.quota, frozenset(winners))

    def primary_votes(self) -> list[int]:
        return primary_votes(self.profile, self.num_candidates)


@dataclass(frozen=True)
class CandidateOrder:
    """A (possibly partial) sequence of ``(candidate, action)`` steps.

    ``action`` is ``ELECTED`` (1) or ``ELIMINATED`` (0).
    """

    steps: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        steps = tuple((int(c), int(a)) for c, a in self.steps)
        seen = set()
        for c, a in steps:
            if a not in (ELECTED, ELIMINATED):
                raise ElectionError(f"action must be 0 or 1, got {a}")
            if c in seen:
                raise ElectionError(f"candidate {c} appears twice in order")
            seen.add(c)
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def extend(self, candidate: int, action: int) -> "CandidateOrder":
        return CandidateOrder(self.steps + ((candidate, action),))

    @property
    def elected(self) -> tuple[int, ...]:
        return tuple(c for c, a in self.steps if a == ELECTED)

    @property
    def eliminated(self) -> tuple[int, ...]:
        return tuple(c for c, a in self.steps if a == ELIMINATED)

    @property
    def mentioned(self) -> frozenset[int]:
        return frozenset(c for c, _ in self.steps)

    def standing_before(self, j: int, num_candidates: int) -> frozenset[int]:
        """Candidates still standing at the start of step ``j`` (0-based)."""
        gone = {c for c, _ in self.steps[:j]}
        return frozenset(c for c in range(num_candidates) if c not in gone)

    def validate(self, num_candidates: int, seats: int) -> None:
        for c, _ in self.steps:
            if not 0 <= c < num_candidates:
                raise ElectionError(f"order mentions unknown candidate {c}")
        if len(self.elected) > seats:
            raise ElectionError(f"order elects {len(self.elected)} candidates but only {seats} seats")

    def format(self, names: Sequence[str] | None = None) -> str:
        def nm(c):
            return names[c] if names else f"c{c}"
        return "[" + ", ".join(f"({nm(c)},{a})" for c, a in self.steps) + "]"

    def to_json(self) -> list[list[int]]:
        return [[c, a] for c, a in self.steps]


# ----------------------------------------------------------------------------
# native ballot format

_HEADER = re.compile(r"^\s*(seats|candidates|quota)\s*:\s*(.*?)\s*$", re.IGNORECASE)
_BALLOT = re.compile(r"^\s*(\d+)\s*:\s*(.*?)\s*$")


def parse_profile(text: str, seats: int | None = None, quota: int | None = None) -> Election:
    """Parse the native ``.stv`` format.

    ``seats``/``quota`` arguments override values found in the file.
    """
    names: list[str] | None = None
    file_seats: int | None = None
    file_quota: int | None = None
    counts: dict[Signature, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _HEADER.match(line)
        if m:
            key, val = m.group(1).lower(), m.group(2)
            if key == "candidates":
                if names is not None:
                    raise ParseError("candidates declared twice", lineno)
                names = [x.strip() for x in val.split(",")]
                if any(not x for x in names):
                    raise ParseError("empty candidate name", lineno)
                if len(set(names)) != len(names):
                    raise ParseError("duplicate candidate name", lineno)
            else:
                try:
                    num = int(val)
                except ValueError:
                    raise ParseError(f"{key} must be an integer, got {val!r}", lineno) from None
                if key == "seats":
                    file_seats = num
                else:
                    file_quota = num
            continue
        m = _BALLOT.match(line)
        if not m:
            raise ParseError(f"malformed line {raw!r}", lineno)
        if names is None or (file_seats is None and seats is None):
            raise ParseError("ballot line before seats/candidates headers", lineno)
        n = int(m.group(1))
        if n <= 0:
            raise ParseError("ballot count must be positive", lineno)
        sig = _ranking(m.group(2), names, lineno)
        counts[sig] = counts.get(sig, 0) + n
    if names is None:
        raise ParseError("missing candidates header")
    seats = seats if seats is not None else file_seats
    if seats is None:
        raise ParseError("missing seats header")
    quota = quota if quota is not None else file_quota
    return _build(names, counts, seats, quota)


def _ranking(body: str, names: Sequence[str], lineno: int) -> Signature:
    index = {n: i for i, n in enumerate(names)}
    parts = [x.strip() for x in body.split(",")] if body else []
    if not parts or any(not p for p in parts):
        raise ParseError("empty ranking", lineno)
    sig = []
    for p in parts:
        if p not in index:
            raise ParseError(f"unknown candidate {p!r}", lineno)
        sig.append(index[p])
    if len(set(sig)) != len(sig):
        raise ParseError("duplicate candidate in ranking", lineno)
    return tuple(sig)


def _build(names, counts, seats, quota, lineno=None) -> Election:
    if not 1 <= seats < len(names):
        raise ParseError(f"seats must satisfy 1 <= seats < {len(names)} (got {seats})", lineno)
    cands = tuple(Candidate(i, n) for i, n in enumerate(names))
    return Election(cands, Profile(counts), seats, -1 if quota is None else quota)


def serialize(election: Election) -> str:
    names = election.names
    lines = [f"seats: {election.seats}", "candidates: " + ",".join(names)]
    if election.quota != droop_quota(election.total, election.seats):
        lines.append(f"quota: {election.quota}")
    for sig, n in election.profile.items():
        lines.append(f"{n}: " + ",".join(names[c] for c in sig))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# PrefLib

def parse_preflib(text: str, seats: int, quota: int | None = None) -> Election:
    """Parse a PrefLib SOC/SOI file (either the current ``# KEY: value`` header
    style or the legacy numeric header). Tied rank groups are rejected."""
    lines = text.splitlines()
    if any(l.startswith("# ") and ":" in l for l in lines[:5]):
        return _preflib_modern(lines, seats, quota)
    return _preflib_legacy(lines, seats, quota)


def _preflib_order(body: str, n: int, lineno: int) -> Signature:
    if "{" in body or "}" in body:
        raise UnsupportedFormatError("tied ranks are not supported (strict orders only)", lineno)
    try:
        sig = tuple(int(x) - 1 for x in body.split(",") if x.strip())
    except ValueError:
        raise ParseError(f"malformed ranking {body!r}", lineno) from None
    if not sig:
        raise ParseError("empty ranking", lineno)
    if any(not 0 <= c < n for c in sig):
        raise ParseError("unknown candidate number", lineno)
    if len(set(sig)) != len(sig):
        raise ParseError("duplicate candidate in ranking", lineno)
    return sig


def _preflib_modern(lines, seats, quota) -> Election:
    n = None
    alt_names: dict[int, str] = {}
    counts: dict[Signature, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = re.match(r"#\s*NUMBER ALTERNATIVES\s*:\s*(\d+)", line, re.I)
            if m:
                n = int(m.group(1))
            m = re.match(r"#\s*ALTERNATIVE NAME\s+(\d+)\s*:\s*(.*)$", line, re.I)
            if m:
                alt_names[int(m.group(1))] = m.group(2).strip()
            continue
        if n is None:
            raise ParseError("missing NUMBER ALTERNATIVES header", lineno)
        if ":" not in line:
            raise ParseError(f"malformed line {raw!r}", lineno)
        cnt, body = line.split(":", 1)
        try:
            k = int(cnt)
        except ValueError:
            raise ParseError(f"malformed count {cnt!r}", lineno) from None
        if k <= 0:
            raise ParseError("ballot count must be positive", lineno)
        sig = _preflib_order(body, n, lineno)
        counts[sig] = counts.get(sig, 0) + k
    if n is None:
        raise ParseError("missing NUMBER ALTERNATIVES header")
    names = [alt_names.get(i + 1, f"c{i + 1}") for i in range(n)]
    return _build(names, counts, seats, quota)


def _preflib_legacy(lines, seats, quota) -> Election:
    rows = [(i, l.strip()) for i, l in enumerate(lines, start=1) if l.strip()]
    if not rows:
        raise ParseError("empty file")
    try:
        n = int(rows[0][1])
    except ValueError:
        raise ParseError("first line must be the number of candidates", rows[0][0]) from None
    if len(rows) < n + 2:
        raise ParseError("truncated file")
    names = []
    for i in range(n):
        lineno, line = rows[1 + i]
        num, _, name = line.partition(",")
        if not num.strip().isdigit() or int(num) != i + 1:
            raise ParseError(f"expected candidate {i + 1}", lineno)
        names.append(name.strip())
    counts: dict[Signature, int] = {}
    for lineno, line in rows[n + 2:]:
        cnt, _, body = line.partition(",")
        try:
            k = int(cnt)
        except ValueError:
            raise ParseError(f"malformed count {cnt!r}", lineno) from None
        if k <= 0:
            raise ParseError("ballot count must be positive", lineno)
        sig = _preflib_order(body, n, lineno)
        counts[sig] = counts.get(sig, 0) + k
    return _build(names, counts, seats, quota)


def load_election(path: str, seats: int | None = None, quota: int | None = None) -> Election:
    """Read a ballot file, picking the parser from the extension."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.lower().endswith((".soc", ".soi", ".toc", ".toi")):
        if seats is None:
            raise ElectionError("PrefLib files need an explicit seat count")
        return parse_preflib(text, seats, quota)
    return parse_profile(text, seats, quota)
