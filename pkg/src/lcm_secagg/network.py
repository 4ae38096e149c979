"""Server groups, failure tables and the straggling-pattern space.

Clients, servers and groups are numbered from 0. A failure table has one row
per client and one column per server; ``1`` marks a working link. The same
table governs uplink and downlink for a round.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BadGroupSize, InfeasibleResiliency


@dataclass(frozen=True)
class Grouping:
    groups: tuple[tuple[int, ...], ...]
    dropped: tuple[int, ...]

    @cached_property
    def group_of(self) -> dict[int, int]:
        return {h: g for g, members in enumerate(self.groups) for h in members}

    def __len__(self):
        return len(self.groups)


def make_groups(H: int, v: int) -> Grouping:
    """Consecutive blocks of ``v`` servers; the last ``H mod v`` servers are dropped."""
    if not 1 <= v <= H:
        raise BadGroupSize(f"group size {v} outside [1, {H}]")
    n = H // v
    groups = tuple(tuple(range(g * v, (g + 1) * v)) for g in range(n))
    return Grouping(groups, tuple(range(n * v, H)))


class FailureTable:
    """Immutable E x H link matrix."""

    __slots__ = ("bits", "_server_masks", "_client_masks")

    def __init__(self, bits):
        arr = np.array(bits, dtype=np.uint8)
        if arr.ndim != 2 or not np.isin(arr, (0, 1)).all():
            raise ValueError("failure table must be a 2-D 0/1 matrix")
        arr.setflags(write=False)
        self.bits = arr
        self._server_masks = None
        self._client_masks = None

    @classmethod
    def ones(cls, E: int, H: int) -> "FailureTable":
        return cls(np.ones((E, H), dtype=np.uint8))

    @classmethod
    def from_zeros(cls, E: int, H: int, zeros) -> "FailureTable":
        """Build from ``{client: iterable of straggling servers}``."""
        arr = np.ones((E, H), dtype=np.uint8)
        for i, servers in dict(zeros).items():
            for h in servers:
                arr[i, h] = 0
        return cls(arr)

    @classmethod
    def from_string(cls, text: str) -> "FailureTable":
        rows = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not rows or any(set(r) - {"0", "1"} for r in rows):
            raise ValueError("pattern rows must consist of '0'/'1' characters")
        if len({len(r) for r in rows}) != 1:
            raise ValueError("pattern rows have unequal lengths")
        return cls([[int(c) for c in r] for r in rows])

    def to_string(self) -> str:
        return "\n".join("".join(str(int(b)) for b in row) for row in self.bits) + "\n"

    @property
    def E(self) -> int:
        return self.bits.shape[0]

    @property
    def H(self) -> int:
        return self.bits.shape[1]

    def works(self, i: int, h: int) -> bool:
        return bool(self.bits[i, h])

    def max_stragglers(self) -> int:
        return int((self.bits == 0).sum(axis=1).max()) if self.E else 0

    def in_pattern_space(self, s: int) -> bool:
        return self.max_stragglers() <= s

    @property
    def server_masks(self) -> tuple[int, ...]:
        """Per server, a bitmask of the clients it is linked to."""
        if self._server_masks is None:
            self._server_masks = tuple(
                sum(1 << i for i in range(self.E) if self.bits[i, h]) for h in range(self.H))
        return self._server_masks

    @property
    def client_masks(self) -> tuple[int, ...]:
        """Per client, a bitmask of the servers it is linked to."""
        if self._client_masks is None:
            self._client_masks = tuple(
                sum(1 << h for h in range(self.H) if self.bits[i, h]) for i in range(self.E))
        return self._client_masks

    def __eq__(self, other):
        return isinstance(other, FailureTable) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes() + bytes(self.bits.shape))

    def __repr__(self):
        return f"FailureTable({self.to_string().strip().replace(chr(10), '/')})"


def row_patterns(H: int, s: int) -> list[tuple[int, ...]]:
    """Straggler sets for one row: by size 0..s, lexicographic within a size."""
    return [c for t in range(s + 1) for c in itertools.combinations(range(H), t)]


def count_patterns(E: int, H: int, s: int) -> int:
    return sum(math.comb(H, t) for t in range(s + 1)) ** E


def pattern_from_index(index: int, E: int, H: int, s: int, rows=None) -> FailureTable:
    """Stateless bijection ``[0, count_patterns) -> tables``; row 0 is the most significant digit."""
    rows = rows if rows is not None else row_patterns(H, s)
    R = len(rows)
    digits = []
    for _ in range(E):
        index, d = divmod(index, R)
        digits.append(d)
    arr = np.ones((E, H), dtype=np.uint8)
    for i, d in enumerate(reversed(digits)):
        arr[i, list(rows[d])] = 0
    return FailureTable(arr)


def _worst_case_candidates(E: int, H: int, s: int, v: int):
    # Each row's stragglers form a contiguous (cyclic) block, rows shifted so
    # that different clients miss different servers: this breaks common
    # server sets and drives the aggregated set M down.
    seen = set()
    steps = sorted({1, max(s, 1), max(v, 1)})
    for step in steps:
        for offset in range(H):
            zeros = {i: [(offset + i * step + t) % H for t in range(s)] for i in range(E)}
            table = FailureTable.from_zeros(E, H, zeros)
            if table not in seen:
                seen.add(table)
                yield table
    # Group-aligned variant: whole blocks of v servers knocked out per client.
    for offset in range(max(H // max(v, 1), 1)):
        zeros = {}
        for i in range(E):
            start = ((offset + i) * v) % H
            zeros[i] = [(start + t) % H for t in range(s)]
        table = FailureTable.from_zeros(E, H, zeros)
        if table not in seen:
            seen.add(table)
            yield table


def pattern_space(E: int, H: int, s: int, mode: str = "enumerate", *, n: int | None = None,
                  rng: np.random.Generator | None = None, budget: int = 10**6,
                  v: int = 1, check_resiliency: bool = True):
    """Iterate failure tables with at most ``s`` stragglers per row.

    ``mode`` is ``"enumerate"`` (all tables, once each, in index order),
    ``"sample"`` (``n`` i.i.d. uniform tables from ``rng``) or ``"worst"``
    (full enumeration if it fits in ``budget``, otherwise a deterministic
    family of adversarial tables).
    """
    if check_resiliency and 2 * s >= H:
        raise InfeasibleResiliency(f"straggler bound needs s < H/2 (s={s}, H={H})")
    rows = row_patterns(H, s)
    total = len(rows) ** E
    if mode == "enumerate":
        return (pattern_from_index(idx, E, H, s, rows) for idx in range(total))
    if mode == "sample":
        if n is None or rng is None:
            raise ValueError("sample mode needs n and rng")
        return _sample(E, H, rows, n, rng)
    if mode in ("worst", "worst_case_search"):
        if total <= budget:
            return (pattern_from_index(idx, E, H, s, rows) for idx in range(total))
        return _worst_case_candidates(E, H, s, v)
    raise ValueError(f"unknown pattern mode {mode!r}")


def _sample(E, H, rows, n, rng):
    for _ in range(n):
        picks = rng.integers(0, len(rows), size=E)
        arr = np.ones((E, H), dtype=np.uint8)
        for i, d in enumerate(picks):
            arr[i, list(rows[d])] = 0
        yield FailureTable(arr)


def usable_groups(table: FailureTable, grouping: Grouping, sender: int, receiver: int) -> set[int]:
    """Groups holding a server linked to both ``sender`` and ``receiver``."""
    if sender == receiver:
        raise ValueError("sender and receiver must differ")
    both = table.client_masks[sender] & table.client_masks[receiver]
    return {g for g, members in enumerate(grouping.groups) if any(both >> h & 1 for h in members)}


@dataclass(frozen=True)
class VisibleTable:
    """The columns of a failure table that one client can see."""

    client: int
    E: int
    columns: dict  # server -> tuple of E bits

    @cached_property
    def server_masks(self) -> dict[int, int]:
        return {h: sum(1 << i for i, b in enumerate(col) if b) for h, col in self.columns.items()}


def visible_columns(table: FailureTable, client: int) -> VisibleTable:
    cols = {h: tuple(int(b) for b in table.bits[:, h])
            for h in range(table.H) if table.bits[client, h]}
    return VisibleTable(client, table.E, cols)
