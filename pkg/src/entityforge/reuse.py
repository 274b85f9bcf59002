"""Script-usage occurrence counts under a configurable information horizon.

A script counts one occurrence per side of each transaction it appears in:
appearing among the inputs is one observation, appearing among the outputs
is another, and duplicates within one side are a serialization artifact and
count once. A script is "reused" once its count reaches two.

Two horizon modes exist:
  * online  - counts reflect the transactions recorded so far; the engine
              records each transaction before evaluating heuristics on it.
  * fixed   - counts are precomputed over every block up to a horizon K and
              never change afterwards.
"""

from __future__ import annotations

import csv
from typing import IO, Iterable

from .chain import Block, Transaction
from .errors import DataError, ModeError

ONLINE = "online"
FIXED = "fixed"


class ReuseIndex:
    def __init__(self, mode: str = ONLINE, horizon_block: int | None = None):
        if mode not in (ONLINE, FIXED):
            raise ModeError(f"unknown horizon mode {mode!r}")
        self.mode = mode
        self.horizon_block = horizon_block
        self._counts: list[int] = []

    def count(self, sid: int) -> int:
        if 0 <= sid < len(self._counts):
            return self._counts[sid]
        return 0

    def reused(self, sid: int) -> bool:
        return self.count(sid) >= 2

    def _bump(self, sids: Iterable[int]) -> None:
        counts = self._counts
        for sid in sids:
            if sid >= len(counts):
                counts.extend([0] * (sid + 1 - len(counts)))
            counts[sid] += 1

    def record(self, tx: Transaction) -> None:
        """Count this transaction's scripts, one per side of appearance."""
        if self.mode != ONLINE:
            raise ModeError("record() requires an online-mode index")
        self._bump({t.script for t in tx.inputs})
        self._bump({t.script for t in tx.outputs})

    def freeze(self, horizon_block: int | None = None) -> "ReuseIndex":
        """Switch an online index to fixed mode after a completed build."""
        self.mode = FIXED
        self.horizon_block = horizon_block
        return self

    @classmethod
    def build_fixed(cls, blocks: Iterable[Block], k: int | None = None) -> "ReuseIndex":
        """Count every transaction in blocks up to index k (all, if None)."""
        idx = cls(ONLINE)
        prev = None
        last = None
        for block in blocks:
            if prev is not None and block.index <= prev:
                raise DataError(
                    f"block {block.index} after block {prev}: stream must be sorted"
                )
            prev = block.index
            if k is not None and block.index > k:
                break
            last = block.index
            for tx in block.transactions:
                idx.record(tx)
        return idx.freeze(k if k is not None else last)

    @classmethod
    def from_counts(cls, counts: dict[int, int], mode: str = FIXED) -> "ReuseIndex":
        idx = cls(ONLINE)
        for sid, n in counts.items():
            if n < 0:
                raise DataError(f"negative count for script {sid}")
            if sid >= len(idx._counts):
                idx._counts.extend([0] * (sid + 1 - len(idx._counts)))
            idx._counts[sid] = n
        if mode == FIXED:
            idx.freeze()
        return idx

    def write_csv(self, sink: IO) -> None:
        writer = csv.writer(sink)
        writer.writerow(["script_id", "count"])
        for sid, n in enumerate(self._counts):
            if n:
                writer.writerow([sid, n])

    @classmethod
    def read_csv(cls, source: IO, mode: str = FIXED) -> "ReuseIndex":
        reader = csv.reader(source)
        header = next(reader, None)
        if header != ["script_id", "count"]:
            raise DataError(f"bad reuse-index header: {header}")
        counts = {}
        for row in reader:
            counts[int(row[0])] = int(row[1])
        return cls.from_counts(counts, mode=mode)
