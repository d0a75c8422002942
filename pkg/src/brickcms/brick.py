"""Bucketized rank-indexed counters (BRICK), the CPU-oriented baseline.

Each bucket of ``k`` entries keeps a base level of ``k`` sub-counters and
optional levels with fewer slots. Per-level bitmaps mark which slots extend
into the next level; the rank of a set bit selects the next-level slot.
When an optional level runs out of slots the whole bucket is copied into a
spare full-width bucket.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .counterstore import CounterArray


class SpareExhaustedError(RuntimeError):
    pass


def rank(bitmap: int | Sequence[int], p: int, length: int | None = None) -> int:
    """Number of ones in ``bitmap`` over positions ``0..p`` inclusive.

    ``bitmap`` is either a sequence of 0/1 (position 0 first) or an int whose
    bit ``p`` is position ``p``; for an int, ``length`` bounds ``p``.
    """
    if not isinstance(bitmap, int):
        bits = list(bitmap)
        if not 0 <= p < len(bits):
            raise IndexError(f"position {p} out of range for bitmap of length {len(bits)}")
        return sum(1 for b in bits[: p + 1] if b)
    if p < 0 or (length is not None and p >= length):
        raise IndexError(f"position {p} out of range for bitmap of length {length}")
    return (bitmap & ((2 << p) - 1)).bit_count()


def _insert_bit(word: int, s: int) -> int:
    low = word & ((1 << s) - 1)
    return low | ((word >> s) << (s + 1))


def _levels_table(widths: Sequence[int]) -> list[int]:
    """levels_needed[bit_length] for every bit length up to sum(widths)."""
    table = []
    cum = 0
    bounds = []
    for w in widths:
        cum += w
        bounds.append(cum)
    for bl in range(cum + 1):
        table.append(next(m for m, b in enumerate(bounds, 1) if b >= bl))
    return table


@dataclass(frozen=True)
class BrickConfig:
    """Layout of a BRICK array.

    ``slots[0]`` is the bucket size ``k``; ``slots[l]`` the number of level-``l+1``
    sub-counters per bucket. Spare buckets hold ``sum(widths)``-bit entries.
    """

    widths: tuple[int, ...] = (14, 8, 7)
    slots: tuple[int, ...] = (64, 8, 4)
    n_buckets: int = 64
    spares: int = 100

    def __post_init__(self) -> None:
        if len(self.widths) != len(self.slots) or not self.widths:
            raise ValueError("widths and slots must be non-empty and the same length")
        if any(w < 1 for w in self.widths):
            raise ValueError("all widths must be >= 1")
        if any(b > a for a, b in zip(self.slots, self.slots[1:])) or self.slots[-1] < 1:
            raise ValueError("slot counts must be non-increasing and >= 1")
        if self.n_buckets < 1 or self.spares < 0:
            raise ValueError("n_buckets must be >= 1 and spares >= 0")

    @property
    def levels(self) -> int:
        return len(self.widths)

    @property
    def k(self) -> int:
        return self.slots[0]

    @property
    def size(self) -> int:
        return self.n_buckets * self.k

    @property
    def total_width(self) -> int:
        return sum(self.widths)

    @classmethod
    def for_size(cls, size: int, **kw) -> BrickConfig:
        k = kw.get("slots", cls.slots)[0]
        if size % k:
            raise ValueError(f"size {size} is not a multiple of bucket size {k}")
        return cls(n_buckets=size // k, **kw)


class BrickArray(CounterArray):
    kind = "brick"

    def __init__(self, config: BrickConfig | None = None):
        cfg = config or BrickConfig()
        self.config = cfg
        self.size = cfg.size
        self.capacity = (1 << cfg.total_width) - 1
        self.saturation_events = 0
        self._k = cfg.k
        self._L = cfg.levels
        self._widths = cfg.widths
        self._masks = [(1 << w) - 1 for w in cfg.widths]
        self._offsets = [sum(cfg.widths[:l]) for l in range(cfg.levels)]
        self._needed = _levels_table(cfg.widths)
        n = cfg.n_buckets
        self.base = [0] * cfg.size
        # levels[q-1][B]: occupied slots of optional level q in bucket B, in slot order
        self.levels: list[list[list[int]]] = [[[] for _ in range(n)] for _ in range(cfg.levels - 1)]
        # bitmaps[q][B]: flags of level q (0 = base) extending into level q+1
        self.bitmaps: list[list[int]] = [[0] * n for _ in range(cfg.levels - 1)]
        self.migrated: dict[int, int] = {}
        self.spare_buckets: list[list[int]] = []
        self.shifted_slots = 0
        self.migrations = 0

    def _positions(self, B: int, j: int) -> list[int]:
        pos = [j]
        p = j
        for q in range(self._L - 1):
            bm = self.bitmaps[q][B]
            if not (bm >> p) & 1:
                break
            p = (bm & ((2 << p) - 1)).bit_count() - 1
            pos.append(p)
        return pos

    def read(self, i: int) -> int:
        self._check(i)
        B, j = divmod(i, self._k)
        spare = self.migrated.get(B)
        if spare is not None:
            return self.spare_buckets[spare][j]
        pos = self._positions(B, j)
        v = self.base[i]
        for q in range(1, len(pos)):
            v |= self.levels[q - 1][B][pos[q]] << self._offsets[q]
        return v

    def add(self, i: int, delta: int) -> int:
        if delta < 0:
            raise ValueError("delta must be non-negative")
        old = self.read(i)
        return self._write(i, old, old + delta) if delta else old

    def raise_to(self, i: int, v: int) -> int:
        old = self.read(i)
        if v <= old:
            return old
        return self._write(i, old, v)

    def _write(self, i: int, old: int, new: int) -> int:
        if new > self.capacity:
            new = self.capacity
            self.saturation_events += 1
        B, j = divmod(i, self._k)
        spare = self.migrated.get(B)
        if spare is not None:
            self.spare_buckets[spare][j] = new
            return new
        pos = self._positions(B, j)
        have = len(pos)
        need = self._needed[new.bit_length()]
        if need > have:
            slots = self.config.slots
            if any(len(self.levels[q - 1][B]) >= slots[q] for q in range(have, need)):
                self._migrate(B)
                self.spare_buckets[self.migrated[B]][j] = new
                return new
            for q in range(have, need):
                prev = self.bitmaps[q - 1][B]
                p_prev = pos[q - 1]
                s = (prev & ((1 << p_prev) - 1)).bit_count()
                self.bitmaps[q - 1][B] = prev | (1 << p_prev)
                level = self.levels[q - 1][B]
                self.shifted_slots += len(level) - s
                level.insert(s, 0)
                if q < self._L - 1:
                    self.bitmaps[q][B] = _insert_bit(self.bitmaps[q][B], s)
                pos.append(s)
        self.base[i] = new & self._masks[0]
        for q in range(1, len(pos)):
            self.levels[q - 1][B][pos[q]] = (new >> self._offsets[q]) & self._masks[q]
        return new

    def _migrate(self, B: int) -> None:
        if len(self.spare_buckets) >= self.config.spares:
            raise SpareExhaustedError(f"all {self.config.spares} spare buckets in use")
        k = self._k
        values = [self.read(B * k + j) for j in range(k)]
        self.migrated[B] = len(self.spare_buckets)
        self.spare_buckets.append(values)
        self.migrations += 1

    def check_invariants(self) -> None:
        for B in range(self.config.n_buckets):
            if B in self.migrated:
                continue
            for q in range(1, self._L):
                occupied = len(self.levels[q - 1][B])
                assert occupied == self.bitmaps[q - 1][B].bit_count() <= self.config.slots[q]
                if q < self._L - 1:
                    assert self.bitmaps[q][B] >> occupied == 0

    def stats(self) -> dict:
        return {"migrations": self.migrations, "shifted_slots": self.shifted_slots,
                "saturation_events": self.saturation_events}

    def get_state(self) -> dict:
        c = self.config
        return {"config": {"widths": list(c.widths), "slots": list(c.slots),
                           "n_buckets": c.n_buckets, "spares": c.spares},
                "base": self.base, "levels": self.levels, "bitmaps": self.bitmaps,
                "migrated": sorted(self.migrated.items()), "spare_buckets": self.spare_buckets,
                "shifted_slots": self.shifted_slots, "migrations": self.migrations,
                "saturation_events": self.saturation_events}

    @classmethod
    def from_state(cls, state: dict) -> BrickArray:
        c = state["config"]
        arr = cls(BrickConfig(tuple(c["widths"]), tuple(c["slots"]), c["n_buckets"], c["spares"]))
        arr.base = list(state["base"])
        arr.levels = [[list(b) for b in lvl] for lvl in state["levels"]]
        arr.bitmaps = [list(b) for b in state["bitmaps"]]
        arr.migrated = {int(b): int(s) for b, s in state["migrated"]}
        arr.spare_buckets = [list(b) for b in state["spare_buckets"]]
        arr.shifted_slots = state["shifted_slots"]
        arr.migrations = state["migrations"]
        arr.saturation_events = state["saturation_events"]
        return arr
