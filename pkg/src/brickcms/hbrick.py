"""Hardware-friendly BRICK (HBRICK) counter array.

Differences from :mod:`brickcms.brick`:

* one unified bitmap per bucket, the concatenation of every level's
  extension flags, so all level indices come out of a single word read;
* each optional level of a bucket is one packed word of at most 72 bits
  (slot 0 in the least-significant bits), so inserting or removing a slot
  is a single word-level shift;
* an entry that needs a full optional level is evicted: its dirty bit is
  set and its value moves to a rank-indexed associative store.

Entries past the store's capacity spill into an unbounded map and are
counted in ``assoc_violations``; values stay exact either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .assocmem import AssociativeStore
from .brick import _levels_table
from .counterstore import CounterArray

BRAM_WORD_BITS = 72


class HbrickInconsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class HbrickConfig:
    widths: tuple[int, ...] = (14, 8, 7)
    slots: tuple[int, ...] = (64, 8, 4)
    n_buckets: int = 64
    assoc_capacity: int = 128
    reclaim: bool = True
    update_latency: int = 14

    def __post_init__(self) -> None:
        if len(self.widths) != len(self.slots) or not self.widths:
            raise ValueError("widths and slots must be non-empty and the same length")
        if any(w < 1 for w in self.widths):
            raise ValueError("all widths must be >= 1")
        k = self.slots[0]
        if k < 1 or k & (k - 1):
            raise ValueError(f"bucket size k={k} must be a power of two")
        if self.n_buckets < 1 or self.n_buckets & (self.n_buckets - 1):
            raise ValueError(f"n_buckets={self.n_buckets} must be a power of two")
        for q in range(1, len(self.widths)):
            if not 1 <= self.slots[q] <= self.slots[q - 1]:
                raise ValueError("slot counts must be non-increasing and >= 1")
            if self.slots[q] * self.widths[q] > BRAM_WORD_BITS:
                raise ValueError(
                    f"level {q + 1}: {self.slots[q]} slots x {self.widths[q]} bits exceeds "
                    f"the {BRAM_WORD_BITS}-bit word")
        if self.assoc_capacity < 0:
            raise ValueError("assoc_capacity must be >= 0")

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

    @property
    def key_bits(self) -> int:
        return self.size.bit_length() - 1

    @property
    def bitmap_bits(self) -> int:
        return sum(self.slots[:-1])

    @classmethod
    def for_size(cls, size: int, **kw) -> HbrickConfig:
        k = kw.get("slots", cls.slots)[0]
        if size % k:
            raise ValueError(f"size {size} is not a multiple of bucket size {k}")
        return cls(n_buckets=size // k, **kw)


# Per-level profiles used for level-count sweeps. Base widths shrink as levels
# are added; every profile totals 29 bits and keeps slots*width <= 72.
LEVEL_PROFILES: dict[int, dict] = {
    1: {"widths": (29,), "slots": (64,)},
    2: {"widths": (18, 11), "slots": (64, 6)},
    3: {"widths": (14, 8, 7), "slots": (64, 8, 4)},
    4: {"widths": (12, 6, 6, 5), "slots": (64, 12, 6, 4)},
    5: {"widths": (10, 6, 5, 4, 4), "slots": (64, 12, 8, 6, 4)},
}


def profile_config(levels: int, size: int, **kw) -> HbrickConfig:
    prof = LEVEL_PROFILES[levels]
    return HbrickConfig.for_size(size, widths=prof["widths"], slots=prof["slots"], **kw)


@dataclass
class LevelIndexVector:
    """Slot index per present level; ``slots[0]`` is the entry's base position."""

    slots: list[int] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.slots)

    def present(self, level: int) -> bool:
        return level <= len(self.slots)

    def __getitem__(self, level: int) -> int:
        """1-based level lookup, matching the level numbering of the layout."""
        if not 1 <= level <= len(self.slots):
            raise KeyError(f"level {level} not present")
        return self.slots[level - 1]


def _insert_field(word: int, s: int, width: int) -> int:
    cut = s * width
    return (word & ((1 << cut) - 1)) | ((word >> cut) << (cut + width))


def _delete_field(word: int, s: int, width: int) -> int:
    cut = s * width
    return (word & ((1 << cut) - 1)) | ((word >> (cut + width)) << cut)


class HbrickArray(CounterArray):
    kind = "hbrick"

    def __init__(self, config: HbrickConfig | None = None,
                 access_hook: Callable[[str, int], None] | None = None):
        cfg = config or HbrickConfig()
        self.config = cfg
        self.size = cfg.size
        self.capacity = (1 << cfg.total_width) - 1
        self.saturation_events = 0
        self.access_hook = access_hook
        self._k = cfg.k
        self._L = cfg.levels
        self._widths = cfg.widths
        self._masks = [(1 << w) - 1 for w in cfg.widths]
        self._offsets = [sum(cfg.widths[:l]) for l in range(cfg.levels)]
        self._needed = _levels_table(cfg.widths)
        # segment q of the unified bitmap flags level-(q+1) slots that extend to level q+2
        self._seg_off = [sum(cfg.slots[:q]) for q in range(cfg.levels - 1)]
        self._seg_len = list(cfg.slots[:-1])
        n = cfg.n_buckets
        self.base = [0] * cfg.size
        self.packed: list[list[int]] = [[0] * n for _ in range(cfg.levels - 1)]
        self.bitmap = [0] * n
        self.dirty = [0] * n
        self.assoc = AssociativeStore(cfg.key_bits, cfg.assoc_capacity)
        self.spill: dict[int, int] = {}
        self.evictions = 0
        self.word_shifts = 0
        self.assoc_violations = 0
        self.max_words_per_update = 0

    # -- indexing ---------------------------------------------------------

    def segment(self, B: int, q: int) -> int:
        return (self.bitmap[B] >> self._seg_off[q]) & ((1 << self._seg_len[q]) - 1)

    def _rank_slots(self, bm: int, j: int) -> list[int]:
        S = [j]
        p = j
        for q in range(self._L - 1):
            seg = bm >> self._seg_off[q]
            if not (seg >> p) & 1:
                break
            p = (seg & ((2 << p) - 1)).bit_count() - 1
            S.append(p)
        return S

    def rank_vector(self, B: int, j: int) -> LevelIndexVector:
        if not 0 <= B < self.config.n_buckets:
            raise IndexError(f"bucket {B} out of range")
        if not 0 <= j < self._k:
            raise IndexError(f"entry position {j} out of range [0, {self._k})")
        return LevelIndexVector(self._rank_slots(self.bitmap[B], j))

    # -- access -----------------------------------------------------------

    def _assoc_get(self, i: int) -> int:
        v = self.assoc.lookup(i)
        if v is None:
            v = self.spill.get(i)
            if v is None:
                raise HbrickInconsistencyError(f"entry {i} is dirty but absent from the associative store")
        return v

    def read(self, i: int) -> int:
        self._check(i)
        B, j = i // self._k, i % self._k
        if (self.dirty[B] >> j) & 1:
            return self._assoc_get(i)
        S = self._rank_slots(self.bitmap[B], j)
        v = self.base[i]
        for q in range(1, len(S)):
            v |= ((self.packed[q - 1][B] >> (S[q] * self._widths[q])) & self._masks[q]) << self._offsets[q]
        return v

    def add(self, i: int, delta: int) -> int:
        if delta < 0:
            raise ValueError("delta must be non-negative")
        self._check(i)
        return self._update(i, delta, None)

    def raise_to(self, i: int, v: int) -> int:
        self._check(i)
        return self._update(i, 0, v)

    def _update(self, i: int, delta: int, floor: int | None) -> int:
        B, j = i // self._k, i % self._k
        words = 2  # dirty word + unified bitmap word
        if (self.dirty[B] >> j) & 1:
            old = self._assoc_get(i)
            new = old + delta if floor is None else max(old, floor)
            if new > self.capacity:
                new = self.capacity
                self.saturation_events += 1
            if new != old:
                if i in self.spill:
                    self.spill[i] = new
                else:
                    self.assoc.update(i, new)
            self._touch("assoc", words)
            return new

        bm = self.bitmap[B]
        S = self._rank_slots(bm, j)
        have = len(S)
        widths = self._widths
        packed = self.packed
        old = self.base[i]
        for q in range(1, have):
            old |= ((packed[q - 1][B] >> (S[q] * widths[q])) & self._masks[q]) << self._offsets[q]
        words += have  # base word + present packed words
        new = old + delta if floor is None else max(old, floor)
        if new == old:
            self._touch("noop", words)
            return old
        if new > self.capacity:
            new = self.capacity
            self.saturation_events += 1
        need = self._needed[new.bit_length()]
        slots = self.config.slots

        if need > have:
            overflow = any(
                ((bm >> self._seg_off[q - 1]) & ((1 << self._seg_len[q - 1]) - 1)).bit_count() >= slots[q]
                for q in range(have, need))
            if overflow:
                self._evict(i, B, j, S, new)
                self._touch("evict", words + 2 * (have - 1) + 3)
                return new
            for q in range(have, need):
                off_prev = self._seg_off[q - 1]
                p_prev = S[q - 1]
                s = ((bm >> off_prev) & ((1 << p_prev) - 1)).bit_count()
                bm |= 1 << (off_prev + p_prev)
                if q < self._L - 1:
                    bm = self._insert_seg_bit(bm, q, s)
                word = packed[q - 1][B]
                word = _insert_field(word, s, widths[q])
                if word.bit_length() > slots[q] * widths[q]:
                    raise AssertionError("packed level word exceeded its slot capacity")
                packed[q - 1][B] = word
                self.word_shifts += 1
                S.append(s)
            self.bitmap[B] = bm
            words += 1 + (need - have)

        self.base[i] = new & self._masks[0]
        for q in range(1, len(S)):
            cut = S[q] * widths[q]
            m = self._masks[q]
            word = packed[q - 1][B]
            packed[q - 1][B] = (word & ~(m << cut)) | (((new >> self._offsets[q]) & m) << cut)
        words += len(S)
        self._touch("update", words)
        return new

    def _evict(self, i: int, B: int, j: int, S: list[int], value: int) -> None:
        self.dirty[B] |= 1 << j
        if len(self.assoc) < self.assoc.capacity:
            self.assoc.insert(i, value)
        else:
            self.spill[i] = value
            self.assoc_violations += 1
        self.evictions += 1
        if not self.config.reclaim:
            return
        bm = self.bitmap[B]
        # remove from the top level down so lower segment offsets stay valid
        for q in range(len(S) - 1, 0, -1):
            self.packed[q - 1][B] = _delete_field(self.packed[q - 1][B], S[q], self._widths[q])
            self.word_shifts += 1
            if q < self._L - 1:
                bm = self._delete_seg_bit(bm, q, S[q])
        bm &= ~(1 << (self._seg_off[0] + j))
        self.bitmap[B] = bm
        self.base[i] = 0

    def _insert_seg_bit(self, bm: int, q: int, s: int) -> int:
        # the segment's top bit is free: its level has fewer occupied slots than capacity
        off, ln = self._seg_off[q], self._seg_len[q]
        mask = (1 << ln) - 1
        seg = _insert_field((bm >> off) & mask, s, 1) & mask
        return (bm & ~(mask << off)) | (seg << off)

    def _delete_seg_bit(self, bm: int, q: int, s: int) -> int:
        off, ln = self._seg_off[q], self._seg_len[q]
        seg = (bm >> off) & ((1 << ln) - 1)
        seg = _delete_field(seg, s, 1)
        return (bm & ~(((1 << ln) - 1) << off)) | (seg << off)

    def _touch(self, op: str, words: int) -> None:
        if words > self.max_words_per_update:
            self.max_words_per_update = words
        if self.access_hook is not None:
            self.access_hook(op, words)

    # -- reporting --------------------------------------------------------

    def word_touch_bound(self) -> int:
        """Upper bound on memory words touched by one update, for this layout."""
        return 4 * self._L + 4

    def dirty_count(self) -> int:
        return sum(v.bit_count() for v in self.dirty)

    def check_invariants(self) -> None:
        cfg = self.config
        for B in range(cfg.n_buckets):
            prev_live = cfg.k
            for q in range(self._L - 1):
                seg = self.segment(B, q)
                occupied = seg.bit_count()
                assert occupied <= cfg.slots[q + 1]
                assert seg >> prev_live == 0, "flag set on a non-live slot"
                word = self.packed[q][B]
                assert word.bit_length() <= cfg.slots[q + 1] * cfg.widths[q + 1] <= BRAM_WORD_BITS
                assert word >> (occupied * cfg.widths[q + 1]) == 0, "data beyond occupied slots"
                prev_live = occupied
            if cfg.reclaim:
                assert self.segment(B, 0) & self.dirty[B] == 0
        for key in self.assoc.keys():
            assert (self.dirty[key // cfg.k] >> (key % cfg.k)) & 1
        self.assoc.check_invariants()

    def stats(self) -> dict:
        cfg = self.config
        occupancy = {}
        for q in range(1, self._L):
            hist = [0] * (cfg.slots[q] + 1)
            for B in range(cfg.n_buckets):
                hist[self.segment(B, q - 1).bit_count()] += 1
            occupancy[str(q + 1)] = hist
        return {
            "occupancy": occupancy,
            "evictions": self.evictions,
            "word_shifts": self.word_shifts,
            "dirty_entries": self.dirty_count(),
            "assoc_entries": len(self.assoc),
            "assoc_violations": self.assoc_violations,
            "saturation_events": self.saturation_events,
            "max_words_per_update": self.max_words_per_update,
            "reclaim": cfg.reclaim,
        }

    def get_state(self) -> dict:
        c = self.config
        return {"config": {"widths": list(c.widths), "slots": list(c.slots), "n_buckets": c.n_buckets,
                           "assoc_capacity": c.assoc_capacity, "reclaim": c.reclaim,
                           "update_latency": c.update_latency},
                "base": self.base, "packed": self.packed, "bitmap": self.bitmap, "dirty": self.dirty,
                "assoc": self.assoc.get_state(), "spill": sorted(self.spill.items()),
                "counters": [self.evictions, self.word_shifts, self.assoc_violations,
                             self.saturation_events, self.max_words_per_update]}

    @classmethod
    def from_state(cls, state: dict) -> HbrickArray:
        c = dict(state["config"])
        c["widths"], c["slots"] = tuple(c["widths"]), tuple(c["slots"])
        arr = cls(HbrickConfig(**c))
        arr.base = list(state["base"])
        arr.packed = [list(p) for p in state["packed"]]
        arr.bitmap = list(state["bitmap"])
        arr.dirty = list(state["dirty"])
        arr.assoc = AssociativeStore.from_state(state["assoc"])
        arr.spill = {int(k): int(v) for k, v in state["spill"]}
        (arr.evictions, arr.word_shifts, arr.assoc_violations,
         arr.saturation_events, arr.max_words_per_update) = state["counters"]
        return arr
