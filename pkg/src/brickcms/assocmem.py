"""Rank-indexed associative store for counter entries evicted from their bucket.

Keys are counter indices in ``[0, 2**key_bits)``. Presence lives in a bitmap
made of 72-bit memory words; each word uses 64 bits for presence
(``word = key >> 6``, ``bit = key & 63``) and its remaining 8 bits hold the
cumulative rank of all earlier words. Values are kept densely in key order,
so a key's slot is its global rank minus one.
"""

from __future__ import annotations

WORD_BITS = 72
PRESENCE_BITS = 64


class AssocError(Exception):
    pass


class DuplicateKeyError(AssocError, KeyError):
    pass


class AbsentKeyError(AssocError, KeyError):
    pass


class CapacityError(AssocError):
    pass


class MonotonicityError(AssocError, ValueError):
    pass


class AssociativeStore:
    def __init__(self, key_bits: int = 15, capacity: int = 128):
        if key_bits < 1:
            raise ValueError("key_bits must be >= 1")
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.key_bits = key_bits
        self.capacity = capacity
        self.n_words = max(1, ((1 << key_bits) + PRESENCE_BITS - 1) // PRESENCE_BITS)
        self.words = [0] * self.n_words
        # prefix[w] = number of present keys in words < w
        self.prefix = [0] * self.n_words
        self.values: list[int] = []

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, key: int) -> bool:
        self._check(key)
        return bool((self.words[key >> 6] >> (key & 63)) & 1)

    def _check(self, key: int) -> None:
        if not 0 <= key < (1 << self.key_bits):
            raise IndexError(f"key {key} out of range for {self.key_bits}-bit keys")

    def rank(self, key: int) -> int:
        """Inclusive count of present keys <= ``key``."""
        w, b = key >> 6, key & 63
        return self.prefix[w] + (self.words[w] & ((2 << b) - 1)).bit_count()

    def lookup(self, key: int) -> int | None:
        self._check(key)
        w, b = key >> 6, key & 63
        if not (self.words[w] >> b) & 1:
            return None
        return self.values[self.rank(key) - 1]

    def insert(self, key: int, value: int) -> None:
        self._check(key)
        w, b = key >> 6, key & 63
        if (self.words[w] >> b) & 1:
            raise DuplicateKeyError(key)
        if len(self.values) >= self.capacity:
            raise CapacityError(f"associative store full ({self.capacity} entries)")
        self.words[w] |= 1 << b
        self.values.insert(self.rank(key) - 1, value)
        for ww in range(w + 1, self.n_words):
            self.prefix[ww] += 1

    def update(self, key: int, value: int, monotonic: bool = True) -> None:
        self._check(key)
        w, b = key >> 6, key & 63
        if not (self.words[w] >> b) & 1:
            raise AbsentKeyError(key)
        slot = self.rank(key) - 1
        if monotonic and value < self.values[slot]:
            raise MonotonicityError(f"key {key}: {value} < stored {self.values[slot]}")
        self.values[slot] = value

    def keys(self) -> list[int]:
        out = []
        for w, word in enumerate(self.words):
            while word:
                low = word & -word
                out.append((w << 6) | (low.bit_length() - 1))
                word ^= low
        return out

    def items(self) -> list[tuple[int, int]]:
        return list(zip(self.keys(), self.values))

    def check_invariants(self) -> None:
        total = sum(word.bit_count() for word in self.words)
        assert total == len(self.values) <= self.capacity
        run = 0
        for w, word in enumerate(self.words):
            assert self.prefix[w] == run
            run += word.bit_count()
        keys = self.keys()
        assert keys == sorted(keys)

    def memory_bits(self, value_bits: int) -> dict[str, int]:
        return {"presence_bits": self.n_words * WORD_BITS, "value_bits": self.capacity * value_bits}

    def get_state(self) -> dict:
        return {"key_bits": self.key_bits, "capacity": self.capacity, "items": self.items()}

    @classmethod
    def from_state(cls, state: dict) -> AssociativeStore:
        store = cls(state["key_bits"], state["capacity"])
        for k, v in state["items"]:
            store.insert(k, v)
        return store

