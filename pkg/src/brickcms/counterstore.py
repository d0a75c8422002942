"""Counter-array interface shared by the sketch backends, plus the flat fixed-width store."""

from __future__ import annotations

from abc import ABC, abstractmethod


class CounterArray(ABC):
    """W non-negative, monotonically non-decreasing counters.

    Subclasses saturate at :attr:`capacity` instead of wrapping and count
    clamped writes in ``saturation_events``.
    """

    size: int
    capacity: int
    saturation_events: int

    def _check(self, i: int) -> None:
        if not 0 <= i < self.size:
            raise IndexError(f"counter index {i} out of range [0, {self.size})")

    @abstractmethod
    def read(self, i: int) -> int: ...

    @abstractmethod
    def add(self, i: int, delta: int) -> int:
        """Add ``delta`` to entry ``i``, clamping at capacity; return the new value."""

    @abstractmethod
    def raise_to(self, i: int, v: int) -> int:
        """Set entry ``i`` to ``min(max(old, v), capacity)``; return the new value."""

    def __len__(self) -> int:
        return self.size


class FlatCounterArray(CounterArray):
    kind = "flat"

    def __init__(self, size: int, width_bits: int = 64):
        if size < 1:
            raise ValueError("size must be >= 1")
        if width_bits < 1:
            raise ValueError("width_bits must be >= 1")
        self.size = size
        self.width_bits = width_bits
        self.capacity = (1 << width_bits) - 1
        self.cells = [0] * size
        self.saturation_events = 0

    def read(self, i: int) -> int:
        self._check(i)
        return self.cells[i]

    def add(self, i: int, delta: int) -> int:
        self._check(i)
        if delta < 0:
            raise ValueError("delta must be non-negative")
        v = self.cells[i] + delta
        if v > self.capacity:
            v = self.capacity
            self.saturation_events += 1
        self.cells[i] = v
        return v

    def raise_to(self, i: int, v: int) -> int:
        self._check(i)
        old = self.cells[i]
        if v <= old:
            return old
        if v > self.capacity:
            v = self.capacity
            self.saturation_events += 1
        self.cells[i] = v
        return v

    def saturated(self, i: int) -> bool:
        return self.cells[i] >= self.capacity

    def get_state(self) -> dict:
        return {"size": self.size, "width_bits": self.width_bits, "cells": self.cells,
                "saturation_events": self.saturation_events}

    @classmethod
    def from_state(cls, state: dict) -> FlatCounterArray:
        arr = cls(state["size"], state["width_bits"])
        arr.cells = list(state["cells"])
        arr.saturation_events = state["saturation_events"]
        return arr
