"""Block-RAM accounting for flat, BRICK and HBRICK counter layouts.

A block is a 36 Kb dual-port RAM usable at any of the standard aspect ratios
below. An ``entries x width`` array is split into column slices; each slice
picks one aspect ratio and is tiled vertically. :func:`bram_count` returns the
fewest blocks over all such splits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

from .assocmem import AssociativeStore, WORD_BITS
from .brick import BrickConfig
from .hbrick import HbrickConfig, profile_config

BRAM_BITS = 36 * 1024
# (depth, width)
DEFAULT_ASPECTS: tuple[tuple[int, int], ...] = (
    (512, 72), (1024, 36), (2048, 18), (4096, 9), (8192, 4), (16384, 2), (32768, 1))


class AspectConfigError(ValueError):
    pass


def validate_aspects(aspects: Sequence[Sequence[int]]) -> tuple[tuple[int, int], ...]:
    out = []
    for a in aspects:
        if len(a) != 2:
            raise AspectConfigError(f"aspect {a!r} must be a (depth, width) pair")
        depth, width = int(a[0]), int(a[1])
        if depth < 1 or width < 1:
            raise AspectConfigError(f"aspect {a!r} must have positive depth and width")
        if depth * width > BRAM_BITS:
            raise AspectConfigError(f"aspect {depth}x{width} exceeds a {BRAM_BITS}-bit block")
        out.append((depth, width))
    if not out:
        raise AspectConfigError("at least one aspect ratio is required")
    return tuple(out)


@lru_cache(maxsize=4096)
def _bram_count(width: int, entries: int, aspects: tuple[tuple[int, int], ...]) -> int:
    best = [0] * (width + 1)
    for w in range(1, width + 1):
        best[w] = min(math.ceil(entries / d) + best[max(0, w - aw)] for d, aw in aspects)
    return best[width]


def bram_count(width_bits: int, entries: int,
               aspects: Sequence[Sequence[int]] = DEFAULT_ASPECTS) -> int:
    if width_bits < 1 or entries < 1:
        raise ValueError("width_bits and entries must be >= 1")
    return _bram_count(int(width_bits), int(entries), validate_aspects(aspects))


@dataclass
class Component:
    bits: int
    brams: int


@dataclass
class MemoryReport:
    name: str
    backend: str
    depth: int
    width: int
    components: dict[str, Component]
    params: dict = field(default_factory=dict)
    baseline: str | None = None
    bram_ratio: float | None = None
    bits_ratio: float | None = None

    @property
    def total_bits(self) -> int:
        return sum(c.bits for c in self.components.values())

    @property
    def total_brams(self) -> int:
        return sum(c.brams for c in self.components.values())

    def bits_of(self, *names: str) -> int:
        return sum(self.components[n].bits for n in names if n in self.components)

    @property
    def counter_bits(self) -> int:
        """Bucket-resident storage: counters, bitmaps and dirty bits (no overflow area)."""
        return self.bits_of("base", "counters", "bitmap", "dirty",
                            *[n for n in self.components if n.startswith(("level", "bitmap_"))])

    @property
    def counter_storage_bits(self) -> int:
        """Counter levels plus index bitmaps."""
        return self.bits_of("base", "counters", "bitmap",
                            *[n for n in self.components if n.startswith(("level", "bitmap_"))])

    @property
    def overflow_bits(self) -> int:
        return self.bits_of("assoc_presence", "assoc_values", "spares")

    def to_dict(self) -> dict:
        return {
            "name": self.name, "backend": self.backend, "depth": self.depth, "width": self.width,
            "params": self.params,
            "components": {k: {"bits": c.bits, "brams": c.brams} for k, c in self.components.items()},
            "total_bits": self.total_bits, "total_brams": self.total_brams,
            "counter_bits": self.counter_bits, "counter_storage_bits": self.counter_storage_bits,
            "overflow_bits": self.overflow_bits,
            "baseline": self.baseline, "bram_ratio": self.bram_ratio, "bits_ratio": self.bits_ratio,
        }


def _comp(depth: int, width_bits: int, entries: int, aspects) -> Component:
    return Component(depth * width_bits * entries, depth * bram_count(width_bits, entries, aspects))


def flat_report(depth: int, width: int, width_bits: int = 32,
                aspects=DEFAULT_ASPECTS, name: str | None = None) -> MemoryReport:
    return MemoryReport(name or f"flat-{width_bits}", "flat", depth, width,
                        {"counters": _comp(depth, width_bits, width, aspects)},
                        params={"width_bits": width_bits})


def hbrick_report(depth: int, cfg: HbrickConfig, aspects=DEFAULT_ASPECTS,
                  name: str | None = None) -> MemoryReport:
    n, k = cfg.n_buckets, cfg.k
    comps = {"base": _comp(depth, cfg.widths[0], cfg.size, aspects)}
    for q in range(1, cfg.levels):
        comps[f"level{q + 1}"] = _comp(depth, cfg.slots[q] * cfg.widths[q], n, aspects)
    if cfg.levels > 1:
        comps["bitmap"] = _comp(depth, cfg.bitmap_bits, n, aspects)
        comps["dirty"] = _comp(depth, k, n, aspects)
        store = AssociativeStore(cfg.key_bits, cfg.assoc_capacity)
        comps["assoc_presence"] = _comp(depth, WORD_BITS, store.n_words, aspects)
        if cfg.assoc_capacity:
            comps["assoc_values"] = _comp(depth, cfg.total_width, cfg.assoc_capacity, aspects)
    return MemoryReport(name or f"hbrick-L{cfg.levels}", "hbrick", depth, cfg.size, comps,
                        params={"widths": list(cfg.widths), "slots": list(cfg.slots),
                                "assoc_capacity": cfg.assoc_capacity})


def brick_report(depth: int, cfg: BrickConfig, aspects=DEFAULT_ASPECTS,
                 name: str | None = None) -> MemoryReport:
    n = cfg.n_buckets
    comps = {"base": _comp(depth, cfg.widths[0], cfg.size, aspects)}
    for q in range(1, cfg.levels):
        comps[f"level{q + 1}"] = _comp(depth, cfg.slots[q] * cfg.widths[q], n, aspects)
        comps[f"bitmap_{q}"] = _comp(depth, cfg.slots[q - 1], n, aspects)
    if cfg.spares:
        comps["spares"] = _comp(depth, cfg.total_width, cfg.spares * cfg.k, aspects)
    return MemoryReport(name or f"brick-L{cfg.levels}", "brick", depth, cfg.size, comps,
                        params={"widths": list(cfg.widths), "slots": list(cfg.slots),
                                "spares": cfg.spares})


def compare(reports: list[MemoryReport], baseline: str) -> list[MemoryReport]:
    """Fill each report's ratios relative to the report named ``baseline``."""
    base = next((r for r in reports if r.name == baseline), None)
    if base is None:
        raise ValueError(f"no report named {baseline!r}")
    for r in reports:
        r.baseline = baseline
        r.bram_ratio = r.total_brams / base.total_brams
        r.bits_ratio = r.total_bits / base.total_bits
    return reports


def report(depth: int = 4, width: int = 1 << 15, flat_width_bits: int = 32,
           levels: Sequence[int] = (2, 3, 4, 5), brick_spares: int = 100,
           assoc_capacity: int = 128, aspects=DEFAULT_ASPECTS) -> list[MemoryReport]:
    """Flat and BRICK baselines plus HBRICK at each level count, all at the same W."""
    aspects = validate_aspects(aspects)
    reports = [flat_report(depth, width, flat_width_bits, aspects),
               brick_report(depth, BrickConfig.for_size(width, spares=brick_spares), aspects)]
    for L in levels:
        reports.append(hbrick_report(depth, profile_config(L, width, assoc_capacity=assoc_capacity),
                                     aspects))
    return compare(reports, reports[0].name)
