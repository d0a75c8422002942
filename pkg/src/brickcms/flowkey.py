"""Flow identity (five-tuple) and the seeded hash family that maps flows to counters."""

from __future__ import annotations

import hashlib
import ipaddress
import struct
from dataclasses import dataclass
from typing import Sequence

_PACK = struct.Struct(">IIHHB")
ENCODED_SIZE = _PACK.size  # 13

DEFAULT_SEEDS = (
    0x9E3779B97F4A7C15,
    0xC2B2AE3D27D4EB4F,
    0x165667B19E3779F9,
    0x27D4EB2F165667C5,
    0x85EBCA77C2B2AE63,
    0xFF51AFD7ED558CCD,
    0xC4CEB9FE1A85EC53,
    0x94D049BB133111EB,
)


def _parse_ip(value: int | str) -> int:
    if isinstance(value, str):
        return int(ipaddress.IPv4Address(value))
    return int(value)


@dataclass(frozen=True, slots=True)
class FlowKey:
    """Five-tuple identifying a network flow.

    IP addresses are stored as 32-bit integers; dotted-quad strings are
    accepted by :meth:`from_strings`.
    """

    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    proto: int

    def __post_init__(self) -> None:
        for name, bits in (("src_ip", 32), ("dst_ip", 32), ("src_port", 16),
                           ("dst_port", 16), ("proto", 8)):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < (1 << bits):
                raise ValueError(f"{name}={v!r} is not a {bits}-bit unsigned integer")

    @classmethod
    def from_strings(cls, src_ip: str | int, dst_ip: str | int, src_port: int | str,
                     dst_port: int | str, proto: int | str) -> FlowKey:
        return cls(_parse_ip(src_ip), _parse_ip(dst_ip), int(src_port), int(dst_port), int(proto))

    def encode(self) -> bytes:
        return _PACK.pack(self.src_ip, self.dst_ip, self.src_port, self.dst_port, self.proto)

    @classmethod
    def decode(cls, data: bytes) -> FlowKey:
        if len(data) != ENCODED_SIZE:
            raise ValueError(f"expected {ENCODED_SIZE} bytes, got {len(data)}")
        return cls(*_PACK.unpack(data))

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.src_ip, self.dst_ip, self.src_port, self.dst_port, self.proto)

    def __str__(self) -> str:
        return (f"{ipaddress.IPv4Address(self.src_ip)},{ipaddress.IPv4Address(self.dst_ip)},"
                f"{self.src_port},{self.dst_port},{self.proto}")


def encode(key: FlowKey) -> bytes:
    return key.encode()


def decode(data: bytes) -> FlowKey:
    return FlowKey.decode(data)


class HashFamily:
    """D independent seeded hashes over the 13-byte key encoding.

    Each hash is keyed BLAKE2b truncated to 64 bits and masked to
    ``[0, table_size)``; ``table_size`` must be a power of two.
    """

    def __init__(self, d_count: int, table_size: int, seeds: Sequence[int] | None = None):
        if d_count < 1:
            raise ValueError("d_count must be >= 1")
        if table_size < 1 or table_size & (table_size - 1):
            raise ValueError(f"table_size must be a power of two, got {table_size}")
        if seeds is None:
            if d_count > len(DEFAULT_SEEDS):
                raise ValueError(f"provide explicit seeds for d_count > {len(DEFAULT_SEEDS)}")
            seeds = DEFAULT_SEEDS[:d_count]
        seeds = tuple(int(s) & 0xFFFFFFFFFFFFFFFF for s in seeds)
        if len(seeds) != d_count:
            raise ValueError(f"need {d_count} seeds, got {len(seeds)}")
        self.d_count = d_count
        self.table_size = table_size
        self.seeds = seeds
        self._mask = table_size - 1
        self._hkeys = [s.to_bytes(8, "little") for s in seeds]
        self._cache: dict[FlowKey, tuple[int, ...]] = {}

    def hash(self, d: int, key: FlowKey) -> int:
        if not 0 <= d < self.d_count:
            raise IndexError(f"hash index {d} out of range for D={self.d_count}")
        return self.indices(key)[d]

    def indices(self, key: FlowKey) -> tuple[int, ...]:
        """All D counter indices for ``key`` (memoized; the mapping is pure)."""
        idx = self._cache.get(key)
        if idx is None:
            data = key.encode()
            mask = self._mask
            idx = tuple(
                int.from_bytes(hashlib.blake2b(data, digest_size=8, key=hk).digest(), "little") & mask
                for hk in self._hkeys
            )
            self._cache[key] = idx
        return idx

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    def __repr__(self) -> str:
        return f"HashFamily(d_count={self.d_count}, table_size={self.table_size})"


def seeds_from(seed: int, d_count: int) -> tuple[int, ...]:
    """Derive ``d_count`` distinct 64-bit hash seeds from one experiment seed."""
    out = []
    for d in range(d_count):
        digest = hashlib.blake2b(struct.pack("<QQ", seed & 0xFFFFFFFFFFFFFFFF, d), digest_size=8).digest()
        out.append(int.from_bytes(digest, "little"))
    return tuple(out)
