"""Packet traces: CSV ingestion, synthetic Zipf generation, exact counts and error metrics.

Wire format, one packet per line (UTF-8, ``#`` starts a comment)::

    src_ip,dst_ip,src_port,dst_port,proto,bytes
"""

from __future__ import annotations

import hashlib
import os
from collections import Counter
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Iterable, Iterator

import numpy as np

from .flowkey import ENCODED_SIZE, FlowKey

if TYPE_CHECKING:
    from .sketch import CountMinSketch

MIN_PACKET = 64
MAX_PACKET = 1500
CSV_HEADER = "# src_ip,dst_ip,src_port,dst_port,proto,bytes"


class TraceParseError(ValueError):
    def __init__(self, path: str, line_no: int, msg: str):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.path = path
        self.line_no = line_no


@dataclass(frozen=True, slots=True)
class PacketRecord:
    key: FlowKey
    size: int
    ordinal: int


@dataclass(frozen=True)
class ZipfSpec:
    """Synthetic trace: flow popularity by rank ``r`` is proportional to ``r**-s``.

    Packet sizes are uniform integers in ``[min_size, max_size]``.
    """

    n_packets: int
    n_flows: int = 10_000
    s: float = 1.0
    seed: int = 0
    min_size: int = MIN_PACKET
    max_size: int = MAX_PACKET

    def __post_init__(self) -> None:
        if self.n_packets < 0:
            raise ValueError("n_packets must be >= 0")
        if self.n_flows < 1:
            raise ValueError("n_flows must be >= 1")
        if self.s < 0:
            raise ValueError("skewness must be >= 0")
        if not 0 <= self.min_size <= self.max_size:
            raise ValueError("need 0 <= min_size <= max_size")

    def to_dict(self) -> dict:
        return asdict(self)


# Flow population per packet of the reference backbone trace (588K flows in 3M packets).
CAIDA_FLOWS_PER_PACKET = 588_000 / 3_000_000


def caida_profile(n_packets: int = 3_000_000, seed: int = 0) -> ZipfSpec:
    """Synthetic stand-in shaped like the backbone-trace bit-width histogram.

    At the full 3M packets the largest flow needs at most 29 bits and the
    most common flow needs at most 14 bits. This is NOT real capture data.
    """
    n_flows = max(1, round(n_packets * CAIDA_FLOWS_PER_PACKET))
    return ZipfSpec(n_packets=n_packets, n_flows=n_flows, s=1.0, seed=seed)


def flow_keys(n_flows: int, seed: int) -> list[FlowKey]:
    """Distinct five-tuples derived deterministically from (seed, rank)."""
    keys: list[FlowKey] = []
    seen: set[FlowKey] = set()
    for rank in range(n_flows):
        attempt = 0
        while True:
            digest = hashlib.blake2b(f"{seed}:{rank}:{attempt}".encode(), digest_size=ENCODED_SIZE).digest()
            key = FlowKey.decode(digest)
            if key not in seen:
                break
            attempt += 1
        seen.add(key)
        keys.append(key)
    return keys


def gen_zipf(spec: ZipfSpec) -> list[PacketRecord]:
    rng = np.random.default_rng(spec.seed)
    ranks = np.arange(1, spec.n_flows + 1, dtype=np.float64)
    weights = ranks ** -spec.s
    probs = weights / weights.sum()
    counts = rng.multinomial(spec.n_packets, probs)
    order = rng.permutation(np.repeat(np.arange(spec.n_flows), counts))
    sizes = rng.integers(spec.min_size, spec.max_size, size=spec.n_packets, endpoint=True)
    keys = flow_keys(spec.n_flows, spec.seed)
    return [PacketRecord(keys[f], int(sz), n) for n, (f, sz) in enumerate(zip(order.tolist(), sizes.tolist()))]


def format_packet(pkt: PacketRecord) -> str:
    return f"{pkt.key},{pkt.size}"


def write_csv(trace: Iterable[PacketRecord], path: str | os.PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for pkt in trace:
            fh.write(format_packet(pkt) + "\n")
            n += 1
    return n


def parse_line(line: str) -> tuple[FlowKey, int]:
    fields = [f.strip() for f in line.split(",")]
    if len(fields) != 6:
        raise ValueError(f"expected 6 fields, got {len(fields)}")
    *tup, size = fields
    key = FlowKey.from_strings(*tup)
    nbytes = int(size)
    if nbytes < 0:
        raise ValueError("negative packet size")
    return key, nbytes


def load_csv(path: str | os.PathLike) -> Iterator[PacketRecord]:
    """Stream packets from a CSV trace; raises :class:`TraceParseError` with the line number."""
    ordinal = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                key, size = parse_line(line)
            except ValueError as exc:
                raise TraceParseError(str(path), line_no, str(exc)) from None
            yield PacketRecord(key, size, ordinal)
            ordinal += 1


@dataclass
class ExactCounts:
    flows: dict[FlowKey, int]
    total_bytes: int

    @property
    def flow_count(self) -> int:
        return len(self.flows)

    def __getitem__(self, key: FlowKey) -> int:
        return self.flows.get(key, 0)


def exact_counts(trace: Iterable[PacketRecord]) -> ExactCounts:
    flows: Counter[FlowKey] = Counter()
    for pkt in trace:
        flows[pkt.key] += pkt.size
    return ExactCounts(dict(flows), sum(flows.values()))


def avg_abs_error(oracle: ExactCounts, sk: CountMinSketch) -> float:
    if not oracle.flows:
        return 0.0
    return sum(abs(sk.query(k).value - v) for k, v in oracle.flows.items()) / oracle.flow_count


def min_bitwidth_histogram(oracle: ExactCounts) -> dict[int, int]:
    hist = Counter(v.bit_length() for v in oracle.flows.values())
    return dict(sorted(hist.items()))
