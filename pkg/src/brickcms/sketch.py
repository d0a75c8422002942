"""Count-min sketch over pluggable counter arrays, with heavy-hitter flagging."""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

from .brick import BrickArray, BrickConfig
from .counterstore import CounterArray, FlatCounterArray
from .flowkey import FlowKey, HashFamily, seeds_from
from .hbrick import HbrickArray, HbrickConfig
from .traces import PacketRecord

Backend = Literal["flat", "brick", "hbrick"]
Strategy = Literal["plain", "conservative"]

BACKENDS = ("flat", "brick", "hbrick")
STRATEGIES = ("plain", "conservative")

SNAPSHOT_MAGIC = b"BCMS"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sHHIBB")


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class SketchConfig:
    """Sketch shape, backend choice and update strategy.

    ``backend_options`` is passed to the backend config: ``width_bits`` for
    flat, :class:`BrickConfig` / :class:`HbrickConfig` fields otherwise
    (``n_buckets`` is derived from ``width``).
    """

    depth: int = 4
    width: int = 1 << 15
    backend: Backend = "flat"
    strategy: Strategy = "plain"
    threshold: float = math.inf
    seeds: tuple[int, ...] | None = None
    backend_options: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("depth (D) must be >= 1")
        if self.width < 1 or self.width & (self.width - 1):
            raise ValueError(f"width (W) must be a power of two, got {self.width}")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.seeds is not None and len(self.seeds) != self.depth:
            raise ValueError(f"need {self.depth} seeds, got {len(self.seeds)}")

    def with_seed(self, seed: int) -> SketchConfig:
        return replace(self, seeds=seeds_from(seed, self.depth))

    def resolved_seeds(self) -> tuple[int, ...]:
        return tuple(self.seeds) if self.seeds is not None else HashFamily(self.depth, 1).seeds

    def make_array(self) -> CounterArray:
        opts = dict(self.backend_options)
        if self.backend == "flat":
            return FlatCounterArray(self.width, opts.get("width_bits", 64))
        for name in ("widths", "slots"):
            if name in opts:
                opts[name] = tuple(opts[name])
        if self.backend == "brick":
            return BrickArray(BrickConfig.for_size(self.width, **opts))
        return HbrickArray(HbrickConfig.for_size(self.width, **opts))

    def to_dict(self) -> dict:
        return {"depth": self.depth, "width": self.width, "backend": self.backend,
                "strategy": self.strategy,
                "threshold": None if math.isinf(self.threshold) else self.threshold,
                "seeds": list(self.resolved_seeds()),
                "backend_options": {k: list(v) if isinstance(v, tuple) else v
                                    for k, v in sorted(self.backend_options.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> SketchConfig:
        thr = d.get("threshold")
        return cls(depth=d["depth"], width=d["width"], backend=d["backend"], strategy=d["strategy"],
                   threshold=math.inf if thr is None else thr, seeds=tuple(d["seeds"]),
                   backend_options=dict(d.get("backend_options", {})))


@dataclass(frozen=True)
class Estimate:
    value: int
    saturated: bool = False


def error_bound(cfg: SketchConfig | None = None, *, depth: int | None = None,
                width: int | None = None) -> tuple[float, float]:
    """(epsilon, delta) with epsilon = 2/W and delta = 2**-D."""
    if cfg is not None:
        depth, width = cfg.depth, cfg.width
    if depth is None or width is None or depth < 1 or width < 1:
        raise ValueError("need depth >= 1 and width >= 1")
    return 2.0 / width, 2.0 ** -depth


class CountMinSketch:
    def __init__(self, config: SketchConfig | None = None):
        cfg = config or SketchConfig()
        self.config = cfg
        self.hashes = HashFamily(cfg.depth, cfg.width, cfg.seeds)
        self.arrays: list[CounterArray] = [cfg.make_array() for _ in range(cfg.depth)]
        self.heavy: dict[FlowKey, int] = {}
        self.packets = 0
        self.total_bytes = 0

    # -- updates ----------------------------------------------------------

    def update_plain(self, key: FlowKey, size: int) -> Estimate:
        if size < 0:
            raise ValueError("size must be non-negative")
        vals = [arr.add(i, size) for arr, i in zip(self.arrays, self.hashes.indices(key))]
        return self._estimate(vals)

    def update_conservative(self, key: FlowKey, size: int) -> Estimate:
        if size < 0:
            raise ValueError("size must be non-negative")
        idx = self.hashes.indices(key)
        arrays = self.arrays
        target = min(arr.read(i) for arr, i in zip(arrays, idx)) + size
        vals = [arr.raise_to(i, target) for arr, i in zip(arrays, idx)]
        return self._estimate(vals)

    def update(self, key: FlowKey, size: int) -> Estimate:
        if self.config.strategy == "plain":
            return self.update_plain(key, size)
        return self.update_conservative(key, size)

    def process_packet(self, pkt: PacketRecord) -> tuple[Estimate, bool]:
        est = self.update(pkt.key, pkt.size)
        self.packets += 1
        self.total_bytes += pkt.size
        heavy = est.value > self.config.threshold
        if heavy and pkt.key not in self.heavy:
            self.heavy[pkt.key] = pkt.ordinal
        return est, heavy

    def process(self, trace: Iterable[PacketRecord]) -> CountMinSketch:
        for pkt in trace:
            self.process_packet(pkt)
        return self

    # -- queries ----------------------------------------------------------

    def _estimate(self, vals: list[int]) -> Estimate:
        m = min(vals)
        sat = any(v == m and v >= arr.capacity for v, arr in zip(vals, self.arrays))
        return Estimate(m, sat)

    def query(self, key: FlowKey) -> Estimate:
        return self._estimate([arr.read(i) for arr, i in zip(self.arrays, self.hashes.indices(key))])

    def estimate(self, key: FlowKey) -> int:
        return self.query(key).value

    def error_bound(self) -> tuple[float, float]:
        return error_bound(self.config)

    def backend_stats(self) -> list[dict]:
        return [arr.stats() if hasattr(arr, "stats") else {"saturation_events": arr.saturation_events}
                for arr in self.arrays]

    # -- snapshots --------------------------------------------------------

    def to_bytes(self) -> bytes:
        cfg = self.config
        seeds = self.hashes.seeds
        header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, cfg.depth, cfg.width,
                              BACKENDS.index(cfg.backend), STRATEGIES.index(cfg.strategy))
        payload = {
            "config": cfg.to_dict(),
            "arrays": [arr.get_state() for arr in self.arrays],
            "heavy": [[str(k), o] for k, o in self.heavy.items()],
            "packets": self.packets,
            "total_bytes": self.total_bytes,
        }
        body = zlib.compress(json.dumps(payload, separators=(",", ":")).encode())
        return header + struct.pack(f"<{len(seeds)}Q", *seeds) + struct.pack("<I", len(body)) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> CountMinSketch:
        if len(data) < _HEADER.size:
            raise SnapshotError("truncated snapshot header")
        magic, version, depth, width, backend, strategy = _HEADER.unpack_from(data)
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotError("not a sketch snapshot (bad magic)")
        if version != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        off = _HEADER.size
        seeds = struct.unpack_from(f"<{depth}Q", data, off)
        off += 8 * depth
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        payload = json.loads(zlib.decompress(data[off:off + n]))
        cfg = SketchConfig.from_dict(payload["config"])
        if (cfg.depth, cfg.width, cfg.backend, cfg.strategy, cfg.resolved_seeds()) != (
                depth, width, BACKENDS[backend], STRATEGIES[strategy], tuple(seeds)):
            raise SnapshotError("snapshot header and payload disagree")
        sk = cls(cfg)
        array_cls = {"flat": FlatCounterArray, "brick": BrickArray, "hbrick": HbrickArray}[cfg.backend]
        sk.arrays = [array_cls.from_state(s) for s in payload["arrays"]]
        sk.heavy = {FlowKey.from_strings(*k.split(",")): o for k, o in payload["heavy"]}
        sk.packets = payload["packets"]
        sk.total_bytes = payload["total_bytes"]
        return sk

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> CountMinSketch:
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
