"""Cycle-level model of a pipelined count-min update engine and its data hazards.

Timing, with one item issued per cycle at cycle ``t``:

* counters are read at ``t`` (memory as committed by then);
* the update value is ready at ``t + R + C`` (after the ``C``-stage update block);
* the write commits at ``t + R + C + W``; commits are applied in issue order
  before the reads of the same cycle (last write wins).

A data forwarding unit (DFU) may replace a stale read with the value of the
youngest in-flight writer of the same counter, provided that value is ready
when needed. A plain update adds at the end of the update block, so any
predecessor's value can be forwarded. A conservative update needs all D
values when it enters the update block, so predecessors less than ``C``
cycles ahead are unforwardable; ignoring that is what breaks one-sided error.

Strategies:

``plain+dfu``           plain update with full forwarding
``conservative-naive``  conservative update, no forwarding at all
``conservative+merge``  same-key merging upstream, then conservative-naive
``hybrid``              merging + forwarding; an item with a true conflict in
                        the update block falls back to a plain update
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Literal, Sequence

from .flowkey import FlowKey, HashFamily
from .traces import PacketRecord, exact_counts

PipelineStrategy = Literal["plain+dfu", "conservative-naive", "conservative+merge", "hybrid"]
PIPELINE_STRATEGIES = ("plain+dfu", "conservative-naive", "conservative+merge", "hybrid")

NO_CONFLICT = "none"
FALSE_CONFLICT = "false"
TRUE_CONFLICT = "true"


class PipelineConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    read_latency: int = 4
    compute_latency: int = 6
    write_latency: int = 4
    strategy: PipelineStrategy = "plain+dfu"
    dfu_depth: int | None = None
    merge_depth: int | None = None
    depth: int = 4
    width: int = 1 << 10
    seeds: tuple[int, ...] | None = None
    heavy_fraction: float = 0.001
    hbrick_latency: int = 0

    def __post_init__(self) -> None:
        if min(self.read_latency, self.compute_latency, self.write_latency) < 1:
            raise PipelineConfigError("all latencies must be >= 1")
        if self.strategy not in PIPELINE_STRATEGIES:
            raise PipelineConfigError(f"unknown strategy {self.strategy!r}")
        if self.dfu_depth is not None and self.dfu_depth < 0:
            raise PipelineConfigError("dfu_depth must be >= 0")
        if self.merge_depth is not None and self.merge_depth < 0:
            raise PipelineConfigError("merge_depth must be >= 0")
        if self.strategy == "hybrid" and self.effective_merge_depth < self.compute_latency:
            raise PipelineConfigError("hybrid needs merge_depth >= compute_latency")
        if self.hbrick_latency < 0:
            raise PipelineConfigError("hbrick_latency must be >= 0")
        if not 0 <= self.heavy_fraction <= 1:
            raise PipelineConfigError("heavy_fraction must be in [0, 1]")

    @property
    def effective_read_latency(self) -> int:
        return self.read_latency + self.hbrick_latency

    @property
    def hazard_window(self) -> int:
        """Cycles from issue until the item's write is visible to reads."""
        return self.effective_read_latency + self.compute_latency + self.write_latency

    @property
    def effective_dfu_depth(self) -> int:
        return self.hazard_window if self.dfu_depth is None else self.dfu_depth

    @property
    def effective_merge_depth(self) -> int:
        return self.compute_latency if self.merge_depth is None else self.merge_depth

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = None if self.seeds is None else list(self.seeds)
        d["hazard_window"] = self.hazard_window
        return d


@dataclass
class PipelineMetrics:
    strategy: str
    items_in: int = 0
    items_issued: int = 0
    cycles: int = 0
    throughput: float = 0.0
    hazards_false: int = 0
    hazards_true: int = 0
    update_block_true_conflicts: int = 0
    merges: int = 0
    hybrid_fallbacks: int = 0
    flows: int = 0
    underestimated_flows: int = 0
    max_underestimate: int = 0
    heavy_threshold: float = 0.0
    true_heavy: int = 0
    heavy_false_negatives: int = 0
    heavy_false_negative_rate: float = 0.0
    avg_abs_error: float = 0.0
    final_counters: list[list[int]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("final_counters")
        return d


class MergeBuffer:
    """Upstream buffer that folds same-key items together.

    Holds at most ``depth`` items with distinct keys. Any ``depth``
    consecutive items leaving the buffer were resident together, so they
    never share a key.
    """

    def __init__(self, depth: int):
        if depth < 0:
            raise ValueError("depth must be >= 0")
        self.depth = depth
        self.items: deque[PacketRecord] = deque()
        self.merges = 0

    def __len__(self) -> int:
        return len(self.items)

    def step(self, item: PacketRecord) -> tuple[bool, list[PacketRecord]]:
        """Offer ``item``; returns (merged, items emitted downstream)."""
        if self.depth == 0:
            return False, [item]
        for n, held in enumerate(self.items):
            if held.key == item.key:
                self.items[n] = PacketRecord(held.key, held.size + item.size, held.ordinal)
                self.merges += 1
                return True, []
        emitted = []
        if len(self.items) >= self.depth:
            emitted.append(self.items.popleft())
        self.items.append(item)
        return False, emitted

    def flush(self) -> list[PacketRecord]:
        out = list(self.items)
        self.items.clear()
        return out


def merge_window_step(buffer: MergeBuffer, item: PacketRecord) -> tuple[bool, list[PacketRecord]]:
    return buffer.step(item)


def merge_stream(trace: Iterable[PacketRecord], depth: int) -> tuple[list[PacketRecord], int]:
    buf = MergeBuffer(depth)
    out: list[PacketRecord] = []
    for pkt in trace:
        out.extend(buf.step(pkt)[1])
    out.extend(buf.flush())
    return out, buf.merges


@dataclass
class _InFlight:
    issue: int
    key: FlowKey
    cells: tuple[int, ...]
    values: list[int]


def detect_hazard(in_flight: Iterable[_InFlight], key: FlowKey, cells: Sequence[int],
                  now: int, window: int) -> str:
    """Classify ``key`` against in-flight items issued fewer than ``window`` cycles ago.

    A shared counter with a different key is a true conflict (takes
    precedence); an equal key is a false conflict.
    """
    result = NO_CONFLICT
    for it in in_flight:
        if now - it.issue >= window:
            continue
        if it.key == key:
            result = FALSE_CONFLICT
        elif any(a == b for a, b in zip(it.cells, cells)):
            return TRUE_CONFLICT
    return result


def apply_hybrid(conflict: str) -> str:
    """Update kind chosen by the hybrid strategy for a given update-block classification."""
    return "plain" if conflict == TRUE_CONFLICT else "conservative"


def simulate(trace: Sequence[PacketRecord], cfg: PipelineConfig,
             hashes: HashFamily | None = None) -> PipelineMetrics:
    if not trace:
        raise PipelineConfigError("trace must be non-empty")
    hashes = hashes or HashFamily(cfg.depth, cfg.width, cfg.seeds)
    strategy = cfg.strategy
    m = PipelineMetrics(strategy=strategy, items_in=len(trace))

    items: Sequence[PacketRecord] = trace
    if strategy in ("conservative+merge", "hybrid") and cfg.effective_merge_depth > 0:
        items, m.merges = merge_stream(trace, cfg.effective_merge_depth)

    D = cfg.depth
    H = cfg.hazard_window
    C = cfg.compute_latency
    dfu = cfg.effective_dfu_depth
    mem = [[0] * cfg.width for _ in range(D)]
    inflight: deque[_InFlight] = deque()
    # per (row, index): in-flight writers, oldest first
    writers: list[dict[int, deque[_InFlight]]] = [{} for _ in range(D)]
    forwarding = strategy in ("plain+dfu", "hybrid")

    def commit(it: _InFlight) -> None:
        for d in range(D):
            c = it.cells[d]
            mem[d][c] = it.values[d]
            q = writers[d][c]
            q.popleft()
            if not q:
                del writers[d][c]

    for t, pkt in enumerate(items):
        while inflight and inflight[0].issue + H <= t:
            commit(inflight.popleft())
        cells = hashes.indices(pkt.key)
        size = pkt.size

        # hazard classification over the whole issue-to-commit window
        cls = NO_CONFLICT
        block_true = False
        for d in range(D):
            q = writers[d].get(cells[d])
            if not q:
                continue
            for it in q:
                if it.key == pkt.key:
                    if cls == NO_CONFLICT:
                        cls = FALSE_CONFLICT
                else:
                    cls = TRUE_CONFLICT
                    if t - it.issue < C:
                        block_true = True
        if cls == TRUE_CONFLICT:
            m.hazards_true += 1
        elif cls == FALSE_CONFLICT:
            m.hazards_false += 1
        if block_true:
            m.update_block_true_conflicts += 1

        if strategy == "hybrid":
            kind = apply_hybrid(TRUE_CONFLICT if block_true else NO_CONFLICT)
            if kind == "plain":
                m.hybrid_fallbacks += 1
        elif strategy == "plain+dfu":
            kind = "plain"
        else:
            kind = "conservative"

        vals = []
        for d in range(D):
            c = cells[d]
            v = mem[d][c]
            if forwarding:
                q = writers[d].get(c)
                if q:
                    # youngest in-flight writer in DFU reach whose value is ready in time
                    need_gap = 1 if kind == "plain" else C
                    for it in reversed(q):
                        gap = t - it.issue
                        if gap <= dfu and gap >= need_gap:
                            v = it.values[d]
                            break
            vals.append(v)

        if kind == "plain":
            new = [v + size for v in vals]
        else:
            target = min(vals) + size
            new = [v if v > target else target for v in vals]

        it = _InFlight(t, pkt.key, cells, new)
        inflight.append(it)
        for d in range(D):
            writers[d].setdefault(cells[d], deque()).append(it)

    while inflight:
        commit(inflight.popleft())

    m.items_issued = len(items)
    m.cycles = len(items) + H
    m.throughput = m.items_issued / m.cycles
    m.final_counters = mem
    _score(trace, hashes, mem, cfg, m)
    return m


def final_estimate(mem: list[list[int]], hashes: HashFamily, key: FlowKey) -> int:
    return min(row[c] for row, c in zip(mem, hashes.indices(key)))


def _score(trace: Sequence[PacketRecord], hashes: HashFamily, mem: list[list[int]],
           cfg: PipelineConfig, m: PipelineMetrics) -> None:
    oracle = exact_counts(trace)
    phi = cfg.heavy_fraction * oracle.total_bytes
    m.flows = oracle.flow_count
    m.heavy_threshold = phi
    err = 0
    for key, true in oracle.flows.items():
        est = final_estimate(mem, hashes, key)
        err += abs(est - true)
        if est < true:
            m.underestimated_flows += 1
            m.max_underestimate = max(m.max_underestimate, true - est)
        if true > phi:
            m.true_heavy += 1
            if est <= phi:
                m.heavy_false_negatives += 1
    m.avg_abs_error = err / oracle.flow_count
    m.heavy_false_negative_rate = m.heavy_false_negatives / m.true_heavy if m.true_heavy else 0.0
