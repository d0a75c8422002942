import random

import pytest
from hypothesis import given, strategies as st

from brickcms.flowkey import FlowKey, HashFamily
from brickcms.pipesim import (FALSE_CONFLICT, NO_CONFLICT, TRUE_CONFLICT, MergeBuffer,
                              PipelineConfig, PipelineConfigError, _InFlight, apply_hybrid,
                              detect_hazard, final_estimate, merge_stream, merge_window_step,
                              simulate)
from brickcms.sketch import CountMinSketch, SketchConfig
from brickcms.traces import PacketRecord, ZipfSpec, exact_counts, gen_zipf

from conftest import random_key

A = FlowKey(1, 1, 1, 1, 6)
B = FlowKey(2, 2, 2, 2, 6)


@pytest.fixture(scope="module")
def hot_trace():
    return gen_zipf(ZipfSpec(30_000, 3000, 1.25, seed=0))


def test_single_packet_exact():
    for strategy in ("plain+dfu", "conservative-naive", "conservative+merge", "hybrid"):
        m = simulate([PacketRecord(A, 300, 0)], PipelineConfig(strategy=strategy))
        assert m.hazards_true == m.hazards_false == 0
        assert m.underestimated_flows == 0 and m.avg_abs_error == 0
        assert m.cycles == 1 + 14


def test_back_to_back_same_key_naive_loses_first_packet():
    trace = [PacketRecord(A, 100, 0), PacketRecord(A, 40, 1)]
    cfg = PipelineConfig(strategy="conservative-naive")
    assert cfg.hazard_window == 14
    m = simulate(trace, cfg)
    h = HashFamily(cfg.depth, cfg.width, cfg.seeds)
    # the second packet read a stale 0 and its later commit overwrote the first
    assert final_estimate(m.final_counters, h, A) == 40
    assert m.underestimated_flows == 1 and m.max_underestimate == 100
    assert m.hazards_false == 1
    for strategy in ("plain+dfu", "conservative+merge", "hybrid"):
        assert simulate(trace, PipelineConfig(strategy=strategy)).underestimated_flows == 0


def test_spaced_packets_do_not_conflict():
    filler = [PacketRecord(FlowKey(9, 9, 9, n, 17), 64, 0) for n in range(20)]
    trace = [PacketRecord(A, 100, 0)] + filler + [PacketRecord(A, 40, 21)]
    m = simulate(trace, PipelineConfig(strategy="conservative-naive", width=1 << 16))
    assert m.underestimated_flows == 0 and m.hazards_false == 0


def test_merge_buffer_examples():
    buf = MergeBuffer(0)
    assert merge_window_step(buf, PacketRecord(A, 5, 0)) == (False, [PacketRecord(A, 5, 0)])
    out, merges = merge_stream([PacketRecord(A, 10, 0), PacketRecord(A, 7, 1), PacketRecord(B, 3, 2)], 2)
    assert out == [PacketRecord(A, 17, 0), PacketRecord(B, 3, 2)]
    assert merges == 1


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(1, 1500)), max_size=200), st.integers(0, 8))
def test_merge_stream_invariants(items, depth):
    keys = [FlowKey(0, 0, 0, k, 6) for k in range(7)]
    trace = [PacketRecord(keys[k], s, n) for n, (k, s) in enumerate(items)]
    out, merges = merge_stream(trace, depth)
    assert len(out) + merges == len(trace)
    assert exact_counts(out).flows == exact_counts(trace).flows
    for i in range(len(out)):
        for j in range(i + 1, min(len(out), i + depth)):
            assert out[i].key != out[j].key


def test_detect_hazard_classes(rng):
    h = HashFamily(4, 1 << 4)
    assert detect_hazard([], A, h.indices(A), 5, 14) == NO_CONFLICT
    same = [_InFlight(3, A, h.indices(A), [0] * 4)]
    assert detect_hazard(same, A, h.indices(A), 5, 14) == FALSE_CONFLICT
    assert detect_hazard(same, A, h.indices(A), 17, 14) == NO_CONFLICT
    # search for a key sharing exactly one cell with A
    ia = h.indices(A)
    while True:
        other = random_key(rng)
        io = h.indices(other)
        if sum(x == y for x, y in zip(ia, io)) == 1:
            break
    inflight = [_InFlight(4, other, io, [0] * 4)] + same
    assert detect_hazard(inflight, A, ia, 5, 14) == TRUE_CONFLICT


def test_apply_hybrid():
    assert apply_hybrid(NO_CONFLICT) == "conservative"
    assert apply_hybrid(FALSE_CONFLICT) == "conservative"
    assert apply_hybrid(TRUE_CONFLICT) == "plain"


def test_dfu_pipeline_matches_library_sketch(hot_trace):
    cfg = PipelineConfig(strategy="plain+dfu", width=1 << 10)
    m = simulate(hot_trace, cfg)
    sk = CountMinSketch(SketchConfig(depth=4, width=1 << 10, seeds=tuple(
        HashFamily(4, 1 << 10, cfg.seeds).seeds))).process(hot_trace)
    assert m.final_counters == [arr.cells for arr in sk.arrays]
    assert m.underestimated_flows == 0


def test_without_forwarding_reach_plain_breaks(hot_trace):
    m = simulate(hot_trace, PipelineConfig(strategy="plain+dfu", dfu_depth=0))
    assert m.underestimated_flows > 0


def test_strategies_on_conflict_heavy_trace(hot_trace):
    rows = {s: simulate(hot_trace, PipelineConfig(strategy=s))
            for s in ("plain+dfu", "conservative-naive", "conservative+merge", "hybrid")}
    assert rows["plain+dfu"].underestimated_flows == 0
    assert rows["conservative-naive"].underestimated_flows > 0
    hyb = rows["hybrid"]
    assert hyb.underestimated_flows == 0 and hyb.hybrid_fallbacks > 0
    assert hyb.hybrid_fallbacks == hyb.update_block_true_conflicts
    assert hyb.merges > 0 and rows["conservative+merge"].merges == hyb.merges
    # conservative stays tighter than plain where it is correct
    assert hyb.avg_abs_error < rows["plain+dfu"].avg_abs_error
    for m in rows.values():
        assert m.items_in == len(hot_trace)
        assert m.throughput == m.items_issued / m.cycles


def test_determinism(hot_trace):
    cfg = PipelineConfig(strategy="hybrid", seeds=(1, 2, 3, 4))
    assert simulate(hot_trace, cfg).to_dict() == simulate(hot_trace, cfg).to_dict()


def test_config_validation():
    with pytest.raises(PipelineConfigError):
        PipelineConfig(read_latency=0)
    with pytest.raises(PipelineConfigError):
        PipelineConfig(strategy="nope")
    with pytest.raises(PipelineConfigError):
        PipelineConfig(strategy="hybrid", merge_depth=3)
    with pytest.raises(PipelineConfigError):
        simulate([], PipelineConfig())
    cfg = PipelineConfig(hbrick_latency=3)
    assert cfg.hazard_window == 17 and cfg.effective_dfu_depth == 17
    assert cfg.to_dict()["hazard_window"] == 17
