from collections import Counter

import pytest

from brickcms.flowkey import FlowKey
from brickcms.sketch import CountMinSketch, SketchConfig
from brickcms.traces import (CSV_HEADER, PacketRecord, TraceParseError, ZipfSpec, avg_abs_error,
                             caida_profile, exact_counts, gen_zipf, load_csv,
                             min_bitwidth_histogram, write_csv)


def test_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    assert list(load_csv(p)) == []
    assert write_csv([], p) == 0
    assert p.read_text() == CSV_HEADER + "\n"
    assert list(load_csv(p)) == []


def test_one_line(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("10.0.0.1,10.0.0.2,80,443,6,1500\n")
    (pkt,) = load_csv(p)
    assert pkt == PacketRecord(FlowKey.from_strings("10.0.0.1", "10.0.0.2", 80, 443, 6), 1500, 0)


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(CSV_HEADER + "\n10.0.0.1,10.0.0.2,80,443,6,100\n\n10.0.0.1,10.0.0.2,80,6,100\n")
    with pytest.raises(TraceParseError) as err:
        list(load_csv(p))
    assert err.value.line_no == 4
    p.write_text("10.0.0.1,10.0.0.300,80,443,6,100\n")
    with pytest.raises(TraceParseError):
        list(load_csv(p))


def test_round_trip_10k(tmp_path):
    tr = gen_zipf(ZipfSpec(10_000, 500, 1.0, seed=4))
    p = tmp_path / "t.csv"
    assert write_csv(tr, p) == 10_000
    assert list(load_csv(p)) == tr
    assert exact_counts(load_csv(p)) == exact_counts(tr)


def test_same_seed_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(gen_zipf(ZipfSpec(5000, 300, 1.2, seed=8)), a)
    write_csv(gen_zipf(ZipfSpec(5000, 300, 1.2, seed=8)), b)
    assert a.read_bytes() == b.read_bytes()
    assert gen_zipf(ZipfSpec(500, 30, seed=9)) != gen_zipf(ZipfSpec(500, 30, seed=10))


def test_uniform_limit():
    n = 200_000
    tr = gen_zipf(ZipfSpec(n, 4, 0.0, seed=1))
    counts = Counter(p.key for p in tr)
    assert len(counts) == 4
    assert all(abs(c - n / 4) <= 0.05 * n / 4 for c in counts.values())
    assert all(64 <= p.size <= 1500 for p in tr)


def test_heavier_head_with_skew():
    def top_share(s):
        counts = Counter(p.key for p in gen_zipf(ZipfSpec(50_000, 1000, s, seed=2)))
        return counts.most_common(1)[0][1] / 50_000
    assert top_share(1.5) > top_share(0.0)


def test_spec_validation():
    for bad in (dict(n_packets=-1), dict(n_packets=1, n_flows=0), dict(n_packets=1, s=-0.5),
                dict(n_packets=1, min_size=10, max_size=5)):
        with pytest.raises(ValueError):
            ZipfSpec(**bad)


def test_exact_counts_examples():
    assert exact_counts([]).flows == {}
    k = FlowKey(1, 2, 3, 4, 5)
    oc = exact_counts([PacketRecord(k, s, n) for n, s in enumerate((1, 2, 3))])
    assert oc.flows == {k: 6} and oc.total_bytes == 6
    tr = gen_zipf(ZipfSpec(3000, 100, seed=5))
    assert sum(exact_counts(tr).flows.values()) == sum(p.size for p in tr)


def test_avg_abs_error_examples():
    tr = gen_zipf(ZipfSpec(2000, 20, seed=6))
    oc = exact_counts(tr)
    sk = CountMinSketch(SketchConfig(width=1 << 16)).process(tr)
    assert avg_abs_error(oc, sk) == 0
    a, b = FlowKey(1, 1, 1, 1, 1), FlowKey(2, 2, 2, 2, 2)
    pair = [PacketRecord(a, 100, 0), PacketRecord(b, 50, 1)]
    sk = CountMinSketch(SketchConfig(depth=2, width=1)).process(pair)
    assert avg_abs_error(exact_counts(pair), sk) == (50 + 100) / 2
    assert avg_abs_error(exact_counts([]), sk) == 0.0


def test_bitwidth_histogram():
    k = FlowKey(1, 2, 3, 4, 5)
    assert min_bitwidth_histogram(exact_counts([PacketRecord(k, 1, 0)])) == {1: 1}
    assert min_bitwidth_histogram(exact_counts([PacketRecord(k, 2**28, 0)])) == {29: 1}


def test_caida_profile_shape():
    spec = caida_profile(300_000, seed=0)
    assert spec.n_flows == 58_800 and spec.s == 1.0
    hist = min_bitwidth_histogram(exact_counts(gen_zipf(spec)))
    mode = max(hist, key=hist.get)
    assert mode <= 14 and max(hist) <= 29
