import io
import json

import pytest

from brickcms import experiments as ex
from brickcms.cli import main
from brickcms.traces import ZipfSpec, exact_counts, gen_zipf, load_csv

SMALL = ["--set", "trace.n_packets=3000", "--set", "trace.n_flows=200"]


def run(argv, capsys=None):
    out = io.StringIO()
    code = main(argv, stdout=out)
    return code, out.getvalue()


def body(text):
    return [ln for ln in text.splitlines() if json.loads(ln)["record"] != "meta"]


@pytest.mark.parametrize("cmd, extra", [
    ("run-accuracy", ["--set", "sketch.width=1024", "--set", "trace.skews=[0.0, 1.0]"]),
    ("run-memory", []),
    ("run-pipeline", ["--set", "pipeline.width=256"]),
    ("histogram", []),
])
def test_records_are_deterministic(cmd, extra):
    argv = [cmd, "--format", "records", "--seed", "7"] + SMALL + extra
    code1, a = run(argv)
    code2, b = run(argv)
    assert code1 == code2 == 0
    assert body(a) == body(b)
    recs = [json.loads(ln) for ln in a.splitlines()]
    assert recs[0]["record"] == "config" and recs[0]["config"]["seed"] == 7
    assert recs[-1]["record"] == "meta" and "wall_clock_s" in recs[-1]
    code3, c = run(argv + ["--no-meta"])
    assert c.splitlines() == body(a)


def test_accuracy_rows_per_skew_and_backend():
    cfg = ex.load_config(overrides={"trace.n_packets": 3000, "trace.n_flows": 200,
                                    "sketch.width": 1024})
    rep = ex.run_accuracy(cfg)
    assert [(r["skew"], r["backend"]) for r in rep.rows] == [
        (s, b) for s in (0.0, 0.5, 1.0) for b in ("flat", "brick", "hbrick")]
    assert all("heavy_precision" in r and "avg_abs_error" in r for r in rep.rows)
    flat = rep.rows[0]
    assert flat["width"] * 14 >= flat["budget_bits_per_array"]


def test_accuracy_tiny_trace_is_exact():
    cfg = ex.load_config(overrides={"trace.n_packets": 3, "trace.n_flows": 3, "trace.skews": [1.0]})
    rep = ex.run_accuracy(cfg)
    assert all(r["avg_abs_error"] == 0 for r in rep.rows)


def test_memory_report_contents():
    rep = ex.run_memory(ex.load_config())
    names = [r["name"] for r in rep.rows]
    assert names == ["flat-32", "brick-L3", "hbrick-L2", "hbrick-L3", "hbrick-L4", "hbrick-L5"]
    assert all("bram_ratio" in r and "reduction_vs_flat" in r for r in rep.rows)


def test_pipeline_report_rows():
    cfg = ex.load_config(overrides={"trace.n_packets": 20_000, "trace.n_flows": 2000})
    rows = {r["strategy"]: r for r in ex.run_pipeline(cfg).rows}
    assert rows["plain+dfu"]["underestimated_flows"] == 0
    assert rows["conservative-naive"]["underestimated_flows"] > 0
    assert rows["hybrid"]["underestimated_flows"] == 0 and rows["hybrid"]["hybrid_fallbacks"] > 0


def test_invalid_aspects_rejected(capsys):
    code, out = run(["run-memory", "--set", "memory.aspects=[[512, 100]]"])
    assert code == 1 and out == ""
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: ConfigError:")


@pytest.mark.parametrize("argv, cls", [
    (["run-memory", "--set", "nope.key=1"], "ConfigError"),
    (["run-memory", "--config", "/nonexistent.toml"], "FileNotFoundError"),
    (["run-pipeline", "--set", "pipeline.strategies=['bad']"], "ConfigError"),
    (["run-accuracy", "--set", "trace.source='file'"], "ConfigError"),
    (["gen-trace"], "ConfigError"),
])
def test_errors_are_one_line(capsys, argv, cls):
    code, _ = run(argv)
    err = capsys.readouterr().err.strip().splitlines()
    assert code != 0 and len(err) == 1 and err[0].startswith(f"error: {cls}:")


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('seed = 3\n[trace]\nn_packets = 500\n"skews" = [1.0]\n')
    cfg = ex.load_config(str(p), {"trace.n_flows": 20})
    assert cfg["seed"] == 3 and cfg["trace"]["n_packets"] == 500 and cfg["trace"]["n_flows"] == 20
    p.write_text("not = [valid")
    with pytest.raises(ex.ConfigError):
        ex.load_config(str(p))
    assert ex.parse_value("12") == 12 and ex.parse_value("abc") == "abc"


def test_gen_trace_and_query_flow(tmp_path, capsys):
    trace_path = tmp_path / "t.csv"
    argv = ["gen-trace", "--out", str(trace_path), "--seed", "4"] + SMALL
    assert run(argv)[0] == 0
    first = trace_path.read_bytes()
    assert run(argv)[0] == 0 and trace_path.read_bytes() == first
    expected = exact_counts(gen_zipf(ZipfSpec(3000, 200, 1.0, seed=4)))
    assert exact_counts(load_csv(trace_path)) == expected

    snap = tmp_path / "s.bin"
    code, _ = run(["build", "--out", str(snap), "--backend", "hbrick", "--set", "trace.source='file'",
                   "--set", f"trace.path='{trace_path}'", "--set", "sketch.width=4096"])
    assert code == 0
    key, true = max(expected.flows.items(), key=lambda kv: kv[1])
    code, out = run(["query", str(snap), str(key), "--format", "records", "--no-meta"])
    assert code == 0
    rec = json.loads(out.splitlines()[1])
    assert rec["key"] == str(key) and rec["estimate"] >= true and rec["heavy"]
    code, out = run(["query", str(snap), str(key)])
    assert code == 0 and str(key) in out


def test_gen_trace_empty(tmp_path):
    p = tmp_path / "empty.csv"
    assert run(["gen-trace", "--out", str(p), "--set", "trace.n_packets=0"])[0] == 0
    assert list(load_csv(p)) == []


def test_matched_flat_width():
    assert ex.matched_flat_width(616_064, 14) == 1 << 16
    assert ex.matched_flat_width(14, 14) == 1
    assert ex.matched_flat_width(15, 14) == 2
