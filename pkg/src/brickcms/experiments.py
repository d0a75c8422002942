"""Experiment runners behind the CLI: accuracy sweeps, memory accounting, pipeline hazards.

Configuration is a nested dict (loaded from TOML) addressed by flat dotted
keys such as ``trace.n_packets``; :data:`DEFAULTS` lists every key.
"""

from __future__ import annotations

import copy
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__
from .brick import SpareExhaustedError
from .hbrick import HbrickConfig
from .memmodel import DEFAULT_ASPECTS, hbrick_report, report as memory_report, validate_aspects
from .pipesim import PIPELINE_STRATEGIES, PipelineConfig, simulate
from .sketch import CountMinSketch, SketchConfig, error_bound
from .traces import (PacketRecord, ZipfSpec, caida_profile, exact_counts, gen_zipf, load_csv,
                     min_bitwidth_histogram, write_csv)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "trace": {
        "source": "zipf",          # zipf | caida | file
        "path": "",
        "n_packets": 100_000,
        "n_flows": 10_000,
        "skew": 1.0,
        "skews": [0.0, 0.5, 1.0],
        "min_size": 64,
        "max_size": 1500,
    },
    "sketch": {
        "depth": 4,
        "width": 1 << 15,
        "strategy": "plain",
        "heavy_fraction": 0.001,
    },
    "accuracy": {
        "backends": ["flat", "brick", "hbrick"],
        "flat_width_bits": 14,
        "matched_memory": True,
    },
    "hbrick": {
        "widths": [14, 8, 7],
        "slots": [64, 8, 4],
        "assoc_capacity": 128,
        "reclaim": True,
    },
    "brick": {
        "widths": [14, 8, 7],
        "slots": [64, 8, 4],
        "spares": 100,
    },
    "memory": {
        "levels": [2, 3, 4, 5],
        "flat_width_bits": 32,
        "brick_spares": 100,
        "assoc_capacity": 128,
        "aspects": [list(a) for a in DEFAULT_ASPECTS],
    },
    "pipeline": {
        "read_latency": 4,
        "compute_latency": 6,
        "write_latency": 4,
        "dfu_depth": -1,           # -1: full hazard window
        "merge_depth": -1,         # -1: compute_latency
        "width": 1 << 10,
        "skew": 1.25,
        "hbrick_latency": 0,
        "strategies": list(PIPELINE_STRATEGIES),
    },
}


class ConfigError(ValueError):
    pass


def flatten(d: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def set_path(cfg: dict, path: str, value: Any) -> None:
    node = cfg
    parts = path.split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key {path!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {path!r}")
    node[parts[-1]] = value


def parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path: str | None = None, overrides: dict[str, Any] | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for key, value in flatten(user).items():
            set_path(cfg, key, value)
    for key, value in (overrides or {}).items():
        set_path(cfg, key, value)
    return cfg


# -- reports ----------------------------------------------------------------


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def versions(self) -> dict:
        return {"brickcms": __version__, "python": platform.python_version(), "numpy": np.__version__}

    def records(self) -> list[dict]:
        """Machine-readable body: config echo then one record per row (deterministic)."""
        out = [{"record": "config", "experiment": self.kind, "config": self.config}]
        out += [{"record": self.kind, **row} for row in self.rows]
        return out

    def meta(self) -> dict:
        return {"record": "meta", "wall_clock_s": round(self.wall_clock_s, 3), "versions": self.versions}


def _trace_from(cfg: dict, skew: float | None = None, seed: int | None = None) -> tuple[list[PacketRecord], dict]:
    t = cfg["trace"]
    seed = cfg["seed"] if seed is None else seed
    src = t["source"]
    if src == "file":
        if not t["path"]:
            raise ConfigError("trace.source = 'file' requires trace.path")
        return list(load_csv(t["path"])), {"source": "file", "path": t["path"]}
    if src == "caida":
        spec = caida_profile(t["n_packets"], seed)
    elif src == "zipf":
        spec = ZipfSpec(t["n_packets"], t["n_flows"], t["skew"] if skew is None else skew, seed,
                        t["min_size"], t["max_size"])
    else:
        raise ConfigError(f"unknown trace.source {src!r} (expected zipf, caida or file)")
    return gen_zipf(spec), {"source": src, "synthetic": True, **spec.to_dict()}


def _backend_options(cfg: dict, backend: str) -> dict:
    if backend == "flat":
        return {}
    opts = dict(cfg[backend])
    opts["widths"] = tuple(opts["widths"])
    opts["slots"] = tuple(opts["slots"])
    return opts


def matched_flat_width(budget_bits: int, width_bits: int) -> int:
    """Smallest power-of-two W whose ``W * width_bits`` is at least ``budget_bits``."""
    need = max(1, math.ceil(budget_bits / width_bits))
    return 1 << (need - 1).bit_length()


def accuracy_row(trace: list[PacketRecord], sk_cfg: SketchConfig, heavy_fraction: float) -> dict:
    oracle = exact_counts(trace)
    phi = heavy_fraction * oracle.total_bytes
    sk = CountMinSketch(sk_cfg)
    row: dict[str, Any] = {"backend": sk_cfg.backend, "width": sk_cfg.width,
                           "strategy": sk_cfg.strategy, "flows": oracle.flow_count,
                           "total_bytes": oracle.total_bytes}
    try:
        sk.process(trace)
    except SpareExhaustedError as exc:
        row["error"] = f"SpareExhaustedError: {exc}"
        return row
    eps, delta = error_bound(sk_cfg)
    slack = eps * oracle.total_bytes
    abs_err = 0
    under = over_bound = 0
    max_over = 0
    estimates = {}
    for key, true in oracle.flows.items():
        est = sk.estimate(key)
        estimates[key] = est
        diff = est - true
        abs_err += abs(diff)
        if diff < 0:
            under += 1
        elif diff > slack:
            over_bound += 1
        max_over = max(max_over, diff)
    true_heavy = {k for k, v in oracle.flows.items() if v > phi}
    flagged = {k for k, est in estimates.items() if est > phi}
    tp = len(true_heavy & flagged)
    stats = sk.backend_stats()
    row.update({
        "avg_abs_error": abs_err / oracle.flow_count if oracle.flow_count else 0.0,
        "max_overestimate": max_over,
        "underestimated_flows": under,
        "epsilon": eps, "delta": delta,
        "over_bound_fraction": over_bound / oracle.flow_count if oracle.flow_count else 0.0,
        "heavy_threshold": phi,
        "heavy_true": len(true_heavy), "heavy_tp": tp,
        "heavy_fp": len(flagged - true_heavy), "heavy_fn": len(true_heavy - flagged),
        "heavy_precision": tp / len(flagged) if flagged else 1.0,
        "heavy_recall": tp / len(true_heavy) if true_heavy else 1.0,
        "saturation_events": sum(s.get("saturation_events", 0) for s in stats),
    })
    if sk_cfg.backend == "hbrick":
        row["evictions"] = sum(s["evictions"] for s in stats)
        row["assoc_violations"] = sum(s["assoc_violations"] for s in stats)
        row["reclaim"] = stats[0]["reclaim"]
    elif sk_cfg.backend == "brick":
        row["migrations"] = sum(s["migrations"] for s in stats)
    if sk_cfg.backend == "flat":
        row["counter_bits"] = sk_cfg.backend_options.get("width_bits", 64)
    return row


def run_accuracy(cfg: dict) -> ExperimentReport:
    t0 = time.perf_counter()
    s = cfg["sketch"]
    acc = cfg["accuracy"]
    for b in acc["backends"]:
        if b not in ("flat", "brick", "hbrick"):
            raise ConfigError(f"unknown backend {b!r} in accuracy.backends")
    hb_cfg = HbrickConfig.for_size(s["width"], **_backend_options(cfg, "hbrick"))
    budget = hbrick_report(1, hb_cfg).total_bits
    skews = cfg["trace"]["skews"] if cfg["trace"]["source"] == "zipf" else [None]
    rows = []
    for skew in skews:
        trace, trace_info = _trace_from(cfg, skew)
        for backend in acc["backends"]:
            width = s["width"]
            opts = _backend_options(cfg, backend)
            if backend == "flat":
                opts = {"width_bits": acc["flat_width_bits"]}
                if acc["matched_memory"]:
                    width = matched_flat_width(budget, acc["flat_width_bits"])
            sk_cfg = SketchConfig(depth=s["depth"], width=width, backend=backend,
                                  strategy=s["strategy"], backend_options=opts).with_seed(cfg["seed"])
            row = {"skew": skew, "trace": trace_info, "budget_bits_per_array": budget}
            row.update(accuracy_row(trace, sk_cfg, s["heavy_fraction"]))
            rows.append(row)
    return ExperimentReport("accuracy", cfg, rows, time.perf_counter() - t0)


def run_memory(cfg: dict) -> ExperimentReport:
    t0 = time.perf_counter()
    m = cfg["memory"]
    try:
        aspects = validate_aspects(m["aspects"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for L in m["levels"]:
        if L not in (1, 2, 3, 4, 5):
            raise ConfigError(f"no HBRICK profile for {L} levels (have 1-5)")
    reports = memory_report(cfg["sketch"]["depth"], cfg["sketch"]["width"], m["flat_width_bits"],
                            m["levels"], m["brick_spares"], m["assoc_capacity"], aspects)
    rows = [r.to_dict() for r in reports]
    flat = reports[0]
    for r, row in zip(reports, rows):
        row["reduction_vs_flat"] = 1.0 - r.total_brams / flat.total_brams
    return ExperimentReport("memory", cfg, rows, time.perf_counter() - t0)


def pipeline_config(cfg: dict, strategy: str) -> PipelineConfig:
    p = cfg["pipeline"]
    sk = SketchConfig(depth=cfg["sketch"]["depth"], width=p["width"]).with_seed(cfg["seed"])
    return PipelineConfig(
        read_latency=p["read_latency"], compute_latency=p["compute_latency"],
        write_latency=p["write_latency"], strategy=strategy,
        dfu_depth=None if p["dfu_depth"] < 0 else p["dfu_depth"],
        merge_depth=None if p["merge_depth"] < 0 else p["merge_depth"],
        depth=sk.depth, width=sk.width, seeds=sk.seeds,
        heavy_fraction=cfg["sketch"]["heavy_fraction"], hbrick_latency=p["hbrick_latency"])


def run_pipeline(cfg: dict) -> ExperimentReport:
    t0 = time.perf_counter()
    p = cfg["pipeline"]
    trace, trace_info = _trace_from(cfg, p["skew"])
    if not trace:
        raise ConfigError("pipeline simulation needs a non-empty trace")
    rows = []
    for strategy in p["strategies"]:
        if strategy not in PIPELINE_STRATEGIES:
            raise ConfigError(f"unknown pipeline strategy {strategy!r}")
        pc = pipeline_config(cfg, strategy)
        metrics = simulate(trace, pc)
        rows.append({"trace": trace_info, "hazard_window": pc.hazard_window, **metrics.to_dict()})
    return ExperimentReport("pipeline", cfg, rows, time.perf_counter() - t0)


def run_histogram(cfg: dict) -> ExperimentReport:
    t0 = time.perf_counter()
    trace, trace_info = _trace_from(cfg)
    hist = min_bitwidth_histogram(exact_counts(trace))
    rows = [{"trace": trace_info, "bits": b, "flows": n} for b, n in hist.items()]
    return ExperimentReport("histogram", cfg, rows, time.perf_counter() - t0)


def gen_trace(spec: ZipfSpec, path: str) -> int:
    return write_csv(gen_zipf(spec), path)


def build_sketch(cfg: dict, backend: str) -> CountMinSketch:
    s = cfg["sketch"]
    trace, _ = _trace_from(cfg)
    opts = _backend_options(cfg, backend)
    if backend == "flat":
        opts = {"width_bits": 64}
    total = sum(p.size for p in trace)
    sk_cfg = SketchConfig(depth=s["depth"], width=s["width"], backend=backend, strategy=s["strategy"],
                          threshold=s["heavy_fraction"] * total,
                          backend_options=opts).with_seed(cfg["seed"])
    return CountMinSketch(sk_cfg).process(trace)
