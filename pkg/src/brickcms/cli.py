"""Command-line entry point: ``brickcms <subcommand> [options]``.

Every experiment subcommand starts from the built-in defaults, applies the
TOML file given by ``--config``, then ``--set key=value`` overrides, then the
dedicated flags (``--seed``). Failures print one line ``error: <Class>: msg``
to stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Any, Sequence, TextIO

from . import experiments as ex
from .flowkey import FlowKey
from .sketch import CountMinSketch
from .traces import ZipfSpec


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _cell(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (dict, list)):
        return "-"
    return "" if v is None else str(v)


def format_table(report: ex.ExperimentReport) -> str:
    cols: list[str] = []
    for row in report.rows:
        for k, v in row.items():
            if k not in cols and not isinstance(v, (dict, list)):
                cols.append(k)
    lines = [f"# {report.kind} (seed {report.config.get('seed')}, {report.wall_clock_s:.2f}s)"]
    table = [cols] + [[_cell(row.get(c)) for c in cols] for row in report.rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(cols))]
    for n, r in enumerate(table):
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_records(report: ex.ExperimentReport, meta: bool = True) -> str:
    lines = [_dump(r) for r in report.records()]
    if meta:
        lines.append(_dump(report.meta()))
    return "\n".join(lines) + "\n"


def _parse_set(items: Sequence[str]) -> dict[str, Any]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ex.ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        out[key.strip()] = ex.parse_value(value.strip())
    return out


def _config(args) -> dict:
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    return ex.load_config(args.config, overrides)


def _emit(text: str, out: str | None, stdout: TextIO) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def _emit_report(report: ex.ExperimentReport, args, stdout: TextIO) -> None:
    if args.format == "records":
        text = format_records(report, meta=not args.no_meta)
    else:
        text = format_table(report)
    _emit(text, args.out, stdout)


def cmd_experiment(args, stdout: TextIO) -> None:
    runner = {"run-accuracy": ex.run_accuracy, "run-memory": ex.run_memory,
              "run-pipeline": ex.run_pipeline, "histogram": ex.run_histogram}[args.command]
    _emit_report(runner(_config(args)), args, stdout)


def cmd_gen_trace(args, stdout: TextIO) -> None:
    if not args.out:
        raise ex.ConfigError("gen-trace needs --out PATH")
    cfg = _config(args)
    t = cfg["trace"]
    if t["source"] == "caida":
        spec = ex.caida_profile(t["n_packets"], cfg["seed"])
    else:
        spec = ZipfSpec(t["n_packets"], t["n_flows"], t["skew"], cfg["seed"], t["min_size"], t["max_size"])
    n = ex.gen_trace(spec, args.out)
    print(f"wrote {n} packets to {args.out}", file=sys.stderr)


def cmd_build(args, stdout: TextIO) -> None:
    if not args.out:
        raise ex.ConfigError("build needs --out PATH for the snapshot")
    sk = ex.build_sketch(_config(args), args.backend)
    sk.save(args.out)
    print(f"saved {args.backend} sketch over {sk.packets} packets to {args.out}", file=sys.stderr)


def cmd_query(args, stdout: TextIO) -> None:
    sk = CountMinSketch.load(args.snapshot)
    keys = list(args.keys)
    if args.keys_file:
        with open(args.keys_file, encoding="utf-8") as fh:
            keys += [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    rows = []
    for text in keys:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 5:
            raise ValueError(f"flow key {text!r} needs 5 comma-separated fields")
        key = FlowKey.from_strings(*parts)
        est = sk.query(key)
        rows.append({"key": str(key), "estimate": est.value, "saturated": est.saturated,
                     "heavy": key in sk.heavy, "first_heavy_packet": sk.heavy.get(key)})
    report = ex.ExperimentReport("query", {"snapshot": args.snapshot,
                                           "sketch": sk.config.to_dict()}, rows)
    _emit_report(report, args, stdout)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brickcms", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, report: bool = True) -> None:
        p.add_argument("--config", metavar="PATH", help="TOML config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. trace.n_packets=1000")
        if report:
            p.add_argument("--format", choices=("table", "records"), default="table")
            p.add_argument("--no-meta", action="store_true",
                           help="omit the wall-clock/versions record")

    for name, help_ in (("run-accuracy", "error of each backend at a matched memory budget"),
                        ("run-memory", "block-RAM accounting for flat, BRICK and HBRICK"),
                        ("run-pipeline", "pipeline hazard simulation for all strategies"),
                        ("histogram", "flows by minimum counter bit width")):
        common(sub.add_parser(name, help=help_))
    common(sub.add_parser("gen-trace", help="write a synthetic trace as CSV"), report=False)
    p = sub.add_parser("build", help="stream a trace into a sketch and save a snapshot")
    common(p, report=False)
    p.add_argument("--backend", choices=("flat", "brick", "hbrick"), default="hbrick")
    p = sub.add_parser("query", help="answer point queries from a saved snapshot")
    common(p)
    p.add_argument("snapshot", help="snapshot written by 'build'")
    p.add_argument("keys", nargs="*", help="flow keys as src_ip,dst_ip,src_port,dst_port,proto")
    p.add_argument("--keys-file", metavar="PATH", help="one flow key per line")
    return parser


COMMANDS = {"run-accuracy": cmd_experiment, "run-memory": cmd_experiment,
            "run-pipeline": cmd_experiment, "histogram": cmd_experiment,
            "gen-trace": cmd_gen_trace, "build": cmd_build, "query": cmd_query}


def main(argv: Sequence[str] | None = None, stdout: TextIO | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args, stdout or sys.stdout)
    except Exception as exc:  # one machine-parsable line, no traceback
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
