"""Count-min sketches over variable-width, rank-indexed counter arrays."""

__version__ = "0.1.0"

from .assocmem import AssociativeStore
from .brick import BrickArray, BrickConfig, SpareExhaustedError
from .counterstore import CounterArray, FlatCounterArray
from .estimator import CountMinEstimator
from .flowkey import FlowKey, HashFamily
from .hbrick import HbrickArray, HbrickConfig, profile_config
from .memmodel import bram_count, report as memory_report
from .pipesim import PipelineConfig, simulate
from .sketch import CountMinSketch, Estimate, SketchConfig, error_bound
from .traces import PacketRecord, ZipfSpec, exact_counts, gen_zipf, load_csv, write_csv

__all__ = [
    "AssociativeStore", "BrickArray", "BrickConfig", "SpareExhaustedError", "CounterArray",
    "FlatCounterArray", "CountMinEstimator", "FlowKey", "HashFamily", "HbrickArray",
    "HbrickConfig", "profile_config", "bram_count", "memory_report", "PipelineConfig", "simulate",
    "CountMinSketch", "Estimate", "SketchConfig", "error_bound", "PacketRecord", "ZipfSpec",
    "exact_counts", "gen_zipf", "load_csv", "write_csv",
]
