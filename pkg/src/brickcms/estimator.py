"""scikit-learn style front end for the sketch.

``CountMinEstimator`` learns per-flow byte totals from a stream of flow keys
(``X``) weighted by packet sizes (``sample_weight``) and predicts the
count-min estimate for new keys. It follows the usual estimator contract
(constructor stores params only, ``fit`` returns ``self``, fitted state ends
in ``_``) so it works with ``clone``, ``get_params`` and pipelines.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .flowkey import FlowKey
from .sketch import CountMinSketch, SketchConfig
from .traces import PacketRecord


def check_flow_keys(X) -> list[FlowKey]:
    """Coerce ``X`` to a list of :class:`FlowKey`.

    Accepts FlowKey or PacketRecord sequences, or a 2-D array-like with five
    columns (integers, or dotted-quad strings in the address columns).
    """
    if isinstance(X, FlowKey):
        raise TypeError("expected a sequence of flow keys, got a single FlowKey")
    if isinstance(X, np.ndarray) and X.ndim == 2:
        rows: Iterable = X.tolist()
    else:
        rows = X
    keys = []
    for row in rows:
        if isinstance(row, FlowKey):
            keys.append(row)
        elif isinstance(row, PacketRecord):
            keys.append(row.key)
        else:
            row = list(row)
            if len(row) != 5:
                raise ValueError(f"each row needs 5 fields (five-tuple), got {len(row)}")
            keys.append(FlowKey.from_strings(*row))
    return keys


def check_sizes(sample_weight, n: int, X=None) -> list[int]:
    if sample_weight is None:
        if X is not None and n and all(isinstance(p, PacketRecord) for p in X):
            return [p.size for p in X]
        return [1] * n
    sizes = np.asarray(sample_weight)
    if sizes.shape != (n,):
        raise ValueError(f"sample_weight has shape {sizes.shape}, expected ({n},)")
    if sizes.size and (np.any(sizes < 0) or not np.all(np.equal(np.mod(sizes, 1), 0))):
        raise ValueError("sample_weight must hold non-negative integers")
    return [int(s) for s in sizes.tolist()]


class CountMinEstimator(BaseEstimator):
    def __init__(self, depth: int = 4, width: int = 1 << 15, backend: str = "flat",
                 strategy: str = "plain", threshold: float | None = None, seed: int | None = None,
                 backend_options: dict | None = None):
        self.depth = depth
        self.width = width
        self.backend = backend
        self.strategy = strategy
        self.threshold = threshold
        self.seed = seed
        self.backend_options = backend_options

    def _make_config(self) -> SketchConfig:
        cfg = SketchConfig(depth=self.depth, width=self.width, backend=self.backend,
                           strategy=self.strategy,
                           threshold=math.inf if self.threshold is None else self.threshold,
                           backend_options=dict(self.backend_options or {}))
        return cfg if self.seed is None else cfg.with_seed(self.seed)

    def fit(self, X, y=None, sample_weight=None) -> CountMinEstimator:
        for attr in ("sketch_", "n_packets_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(X, y, sample_weight)

    def partial_fit(self, X, y=None, sample_weight=None) -> CountMinEstimator:
        keys = check_flow_keys(X)
        sizes = check_sizes(sample_weight, len(keys), X if not isinstance(X, np.ndarray) else None)
        if not hasattr(self, "sketch_"):
            self.sketch_ = CountMinSketch(self._make_config())
            self.n_packets_ = 0
        sk = self.sketch_
        start = self.n_packets_
        for n, (key, size) in enumerate(zip(keys, sizes)):
            sk.process_packet(PacketRecord(key, size, start + n))
        self.n_packets_ = start + len(keys)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "sketch_")
        keys = check_flow_keys(X)
        return np.array([self.sketch_.estimate(k) for k in keys], dtype=np.int64)

    def heavy_hitters(self) -> dict[FlowKey, int]:
        check_is_fitted(self, "sketch_")
        return dict(self.sketch_.heavy)

    def score(self, X, y: Sequence[int], sample_weight=None) -> float:
        """Negative mean absolute error against true per-key totals ``y``."""
        pred = self.predict(X)
        return -float(np.average(np.abs(pred - np.asarray(y)), weights=sample_weight))
