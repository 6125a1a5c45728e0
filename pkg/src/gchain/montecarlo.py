"""Seeded Gaussian streams and block-wise Monte Carlo averaging.

Samples are drawn in fixed-size blocks. Block ``b`` of stream
``(seed, stream_id)`` comes from its own Philox generator keyed by
``(seed, stream_id, b)``, so the k-th Gaussian vector never depends on how
many workers run or in which order blocks finish. Per-block statistics are
merged in block order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

BLOCK_SIZE = 4096
_SEED_LIMIT = 2**64

_GAUSS_TAG = 0
_AUX_TAG = 1


@dataclass(frozen=True)
class GaussianStream:
    """Reproducible source of standard normal vectors."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < _SEED_LIMIT:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0:
            raise ValueError("stream_id must be non-negative")

    def block(self, index: int, rows: int, dim: int) -> np.ndarray:
        """Rows ``index*BLOCK_SIZE ... index*BLOCK_SIZE + rows - 1`` of the stream."""
        if rows > BLOCK_SIZE:
            raise ValueError("a block holds at most BLOCK_SIZE rows")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), _GAUSS_TAG, int(index)))
        return np.random.Generator(np.random.Philox(ss)).standard_normal((rows, dim))

    def vector(self, k: int, dim: int) -> np.ndarray:
        """The k-th standard normal vector of length ``dim``."""
        b, r = divmod(int(k), BLOCK_SIZE)
        return self.block(b, r + 1, dim)[r]

    def normals(self, n: int, dim: int) -> np.ndarray:
        """The first ``n`` vectors stacked into an ``(n, dim)`` array."""
        return np.concatenate([self.block(b, rows, dim) for b, rows in _blocks(n)]) if n else np.empty((0, dim))

    def aux_rng(self, tag: int = 0) -> np.random.Generator:
        """Generator for auxiliary draws (weights, instance generation); disjoint from Gaussian blocks."""
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), _AUX_TAG, int(tag)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "GaussianStream":
        """Stream for the ``index``-th sub-task of this one."""
        return GaussianStream(self.seed, self.stream_id * 1_000_003 + 1 + int(index))


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    samples: int
    seed: int

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "samples": self.samples, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "McEstimate":
        return cls(float(d["value"]), float(d["std_error"]), int(d["samples"]), int(d["seed"]))

    @classmethod
    def exact(cls, value: float, seed: int = 0) -> "McEstimate":
        """A deterministic quantity dressed as an estimate (zero error)."""
        return cls(float(value), 0.0, 1, seed)


def _blocks(n: int):
    full, rest = divmod(n, BLOCK_SIZE)
    for b in range(full):
        yield b, BLOCK_SIZE
    if rest:
        yield full, rest


def _row_stats(values: np.ndarray):
    n = values.shape[1]
    out = []
    for row in values:
        mean = float(np.sum(row)) / n
        dev = row - mean
        out.append((n, mean, float(np.sum(dev * dev))))
    return out


def _merge(a, b):
    # Chan et al. pairwise update; applied in block order.
    na, ma, m2a = a
    nb, mb, m2b = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * nb / n, m2a + m2b + delta * delta * na * nb / n


def mc_estimates(
    stream: GaussianStream,
    budget: int,
    dim: int,
    evaluate: Callable[[np.ndarray], np.ndarray],
    n_out: int = 1,
    workers: int | None = None,
) -> list[McEstimate]:
    """Average ``evaluate`` over ``budget`` Gaussian draws of length ``dim``.

    ``evaluate`` maps a ``(rows, dim)`` block to an ``(n_out, rows)`` array
    of per-sample values; all outputs share the same draws.
    """
    if budget < 2:
        raise ValueError("budget must be at least 2 to form a standard error")

    def run(item):
        b, rows = item
        vals = np.asarray(evaluate(stream.block(b, rows, dim)), dtype=np.float64).reshape(n_out, rows)
        return _row_stats(vals)

    items = list(_blocks(budget))
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_block = list(pool.map(run, items))
    else:
        per_block = [run(it) for it in items]

    acc = per_block[0]
    for stats in per_block[1:]:
        acc = [_merge(a, s) for a, s in zip(acc, stats)]
    out = []
    for n, mean, m2 in acc:
        var = max(m2, 0.0) / (n - 1)
        out.append(McEstimate(float(mean), math.sqrt(var / n), int(n), int(stream.seed)))
    return out


def mc_samples(
    stream: GaussianStream,
    n: int,
    dim: int,
    evaluate: Callable[[np.ndarray], np.ndarray],
    n_out: int = 1,
) -> np.ndarray:
    """Raw per-sample values, shape ``(n_out, n)``, for tail-frequency checks."""
    parts = [np.asarray(evaluate(stream.block(b, rows, dim)), dtype=np.float64).reshape(n_out, rows) for b, rows in _blocks(n)]
    return np.concatenate(parts, axis=1)


def binomial_sigma(p: float, trials: int) -> float:
    p = min(max(p, 0.0), 1.0)
    return math.sqrt(p * (1.0 - p) / trials)
