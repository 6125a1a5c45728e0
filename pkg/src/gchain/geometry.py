"""Finite point sets, their diameter and their Gaussian average."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .montecarlo import GaussianStream, McEstimate, mc_estimates, mc_samples


@dataclass(frozen=True, eq=False)
class PointSet:
    """Ordered, non-empty list of vectors in R^dim. Duplicates are allowed."""

    points: np.ndarray
    labels: tuple | None = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            raise ValueError("points must be a 2-d array of shape (count, dim)")
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ValueError("a point set needs at least one point of positive dimension")
        if not np.all(np.isfinite(pts)):
            raise ValueError("coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != pts.shape[0]:
                raise ValueError("need exactly one label per point")
            object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.points[i]

    def subset(self, indices) -> "PointSet":
        idx = list(indices)
        labels = None if self.labels is None else [self.labels[i] for i in idx]
        return PointSet(self.points[idx], labels)

    def scaled(self, c: float) -> "PointSet":
        return PointSet(self.points * c, self.labels)

    def translated(self, shift) -> "PointSet":
        return PointSet(self.points + np.asarray(shift, dtype=np.float64), self.labels)

    def index_of(self, y) -> int:
        """Index of the first point equal to ``y`` (exact comparison)."""
        hits = np.flatnonzero(np.all(self.points == np.asarray(y, dtype=np.float64), axis=1))
        if hits.size == 0:
            raise KeyError("point not in set")
        return int(hits[0])

    def to_dict(self) -> dict:
        d = {"dim": self.dim, "points": self.points.tolist()}
        if self.labels is not None:
            d["labels"] = [list(lab) if isinstance(lab, tuple) else lab for lab in self.labels]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PointSet":
        pts = np.asarray(d["points"], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != int(d["dim"]):
            raise ValueError("point vectors do not match the declared dim")
        labels = d.get("labels")
        if labels is not None:
            labels = [tuple(lab) if isinstance(lab, list) else lab for lab in labels]
        return cls(pts, labels)

    @classmethod
    def load(cls, path) -> "PointSet":
        """Read a JSON ``{"dim", "points"}`` file or a CSV with one point per row."""
        path = Path(path)
        if path.suffix.lower() == ".csv":
            with path.open(newline="") as fh:
                rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
            return cls(np.asarray(rows, dtype=np.float64))
        return cls.from_dict(json.loads(path.read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


def as_pointset(y) -> PointSet:
    return y if isinstance(y, PointSet) else PointSet(np.atleast_2d(np.asarray(y, dtype=np.float64)))


def diameter(Y: PointSet) -> float:
    """Largest pairwise Euclidean distance; scans every ordered pair."""
    pts = as_pointset(Y).points
    best = 0.0
    for i in range(pts.shape[0]):
        diff = pts - pts[i]
        best = max(best, float(np.max(np.einsum("ij,ij->i", diff, diff))))
    return math.sqrt(best)


def centered(points: np.ndarray) -> np.ndarray:
    """Points minus the first point (the control variate)."""
    return np.ascontiguousarray(points - points[0])


def estimate_many_G(sets, budget: int, stream: GaussianStream, workers: int | None = None) -> list[McEstimate]:
    """Gaussian averages of several equal-dimension sets under common draws.

    Each per-sample value is ``max_y <g, y - y_first>``; the subtracted term
    has mean zero, so the estimate is unbiased for ``G`` and exactly zero on
    singletons.
    """
    arrays = [centered(as_pointset(s).points) for s in sets]
    if not arrays:
        return []
    dim = arrays[0].shape[1]
    if any(a.shape[1] != dim for a in arrays):
        raise ValueError("all sets must share one dimension")

    def evaluate(g):
        return np.stack([_backend.max_affine(g, a) for a in arrays])

    return mc_estimates(stream, budget, dim, evaluate, n_out=len(arrays), workers=workers)


def estimate_G(Y: PointSet, budget: int, stream: GaussianStream, workers: int | None = None) -> McEstimate:
    return estimate_many_G([Y], budget, stream, workers)[0]


def concentration_tail_check(Y: PointSet, s_grid, trials: int, stream: GaussianStream):
    """Empirical upper tails of ``g -> max_y <g, y>`` around its sample mean.

    Returns ``(s, frequency, bound)`` triples with the Gaussian concentration
    bound ``exp(-s^2 / (2 max_y |y|^2))``; the map is ``max_y |y|``-Lipschitz.
    """
    s_grid = [float(s) for s in s_grid]
    if not s_grid:
        raise ValueError("s_grid must not be empty")
    if trials < 1000:
        raise ValueError("use at least 1000 trials")
    Y = as_pointset(Y)
    pts = np.ascontiguousarray(Y.points)
    lip_sq = float(np.max(np.einsum("ij,ij->i", pts, pts)))
    vals = mc_samples(stream, trials, Y.dim, lambda g: _backend.max_affine(g, pts))[0]
    mean = float(np.mean(vals))
    out = []
    for s in s_grid:
        if s < 0:
            raise ValueError("s must be non-negative")
        freq = float(np.mean(vals > mean + s))
        if s == 0:
            bound = 1.0
        elif lip_sq == 0:
            bound = 0.0
        else:
            bound = math.exp(-s * s / (2.0 * lip_sq))
        out.append((s, freq, bound))
    return out
