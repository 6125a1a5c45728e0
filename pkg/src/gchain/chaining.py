"""Constructive generic chaining on finite point sets.

A greedy farthest-point construction produces nested partitions whose
level-k cells have diameter at most ``2 r^-k``. From such a tree we compute
the chaining functional, per-point union-bound thresholds that a
subgaussian process exceeds with probability below ``delta``, and an
explicit upper bound on ``E sup_y (X_y - X_y0)`` obtained by integrating
those thresholds over ``delta``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .classes import TabulatedClass, estimate_R, lipschitz_constant
from .geometry import PointSet, as_pointset, diameter
from .montecarlo import GaussianStream, mc_samples

MAX_LEVELS = 64
DELTA_MIN = 1e-6


@dataclass
class PartitionTree:
    """Nested partitions of point indices, one list of cells per level.

    Level ``j`` corresponds to scale index ``k = k0 + j``; level 0 is the
    single cell holding every point. ``parents[j][c]`` is the index of the
    level ``j-1`` cell containing cell ``c`` (``-1`` at level 0).
    """

    ratio: float
    k0: int
    levels: list
    representatives: list
    parents: list
    measure: np.ndarray
    n_points: int = 0
    _cell_of: list = field(default=None, repr=False)

    def __post_init__(self):
        self.measure = np.asarray(self.measure, dtype=np.float64)
        self.n_points = len(self.measure)
        self._cell_of = []
        for cells in self.levels:
            lookup = np.full(self.n_points, -1, dtype=np.int64)
            for c, cell in enumerate(cells):
                lookup[np.asarray(cell, dtype=np.int64)] = c
            self._cell_of.append(lookup)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def cell_of(self, level: int, point: int) -> int:
        return int(self._cell_of[level][point])

    def cell_masses(self, level: int) -> np.ndarray:
        return np.array([self.measure[np.asarray(c)].sum() for c in self.levels[level]])

    def chain(self, point: int) -> list[int]:
        """Representatives ``pi_k(point)`` from the root down to the finest level."""
        return [self.representatives[j][self.cell_of(j, point)] for j in range(self.depth)]

    def with_leaf_measure(self) -> "PartitionTree":
        """Copy in which every finest-level cell carries the same total mass.

        Each point gets weight ``1 / (n_leaves * |leaf cell|)``; on trees
        whose leaves are all singletons this is the uniform measure again.
        """
        sizes = np.array([len(self.levels[-1][self.cell_of(self.depth - 1, i)]) for i in range(self.n_points)], dtype=float)
        weights = 1.0 / (len(self.levels[-1]) * sizes)
        return PartitionTree(self.ratio, self.k0, self.levels, self.representatives, self.parents, weights / weights.sum())

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "k0": self.k0,
            "levels": [[list(map(int, c)) for c in cells] for cells in self.levels],
            "representatives": [list(map(int, r)) for r in self.representatives],
            "parents": [list(map(int, p)) for p in self.parents],
            "measure": self.measure.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionTree":
        return cls(
            float(d["ratio"]),
            int(d["k0"]),
            [[list(c) for c in cells] for cells in d["levels"]],
            [list(r) for r in d["representatives"]],
            [list(p) for p in d["parents"]],
            np.asarray(d["measure"], dtype=np.float64),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "PartitionTree":
        return cls.from_dict(json.loads(Path(path).read_text()))


def coarsest_level(diam: float, ratio: float) -> int:
    """Largest integer k with ``2 r^-k >= diam`` (0 for a zero diameter)."""
    if diam <= 0:
        return 0
    k = math.floor(-math.log(diam / 2.0) / math.log(ratio))
    while 2.0 * ratio ** (-(k + 1)) >= diam:
        k += 1
    while 2.0 * ratio ** (-k) < diam:
        k -= 1
    return k


def _cover(pts: np.ndarray, cell: list[int], first: int, radius: float):
    """Farthest-point centers for ``cell`` starting at ``first``; returns (centers, assignment)."""
    sub = pts[cell]
    start = cell.index(first)
    centers = [start]
    dist = np.sqrt(np.sum((sub - sub[start]) ** 2, axis=1))
    nearest = np.zeros(len(cell), dtype=np.int64)
    while dist.max() > radius:
        nxt = int(np.argmax(dist))  # first maximum = lowest point index
        d_new = np.sqrt(np.sum((sub - sub[nxt]) ** 2, axis=1))
        closer = d_new < dist
        nearest[closer] = len(centers)
        dist = np.where(closer, d_new, dist)
        centers.append(nxt)
    return centers, nearest


def build_partition_tree(Y: PointSet, ratio: float = 2.0, max_depth: int | None = None, root: int = 0) -> PartitionTree:
    """Greedy admissible partition tree with uniform counting measure.

    Each level refines every parent cell by a farthest-point cover of radius
    ``r^-k`` seeded at the parent's representative, so the parent's
    representative stays a representative one level down. Construction stops
    when every cell holds identical points, after ``max_depth`` refinements,
    or at ``MAX_LEVELS`` levels.
    """
    if ratio < 2:
        raise ValueError("ratio must be at least 2")
    Y = as_pointset(Y)
    pts = Y.points
    n = len(Y)
    if not 0 <= root < n:
        raise IndexError("root index out of range")
    k0 = coarsest_level(diameter(Y), ratio)
    levels = [[list(range(n))]]
    reps = [[root]]
    parents = [[-1]]
    limit = MAX_LEVELS if max_depth is None else min(MAX_LEVELS, int(max_depth) + 1)

    def degenerate(cell):
        return bool(np.all(pts[cell] == pts[cell[0]]))

    while len(levels) < limit and not all(degenerate(c) for c in levels[-1]):
        k = k0 + len(levels)
        radius = ratio ** (-k)
        new_cells, new_reps, new_par = [], [], []
        for p, (cell, rep) in enumerate(zip(levels[-1], reps[-1])):
            centers, nearest = _cover(pts, cell, rep, radius)
            for c, center in enumerate(centers):
                members = [cell[t] for t in np.flatnonzero(nearest == c)]
                new_cells.append(members)
                new_reps.append(cell[center])
                new_par.append(p)
        levels.append(new_cells)
        reps.append(new_reps)
        parents.append(new_par)
    return PartitionTree(float(ratio), k0, levels, reps, parents, np.full(n, 1.0 / n))


def validate_tree(tree: PartitionTree, Y: PointSet, rtol: float = 1e-12) -> list[str]:
    """Independent check of every tree invariant; returns a list of problems."""
    Y = as_pointset(Y)
    pts = Y.points
    n = len(pts)
    problems = []
    full = set(range(n))
    diam = 0.0
    for a in range(n):
        for b in range(n):
            diam = max(diam, float(np.linalg.norm(pts[a] - pts[b])))
    if tree.ratio < 2:
        problems.append("ratio below 2")
    if diam > 0:
        if not 2 * tree.ratio ** (-tree.k0) >= diam:
            problems.append("k0 violates 2 r^-k0 >= D(Y)")
        if 2 * tree.ratio ** (-(tree.k0 + 1)) >= diam:
            problems.append("k0 is not the largest admissible level")
    if len(tree.levels[0]) != 1 or set(tree.levels[0][0]) != full:
        problems.append("level 0 is not the single cell Y")
    mu = np.asarray(tree.measure)
    if mu.shape != (n,) or np.any(mu < 0) or not math.isclose(float(mu.sum()), 1.0, rel_tol=1e-12):
        problems.append("measure is not a probability vector on Y")
    for j, cells in enumerate(tree.levels):
        k = tree.k0 + j
        seen = [x for c in cells for x in c]
        if sorted(seen) != list(range(n)):
            problems.append(f"level {j} is not a partition")
        for c, cell in enumerate(cells):
            if not cell:
                problems.append(f"empty cell at level {j}")
                continue
            if mu[list(cell)].sum() <= 0:
                problems.append(f"cell {c} at level {j} has zero mass")
            if tree.representatives[j][c] not in cell:
                problems.append(f"representative outside cell {c} at level {j}")
            cd = max(float(np.linalg.norm(pts[a] - pts[b])) for a in cell for b in cell)
            if cd > 2 * tree.ratio ** (-k) * (1 + rtol):
                problems.append(f"cell {c} at level {j} has diameter {cd} > 2 r^-k")
            if j > 0:
                parent = tree.levels[j - 1][tree.parents[j][c]]
                if not set(cell) <= set(parent):
                    problems.append(f"cell {c} at level {j} not inside its parent")
    return problems


def chaining_functional(tree: PartitionTree) -> float:
    """``sup_y sum_{k > k0} r^-k sqrt(ln 1/mu(A_k(y)))`` over the built levels."""
    if tree.depth <= 1:
        return 0.0
    totals = np.zeros(tree.n_points)
    for j in range(1, tree.depth):
        k = tree.k0 + j
        mass = tree.cell_masses(j)[tree._cell_of[j]]
        totals += tree.ratio ** (-k) * np.sqrt(np.log(1.0 / mass))
    return float(totals.max())


def chaining_thresholds(tree: PartitionTree, K: float, delta) -> np.ndarray:
    """Per-point ``T(y) = sum_{k > k0} r^(1-k) sqrt(8 ln(2^(k-k0) K / (mu(A_k(y)) delta)))``.

    ``delta`` may be a scalar or an array; the result then has shape
    ``(len(delta), n_points)``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    d = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    if np.any(d <= 0) or np.any(d >= 1):
        raise ValueError("delta must lie in (0, 1)")
    out = np.zeros((d.size, tree.n_points))
    for j in range(1, tree.depth):
        k = tree.k0 + j
        mass = tree.cell_masses(j)[tree._cell_of[j]]
        log_arg = j * math.log(2.0) + math.log(K) - np.log(mass)[None, :] - np.log(d)[:, None]
        out += tree.ratio ** (1 - k) * np.sqrt(8.0 * log_arg)
    return out[0] if np.ndim(delta) == 0 else out


@dataclass(frozen=True)
class SubgaussianSpec:
    """Process with increment tails ``P(X_y - X_y' > s) <= K exp(-s^2 / (2|y - y'|^2))``.

    ``process`` is ``"canonical-gaussian"`` (``X_y = <g, y>``) or
    ``"chainrule-process"`` (``X_y = sup_f <g, f(y)> / (sqrt(2) L)``, which
    needs ``function_class``).
    """

    k_factor: float = 1.0
    process: str = "canonical-gaussian"
    function_class: TabulatedClass | None = None

    def __post_init__(self):
        if self.k_factor < 1:
            raise ValueError("k_factor must be at least 1")
        if self.process == "chainrule-process" and self.function_class is None:
            raise ValueError("chainrule-process needs a function class")

    @classmethod
    def for_class(cls, F: TabulatedClass, Y: PointSet, budget: int, stream: GaussianStream) -> "SubgaussianSpec":
        """``K = exp(R^2 / (2 L^2))`` with R estimated on ``stream``."""
        lip = lipschitz_constant(F, Y)
        r = estimate_R(F, Y, budget, stream).value
        return cls(math.exp(r * r / (2 * lip * lip)), "chainrule-process", F)


def empirical_threshold_check(Y: PointSet, spec: SubgaussianSpec, tree: PartitionTree, delta: float, trials: int, stream: GaussianStream) -> float:
    """Frequency of ``{exists y: X_y - X_y0 > T(y)}`` over simulated paths; ``y0`` is the tree root."""
    Y = as_pointset(Y)
    n = len(Y)
    root = tree.representatives[0][0]
    if n == 1:
        return 0.0
    T = chaining_thresholds(tree, spec.k_factor, delta)
    if spec.process == "canonical-gaussian":
        pts = np.ascontiguousarray(Y.points - Y.points[root])
        hits = mc_samples(stream, trials, Y.dim, lambda g: _backend.max_affine(g, pts, T) > 0)[0]
        return float(hits.mean())
    if spec.process == "chainrule-process":
        F = spec.function_class
        idx = F.indices_of(Y)
        lip = lipschitz_constant(F, Y)
        images = [np.ascontiguousarray(F.values[:, i]) for i in idx]

        def evaluate(g):
            x = np.stack([_backend.max_affine(g, im) for im in images]) / (math.sqrt(2.0) * lip)
            return np.any(x - x[root] - T[:, None] > 0, axis=0)

        return float(mc_samples(stream, trials, F.out_dim, evaluate)[0].mean())
    raise ValueError(f"unknown process kind {spec.process!r}")


def explicit_esup_bound(tree: PartitionTree, K: float = 1.0, quadrature_points: int = 256) -> float:
    """Upper bound on ``E sup_y (X_y - X_y0)`` from integrating thresholds over delta.

    If ``P(S > tau(delta)) < delta`` with ``tau`` decreasing, then
    ``E S <= int_0^1 tau``. The integral on ``[DELTA_MIN, 1]`` is an upper
    Riemann sum on a geometric grid: ``tau`` decreases in delta, so its
    value at each left edge bounds the interval. On ``[0, DELTA_MIN]`` we add the
    closed-form bound from ``sqrt(a + b) <= sqrt(a) + sqrt(b)``:
    ``DELTA_MIN * (tau(DELTA_MIN) + sqrt(8) * A * sqrt(pi) / 2)`` with
    ``A = sum_k r^(1-k)``.
    """
    if quadrature_points < 8:
        raise ValueError("quadrature_points must be at least 8")
    if tree.depth <= 1:
        return 0.0
    edges = np.geomspace(DELTA_MIN, 1.0, quadrature_points + 1)
    tau = chaining_thresholds(tree, K, edges[:-1]).max(axis=1)
    body = float(np.sum(tau * np.diff(edges)))
    a_sum = sum(tree.ratio ** (1 - (tree.k0 + j)) for j in range(1, tree.depth))
    tau_min = float(chaining_thresholds(tree, K, np.array([DELTA_MIN])).max())
    tail = DELTA_MIN * (tau_min + math.sqrt(8.0) * a_sum * math.sqrt(math.pi) / 2.0)
    return body + tail


def covering_number(Y: PointSet, eps: float) -> int:
    """Size of a greedy farthest-point cover of ``Y`` by ``eps``-balls."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    pts = as_pointset(Y).points
    centers, _ = _cover(pts, list(range(len(pts))), 0, eps)
    return len(centers)


def dudley_integral(Y: PointSet, eps_grid) -> float:
    """``sum_j (e_j - e_{j+1}) sqrt(ln N(Y, e_{j+1}))`` over the grid sorted descending."""
    grid = sorted((float(e) for e in eps_grid), reverse=True)
    if not grid:
        raise ValueError("eps_grid must not be empty")
    total = 0.0
    for hi, lo in zip(grid[:-1], grid[1:]):
        total += (hi - lo) * math.sqrt(math.log(covering_number(Y, lo)))
    return total
