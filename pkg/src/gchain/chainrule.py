"""Measure both sides of the chain rule

    G(F(Y)) <= c1 L(F) G(Y) + c2 D(Y) R(F) + G(F(y0))

on concrete instances, and fit the smallest constants consistent with a suite.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .classes import (
    TabulatedClass,
    distinct_pairs,
    estimate_R,
    image_set,
    lipschitz_constant,
)
from .geometry import PointSet, as_pointset, diameter, estimate_G
from .montecarlo import GaussianStream, McEstimate, binomial_sigma, mc_samples

FEAS_RTOL = 1e-9


@dataclass(frozen=True)
class ChainTerms:
    lhs: McEstimate
    g_y: McEstimate
    d_y: float
    l_f: float
    r_f: McEstimate
    base: McEstimate
    y0_index: int = 0
    instance: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def excess(self) -> float:
        """``lhs - base``: the part the two constants must pay for."""
        return self.lhs.value - self.base.value

    @property
    def lg(self) -> float:
        return self.l_f * self.g_y.value

    @property
    def dr(self) -> float:
        return self.d_y * self.r_f.value

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "y0_index": self.y0_index,
            "lhs": self.lhs.to_dict(),
            "g_y": self.g_y.to_dict(),
            "d_y": self.d_y,
            "l_f": self.l_f,
            "r_f": self.r_f.to_dict(),
            "base": self.base.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChainTerms":
        return cls(
            lhs=McEstimate.from_dict(d["lhs"]),
            g_y=McEstimate.from_dict(d["g_y"]),
            d_y=float(d["d_y"]),
            l_f=float(d["l_f"]),
            r_f=McEstimate.from_dict(d["r_f"]),
            base=McEstimate.from_dict(d["base"]),
            y0_index=int(d["y0_index"]),
            instance=d.get("instance", ""),
            meta=d.get("meta", {}),
        )


@dataclass(frozen=True)
class FittedConstants:
    c1: float
    c2: float
    instances: int
    binding_instance: str | None
    pareto: list = field(default_factory=list)
    dropped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "instances": self.instances,
            "binding_instance": self.binding_instance,
            "pareto": [list(p) for p in self.pareto],
            "dropped": list(self.dropped),
        }


def chain_terms(
    F: TabulatedClass,
    Y: PointSet,
    y0_index: int = 0,
    budget: int = 10_000,
    stream: GaussianStream | None = None,
    instance: str = "",
    workers=None,
) -> ChainTerms:
    """Estimate every term of the chain-rule inequality for one instance.

    All Monte Carlo terms use ``stream``. When ``Y`` has no two distinct
    points, ``L`` and ``R`` are reported as exact zeros.
    """
    stream = stream or GaussianStream(0)
    Y = as_pointset(Y)
    if not 0 <= y0_index < len(Y):
        raise IndexError("y0_index out of range")
    lhs = estimate_G(image_set(F, Y), budget, stream, workers)
    base = estimate_G(image_set(F, Y.subset([y0_index])), budget, stream, workers)
    g_y = estimate_G(Y, budget, stream, workers)
    if distinct_pairs(Y.points):
        l_f = lipschitz_constant(F, Y)
        r_f = estimate_R(F, Y, budget, stream, workers)
    else:
        l_f = 0.0
        r_f = McEstimate(0.0, 0.0, budget, stream.seed)
    meta = {"n_points": len(Y), "dim": Y.dim, "n_functions": len(F), "out_dim": F.out_dim, "stream_id": stream.stream_id}
    return ChainTerms(lhs, g_y, diameter(Y), l_f, r_f, base, y0_index, instance, meta)


def _violations(c1: float, c2: float, a, b, rhs) -> np.ndarray:
    slack = c1 * a + c2 * b - rhs
    return slack < -FEAS_RTOL * np.maximum(1.0, np.abs(rhs))


def fit_constants(suite) -> FittedConstants:
    """Minimize ``c1 + c2`` over non-negative constants satisfying every instance.

    The feasible set is an intersection of half-planes in the positive
    quadrant, so the optimum is a vertex: an axis intercept or the crossing
    of two constraint lines. All candidates are enumerated and checked.
    Ties prefer the smaller ``c1``.
    """
    suite = list(suite)
    if not suite:
        raise ValueError("suite is empty")
    kept, dropped = [], []
    for t in suite:
        if t.lg <= 0 and t.dr <= 0:
            if t.excess > 0:
                warnings.warn(f"instance {t.instance!r} has lhs > base with vanishing coefficients; dropped")
                dropped.append(t.instance)
                continue
        kept.append(t)
    a = np.array([t.lg for t in kept])
    b = np.array([t.dr for t in kept])
    rhs = np.array([t.excess for t in kept])

    active = rhs > 0
    cands = [(0.0, 0.0)]
    for i in np.flatnonzero(active):
        if a[i] > 0:
            cands.append((rhs[i] / a[i], 0.0))
        if b[i] > 0:
            cands.append((0.0, rhs[i] / b[i]))
    act = np.flatnonzero(active & (a > 0) & (b > 0))
    for i, j in itertools.combinations(act, 2):
        det = a[i] * b[j] - a[j] * b[i]
        if det == 0:
            continue
        c1 = (rhs[i] * b[j] - rhs[j] * b[i]) / det
        c2 = (a[i] * rhs[j] - a[j] * rhs[i]) / det
        if c1 >= 0 and c2 >= 0:
            cands.append((float(c1), float(c2)))

    feasible = sorted({c for c in cands if not _violations(c[0], c[1], a, b, rhs).any()})
    if not feasible:
        raise RuntimeError("no feasible constants found; suite is degenerate")
    best = min(feasible, key=lambda c: (c[0] + c[1], c[0]))
    pareto = [c for c in feasible if not any((o[0] <= c[0] and o[1] <= c[1] and o != c) for o in feasible)]
    pareto.sort()

    binding = None
    if best != (0.0, 0.0) and len(kept):
        tight = best[0] * a + best[1] * b - rhs
        binding = kept[int(np.argmin(tight))].instance
    return FittedConstants(float(best[0]), float(best[1]), len(kept), binding, pareto, dropped)


def verify_constants(suite, c1: float, c2: float) -> list[str]:
    """Instances violating ``lhs <= c1 L G + c2 D R + base`` at point estimates."""
    bad = []
    for t in suite:
        if t.lg <= 0 and t.dr <= 0 and t.excess > 0:
            continue  # dropped as degenerate by the fit
        if _violations(c1, c2, np.array([t.lg]), np.array([t.dr]), np.array([t.excess]))[0]:
            bad.append(t.instance)
    return bad


# ------------------------------------------------------------ suite generator


@dataclass(frozen=True)
class SuiteConfig:
    """Random instance family: sphere point sets and truncated affine tables."""

    # Defaults keep L*G(Y) clearly below D*R so the LP vertex does not flip
    # between the c1 and c2 axes from seed to seed. Fixed spectral norms and
    # zero offsets narrow the upper tail of excess / (D*R), which sets c2.
    n_instances: int = 200
    points: tuple[int, int] = (8, 12)
    dim: tuple[int, int] = (3, 4)
    functions: tuple[int, int] = (16, 32)
    out_dim: tuple[int, int] = (4, 8)
    radius: float = 1.0
    lip_cap: float = 1.0
    lip_floor: float = 1.0  # spectral norms drawn from lip_cap * U(lip_floor, 1)
    offset_scale: float = 0.0
    budget: int = 4000
    kind: str = "random"  # random | singleton | contraction

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        d = dict(d)
        for k in ("points", "dim", "functions", "out_dim"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def sphere_points(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((count, dim))
    return radius * g / np.linalg.norm(g, axis=1, keepdims=True)


def affine_table(rng: np.random.Generator, Y: PointSet, n_functions: int, out_dim: int, lip_cap: float, offset_scale: float, lip_floor: float = 0.1):
    """Tabulate ``y -> A y + b`` with the spectral norm of each ``A`` drawn from ``lip_cap * U(lip_floor, 1)``."""
    vals = np.empty((n_functions, len(Y), out_dim))
    for f in range(n_functions):
        A = rng.standard_normal((out_dim, Y.dim))
        A *= lip_cap * rng.uniform(lip_floor, 1.0) / np.linalg.norm(A, 2)
        b = offset_scale * rng.standard_normal(out_dim)
        vals[f] = Y.points @ A.T + b
    return TabulatedClass(vals, Y)


def generate_instance(cfg: SuiteConfig, stream: GaussianStream):
    rng = stream.aux_rng(tag=11)
    dim = int(rng.integers(cfg.dim[0], cfg.dim[1] + 1))
    out_dim = int(rng.integers(cfg.out_dim[0], cfg.out_dim[1] + 1))
    n_pts = 1 if cfg.kind == "singleton" else int(rng.integers(cfg.points[0], cfg.points[1] + 1))
    n_fun = 1 if cfg.kind == "contraction" else int(rng.integers(cfg.functions[0], cfg.functions[1] + 1))
    Y = PointSet(sphere_points(rng, n_pts, dim, cfg.radius))
    F = affine_table(rng, Y, n_fun, out_dim, cfg.lip_cap, cfg.offset_scale, cfg.lip_floor)
    return F, Y


def run_suite(cfg: SuiteConfig, seed: int, workers=None) -> list[ChainTerms]:
    """Instance ``i`` uses stream ``(seed, i)`` for both generation and estimation."""
    out = []
    for i in range(cfg.n_instances):
        stream = GaussianStream(seed, i)
        F, Y = generate_instance(cfg, stream)
        out.append(chain_terms(F, Y, 0, cfg.budget, stream, instance=f"{cfg.kind}-{seed}-{i}", workers=workers))
    return out


def write_suite(path, suite) -> None:
    with Path(path).open("w") as fh:
        for t in suite:
            fh.write(json.dumps(t.to_dict()) + "\n")


def read_suite(path) -> list[ChainTerms]:
    with Path(path).open() as fh:
        return [ChainTerms.from_dict(json.loads(line)) for line in fh if line.strip()]


# ------------------------------------------------------------ proof tail check


def proof_tail_check(F: TabulatedClass, Y: PointSet, pairs, s_grid, trials: int, stream: GaussianStream, sigmas: float = 3.0) -> dict:
    """Simulate ``Z = sup_f <g, f(y) - f(y')>`` for each pair and compare tails.

    (a) centered concentration: ``P(Z > EZ + s) <= exp(-s^2 / (2 L^2 d^2))``;
    (b) after the quadratic tail transform:
        ``P(Z > s) <= exp(R^2 / (2 L^2)) exp(-s^2 / (4 L^2 d^2))``.
    ``R`` is the estimate of R(F, Y) on the same draws, raised if needed so
    that ``EZ <= R d`` holds for the sample means actually used.
    """
    Y = as_pointset(Y)
    s_grid = [float(s) for s in s_grid]
    if not s_grid:
        raise ValueError("s_grid must not be empty")
    idx = F.indices_of(Y)
    l_f = lipschitz_constant(F, Y) if distinct_pairs(Y.points) else 0.0
    if l_f == 0.0:
        return {"trivial": True, "lipschitz": 0.0, "rows": [], "ok": True}

    pair_idx = []
    for y, yp in pairs:
        i = Y.index_of(y) if not isinstance(y, (int, np.integer)) else int(y)
        j = Y.index_of(yp) if not isinstance(yp, (int, np.integer)) else int(yp)
        if not np.any(Y.points[i] != Y.points[j]):
            raise ValueError("pairs must consist of distinct points")
        pair_idx.append((i, j))

    diffs = [np.ascontiguousarray(F.values[:, idx[i]] - F.values[:, idx[j]]) for i, j in pair_idx]
    dists = [math.sqrt(float((Y.points[i] - Y.points[j]) @ (Y.points[i] - Y.points[j]))) for i, j in pair_idx]
    z = mc_samples(stream, trials, F.out_dim, lambda g: np.stack([_backend.max_affine(g, d) for d in diffs]), n_out=len(diffs))
    r_hat = estimate_R(F, Y, max(trials, 2), stream).value
    means = z.mean(axis=1)
    r_used = max([r_hat] + [m / d for m, d in zip(means, dists)])
    k_log = r_used**2 / (2 * l_f**2)

    rows = []
    ok = True
    for p, ((i, j), d) in enumerate(zip(pair_idx, dists)):
        ez = float(means[p])
        for s in s_grid:
            freq_a = float(np.mean(z[p] > ez + s))
            bound_a = math.exp(-s * s / (2 * l_f**2 * d * d))
            freq_b = float(np.mean(z[p] > s))
            bound_b = min(1.0, math.exp(k_log - s * s / (4 * l_f**2 * d * d)))
            # tail (a) evaluated at s - EZ, i.e. what the transform starts from
            transformed = math.exp(-((s - ez) ** 2) / (2 * l_f**2 * d * d)) if s > ez else 1.0
            hold_a = freq_a <= bound_a + sigmas * binomial_sigma(bound_a, trials)
            hold_b = freq_b <= bound_b + sigmas * binomial_sigma(bound_b, trials)
            algebra = bound_b >= min(1.0, transformed) * (1 - 1e-12)
            ok = ok and hold_a and hold_b and algebra
            rows.append(
                {
                    "pair": (i, j),
                    "s": s,
                    "freq_centered": freq_a,
                    "bound_centered": bound_a,
                    "freq_raw": freq_b,
                    "bound_raw": bound_b,
                    "transformed_centered": transformed,
                    "ok": bool(hold_a and hold_b and algebra),
                }
            )
    return {"trivial": False, "lipschitz": l_f, "r": r_used, "k_factor": math.exp(k_log), "rows": rows, "ok": ok}
