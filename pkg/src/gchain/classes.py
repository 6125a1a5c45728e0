"""Finite function classes on point sets: Lipschitz constants, image sets and
the Gaussian average of Lipschitz quotients.

Two representations are supported. ``TabulatedClass`` stores the value of
every function at every point of a bound point set. ``KernelBallClass`` is
the ball of radius B in a Gaussian RKHS applied coordinate-wise to stacked
inputs; its suprema have closed forms through Gram matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .geometry import PointSet, as_pointset, centered, estimate_G
from .montecarlo import GaussianStream, McEstimate, mc_estimates

PSD_TOL = 1e-8


class NotTabulatedError(KeyError):
    """A point is outside the set on which a class was tabulated."""


@dataclass(frozen=True, eq=False)
class TabulatedClass:
    """``values[f, i]`` is the image of ``bound_points[i]`` under function ``f``."""

    values: np.ndarray
    bound_points: PointSet

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 3:
            raise ValueError("values must have shape (functions, points, out_dim)")
        if vals.shape[0] == 0 or vals.shape[2] == 0:
            raise ValueError("need at least one function and out_dim >= 1")
        if vals.shape[1] != len(self.bound_points):
            raise ValueError("values must be tabulated on every bound point")
        if not np.all(np.isfinite(vals)):
            raise ValueError("tabulated values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def in_dim(self) -> int:
        return self.bound_points.dim

    @property
    def out_dim(self) -> int:
        return self.values.shape[2]

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_functions(cls, funcs: Sequence[Callable], Y: PointSet) -> "TabulatedClass":
        Y = as_pointset(Y)
        vals = [[np.atleast_1d(np.asarray(f(y), dtype=np.float64)) for y in Y.points] for f in funcs]
        return cls(np.asarray(vals), Y)

    def indices_of(self, Y: PointSet) -> list[int]:
        try:
            return [self.bound_points.index_of(y) for y in as_pointset(Y).points]
        except KeyError:
            raise NotTabulatedError("class is not tabulated on every point of Y") from None

    def restrict(self, indices) -> "TabulatedClass":
        idx = list(indices)
        return TabulatedClass(self.values[:, idx], self.bound_points.subset(idx))

    def select(self, function_indices) -> "TabulatedClass":
        return TabulatedClass(self.values[list(function_indices)], self.bound_points)

    def union(self, other: "TabulatedClass") -> "TabulatedClass":
        """Functions of ``self`` followed by those of ``other`` (same bound points)."""
        self._check_compatible(other)
        return TabulatedClass(np.concatenate([self.values, other.values]), self.bound_points)

    def scaled(self, c: float) -> "TabulatedClass":
        return TabulatedClass(self.values * c, self.bound_points)

    def __add__(self, other: "TabulatedClass") -> "TabulatedClass":
        """Sum class ``{f + h}``, ordered f-major so the first member is ``f0 + h0``."""
        self._check_compatible(other)
        summed = self.values[:, None] + other.values[None, :]
        return TabulatedClass(summed.reshape(-1, *self.values.shape[1:]), self.bound_points)

    def _check_compatible(self, other):
        if other.values.shape[1:] != self.values.shape[1:] or not np.array_equal(
            other.bound_points.points, self.bound_points.points
        ):
            raise ValueError("classes must be tabulated on the same points with the same out_dim")

    def to_dict(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "functions": self.values.tolist(),
            "bound_points": self.bound_points.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabulatedClass":
        pts = PointSet.from_dict(d["bound_points"])
        vals = np.asarray(d["functions"], dtype=np.float64)
        if pts.dim != int(d["in_dim"]) or vals.ndim != 3 or vals.shape[2] != int(d["out_dim"]):
            raise ValueError("declared in_dim/out_dim do not match the data")
        return cls(vals, pts)


@dataclass(frozen=True)
class KernelBallClass:
    """``{(y_1..y_s) -> (<v, psi(y_i)>)_i : |v| <= ball_radius}`` for the Gaussian kernel.

    Inputs live in ``R^(stack_count * block_dim)``, one block per stacked
    coordinate.
    """

    kernel_width: float
    ball_radius: float
    stack_count: int

    def __post_init__(self):
        if not self.kernel_width > 0 or not self.ball_radius > 0:
            raise ValueError("kernel_width and ball_radius must be positive")
        if int(self.stack_count) < 1:
            raise ValueError("stack_count must be a positive integer")

    @property
    def out_dim(self) -> int:
        return int(self.stack_count)

    def blocks(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] % self.stack_count:
            raise ValueError("input dimension is not a multiple of stack_count")
        return y.reshape(self.stack_count, -1)

    def difference_gram(self, y, y_prime) -> np.ndarray:
        """Gram matrix of ``psi(y_i) - psi(y'_i)``."""
        a, b = self.blocks(y), self.blocks(y_prime)
        w = self.kernel_width
        m = gaussian_kernel(a, a, w) - gaussian_kernel(a, b, w) - gaussian_kernel(b, a, w) + gaussian_kernel(b, b, w)
        return psd_checked(m)

    def to_dict(self) -> dict:
        return {"kernel_width": self.kernel_width, "ball_radius": self.ball_radius, "stack_count": self.stack_count}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelBallClass":
        return cls(float(d["kernel_width"]), float(d["ball_radius"]), int(d["stack_count"]))


FunctionClass = TabulatedClass | KernelBallClass


def load_class(path) -> FunctionClass:
    d = json.loads(Path(path).read_text())
    return KernelBallClass.from_dict(d) if "kernel_width" in d else TabulatedClass.from_dict(d)


@dataclass(frozen=True)
class LipschitzMap:
    description: str
    lip_bound: float
    action: Callable[[np.ndarray], np.ndarray]

    def __call__(self, z) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.action(np.asarray(z, dtype=np.float64)), dtype=np.float64))

    def image(self, Z: PointSet) -> PointSet:
        return PointSet(np.stack([self(z) for z in as_pointset(Z).points]))

    def empirical_lipschitz(self, Z: PointSet) -> float:
        """Exact Lipschitz constant of the action restricted to ``Z`` (0 if no distinct pair)."""
        z = as_pointset(Z).points
        img = self.image(Z).points
        best = 0.0
        for i in range(len(z)):
            den = np.sum((z - z[i]) ** 2, axis=1)
            num = np.sum((img - img[i]) ** 2, axis=1)
            mask = den > 0
            if mask.any():
                best = max(best, float(np.max(num[mask] / den[mask])))
        return math.sqrt(best)


def gaussian_kernel(a: np.ndarray, b: np.ndarray, width: float) -> np.ndarray:
    """``exp(-|a_i - b_j|^2 / (2 width^2))`` for row sets ``a`` and ``b``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * width * width))


def psd_checked(m: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Symmetrize and reject matrices with an eigenvalue below ``-tol``."""
    m = 0.5 * (m + m.T)
    lo = float(np.linalg.eigvalsh(m)[0]) if m.size else 0.0
    if lo < -tol:
        raise ValueError(f"Gram matrix is not positive semidefinite (min eigenvalue {lo:.3e})")
    return np.ascontiguousarray(m)


def ball_norm(gamma: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """Per-row ``sqrt(gamma^T gram gamma)``, clamping tiny negatives to zero."""
    return np.sqrt(np.maximum(_backend.quad_form(gamma, gram), 0.0))


# ---------------------------------------------------------------- image sets


def image_set(F: FunctionClass, Y: PointSet) -> PointSet:
    """``{f(y)}`` listed function-major, labelled ``(f, i)`` with ``i`` indexing ``Y``."""
    if not isinstance(F, TabulatedClass):
        raise TypeError("image sets are only available for tabulated classes")
    Y = as_pointset(Y)
    idx = F.indices_of(Y)
    vals = F.values[:, idx]
    labels = [(f, i) for f in range(len(F)) for i in range(len(Y))]
    return PointSet(vals.reshape(-1, F.out_dim), labels)


def _sq(v: np.ndarray) -> float:
    return float(v @ v)


def pair_square_tables(F: TabulatedClass, Y: PointSet):
    """``S[i, j] = max_f |f(y_i) - f(y_j)|^2`` and ``D[i, j] = |y_i - y_j|^2``."""
    Y = as_pointset(Y)
    idx = F.indices_of(Y)
    vals = F.values[:, idx]
    pts = Y.points
    n = len(Y)
    S = np.zeros((n, n))
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            D[i, j] = _sq(pts[i] - pts[j])
            S[i, j] = max(_sq(vals[f, i] - vals[f, j]) for f in range(vals.shape[0]))
    return S, D


def lipschitz_constant(F: FunctionClass, Y: PointSet | None = None) -> float:
    """Smallest constant valid for every member over distinct pairs of ``Y``.

    For a ``KernelBallClass`` with ``Y=None`` the ambient-space value
    ``ball_radius / kernel_width`` is returned.
    """
    if isinstance(F, KernelBallClass):
        if Y is None:
            return F.ball_radius / F.kernel_width
        pts = as_pointset(Y).points
        best = None
        for i, j in distinct_pairs(pts):
            m = F.difference_gram(pts[i], pts[j])
            lam = max(float(np.linalg.eigvalsh(m)[-1]), 0.0)
            val = F.ball_radius * math.sqrt(lam) / math.sqrt(_sq(pts[i] - pts[j]))
            best = val if best is None else max(best, val)
        if best is None:
            raise ValueError("Lipschitz quotient undefined: Y has no two distinct points")
        return best
    if Y is None:
        Y = F.bound_points
    S, D = pair_square_tables(F, Y)
    mask = D > 0
    if not mask.any():
        raise ValueError("Lipschitz quotient undefined: Y has no two distinct points")
    return math.sqrt(float(np.max(S[mask] / D[mask])))


def distinct_pairs(pts: np.ndarray) -> list[tuple[int, int]]:
    """Ordered index pairs ``(i, j)``, ``i != j``, whose points differ."""
    n = len(pts)
    return [(i, j) for i in range(n) for j in range(n) if i != j and np.any(pts[i] != pts[j])]


def _quotients(F: TabulatedClass, i: int, j: int) -> np.ndarray:
    bp = F.bound_points.points
    dist = math.sqrt(_sq(bp[i] - bp[j]))
    return (F.values[:, i] - F.values[:, j]) / dist


def quotient_set(F: TabulatedClass, y, y_prime) -> PointSet:
    """``{(f(y) - f(y')) / |y - y'| : f in F}``."""
    i = F.indices_of(as_pointset(y))[0]
    j = F.indices_of(as_pointset(y_prime))[0]
    if not np.any(F.bound_points.points[i] != F.bound_points.points[j]):
        raise ValueError("quotient set needs y != y'")
    return PointSet(_quotients(F, i, j))


def estimate_R_pairs(F: FunctionClass, Y: PointSet, budget: int, stream: GaussianStream, workers=None):
    """Per-pair estimates of ``E sup_f <g, f(y) - f(y')> / |y - y'|`` under common draws.

    Returns ``(pairs, estimates)`` with pairs indexing ``Y``.
    """
    Y = as_pointset(Y)
    pairs = distinct_pairs(Y.points)
    if not pairs:
        raise ValueError("R is undefined: Y has no two distinct points")

    if isinstance(F, KernelBallClass):
        pts = Y.points
        grams = [F.difference_gram(pts[i], pts[j]) for i, j in pairs]
        scale = [F.ball_radius / math.sqrt(_sq(pts[i] - pts[j])) for i, j in pairs]

        def evaluate(g):
            return np.stack([c * ball_norm(g, m) for c, m in zip(scale, grams)])

        ests = mc_estimates(stream, budget, F.out_dim, evaluate, n_out=len(pairs), workers=workers)
        return pairs, ests

    idx = F.indices_of(Y)
    qsets = [centered(_quotients(F, idx[i], idx[j])) for i, j in pairs]

    def evaluate(g):
        return np.stack([_backend.max_affine(g, q) for q in qsets])

    ests = mc_estimates(stream, budget, F.out_dim, evaluate, n_out=len(pairs), workers=workers)
    return pairs, ests


def estimate_R(F: FunctionClass, Y: PointSet, budget: int, stream: GaussianStream, workers=None) -> McEstimate:
    """Largest per-pair estimate; its standard error is that of the maximizing pair."""
    _, ests = estimate_R_pairs(F, Y, budget, stream, workers)
    return max(ests, key=lambda e: e.value)


def kernel_ball_gaussian_average(F: KernelBallClass, y, budget: int, stream: GaussianStream) -> McEstimate:
    """Gaussian average of the image of one stacked point: ``B E sqrt(g^T K g)``."""
    blocks = F.blocks(y)
    gram = psd_checked(gaussian_kernel(blocks, blocks, F.kernel_width))
    return mc_estimates(stream, budget, F.out_dim, lambda g: F.ball_radius * ball_norm(g, gram))[0]


# ------------------------------------------------------ class transformations


def convex_combinations(F: TabulatedClass, weights: np.ndarray) -> TabulatedClass:
    """``F`` followed by ``sum_f w[c, f] f`` for each weight row ``c``."""
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if w.shape[0] == 0:
        return F
    if w.shape[1] != len(F) or np.any(w < 0):
        raise ValueError("weights must be non-negative with one column per function")
    extra = np.tensordot(w, F.values, axes=1)
    return TabulatedClass(np.concatenate([F.values, extra]), F.bound_points)


def convex_closure_sample(F: TabulatedClass, combos: int, stream: GaussianStream) -> TabulatedClass:
    """Append ``combos`` random members of the convex hull (uniform simplex weights)."""
    if combos < 0:
        raise ValueError("combos must be non-negative")
    if combos == 0:
        return F
    e = stream.aux_rng(tag=7).exponential(size=(combos, len(F)))
    return convex_combinations(F, e / e.sum(axis=1, keepdims=True))


def precompose(F, phi: LipschitzMap, Z: PointSet):
    """Tabulate ``F o phi`` on ``Z``; also return ``phi(Z)``.

    ``F`` is a tabulated class whose bound points contain ``phi(Z)``, or a
    sequence of callables.
    """
    Z = as_pointset(Z)
    image = phi.image(Z)
    if isinstance(F, TabulatedClass):
        vals = F.values[:, F.indices_of(image)]
        return TabulatedClass(vals, Z), image
    funcs = list(F)
    return TabulatedClass.from_functions([lambda z, f=f: f(phi(z)) for f in funcs], Z), image


def estimate_quotient_G(F: TabulatedClass, y, y_prime, budget: int, stream: GaussianStream) -> McEstimate:
    """Gaussian average of one quotient set (the per-pair term of R)."""
    return estimate_G(quotient_set(F, y, y_prime), budget, stream)
