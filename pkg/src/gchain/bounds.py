"""Closed-form generalization bounds for composite classes.

Every calculator returns a ``BoundReport``: named terms, each carrying the
formula it comes from, plus a total. The chain-rule constants ``c1``/``c2``
are always explicit inputs; the theory only guarantees that some (large)
universal constants exist.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .classes import (
    TabulatedClass,
    ball_norm,
    distinct_pairs,
    estimate_R_pairs,
    gaussian_kernel,
    lipschitz_constant,
    pair_square_tables,
    psd_checked,
)
from .geometry import PointSet, as_pointset, centered
from .montecarlo import GaussianStream, mc_estimates

CONSTANTS_NOTE = (
    "c1 and c2 are user inputs; the true universal constants of the chain rule are unspecified and rather large"
)


@dataclass
class BoundTerm:
    name: str
    value: float
    paper_ref: str


@dataclass
class BoundReport:
    name: str
    terms: list[BoundTerm]
    total: float
    notes: list[str] = field(default_factory=list)
    inputs: dict = field(default_factory=dict)

    def term(self, name: str) -> float:
        for t in self.terms:
            if t.name == name:
                return t.value
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inputs": self.inputs,
            "terms": [asdict(t) for t in self.terms],
            "total": self.total,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _confidence_term(n: int, delta: float) -> float:
    return math.sqrt(9.0 * math.log(2.0 / delta) / (2.0 * n))


def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")


# --------------------------------------------------------------------- risk


@dataclass(frozen=True)
class RiskBoundInput:
    empirical_mean: float
    n: int
    g_hat: float
    delta: float

    def __post_init__(self):
        _check_delta(self.delta)
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 <= self.empirical_mean <= 1:
            raise ValueError("empirical_mean must lie in [0, 1]")
        if self.g_hat < 0:
            raise ValueError("g_hat must be non-negative")


def risk_bound(inp: RiskBoundInput) -> float:
    """Uniform bound for [0,1]-valued losses:
    ``mean + sqrt(2 pi) G / n + sqrt(9 ln(2/delta) / (2n))``."""
    return inp.empirical_mean + math.sqrt(2.0 * math.pi) * inp.g_hat / inp.n + _confidence_term(inp.n, inp.delta)


def risk_report(inp: RiskBoundInput) -> BoundReport:
    terms = [
        BoundTerm("empirical_mean", inp.empirical_mean, "(1/n) sum f(X_i)"),
        BoundTerm("complexity", math.sqrt(2.0 * math.pi) * inp.g_hat / inp.n, "(sqrt(2 pi)/n) G(F(X))"),
        BoundTerm("confidence", _confidence_term(inp.n, inp.delta), "sqrt(9 ln(2/delta) / (2n))"),
    ]
    return BoundReport("risk", terms, risk_bound(inp), inputs=asdict(inp))


# ---------------------------------------------------------------- two layer


@dataclass(frozen=True)
class TwoLayerSpec:
    """Hilbert-Schmidt ball of radius b1 over a Gaussian kernel of width delta1,
    followed by an RKHS ball of radius b2 over a Gaussian kernel of width delta2."""

    b1: float
    b2: float
    delta1: float
    delta2: float
    m1: int
    n: int
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        for name in ("b1", "b2", "delta1", "delta2", "c1", "c2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.m1 < 1 or self.n < 1:
            raise ValueError("m1 and n must be positive integers")

    @classmethod
    def from_dict(cls, d: dict) -> "TwoLayerSpec":
        return cls(**{k: d[k] for k in ("b1", "b2", "delta1", "delta2", "m1", "n") if k in d}, c1=d.get("c1", 1.0), c2=d.get("c2", 1.0))


def two_layer_bound(spec: TwoLayerSpec, delta: float) -> BoundReport:
    """Chain-rule bound for the kernel feature layer composed with the RKHS-ball layer."""
    _check_delta(delta)
    s = spec
    rn = math.sqrt(s.n)
    g_h = s.b1 * math.sqrt(s.n * s.m1)
    d_h = 2.0 * s.b1 * rn
    lip = s.b2 / s.delta2
    r_f = s.b2 / s.delta2
    g_base = s.b2 * rn
    lg = s.c1 * lip * g_h
    dr = s.c2 * d_h * r_f
    composite = lg + dr + g_base
    complexity = math.sqrt(2.0 * math.pi) * composite / s.n
    conf = _confidence_term(s.n, delta)
    terms = [
        BoundTerm("G_H", g_h, "G(H(x)) <= B1 sqrt(n m1); the first feature map lands on the unit sphere"),
        BoundTerm("D_H", d_h, "D(H(x)) <= 2 B1 sqrt(n)"),
        BoundTerm("L_F", lip, "L(F') <= B2 / Delta2; Gaussian feature map is 1/Delta2-Lipschitz"),
        BoundTerm("R_F", r_f, "R(F') <= B2 / Delta2"),
        BoundTerm("G_base", g_base, "G(F'(h0(x))) <= B2 sqrt(n)"),
        BoundTerm("LG_term", lg, "c1 L(F') G(H(x))"),
        BoundTerm("DR_term", dr, "c2 D(H(x)) R(F')"),
        BoundTerm("composite_G", composite, "c1 B1 B2 sqrt(n m1)/Delta2 + 2 c2 B1 B2 sqrt(n)/Delta2 + B2 sqrt(n)"),
        BoundTerm("complexity", complexity, "sqrt(2 pi/n) B2 (B1 (c1 sqrt(m1) + 2 c2)/Delta2 + 1)"),
        BoundTerm("confidence", conf, "sqrt(9 ln(2/delta) / (2n))"),
    ]
    return BoundReport(
        "two-layer",
        terms,
        complexity + conf,
        notes=[CONSTANTS_NOTE, "total excludes the empirical mean"],
        inputs={**asdict(spec), "delta": delta},
    )


def two_layer_empirical(
    spec: TwoLayerSpec,
    x: PointSet,
    budget: int,
    stream: GaussianStream,
    h0=None,
    sigmas: float = 4.0,
) -> dict:
    """Monte Carlo values of the two Gaussian averages the bound controls.

    ``G(H(x)) = B1 E sqrt(sum_k g_k^T K1 g_k)`` with ``g`` an ``n x m1``
    Gaussian matrix, and ``G(F'(h0(x))) = B2 E sqrt(g^T K2 g)`` with ``K2``
    the second-layer Gram matrix at the base representation ``h0(x)``
    (default: all zeros, i.e. the zero operator). Both inner suprema are
    attained in closed form.
    """
    x = as_pointset(x)
    n = len(x)
    if n != spec.n:
        raise ValueError("x must hold spec.n data points")
    k1 = psd_checked(gaussian_kernel(x.points, x.points, spec.delta1))
    h0 = np.zeros((n, spec.m1)) if h0 is None else np.asarray(h0, dtype=np.float64).reshape(n, spec.m1)
    k2 = psd_checked(gaussian_kernel(h0, h0, spec.delta2))
    m1 = spec.m1

    def g_h(g):
        g = g.reshape(-1, n, m1)
        total = np.zeros(g.shape[0])
        for k in range(m1):
            total += _backend.quad_form(np.ascontiguousarray(g[:, :, k]), k1)
        return spec.b1 * np.sqrt(np.maximum(total, 0.0))

    est_h = mc_estimates(stream, budget, n * m1, g_h)[0]
    est_base = mc_estimates(stream, budget, n, lambda g: spec.b2 * ball_norm(g, k2))[0]
    bound_h = spec.b1 * math.sqrt(n * m1)
    bound_base = spec.b2 * math.sqrt(n)
    lam = max(float(np.linalg.eigvalsh(k1)[-1]), 0.0)
    return {
        "G_H": est_h,
        "G_H_bound": bound_h,
        "G_H_ok": est_h.value <= bound_h + sigmas * est_h.std_error,
        "G_base": est_base,
        "G_base_bound": bound_base,
        "G_base_ok": est_base.value <= bound_base + sigmas * est_base.std_error,
        "D_H": 2.0 * spec.b1 * math.sqrt(lam),
        "D_H_bound": 2.0 * spec.b1 * math.sqrt(n),
        "h0": "zero operator" if np.all(h0 == 0) else "user supplied",
    }


# ---------------------------------------------------------------- multitask


def multitask_bound(spec: TwoLayerSpec, T: int, delta: float) -> BoundReport:
    """Chain-rule bound when the top layer picks one function per task."""
    _check_delta(delta)
    if T < 1:
        raise ValueError("T must be a positive integer")
    s = spec
    lip = s.b2 / s.delta2
    r_single = s.b2 / s.delta2
    r_multi = math.sqrt(T) * r_single
    g_single_base = s.b2 * math.sqrt(s.n)
    g_multi_base = T * g_single_base
    g_h = s.b1 * math.sqrt(T * s.n * s.m1)
    d_h = 2.0 * s.b1 * math.sqrt(T * s.n)
    composite = s.c1 * lip * g_h + s.c2 * d_h * r_multi + g_multi_base
    first = s.c1 * s.b1 * s.b2 / s.delta2 * math.sqrt(s.m1 / (s.n * T))
    second = (2.0 * s.c2 * s.b1 / s.delta2 + 1.0) * s.b2 / math.sqrt(s.n)
    dominant = first + second
    conf = _confidence_term(s.n * T, delta)
    total = math.sqrt(2.0 * math.pi) * dominant + conf
    terms = [
        BoundTerm("L_FT", lip, "L(F^T) = L(F) <= B2 / Delta2"),
        BoundTerm("R_FT", r_multi, "R(F^T) <= sqrt(T) R(F) <= sqrt(T) B2 / Delta2"),
        BoundTerm("G_base_T", g_multi_base, "G(F^T(h0(x))) <= T G(F(h0(x))) <= T B2 sqrt(n)"),
        BoundTerm("G_H", g_h, "G(H(x)) <= B1 sqrt(T n m1)"),
        BoundTerm("D_H", d_h, "D(H(x)) <= 2 B1 sqrt(T n)"),
        BoundTerm("composite_G", composite, "c1 B1 B2 sqrt(T n m1)/Delta2 + (2 c2 B1/Delta2 + 1) B2 T sqrt(n)"),
        BoundTerm("dominant_first", first, "c1 B1 B2 sqrt(m1/(n T)) / Delta2 (shared representation)"),
        BoundTerm("dominant_second", second, "(2 c2 B1/Delta2 + 1) B2 / sqrt(n) (task-specific functions)"),
        BoundTerm("dominant_term", dominant, "composite_G / (n T)"),
        BoundTerm("confidence", conf, "sqrt(9 ln(2/delta) / (2 n T))"),
    ]
    return BoundReport(
        "multitask",
        terms,
        total,
        notes=[CONSTANTS_NOTE, "total = sqrt(2 pi) dominant_term + confidence; excludes the empirical mean"],
        inputs={**asdict(spec), "T": T, "delta": delta},
    )


def stacked_points(base: PointSet, tuples) -> PointSet:
    """Concatenate base points block-wise: row ``(i_1..i_T)`` -> ``(y_i1, ..., y_iT)``."""
    tuples = np.asarray(tuples, dtype=np.int64)
    return PointSet(np.concatenate([base.points[tuples[:, t]] for t in range(tuples.shape[1])], axis=1), [tuple(map(int, r)) for r in tuples])


def default_tuples(n_base: int, T: int, extra: int, rng: np.random.Generator) -> np.ndarray:
    """Single-block variations ``(i, 0, ..., 0)`` plus ``extra`` random tuples."""
    rows = [[i] + [0] * (T - 1) for i in range(n_base)]
    if T > 1 and extra:
        rows += rng.integers(0, n_base, size=(extra, T)).tolist()
    # deduplicate, keep first occurrence
    seen, out = set(), []
    for r in rows:
        if tuple(r) not in seen:
            seen.add(tuple(r))
            out.append(r)
    return np.asarray(out, dtype=np.int64)


def explicit_stack(F: TabulatedClass, T: int, tuples) -> TabulatedClass:
    """All ``|F|^T`` task assignments tabulated on the stacked points."""
    tuples = np.asarray(tuples, dtype=np.int64)
    Ys = stacked_points(F.bound_points, tuples)
    choices = np.array(np.meshgrid(*[np.arange(len(F))] * T, indexing="ij")).reshape(T, -1).T
    vals = np.concatenate([F.values[choices[:, t]][:, tuples[:, t]] for t in range(T)], axis=2)
    return TabulatedClass(vals, Ys)


def stacked_lipschitz(F: TabulatedClass, tuples) -> float:
    """``L(F^T)`` on the stacked points via per-block squared quotients."""
    S, D = pair_square_tables(F, F.bound_points)
    tuples = np.asarray(tuples, dtype=np.int64)
    best = 0.0
    for a in range(len(tuples)):
        for b in range(len(tuples)):
            if a == b:
                continue
            num = 0.0
            den = 0.0
            for i, j in zip(tuples[a], tuples[b]):
                num += S[i, j]
                den += D[i, j]
            if den > 0:
                best = max(best, num / den)
    return math.sqrt(best)


def stacked_R_pairs(F: TabulatedClass, tuples, budget: int, stream: GaussianStream):
    """Per-pair estimates for ``F^T`` without enumerating ``|F|^T`` members.

    The supremum over independent per-task choices splits into a sum of
    per-block suprema, evaluated exactly on each draw.
    """
    tuples = np.asarray(tuples, dtype=np.int64)
    T = tuples.shape[1]
    bp = F.bound_points.points
    m = F.out_dim
    pairs = []
    blocks = []
    for a in range(len(tuples)):
        for b in range(len(tuples)):
            if a == b:
                continue
            den = sum(float((bp[i] - bp[j]) @ (bp[i] - bp[j])) for i, j in zip(tuples[a], tuples[b]))
            if den <= 0:
                continue
            dist = math.sqrt(den)
            q = [centered((F.values[:, i] - F.values[:, j]) / dist) for i, j in zip(tuples[a], tuples[b])]
            pairs.append((a, b))
            blocks.append(q)

    def evaluate(g):
        out = np.zeros((len(blocks), g.shape[0]))
        for p, q in enumerate(blocks):
            for t in range(T):
                out[p] += _backend.max_affine(np.ascontiguousarray(g[:, t * m : (t + 1) * m]), q[t])
        return out

    return pairs, mc_estimates(stream, budget, T * m, evaluate, n_out=len(blocks))


EXPLICIT_LIMIT = 4096


def multitask_scaling_empirical(
    F: TabulatedClass,
    T: int,
    budget: int,
    stream: GaussianStream,
    tuples=None,
    extra_tuples: int = 6,
    sigmas: float = 4.0,
) -> dict:
    """Check ``L(F^T) = L(F)`` and ``R(F^T) <= sqrt(T) R(F)`` on a stacked sample.

    ``F`` is tabulated on the base points; stacked points are T-tuples of
    base indices (default: single-block variations plus random tuples). The
    stacked class is tabulated explicitly when it has at most
    ``EXPLICIT_LIMIT`` members, otherwise evaluated block-wise.
    """
    if T < 1:
        raise ValueError("T must be a positive integer")
    base = F.bound_points
    if tuples is None:
        tuples = default_tuples(len(base), T, extra_tuples, stream.aux_rng(tag=23))
    tuples = np.asarray(tuples, dtype=np.int64)
    if tuples.ndim != 2 or tuples.shape[1] != T or tuples.min() < 0 or tuples.max() >= len(base):
        raise ValueError("stacked tuples must have T base indices each")

    if not distinct_pairs(base.points):
        raise ValueError("base points need two distinct members")
    l_base = lipschitz_constant(F, base)
    l_stack = stacked_lipschitz(F, tuples)

    _, r_base_pairs = estimate_R_pairs(F, base, budget, stream)
    r_base = max(r_base_pairs, key=lambda e: e.value)
    if len(F) ** T <= EXPLICIT_LIMIT:
        FT = explicit_stack(F, T, tuples)
        _, r_stack_pairs = estimate_R_pairs(FT, FT.bound_points, budget, stream)
        route = "explicit"
    else:
        _, r_stack_pairs = stacked_R_pairs(F, tuples, budget, stream)
        route = "blockwise"
    r_stack = max(r_stack_pairs, key=lambda e: e.value)
    slack = sigmas * math.hypot(r_stack.std_error, math.sqrt(T) * r_base.std_error)
    return {
        "T": T,
        "route": route,
        "L_F": l_base,
        "L_FT": l_stack,
        "L_equal": l_stack == l_base,
        "R_F": r_base,
        "R_FT": r_stack,
        "R_rule_ok": r_stack.value <= math.sqrt(T) * r_base.value + slack,
        "slack": slack,
    }


# --------------------------------------------------------------------- deep


@dataclass(frozen=True)
class LayerSummary:
    """Measured or bounded properties of layer ``k`` acting on ``Y_{k-1}``."""

    lip: float
    r_val: float
    g_base: float
    diam_in: float
    out_dim: int = 1
    g0: float = 0.0  # G(Y_0); read from the first layer only

    def __post_init__(self):
        for name in ("lip", "r_val", "g_base", "diam_in", "g0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.out_dim < 1:
            raise ValueError("out_dim must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSummary":
        return cls(**d)


def deep_by_induction(layers, c1: float, c2: float) -> float:
    """Apply the single-layer chain rule layer by layer."""
    g = layers[0].g0
    for layer in layers:
        g = c1 * layer.lip * g + c2 * layer.diam_in * layer.r_val + layer.g_base
    return g


def deep_closed_form(layers, c1: float, c2: float) -> float:
    """``sum_k c1^(K-k) prod_{j>k} L_j (c2 D_{k-1} R_k + G_k)`` plus the ``G(Y_0)`` carry."""
    K = len(layers)
    total = 0.0
    for k in range(K):
        prod = 1.0
        for j in range(k + 1, K):
            prod *= layers[j].lip
        total += c1 ** (K - 1 - k) * prod * (c2 * layers[k].diam_in * layers[k].r_val + layers[k].g_base)
    carry = c1**K * math.prod(layer.lip for layer in layers) * layers[0].g0
    return total + carry


def deep_iterated_bound(layers, c1: float = 1.0, c2: float = 1.0, rtol: float = 1e-12) -> BoundReport:
    """Iterated chain-rule bound on ``G(Y_K)``; both evaluation orders must agree."""
    layers = list(layers)
    if not layers:
        raise ValueError("need at least one layer")
    if c1 <= 0 or c2 <= 0:
        raise ValueError("c1 and c2 must be positive")
    ind = deep_by_induction(layers, c1, c2)
    closed = deep_closed_form(layers, c1, c2)
    if not math.isclose(ind, closed, rel_tol=rtol, abs_tol=0.0) and not (ind == closed == 0.0):
        raise ArithmeticError(f"induction {ind!r} and closed form {closed!r} disagree")
    K = len(layers)
    terms = []
    for k, layer in enumerate(layers):
        weight = c1 ** (K - 1 - k) * math.prod(l.lip for l in layers[k + 1 :])
        terms.append(
            BoundTerm(
                f"layer_{k + 1}",
                weight * (c2 * layer.diam_in * layer.r_val + layer.g_base),
                "c1^(K-k) prod_{j>k} L(F_j) (c2 D(Y_{k-1}) R(F_k) + G_k)",
            )
        )
    if layers[0].g0:
        terms.append(BoundTerm("input_carry", closed - sum(t.value for t in terms), "c1^K prod_j L(F_j) G(Y_0)"))
    terms.append(BoundTerm("induction", ind, "layer-by-layer chain rule"))
    return BoundReport(
        "deep",
        terms,
        closed,
        notes=[CONSTANTS_NOTE, "empty products are 1", "G(Y_0) vanishes when Y_0 is a single sample vector"],
        inputs={"c1": c1, "c2": c2, "layers": [asdict(l) for l in layers]},
    )


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())
