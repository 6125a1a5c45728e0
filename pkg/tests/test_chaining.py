import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from gchain import (
    GaussianStream,
    PartitionTree,
    PointSet,
    SubgaussianSpec,
    TabulatedClass,
    build_partition_tree,
    chaining_functional,
    chaining_thresholds,
    covering_number,
    diameter,
    dudley_integral,
    empirical_threshold_check,
    estimate_G,
    explicit_esup_bound,
    validate_tree,
)
from gchain.chaining import coarsest_level
from gchain.montecarlo import binomial_sigma

from conftest import random_points

TWO = PointSet(np.array([[1.0], [-1.0]]))


# ---------------------------------------------------------------- trees

def test_singleton_tree():
    Y = PointSet(np.array([[0.3, 0.4]]))
    t = build_partition_tree(Y)
    assert t.depth == 1 and t.levels == [[[0]]] and t.k0 == 0
    assert chaining_functional(t) == 0.0
    assert np.all(chaining_thresholds(t, 1.0, 0.5) == 0.0)
    assert explicit_esup_bound(t) == 0.0
    assert empirical_threshold_check(Y, SubgaussianSpec(), t, 0.1, 1000, GaussianStream(0)) == 0.0


def test_two_point_tree_by_hand():
    t = build_partition_tree(TWO)
    assert t.k0 == 0
    assert t.levels == [[[0, 1]], [[0], [1]]]
    assert validate_tree(t, TWO) == []
    assert math.isclose(chaining_functional(t), 0.5 * math.sqrt(math.log(2)), rel_tol=1e-15)
    assert np.allclose(chaining_thresholds(t, 1.0, 0.5), math.sqrt(8 * math.log(8)), rtol=1e-15)


@pytest.mark.parametrize("diam,ratio", [(2.0, 2.0), (1.0, 2.0), (3.0, 2.0), (0.01, 3.0), (1e6, 2.5), (2 * 2.0**-5, 2.0)])
def test_coarsest_level_rule(diam, ratio):
    k = coarsest_level(diam, ratio)
    assert 2 * ratio**-k >= diam and 2 * ratio ** -(k + 1) < diam


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 60), dim=st.integers(1, 5), ratio=st.sampled_from([2.0, 2.5, 4.0]))
def test_trees_pass_independent_validator(seed, n, dim, ratio):
    Y = random_points(seed, n, dim)
    t = build_partition_tree(Y, ratio)
    assert validate_tree(t, Y) == []
    # fully refined: every leaf is a singleton
    assert all(len(c) == 1 for c in t.levels[-1])


def test_fifty_points_in_r4_valid():
    Y = random_points(50, 50, 4)
    assert validate_tree(build_partition_tree(Y), Y) == []


def test_duplicates_terminate_and_validate():
    Y = PointSet(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]))
    t = build_partition_tree(Y)
    assert validate_tree(t, Y) == []
    assert sorted(map(sorted, t.levels[-1])) == [[0, 1], [2, 3]]


def test_validator_detects_broken_trees():
    Y = random_points(1, 10, 2)
    t = build_partition_tree(Y)
    d = t.to_dict()
    d["k0"] -= 1
    assert validate_tree(PartitionTree.from_dict(d), Y)
    d = t.to_dict()
    d["levels"][1][0] = d["levels"][1][0][1:]
    assert validate_tree(PartitionTree.from_dict(d), Y)
    d = t.to_dict()
    d["measure"] = [1.0] + [0.0] * 9
    assert validate_tree(PartitionTree.from_dict(d), Y)


def test_root_and_max_depth():
    Y = random_points(2, 20, 3)
    t = build_partition_tree(Y, max_depth=2, root=5)
    assert t.depth == 3 and t.representatives[0] == [5]
    assert validate_tree(t, Y) == []
    assert 5 in t.representatives[1]


def test_parent_representative_persists():
    Y = random_points(3, 30, 2)
    t = build_partition_tree(Y)
    for j in range(1, t.depth):
        for c, p in enumerate(t.parents[j]):
            parent_rep = t.representatives[j - 1][p]
            if parent_rep in t.levels[j][c]:
                assert t.representatives[j][c] == parent_rep


def test_tree_json_roundtrip(tmp_path):
    Y = random_points(4, 15, 2)
    t = build_partition_tree(Y)
    t.save(tmp_path / "t.json")
    u = PartitionTree.load(tmp_path / "t.json")
    assert u.to_dict() == t.to_dict()


def test_chain_follows_representatives():
    Y = random_points(5, 12, 2)
    t = build_partition_tree(Y)
    for y in range(12):
        ch = t.chain(y)
        assert ch[0] == 0 and ch[-1] == y


# ---------------------------------------------------------------- functionals

def test_leaf_measure_refit():
    Y = random_points(6, 40, 3)
    full = build_partition_tree(Y)
    assert np.allclose(full.with_leaf_measure().measure, full.measure)
    t = build_partition_tree(Y, max_depth=2)
    r = t.with_leaf_measure()
    assert validate_tree(r, Y) == []
    assert np.allclose(r.cell_masses(r.depth - 1), 1.0 / len(r.levels[-1]))


def test_leaf_measure_helps_unbalanced_tree():
    # one tight cluster of 9 points and one far point: uniform mass starves the loner
    pts = np.concatenate([np.random.default_rng(0).normal(scale=1e-3, size=(9, 2)), [[10.0, 0.0]]])
    Y = PointSet(pts)
    t = build_partition_tree(Y, max_depth=1)
    assert chaining_functional(t.with_leaf_measure()) < chaining_functional(t)


@given(seed=st.integers(0, 2**32 - 1))
def test_thresholds_monotone(seed):
    t = build_partition_tree(random_points(seed, 15, 3))
    deltas = np.array([0.01, 0.05, 0.1, 0.3, 0.9])
    T = chaining_thresholds(t, 1.0, deltas)
    assert np.all(np.diff(T, axis=0) <= 0)
    T2 = chaining_thresholds(t, 3.0, deltas)
    assert np.all(T2 >= T)


def test_threshold_errors():
    t = build_partition_tree(TWO)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            chaining_thresholds(t, 1.0, bad)
    with pytest.raises(ValueError):
        chaining_thresholds(t, 0.5, 0.1)


def test_thresholds_grow_with_log_K():
    t = build_partition_tree(random_points(7, 20, 2))
    base = chaining_thresholds(t, 1.0, 0.1).max()
    a_sum = sum(t.ratio ** (1 - (t.k0 + j)) for j in range(1, t.depth))
    for K in (2.0, 10.0, 1e3, 1e6):
        grow = chaining_thresholds(t, K, 0.1).max() - base
        assert 0 <= grow <= math.sqrt(8) * a_sum * math.sqrt(math.log(K)) * (1 + 1e-12)


def test_explicit_bound_dominates_exact_integral_two_points():
    t = build_partition_tree(TWO)
    exact = integrate.quad(lambda d: math.sqrt(8 * math.log(2 / (0.5 * d))), 0, 1)[0]
    for q in (8, 64, 256, 2048):
        b = explicit_esup_bound(t, 1.0, q)
        assert b >= exact
    assert explicit_esup_bound(t, 1.0, 4096) <= exact * 1.01
    with pytest.raises(ValueError):
        explicit_esup_bound(t, 1.0, 7)


def test_explicit_bound_two_points_vs_G():
    t = build_partition_tree(TWO)
    g = estimate_G(TWO, 100_000, GaussianStream(0))
    assert explicit_esup_bound(t) >= g.value


@pytest.mark.parametrize("seed", range(5))
def test_explicit_bound_dominates_G(seed):
    Y = random_points(seed, 40, 4)
    t = build_partition_tree(Y)
    g = estimate_G(Y, 20_000, GaussianStream(seed))
    assert explicit_esup_bound(t, 1.0) >= g.value - 4 * g.std_error
    assert math.isfinite(chaining_functional(t))


# ---------------------------------------------------------------- tail check

@pytest.mark.parametrize("seed", range(3))
def test_threshold_exceedance_canonical(seed):
    Y = random_points(seed, 20, 3)
    t = build_partition_tree(Y)
    freq = empirical_threshold_check(Y, SubgaussianSpec(), t, 0.1, 10_000, GaussianStream(seed))
    assert freq < 0.1 + 3 * binomial_sigma(0.1, 10_000)


def test_threshold_exceedance_chainrule_process():
    rng = np.random.default_rng(3)
    Y = random_points(3, 10, 3)
    F = TabulatedClass(rng.standard_normal((8, 10, 4)), Y)
    spec = SubgaussianSpec.for_class(F, Y, 5000, GaussianStream(1))
    assert spec.k_factor >= 1
    t = build_partition_tree(Y)
    freq = empirical_threshold_check(Y, spec, t, 0.1, 10_000, GaussianStream(2))
    assert freq < 0.1 + 3 * binomial_sigma(0.1, 10_000)


def test_subgaussian_spec_validation():
    with pytest.raises(ValueError):
        SubgaussianSpec(0.5)
    with pytest.raises(ValueError):
        SubgaussianSpec(1.0, "chainrule-process")
    t = build_partition_tree(TWO)
    with pytest.raises(ValueError):
        empirical_threshold_check(TWO, SubgaussianSpec(1.0, "brownian"), t, 0.1, 100, GaussianStream(0))


# ---------------------------------------------------------------- Dudley

def test_covering_examples():
    assert covering_number(PointSet(np.array([[0.0]])), 0.1) == 1
    assert covering_number(TWO, 0.5) == 2
    assert covering_number(TWO, 2.0) == 1
    with pytest.raises(ValueError):
        covering_number(TWO, 0.0)


def test_dudley_examples():
    assert dudley_integral(PointSet(np.array([[0.0, 1.0]])), [1.0, 0.5, 0.1]) == 0.0
    with pytest.raises(ValueError):
        dudley_integral(TWO, [])
    Y = random_points(9, 30, 3)
    val = dudley_integral(Y, np.geomspace(diameter(Y), 1e-3, 40))
    assert val > 0 and math.isfinite(val)
