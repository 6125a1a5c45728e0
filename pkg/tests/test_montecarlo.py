import math

import numpy as np
import pytest

from gchain.montecarlo import BLOCK_SIZE, GaussianStream, McEstimate, binomial_sigma, mc_estimates, mc_samples


def test_vector_is_pure_function_of_index():
    s = GaussianStream(7, 3)
    full = s.normals(2 * BLOCK_SIZE + 5, 4)
    for k in (0, 1, BLOCK_SIZE - 1, BLOCK_SIZE, 2 * BLOCK_SIZE + 4):
        assert np.array_equal(s.vector(k, 4), full[k])


def test_streams_are_distinct():
    a = GaussianStream(7, 0).normals(10, 3)
    b = GaussianStream(7, 1).normals(10, 3)
    c = GaussianStream(8, 0).normals(10, 3)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


def test_seed_range_enforced():
    with pytest.raises(ValueError):
        GaussianStream(-1)
    with pytest.raises(ValueError):
        GaussianStream(2**64)
    GaussianStream(2**64 - 1)


def test_workers_do_not_change_result():
    s = GaussianStream(11)
    f = lambda g: np.abs(g).sum(axis=1)[None, :]
    a = mc_estimates(s, 5 * BLOCK_SIZE + 17, 3, f)
    b = mc_estimates(s, 5 * BLOCK_SIZE + 17, 3, f, workers=4)
    assert a == b


def test_std_error_is_sample_std_over_sqrt_n():
    s = GaussianStream(2)
    n = 3 * BLOCK_SIZE + 100
    f = lambda g: g[:, 0] ** 2
    est = mc_estimates(s, n, 2, f)[0]
    raw = mc_samples(s, n, 2, f)[0]
    assert est.samples == n
    assert math.isclose(est.value, raw.mean(), rel_tol=1e-12)
    assert math.isclose(est.std_error, raw.std(ddof=1) / math.sqrt(n), rel_tol=1e-10)


def test_budget_must_allow_std_error():
    with pytest.raises(ValueError):
        mc_estimates(GaussianStream(0), 1, 1, lambda g: g[:, 0])


def test_estimate_roundtrip():
    e = McEstimate(1.5, 0.25, 100, 9)
    assert McEstimate.from_dict(e.to_dict()) == e


def test_binomial_sigma():
    assert binomial_sigma(0.5, 100) == 0.05
    assert binomial_sigma(0.0, 100) == 0.0
