import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisenberg_mf.compact import (CompactModel, TOTAL_CURVATURE_MAX, exact_marginal, free_energy_N,
                                   jensen_lower_bound, log_partition_function, pair_mean_U, subadditivity_check,
                                   synth_sphere_like_model, two_node_model)
from heisenberg_mf.errors import DomainError
from heisenberg_mf.meanfield import solve_fixed_point
from heisenberg_mf.measures import free_energy_density
from heisenberg_mf.meanfield import DensityField


def brute_force(model, beta, n):
    """Direct enumeration of node n-tuples: (M^(n), joint probabilities)."""
    a = model.volumes * model.Q
    m = a.size
    joint = {}
    for tup in itertools.product(range(m), repeat=n):
        e = sum(model.kernel[tup[i], tup[j]] for i in range(n) for j in range(i + 1, n))
        joint[tup] = math.prod(a[list(tup)]) * math.exp(beta / max(n - 1, 1) * e)
    return sum(joint.values()), joint


@pytest.fixture(scope="module")
def model5():
    return synth_sphere_like_model(5, 30.0, seed=9)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_partition_function_vs_enumeration(model5, n):
    z, _ = brute_force(model5, 40.0, n)
    assert math.isclose(log_partition_function(model5, 40.0, n), math.log(z), rel_tol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_exact_marginal_vs_enumeration(model5, n):
    z, joint = brute_force(model5, 25.0, n)
    m1 = np.zeros(5)
    m2 = np.zeros((5, 5))
    for tup, p in joint.items():
        m1[tup[0]] += p / z
        m2[tup[0], tup[1]] += p / z
    assert np.allclose(exact_marginal(model5, 25.0, n, 1), m1, rtol=1e-12)
    assert np.allclose(exact_marginal(model5, 25.0, n, 2), m2, rtol=1e-12)


def test_two_node_closed_form():
    m = two_node_model(3.0)
    assert m.node_count == 2
    assert math.isclose(m.total_curvature, 3.0, rel_tol=1e-14)
    beta = 5.0
    a = m.volumes * m.Q
    U = m.kernel
    z2 = a[0] ** 2 * math.exp(beta * U[0, 0]) + a[1] ** 2 * math.exp(beta * U[1, 1]) \
        + 2 * a[0] * a[1] * math.exp(beta * U[0, 1])
    assert math.isclose(math.exp(log_partition_function(m, beta, 2)), z2, rel_tol=1e-13)
    # symmetric pair: the marginal is uniform
    assert np.allclose(exact_marginal(m, beta, 3), [0.5, 0.5])


def test_kernel_is_nonpositive_and_symmetric():
    m = synth_sphere_like_model(20, 40.0, seed=1)
    assert np.max(m.kernel) == 0.0
    assert np.array_equal(m.kernel, m.kernel.T)


def test_deterministic_and_seed_sensitive():
    a = synth_sphere_like_model(10, 10.0, seed=3)
    b = synth_sphere_like_model(10, 10.0, seed=3)
    c = synth_sphere_like_model(10, 10.0, seed=4)
    assert np.array_equal(a.kernel, b.kernel) and np.array_equal(a.Q, b.Q)
    assert not np.array_equal(a.kernel, c.kernel)


def test_total_curvature_domain():
    with pytest.raises(DomainError):
        synth_sphere_like_model(5, TOTAL_CURVATURE_MAX, seed=0)
    with pytest.raises(DomainError):
        log_partition_function(two_node_model(), 1.0, 5)


def test_model_validation():
    with pytest.raises(ValueError):
        CompactModel(np.ones(2), np.array([[0, 1], [0, 0.0]]), np.ones(2), np.ones(2))
    with pytest.raises(ValueError):
        CompactModel(np.ones(2), np.zeros((2, 2)), np.array([1.0, -1.0]), np.ones(2))
    with pytest.raises(ValueError):
        CompactModel.from_dict({"volumes": [1], "kernel": [[0]], "Q": [1], "Qbar_prime": [1], "extra": 1})


def test_yaml_round_trip(tmp_path):
    m = synth_sphere_like_model(7, 12.0, seed=2)
    p = tmp_path / "m.yaml"
    m.save(p)
    r = CompactModel.load(p)
    for name in ("volumes", "kernel", "Q", "Qbar_prime", "positions"):
        assert np.array_equal(getattr(m, name), getattr(r, name))
    assert r.gamma == m.gamma


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.0, 150.0), st.integers(3, 8))
def test_subadditivity_and_jensen(seed, total, nodes):
    m = synth_sphere_like_model(nodes, total, seed=seed)
    beta = 2 * m.total_curvature
    for n1, n2 in [(1, 1), (1, 2), (2, 2), (1, 3)]:
        assert subadditivity_check(m, beta, n1, n2)[2]
    for n in (2, 3, 4):
        assert jensen_lower_bound(m, beta, n)[2]


def test_subadditivity_negative_control():
    """Without the U <= 0 shift the single-particle blocks can break the inequality."""
    m = synth_sphere_like_model(6, 100.0, seed=0, nonpositive=False)
    beta = 2 * m.total_curvature
    assert pair_mean_U(m) > 0
    lhs, rhs, holds = subadditivity_check(m, beta, 1, 1)
    assert not holds and lhs > 0 == rhs


def test_fixed_point_maximises_free_energy_functional():
    m = synth_sphere_like_model(8, 60.0, seed=5)
    beta = 2 * m.total_curvature
    rho, _ = solve_fixed_point(m, beta)
    f0 = free_energy_density(rho, m, beta)
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rho.values * np.exp(0.2 * rng.normal(size=m.size))
        v /= np.sum(m.volumes * v)
        assert free_energy_density(DensityField(m, v), m, beta) <= f0 + 1e-12


@pytest.mark.xfail(strict=True, reason="the N-particle marginal is not dominated by a fixed multiple of mu1 "
                                        "uniformly in N at this coupling; the ratio grows with N")
def test_marginal_domination_uniform_in_n():
    m = synth_sphere_like_model(10, 140.0, seed=7)
    beta = 2 * m.total_curvature
    mu1 = m.base_probability
    ratios = [float(np.max(exact_marginal(m, beta, n) / mu1)) for n in (2, 3, 4)]
    assert ratios[-1] <= ratios[0] * 1.05
