import math

import numpy as np
import pytest

from heisenberg_mf.compact import synth_sphere_like_model
from heisenberg_mf.errors import ConvergenceError, DomainError, InvariantError
from heisenberg_mf.grids import GaugePolarGrid, TensorGrid
from heisenberg_mf.heisenberg import dilate_array
from heisenberg_mf.meanfield import (DensityField, base_field, fixed_point_residual, meanfield_map,
                                     reconstruct_u_compact, reconstruct_u_heisenberg, solve_fixed_point)
from heisenberg_mf.measures import WeightedMeasure


@pytest.fixture(scope="module")
def base():
    return WeightedMeasure.from_presets(radius=2.0)


@pytest.fixture(scope="module")
def small_grid():
    return GaugePolarGrid(2.0, 24, 24)


def test_map_positive_and_normalised(base, small_grid):
    rng = np.random.default_rng(0)
    v = rng.random(small_grid.size) + 0.01
    rho = DensityField(small_grid, v).normalized()
    out = meanfield_map(rho, base, 3.0)
    assert np.all(out.values > 0)
    assert abs(out.total_mass - 1) < 1e-13


def test_map_rejects_unnormalised_and_bad_beta(base, small_grid):
    rho = DensityField(small_grid, np.ones(small_grid.size))
    with pytest.raises(InvariantError):
        meanfield_map(rho, base, 1.0)
    with pytest.raises(DomainError):
        meanfield_map(rho.normalized(), base, 8.0)
    with pytest.raises(DomainError):
        meanfield_map(rho.normalized(), base, -0.1)


def _permutation(nodes, fn):
    key = {tuple(np.round(n, 10)): i for i, n in enumerate(nodes)}
    return np.array([key[tuple(np.round(fn(n), 10))] for n in nodes])


@pytest.mark.parametrize("fn", [lambda n: np.array([-n[1], n[0], n[2]]),
                                lambda n: np.array([n[0], -n[1], -n[2]])])
def test_map_equivariant_under_automorphisms(base, fn):
    g = TensorGrid(2.0, 6, 6)
    perm = _permutation(g.nodes, fn)
    rng = np.random.default_rng(1)
    rho = DensityField(g, rng.random(g.size) + 0.1).normalized()
    moved = DensityField(g, rho.values[perm])
    a = meanfield_map(moved, base, 4.0).values
    b = meanfield_map(rho, base, 4.0).values[perm]
    assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_convergence_error_carries_report(base, small_grid):
    with pytest.raises(ConvergenceError) as ei:
        solve_fixed_point(base, 6.0, grid=small_grid, max_iter=3)
    assert ei.value.report.iterations == 3
    assert not ei.value.report.converged
    rho, rep = solve_fixed_point(base, 6.0, grid=small_grid, max_iter=3, raise_on_failure=False)
    assert rep.iterations == 3 and abs(rho.total_mass - 1) < 1e-12


def test_solution_is_fixed_point(base, small_grid):
    rho, rep = solve_fixed_point(base, 5.0, grid=small_grid)
    assert rep.converged and rep.final_residual < 1e-8
    assert fixed_point_residual(rho, base, 5.0) < 1e-8
    assert rep.max_mass_error < 1e-12


def test_beta_zero_is_base(base, small_grid):
    rho, rep = solve_fixed_point(base, 0.0, grid=small_grid)
    assert rep.iterations == 1
    assert np.allclose(rho.values, base_field(base, small_grid).values, rtol=1e-14)
    u = reconstruct_u_heisenberg(rho, base, 0.0, normalization="lambda")
    k = base.k_at(small_grid.nodes)
    assert np.allclose(u.values - u.c, 0.5 * base.k_exponent * k, atol=1e-13)
    with pytest.raises(DomainError):
        reconstruct_u_heisenberg(rho, base, 0.0, normalization="equation")


def test_lp_norms_stable_under_refinement(base):
    norms = []
    for n in (12, 24, 48):
        g = GaugePolarGrid(2.0, n, n)
        rho, _ = solve_fixed_point(base, 5.0, grid=g)
        norms.append([float(np.sum(g.weights * rho.values ** p)) ** (1 / p) for p in (2, 4)])
    d1 = np.abs(np.subtract(norms[1], norms[0]))
    d2 = np.abs(np.subtract(norms[2], norms[1]))
    # Cauchy: differences contract under refinement, and the finest is already small
    assert np.all(d2 < 0.5 * d1)
    assert np.all(d2 < 0.03 * np.array(norms[2]))


def test_equation_normalization_total(base, small_grid):
    rho, _ = solve_fixed_point(base, 5.0, grid=small_grid)
    u = reconstruct_u_heisenberg(rho, base, 5.0)
    assert math.isclose(float(np.sum(small_grid.weights * u.q_exp_2u())), 2.5, rel_tol=1e-12)
    # u and rho carry the same shape: Q e^{2u} is proportional to rho
    # exactly at a fixed point; here up to the solver tolerance relative to max(rho)
    ratio = u.q_exp_2u() / rho.values
    bound = 4e-8 * rho.values.max() / rho.values.min()
    assert np.ptp(ratio) < bound * ratio.mean()


def test_far_field_log_two_increments():
    base = WeightedMeasure.from_presets("gauge_gaussian", "zero", radius=2.0)
    g = GaugePolarGrid(2.0, 24, 24)
    beta = 3.0
    rho, _ = solve_fixed_point(base, beta, grid=g)
    u = reconstruct_u_heisenberg(rho, base, beta)
    x = np.array([[50.0, 0.0, 0.0], [0.0, 30.0, 900.0], [20.0, 10.0, -700.0]])
    inc = u.at(dilate_array(2.0, x)) - u.at(x)
    assert np.allclose(inc, -0.5 * beta * math.log(2.0), atol=5e-4)


def test_compact_reconstruction_identity():
    model = synth_sphere_like_model(12, 20.0, seed=4)
    beta = 2 * model.total_curvature
    rho, rep = solve_fixed_point(model, beta)
    u, lam, c = reconstruct_u_compact(rho, model)
    assert math.isclose(math.exp(2 * c), lam, rel_tol=1e-12)
    f = model.Q * np.exp(2 * u)
    assert np.allclose(f / np.sum(model.volumes * f), rho.values, rtol=1e-7)
    bad = DensityField(model, np.full(model.size, 1 / model.total_volume))
    with pytest.raises(DomainError):
        reconstruct_u_compact(bad, model)
