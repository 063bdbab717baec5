import math

import numpy as np
import pytest
from scipy import stats

from heisenberg_mf import _backend
from heisenberg_mf.ensemble import (Chain, EnsembleParams, estimate_marginal, gibbs_log_density,
                                    integrated_autocorr_time, load_chain, metropolis_update, pair_log_moment,
                                    run_chain, run_chains, save_chain, tightness_probe)
from heisenberg_mf.errors import DomainError, InsufficientSamplesError
from heisenberg_mf.heisenberg import gauge_array, sample_ball
from heisenberg_mf.measures import ParticleConfig, WeightedMeasure


@pytest.fixture(scope="module")
def flat():
    return WeightedMeasure.from_presets("unit", "zero", radius=1.5)


def params(**kw):
    d = dict(beta=3.0, n_particles=4, chain_length=400, burn_in=100, proposal_scale=0.6, seed=1)
    d.update(kw)
    return EnsembleParams(**d)


@pytest.mark.parametrize("kw", [dict(beta=-1.0), dict(beta=8.0), dict(n_particles=1), dict(burn_in=400),
                                dict(proposal_scale=0.0), dict(thin=0), dict(seed=-3)])
def test_params_validation(kw):
    with pytest.raises(DomainError):
        params(**kw)


def test_n_records_with_thinning():
    assert params(thin=7).n_records == len(range(100, 400, 7))


def test_regime_check():
    b = WeightedMeasure.from_presets(gamma=2.0, radius=1.5)
    with pytest.raises(DomainError):
        run_chain(params(beta=4.0), b)


def test_gibbs_log_density(flat):
    c = ParticleConfig(np.array([[0.1, 0, 0], [0, 0.5, 0.2], [0.3, 0.3, -0.1]]))
    p = params(n_particles=3)
    assert gibbs_log_density(ParticleConfig(np.array([[2.0, 0, 0], [0, 0, 0]])), p, flat) == -math.inf
    from heisenberg_mf.heisenberg import HPoint, dist
    pts = c.points
    lsum = sum(math.log(dist(pts[i], pts[j])) for i in range(3) for j in range(i + 1, 3))
    # flat weight: only the interaction contributes, beta * (-gamma / (N - 1)) * sum ln dist
    assert math.isclose(gibbs_log_density(c, p, flat), -p.beta * lsum / 2, rel_tol=1e-12)


@pytest.mark.skipif("compiled" not in _backend.available(), reason="compiled core not built")
def test_backends_give_identical_chains():
    base = WeightedMeasure.from_presets(radius=1.5)
    a = run_chain(params(), base, backend="compiled")
    b = run_chain(params(), base, backend="python")
    assert np.array_equal(a.samples, b.samples)
    assert a.acceptance_rate == b.acceptance_rate


def test_callable_weight_path_matches_polynomial_path(flat):
    table = WeightedMeasure.from_presets({"table": {"s": [0, 5], "t": [-5, 5], "values": [[1, 1], [1, 1]]}},
                                         "zero", radius=1.5)
    assert table.log_weight_poly is None
    a = run_chain(params(chain_length=150, burn_in=10), flat, backend="python")
    b = run_chain(params(chain_length=150, burn_in=10), table)
    assert np.array_equal(a.samples, b.samples)


def test_deterministic_and_threads(flat):
    p = params(chain_length=300)
    serial = run_chains(p, flat, 3, threads=1)
    threaded = run_chains(p, flat, 3, threads=3)
    for s, t in zip(serial, threaded):
        assert np.array_equal(s.samples, t.samples)
    assert not np.array_equal(serial[0].samples, serial[1].samples)


def test_samples_stay_in_ball(flat):
    c = run_chain(params(proposal_scale=2.0), flat)
    assert np.all(gauge_array(c.samples) <= flat.radius)


def test_beta_zero_radial_law(flat):
    """At beta = 0 with Q = 1, K = 0 each particle is uniform on B_R: P(|x| <= r) = (r/R)^4."""
    chains = run_chains(params(beta=0.0, chain_length=6000, burn_in=500, proposal_scale=0.8, thin=10), flat, 4)
    g = np.concatenate([gauge_array(c.samples[:, 0]) for c in chains])
    assert stats.kstest((g / flat.radius) ** 4, "uniform").pvalue > 1e-3


def test_update_preserves_exact_samples(flat):
    """Stationarity: exact draws from the beta = 0 law stay distributed the same after sweeps."""
    rng = np.random.default_rng(4)
    M, N = 3000, 3
    X = sample_ball(M * N, flat.radius, rng).reshape(M, N, 3)
    Y = metropolis_update(X, params(beta=0.0, n_particles=N), flat, seed=5, sweeps=3)
    assert not np.array_equal(X, Y)
    g = gauge_array(Y).ravel()
    assert stats.kstest((g / flat.radius) ** 4, "uniform").pvalue > 1e-3


def test_symmetry_and_exchangeability(flat):
    chains = run_chains(params(beta=4.0, chain_length=5000, burn_in=500, proposal_scale=1.0, thin=5), flat, 4)
    s = np.concatenate([c.samples for c in chains])
    # Q = 1, K = 0: the law is invariant under rotations and (x, y, t) -> (x, -y, -t)
    for coord in range(3):
        v = s[..., coord].ravel()
        assert abs(v.mean()) < 5 * v.std() / math.sqrt(v.size / 20)
    edges = np.linspace(0, 1.5, 6)
    pooled = estimate_marginal(chains, edges=edges, min_ess=0)
    for k in range(4):
        sub = [Chain(c.samples[:, k:k + 1], c.params, c.acceptance_rate, c.radius) for c in chains]
        est = estimate_marginal(sub, edges=edges, min_ess=0)
        assert np.all(np.abs(est.masses - pooled.masses) <= 5 * est.stderr + 1e-12)


def test_autocorr_time_ar1():
    rng = np.random.default_rng(0)
    phi = 0.6
    n = 200_000
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    tau = integrated_autocorr_time(x)
    assert abs(tau - (1 + phi) / (1 - phi)) < 0.1 * (1 + phi) / (1 - phi)
    assert integrated_autocorr_time(np.ones(100)) == 1.0


def test_point_mass_histogram():
    p = params(n_particles=2, chain_length=200, burn_in=0)
    samples = np.tile(np.array([[0.7, 0.0, 0.0], [0.0, 0.0, 0.09]]), (200, 1, 1))
    c = Chain(samples, p, 0.0, 1.5)
    est = estimate_marginal(c, k=1, edges=np.linspace(0, 1.5, 16), min_ess=0)
    assert est.masses[int(0.7 // 0.1)] == 1.0 and est.masses.sum() == 1.0
    with pytest.raises(InsufficientSamplesError):
        estimate_marginal(c, k=1, min_ess=1e6)
    with pytest.raises(DomainError):
        estimate_marginal(c, k=3, min_ess=0)


def test_pair_moment_and_tightness(flat):
    c = run_chain(params(chain_length=2000, burn_in=200), flat)
    v, se = pair_log_moment(c)
    s = c.samples
    direct = 0.0
    for i in range(4):
        for j in range(i + 1, 4):
            d = gauge_array(np.stack([s[:, i, 0] - s[:, j, 0], s[:, i, 1] - s[:, j, 1],
                                      s[:, i, 2] - s[:, j, 2] - 2 * (s[:, j, 0] * s[:, i, 1]
                                                                     - s[:, j, 1] * s[:, i, 0])], axis=-1))
            direct += np.log(d).mean() / 6
    assert math.isclose(v, 3.0 * direct, rel_tol=1e-10) and se > 0
    tp = tightness_probe(c, [0.5, 1.5])
    assert tp[1][1] == 0.0 and 0 < tp[0][1] < 1


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_chain_round_trip(tmp_path, flat, fmt):
    c = run_chain(params(chain_length=150, burn_in=50, thin=2), flat)
    path = tmp_path / f"chain.{fmt}"
    save_chain(c, path, fmt)
    r = load_chain(path)
    assert np.array_equal(r.samples, c.samples)
    assert r.params == c.params and r.acceptance_rate == c.acceptance_rate
