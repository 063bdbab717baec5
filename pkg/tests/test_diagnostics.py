import math

import numpy as np
import pytest

from heisenberg_mf.diagnostics import (FAIL, INCONCLUSIVE, PASS, ProbeReport, combine_verdicts,
                                       homogeneity_integral_oracle, homogeneity_target, local_potential,
                                       lp_threshold_probe, marginal_vs_meanfield, radial_power_quadrature,
                                       slope_probe, summary_csv, total_curvature_check, tv_with_error)
from heisenberg_mf.ensemble import MarginalEstimate
from heisenberg_mf.errors import BinningMismatchError, DomainError
from heisenberg_mf.grids import GaugePolarGrid
from heisenberg_mf.heisenberg import UNIT_BALL_VOLUME
from heisenberg_mf.meanfield import reconstruct_u_heisenberg, solve_fixed_point
from heisenberg_mf.measures import WeightedMeasure


def test_combine_verdicts():
    assert combine_verdicts([PASS, PASS]) == PASS
    assert combine_verdicts([PASS, INCONCLUSIVE]) == INCONCLUSIVE
    assert combine_verdicts([INCONCLUSIVE, FAIL]) == FAIL
    assert combine_verdicts([]) == INCONCLUSIVE


def test_summary_csv_rows():
    a = ProbeReport("a", verdict=PASS)
    a.add("x", 0.1, 1e-3)
    b = ProbeReport("b", verdict=FAIL)
    lines = summary_csv([a, b]).splitlines()
    assert lines[0] == "probe,parameter,measurement,tolerance,verdict"
    assert lines[1] == "a,x,0.1,0.001,pass"
    assert lines[2] == "b,,,,fail"
    d = a.to_dict()
    assert d["values"][0] == {"parameter": "x", "measurement": 0.1, "tolerance": 0.001}


@pytest.mark.parametrize("q", [0.0, 1.0, 3.5])
def test_homogeneity_oracle_matches_closed_form(q):
    est = homogeneity_integral_oracle(q, 200_000, seed=1)
    assert abs(est.value - homogeneity_target(q)) < 4 * est.stderr + 1e-6 * est.value
    with pytest.raises(DomainError):
        homogeneity_integral_oracle(4.0)


def test_radial_quadrature_converges_below_four():
    exact = 2 * math.pi ** 2 / (4 - 1.0)
    assert math.isclose(radial_power_quadrature(1.0, 12), exact, rel_tol=1e-6)


@pytest.mark.parametrize("beta,p,verdict", [(2.0, 2.0, PASS), (6.0, 2.0, PASS), (4.0, 2.0, INCONCLUSIVE),
                                            (2.0, 4.0, INCONCLUSIVE)])
def test_lp_probe_classification(beta, p, verdict):
    rep = lp_threshold_probe(beta, p)
    assert rep.verdict == verdict
    exp = p * beta / 2
    assert ("convergent" in rep.notes) == (exp < 4) or exp == 4


def test_local_potential_flat_oracle():
    flat = WeightedMeasure.from_presets("unit", "zero", radius=1.0)
    for q in (0.0, 2.0, 3.5):
        exact = 4 * UNIT_BALL_VOLUME / (4 - q)
        assert math.isclose(local_potential(flat, [3.0, -1.0, 2.0], q), exact, rel_tol=1e-12)


@pytest.fixture(scope="module")
def solved():
    base = WeightedMeasure.from_presets("gauge_gaussian", "zero", radius=2.0)
    g = GaugePolarGrid(2.0, 24, 24)
    rho, _ = solve_fixed_point(base, 3.0, grid=g)
    return base, g, rho, reconstruct_u_heisenberg(rho, base, 3.0)


def test_slope_probe_and_negative_control(solved):
    base, _, _, u = solved
    assert slope_probe(u, base).verdict == PASS
    # the far-field slope is -beta gamma / 2; asking for the K-free slope of a
    # different beta must fail
    assert slope_probe(u, base, target=-0.5 * 6.0).verdict == FAIL


def test_total_curvature_on_grid_solution(solved):
    base, g, rho, u = solved
    tc = total_curvature_check(u, base, 3.0)
    assert math.isclose(tc.value, 1.5, rel_tol=2e-2)
    assert tc.bound == 4.0
    lam_u = reconstruct_u_heisenberg(rho, base, 3.0, normalization="lambda")
    with pytest.raises(DomainError):
        total_curvature_check(lam_u, base, 3.0)


def _estimate(edges, masses, batches):
    return MarginalEstimate(np.asarray(edges, float), np.asarray(masses, float), 1000, 1000.0,
                            np.asarray(batches, float))


def test_tv_against_direct_computation(solved):
    _, g, rho, _ = solved
    edges = g.shell_edges(6)
    m = g.shell_masses(rho.values, edges)
    q = np.roll(m, 1)
    est = _estimate(edges, q, [q, q, np.roll(m, 2)])
    tv, se = tv_with_error(est, rho)
    assert math.isclose(tv, 0.5 * np.abs(q - m).sum(), rel_tol=1e-12)
    assert se > 0
    assert math.isclose(marginal_vs_meanfield(est, rho), tv, rel_tol=1e-12)
    assert tv_with_error(_estimate(edges, m, [m, m]), rho)[0] < 1e-14


def test_binning_mismatch(solved):
    _, g, rho, _ = solved
    bad = _estimate([0.0, 0.77, 2.0], [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(BinningMismatchError):
        tv_with_error(bad, rho)
    with pytest.raises(BinningMismatchError):
        marginal_vs_meanfield(_estimate([0.0, 1.0, 3.0], [0.5, 0.5], [[0.5, 0.5]] * 2), rho)
