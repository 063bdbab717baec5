"""Verification probes: homogeneity, integrability threshold, far-field slope,
total curvature, normality, mean-field vs ensemble, base-measure assumptions."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import BinningMismatchError, DomainError
from .heisenberg import UNIT_BALL_VOLUME, gauge_array, gauge_polar_to_cartesian, mul_array
from .measures import WeightedMeasure, integrate_ball

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
# accuracy to which the on-grid normal-form identity is held
QUADRATURE_TOL = 1e-6


@dataclass
class ProbeReport:
    name: str
    values: list = field(default_factory=list)  # (parameter, measurement, tolerance)
    verdict: str = INCONCLUSIVE
    notes: str = ""

    def add(self, parameter, measurement, tolerance):
        self.values.append((parameter, measurement, tolerance))

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return v
        return {"name": self.name, "verdict": self.verdict, "notes": self.notes,
                "values": [{"parameter": clean(p), "measurement": clean(m), "tolerance": clean(t)}
                           for p, m, t in self.values]}


def combine_verdicts(verdicts) -> str:
    verdicts = list(verdicts)
    if FAIL in verdicts:
        return FAIL
    if verdicts and all(v == PASS for v in verdicts):
        return PASS
    return INCONCLUSIVE


def summary_csv(reports: Sequence[ProbeReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["probe", "parameter", "measurement", "tolerance", "verdict"])
    for r in reports:
        if not r.values:
            w.writerow([r.name, "", "", "", r.verdict])
        for p, m, t in r.values:
            w.writerow([r.name, _fmt(p), _fmt(m), _fmt(t), r.verdict])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---- homogeneity --------------------------------------------------------------

class MCEstimate(NamedTuple):
    value: float
    stderr: float


def homogeneity_integral_oracle(q: float, samples: int = 400_000, seed: int = 0, shell_tail: float = 1e-7) -> MCEstimate:
    """Monte Carlo for int_{B_1} gauge(y)^{-q} dy, stratified over dyadic shells.

    Shell k = {2^{-k-1} < g <= 2^{-k}} is sampled uniformly in its bounding box
    [-a,a]^2 x [-a^2,a^2], a = 2^{-k}, with fresh samples per shell.  Shells are added until the remaining
    ball's contribution, bounded via homogeneity, falls below shell_tail
    relative.  Uses only the box volumes and the gauge, not |B_1|.
    """
    if not (0 <= q < 4):
        raise DomainError("need 0 <= q < 4")
    rng = np.random.default_rng(seed)
    # remaining-ball fraction after K shells is 2^{-K(4-q)}
    n_shells = max(1, int(math.ceil(math.log2(1.0 / shell_tail) / (4.0 - q))))
    per = max(2000, samples // n_shells)
    total = 0.0
    var = 0.0
    for k in range(n_shells):
        a = 2.0 ** (-k)
        # sample the shell's box in coordinates dilated by 1/a (exact for the gauge),
        # so that g^{-q} a^{-q} and the box volume 8 a^4 never overflow
        box = rng.uniform(-1.0, 1.0, size=(per, 3))
        g = gauge_array(box)
        inside = (g <= 1.0) & (g > 0.5)
        f = np.where(inside, np.power(np.where(inside, g, 1.0), -q), 0.0)
        scale = 8.0 * a ** (4.0 - q)
        total += scale * f.mean()
        var += scale * scale * f.var(ddof=1) / per
    return MCEstimate(float(total), float(math.sqrt(var)))


def homogeneity_target(q: float, ball_volume: float = UNIT_BALL_VOLUME) -> float:
    return 4.0 * ball_volume / (4.0 - q)


def dilation_volume_ratio(lam: float, samples: int = 200_000, seed: int = 0) -> MCEstimate:
    """vol(delta_lam B_1) / vol(B_1) by counting uniform box samples."""
    rng = np.random.default_rng(seed)
    box_lo = rng.uniform(-1, 1, size=(samples, 3)) * np.array([1.0, 1.0, 1.0])
    v1 = 8.0 * np.mean(gauge_array(box_lo) <= 1.0)
    box_hi = rng.uniform(-1, 1, size=(samples, 3)) * np.array([lam, lam, lam * lam])
    # g(delta_{1/lam} p) <= 1  iff  p in delta_lam B_1
    inv = box_hi * np.array([1 / lam, 1 / lam, 1 / lam ** 2])
    p2 = np.mean(gauge_array(inv) <= 1.0)
    v2 = 8.0 * lam ** 4 * p2
    p1 = v1 / 8.0
    rel = math.sqrt((1 - p1) / (p1 * samples) + (1 - p2) / (p2 * samples))
    return MCEstimate(v2 / v1, (v2 / v1) * rel)


def ball_log_mean(samples: int = 400_000, seed: int = 0) -> MCEstimate:
    """Monte Carlo mean of ln gauge over B_1 (expected -1/4)."""
    rng = np.random.default_rng(seed)
    box = rng.uniform(-1, 1, size=(samples, 3))
    g = gauge_array(box)
    v = np.log(g[g <= 1.0])
    return MCEstimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)))


# ---- integrability threshold ------------------------------------------------

def radial_power_quadrature(q: float, level: int, base_cells: int = 8) -> float:
    """Midpoint rule for int_{B_1} g^{-q} = 2 pi^2 int_0^1 g^{3-q} dg on 8 * 2^level cells."""
    n = base_cells * 2 ** level
    g = (np.arange(n) + 0.5) / n
    return float(2.0 * math.pi ** 2 * np.sum(g ** (3.0 - q)) / n)


def lp_threshold_probe(beta: float, p: float, mesh_levels: int = 16, gamma: float = 1.0) -> ProbeReport:
    """Quadrature of int_{B_1} |y|^{-p beta gamma / 2} across refining meshes.

    Expected: convergent for exponent < 4, divergent for exponent > 4; the
    exponent 4 itself (logarithmic growth) is reported inconclusive.
    Classification uses the ratio r of successive increments over the last
    levels: r < 0.95 converges (Cauchy, geometric), r > 1.05 with monotone
    growth > 10x over the range diverges.
    """
    if not (0 < beta * gamma < 8):
        raise DomainError("beta*gamma must lie in (0, 8)")
    if mesh_levels < 4:
        raise DomainError("need at least 4 mesh levels")
    q = p * beta * gamma / 2.0
    vals = np.array([radial_power_quadrature(q, k) for k in range(mesh_levels)])
    rep = ProbeReport(f"lp_threshold(beta={beta},p={p})")
    inc = np.diff(vals)
    tail = inc[-4:]
    if np.max(np.abs(tail)) <= 1e-13 * abs(vals[-1]):
        ratio = 0.0  # increments at rounding level: converged
    else:
        ratio = float(np.exp(np.mean(np.log(np.abs(tail[1:]) / np.abs(tail[:-1])))))
    growth = float(vals[-1] / vals[0])
    monotone = bool(np.all(inc > 0))
    if ratio < 0.95:
        observed = "convergent"
    elif ratio > 1.05 and monotone and growth > 10.0:
        observed = "divergent"
    else:
        observed = "unclear"
    expected = "convergent" if q < 4 else ("divergent" if q > 4 else "boundary")
    rep.add("exponent", q, 4.0)
    rep.add("increment_ratio", ratio, [0.95, 1.05])
    rep.add("growth", growth, 10.0)
    for k, v in enumerate(vals):
        rep.add(f"level_{k}", float(v), None)
    if expected == "boundary" or observed == "unclear":
        rep.verdict = INCONCLUSIVE
    else:
        rep.verdict = PASS if observed == expected else FAIL
    rep.notes = f"expected {expected}, observed {observed}"
    return rep


LP_PAIRS = [(1.0, 2.0), (2.0, 2.0), (3.0, 2.0), (7.0, 1.0), (1.5, 4.0), (3.5, 2.0),
            (4.5, 2.0), (5.0, 2.0), (6.0, 2.0), (7.5, 2.0), (3.0, 4.0), (2.5, 4.0)]


# ---- far field slope --------------------------------------------------------

def shell_probe_points(radius: float, n_theta: int = 33, n_phi: int = 8) -> np.ndarray:
    th = np.linspace(-0.5 * math.pi, 0.5 * math.pi, n_theta + 2)[1:-1]
    ph = 2 * math.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(th, ph, indexing="ij")
    return gauge_polar_to_cartesian(radius, T.ravel(), P.ravel()).reshape(-1, 3)


def default_slope_radii(truncation_radius: float) -> list:
    return [truncation_radius * 2.0 ** k for k in range(2, 7)]


def asymptotic_slope_fit(u, base: WeightedMeasure, radii: Optional[Sequence[float]] = None,
                         far_factor: float = 4.0):
    """Least-squares slope of the shell median of u - (k/2) K against ln(gauge).

    Only radii >= far_factor * truncation radius are used; at least three are
    required.  Returns (slope, r2).
    """
    radii = default_slope_radii(base.radius) if radii is None else list(radii)
    use = [r for r in radii if r >= far_factor * base.radius]
    if len(use) < 3:
        raise DomainError("need at least three radii in the far-field annulus")
    x, y = [], []
    for r in use:
        pts = shell_probe_points(r)
        v = u.at(pts) - 0.5 * base.k_exponent * base.k_at(pts)
        x.append(math.log(r))
        y.append(float(np.median(v)))
    x = np.array(x)
    y = np.array(y)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(coef[0]), r2


def slope_probe(u, base, radii=None, rtol: float = 0.10, target: Optional[float] = None) -> ProbeReport:
    slope, r2 = asymptotic_slope_fit(u, base, radii)
    expect = -0.5 * u.beta * base.gamma if target is None else target
    rep = ProbeReport(f"slope(beta={u.beta})")
    rep.add("slope", slope, rtol)
    rep.add("target", expect, None)
    rep.add("r2", r2, None)
    rep.verdict = PASS if abs(slope - expect) <= rtol * abs(expect) else FAIL
    return rep


# ---- total curvature ----------------------------------------------------------

class TotalCurvature(NamedTuple):
    value: float
    target: float
    bound: float
    normalization: str


def total_curvature_check(u, base: WeightedMeasure, beta: float, order: int = 8, panels: int = 16) -> TotalCurvature:
    """int_{B_R} Q e^{2u} by an independent gauge-polar rule, against beta/2 (gamma-consistent units).

    The bound 4/gamma corresponds to 16 pi^2 at gamma = 1/(4 pi^2).
    """
    if u.normalization != "equation":
        raise DomainError("the total curvature target assumes the 'equation' normalisation of c")

    def f(x, y, t):
        pts = np.stack(np.broadcast_arrays(x, y, t), axis=-1)
        shp = pts.shape[:-1]
        flat = pts.reshape(-1, 3)
        vals = np.exp(base.log_q_at(flat) + 2.0 * u.at(flat))
        return vals.reshape(shp)

    value = integrate_ball(f, base.radius, base.axisymmetric, order=order, panels=panels)
    return TotalCurvature(value, 0.5 * beta, 4.0 / base.gamma, u.normalization)


# ---- mean field vs ensemble ---------------------------------------------------

def _shell_profile(rho, edges):
    try:
        m = rho.domain.shell_masses(rho.values, edges)
    except ValueError as exc:
        raise BinningMismatchError(str(exc)) from exc
    if abs(m.sum() - 1.0) > 1e-8:
        raise BinningMismatchError("edges do not cover the density's support")
    return m


def marginal_vs_meanfield(chainmarg, rho) -> float:
    """Total variation distance between radial profiles."""
    edges = np.asarray(chainmarg.edges)
    if not math.isclose(edges[-1], rho.domain.radius, rel_tol=1e-12):
        raise BinningMismatchError("truncation radii differ")
    m = _shell_profile(rho, edges)
    return 0.5 * float(np.sum(np.abs(np.asarray(chainmarg.masses) - m)))


def tv_with_error(chainmarg, rho):
    """(TV, jackknife standard error over the estimate's batches)."""
    m = _shell_profile(rho, chainmarg.edges)
    tv = 0.5 * float(np.sum(np.abs(chainmarg.masses - m)))
    B = chainmarg.batch_masses
    n = B.shape[0]
    loo = (B.sum(axis=0)[None, :] - B) / (n - 1)
    jk = 0.5 * np.sum(np.abs(loo - m[None, :]), axis=1)
    se = math.sqrt((n - 1) / n * float(np.sum((jk - jk.mean()) ** 2)))
    return tv, se


# ---- base measure assumptions ---------------------------------------------------

def moment_probe(base: WeightedMeasure, s: float = 1.0, radii: Optional[Sequence[float]] = None,
                 rtol: float = 1e-3) -> ProbeReport:
    """Assumption (b): int tau |x|^s over growing balls must settle."""
    radii = [base.radius * 2 ** k for k in range(4)] if radii is None else list(radii)
    vals = [integrate_ball(lambda x, y, t, R=R: base.weight_xyt(x, y, t) * gauge_array(np.stack([x, y, t], -1)) ** s,
                           R, base.axisymmetric, panels=64) for R in radii]
    rep = ProbeReport(f"moment(s={s})")
    for R, v in zip(radii, vals):
        rep.add(f"R={R}", v, None)
    rel = abs(vals[-1] - vals[-2]) / max(abs(vals[-1]), 1e-300)
    rep.add("relative_change", rel, rtol)
    rep.verdict = PASS if rel <= rtol else FAIL
    return rep


def local_potential(base: WeightedMeasure, point, q: float, n: int = 10) -> float:
    """int_{B_1(x)} tau(y) dist(x, y)^{-q} dy, writing y = x . z with z in B_1.

    In gauge-polar coordinates dz = g^3 dg dtheta dphi; the substitution
    v = g^{4-q} removes the singular factor: g^{3-q} dg = dv / (4 - q).
    """
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    g = u ** (1.0 / (4.0 - q))
    th = -0.5 * math.pi + math.pi * u
    ph = 2 * math.pi * (np.arange(2 * n) + 0.5) / (2 * n)
    G, TH, PH = np.meshgrid(g, th, ph, indexing="ij")
    W = (wu[:, None, None] / (4.0 - q)) * (math.pi * wu[None, :, None]) * (math.pi / n) * np.ones_like(G)
    z = gauge_polar_to_cartesian(G, TH, PH)
    y = mul_array(np.asarray(point, float), z)
    vals = base.weight_at(y.reshape(-1, 3)).reshape(G.shape)
    return float(np.sum(W * vals))


def decay_probe(base: WeightedMeasure, q: float = 3.5, radii: Optional[Sequence[float]] = None,
                ratio: float = 1e-3) -> ProbeReport:
    """Assumption (a): the local q-potential of tau must vanish at infinity (x and t directions)."""
    radii = [2.0 ** k for k in range(1, 7)] if radii is None else list(radii)
    rep = ProbeReport(f"decay(q={q})")
    ok = True
    for label, direction in (("x", (1, 0, 0)), ("t", (0, 0, 1))):
        vals = []
        for R in radii:
            pt = np.array(direction, float) * np.array([R, R, R * R])
            vals.append(local_potential(base, pt, q))
        vals = np.array(vals)
        rel = float(vals[-1] / max(vals.max(), 1e-300))
        rep.add(f"{label}_tail_ratio", rel, ratio)
        ok &= rel <= ratio
    rep.verdict = PASS if ok else FAIL
    return rep


def tail_probe(base: WeightedMeasure, limit: float = 1e-6) -> ProbeReport:
    """Mass of tau in B_{4R} \\ B_R relative to B_{4R}, at beta = 0."""
    inner = base.mass
    outer = integrate_ball(base.weight_xyt, 4 * base.radius, base.axisymmetric, panels=64)
    rel = (outer - inner) / outer
    rep = ProbeReport("truncation_tail")
    rep.add("tail_fraction", float(rel), limit)
    rep.verdict = PASS if rel < limit else FAIL
    return rep


def assumption_probes(base: WeightedMeasure) -> list:
    return [moment_probe(base), decay_probe(base), tail_probe(base)]
