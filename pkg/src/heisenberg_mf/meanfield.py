"""Self-consistent mean-field density and the conformal factor built from it.

The map is

    T(rho)_i = b_i exp(beta sum_j U_ij w_j rho_j) / Z,

with b = Q e^{kK} on a Heisenberg grid (U = -gamma L, L the cell-averaged
log kernel) or b = Q on a compact model (U its kernel matrix).  Fixed points
are found by damped Picard iteration started from the beta = 0 solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DomainError, InvariantError
from .grids import GaugePolarGrid, TensorGrid
from .measures import WeightedMeasure, base_density, entropy

MASS_TOL = 1e-10
BETA_GAMMA_MAX = 8.0


@dataclass
class DensityField:
    """Density w.r.t. Haar (or volume) measure on a node set with weights."""
    domain: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.weights.shape:
            raise ValueError("values and weights differ in shape")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("density values must be finite and nonnegative")

    @property
    def weights(self) -> np.ndarray:
        return self.domain.weights

    @property
    def nodes(self):
        return getattr(self.domain, "nodes", None)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights * self.values))

    def normalized(self) -> "DensityField":
        return DensityField(self.domain, self.values / self.total_mass)

    def check(self, tol: float = MASS_TOL) -> float:
        err = abs(self.total_mass - 1.0)
        if err > tol:
            raise InvariantError(f"density not normalised: |mass - 1| = {err:.3e}")
        return err


@dataclass
class SolverReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    free_energy_history: list = field(default_factory=list)
    converged: bool = False
    beta: float = 0.0
    damping: float = 0.5
    tol: float = 1e-8
    max_mass_error: float = 0.0

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.inf

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "beta": self.beta,
            "damping": self.damping,
            "tol": self.tol,
            "final_residual": self.final_residual,
            "max_mass_error": self.max_mass_error,
            "residual_history": list(self.residual_history),
            "free_energy_history": list(self.free_energy_history),
        }


@lru_cache(maxsize=8)
def _cached_polar(radius, n_radial, n_angular):
    return GaugePolarGrid(radius, n_radial, n_angular)


@lru_cache(maxsize=4)
def _cached_tensor(radius, n_xy, n_t):
    return TensorGrid(radius, n_xy, n_t)


def default_grid(base: WeightedMeasure, n_radial: int = 48, n_angular: int = 48):
    if base.axisymmetric:
        return _cached_polar(base.radius, n_radial, n_angular)
    return _cached_tensor(base.radius, 14, 14)


def _gamma(base) -> float:
    return float(base.gamma)


def check_beta(beta: float, gamma: float):
    if not (beta >= 0 and beta * gamma < BETA_GAMMA_MAX):
        raise DomainError(f"need 0 <= beta*gamma < 8, got beta={beta}, gamma={gamma}")


def _domain_for(base, grid):
    if isinstance(base, WeightedMeasure):
        return grid if grid is not None else default_grid(base)
    return base  # compact model is its own node set


class _Problem:
    def __init__(self, base, beta, domain):
        self.base = base
        self.beta = float(beta)
        self.domain = domain
        self.gamma = _gamma(base)
        check_beta(self.beta, self.gamma)
        self.w = domain.weights
        self.log_b = base.log_base_density(domain)
        self._U = None

    @property
    def U(self):
        if self._U is None:
            self._U = self.domain.interaction(self.gamma)
        return self._U

    def potential(self, values):
        if self.beta == 0.0:
            return np.zeros_like(values)  # the kernel is not needed (or assembled) at beta = 0
        return self.U @ (self.w * values)

    def apply(self, values, pot=None):
        if pot is None:
            pot = self.potential(values)
        a = self.log_b + self.beta * pot
        e = np.exp(a - np.max(a))
        return e / np.sum(self.w * e)


def meanfield_map(rho: DensityField, base, beta: float) -> DensityField:
    rho.check()
    prob = _Problem(base, beta, rho.domain)
    return DensityField(rho.domain, prob.apply(rho.values))


def base_field(base, grid=None) -> DensityField:
    domain = _domain_for(base, grid)
    dummy = DensityField(domain, np.ones(domain.weights.shape))
    return DensityField(domain, base_density(dummy, base))


def solve_fixed_point(base, beta: float, damping: float = 0.5, tol: float = 1e-8, max_iter: int = 10000,
                      grid=None, initial: Optional[DensityField] = None, raise_on_failure: bool = True):
    """Damped Picard iteration for rho = T(rho).  Returns (DensityField, SolverReport)."""
    if not (0 < damping <= 1):
        raise DomainError("damping must lie in (0, 1]")
    if not tol > 0 or max_iter < 1:
        raise DomainError("tol must be positive and max_iter >= 1")
    domain = _domain_for(base, grid) if initial is None else initial.domain
    prob = _Problem(base, beta, domain)
    report = SolverReport(beta=float(beta), damping=float(damping), tol=float(tol))
    rho = base_field(base, domain).values if initial is None else initial.values.copy()
    w = prob.w
    for it in range(1, max_iter + 1):
        mass_err = abs(float(np.sum(w * rho)) - 1.0)
        report.max_mass_error = max(report.max_mass_error, mass_err)
        if mass_err > MASS_TOL or np.any(rho < 0):
            raise InvariantError(f"iterate {it} left the simplex (mass error {mass_err:.3e})")
        pot = prob.potential(rho)
        trho = prob.apply(rho, pot)
        res = float(np.max(np.abs(trho - rho)) / np.max(rho))
        fe = entropy(DensityField(domain, rho), base) + prob.beta * 0.5 * float((w * rho) @ pot)
        report.residual_history.append(res)
        report.free_energy_history.append(fe)
        report.iterations = it
        if res < tol:
            report.converged = True
            break
        rho = (1.0 - damping) * rho + damping * trho
    out = DensityField(domain, rho)
    if not report.converged and raise_on_failure:
        raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {report.final_residual:.3e})",
                               report=report, density=out)
    return out, report


def fixed_point_residual(rho: DensityField, base, beta: float) -> float:
    prob = _Problem(base, beta, rho.domain)
    return float(np.max(np.abs(prob.apply(rho.values) - rho.values)) / np.max(rho.values))


# ---- conformal factor ------------------------------------------------------

@dataclass
class ConformalFactor:
    """u on the nodes of a Heisenberg grid, with the data needed to evaluate it off-grid."""
    values: np.ndarray
    c: float
    lam: float
    beta: float
    normalization: str
    base: WeightedMeasure
    domain: object
    masses: np.ndarray

    def at(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, float))
        b = self.base
        phi = self.domain.log_potential(points, self.masses)
        return 0.5 * b.k_exponent * b.k_at(points) - 0.5 * self.beta * b.gamma * phi + self.c

    def q_exp_2u(self) -> np.ndarray:
        return np.exp(self.base.log_q_at(self.domain.nodes) + 2.0 * self.values)


def reconstruct_u_heisenberg(rho: DensityField, base: WeightedMeasure, beta: float,
                             normalization: str = "equation") -> ConformalFactor:
    """u = (k/2) K - (beta gamma / 2) sum_y w_y ln dist(x, y) rho(y) + c.

    normalization "equation": e^{2c} = beta / (2 lambda), so sum w Q e^{2u} = beta/2.
    normalization "lambda":   e^{2c} = lambda.
    lambda = sum_j w_j Q_j exp(k K_j - beta gamma (L m)_j) with m = w rho.
    """
    check_beta(beta, base.gamma)
    domain = rho.domain
    m = rho.weights * rho.values
    Lm = domain.log_kernel @ m
    kk = base.k_at(domain.nodes)
    v = 0.5 * base.k_exponent * kk - 0.5 * beta * base.gamma * Lm
    lq = base.log_q_at(domain.nodes)
    lam = float(np.sum(rho.weights * np.exp(lq + 2.0 * v)))
    if normalization == "equation":
        if beta <= 0:
            raise DomainError("normalization 'equation' needs beta > 0; use 'lambda'")
        c = 0.5 * math.log(beta / (2.0 * lam))
    elif normalization == "lambda":
        c = 0.5 * math.log(lam)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return ConformalFactor(v + c, c, lam, float(beta), normalization, base, domain, m)


def reconstruct_u_compact(rho: DensityField, model, beta_override: Optional[float] = None,
                          identity_tol: float = 1e-6):
    """u = (beta/2) sum_y w_y U(x,y) rho(y) + c with e^{2c} = lambda.  Returns (u, lambda, c)."""
    total = model.total_curvature
    if not total < 16 * math.pi ** 2:
        raise DomainError(f"total curvature {total} must be < 16 pi^2")
    beta = 2.0 * total if beta_override is None else float(beta_override)
    check_beta(beta, model.gamma)
    v = 0.5 * beta * (model.kernel @ (rho.weights * rho.values))
    lam = float(np.sum(model.volumes * model.Q * np.exp(2.0 * v)))
    c = 0.5 * math.log(lam)
    u = v + c
    f = model.Q * np.exp(2.0 * u)
    implied = f / np.sum(model.volumes * f)
    err = float(np.max(np.abs(implied - rho.values)) / np.max(rho.values))
    if err > identity_tol:
        raise DomainError(f"rho is not the fixed point at beta={beta} (identity residual {err:.2e})")
    return u, lam, c


def normality_residual(u: ConformalFactor, base: WeightedMeasure, beta: float,
                       probe_radius: Optional[float] = None) -> float:
    """sup_x |u(x) - gamma sum_y w_y ln(|y| / dist(x,y)) Q e^{2u}(y) - C*| over probe nodes.

    C* is the sup-norm best constant, so the value is half the oscillation.
    """
    domain = u.domain
    f = np.exp(base.log_q_at(domain.nodes) + 2.0 * u.values)
    wf = domain.weights * f
    rhs = base.gamma * (float(domain.log_gauge @ wf) - domain.log_kernel @ wf)
    diff = u.values - rhs
    if probe_radius is not None:
        diff = diff[domain.gauges <= probe_radius]
    return 0.5 * float(np.max(diff) - np.min(diff))
