"""Base measure tau = Q e^{kK} dx, the log interaction and the mean functionals.

Q and K are Profiles: named presets or tabulated values on an (s, t) lattice,
s = x^2 + y^2.  Arbitrary callables of (x, y, t) are accepted from Python but
not from configuration files.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, SingularEvaluationError
from .heisenberg import HPoint, dist, log_dist_array


@dataclass(frozen=True)
class Profile:
    """A real function on H^1.

    func takes arrays x, y, t.  ``poly`` = (c_s, c_ss, c_tt) when the function
    (for K) or its logarithm (for Q) equals c_s s + c_ss s^2 + c_tt t^2; the
    compiled sampler needs this form.
    """
    name: str
    func: Callable
    axisymmetric: bool = True
    poly: Optional[tuple] = None
    spec: object = None  # serialisable description
    log: Optional[Callable] = None  # ln of the function, when known in closed form

    def __call__(self, x, y, t):
        return np.broadcast_to(self.func(np.asarray(x, float), np.asarray(y, float), np.asarray(t, float)),
                               np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(t)))


def _s(x, y):
    return x * x + y * y


Q_PRESETS = {
    "unit": Profile("unit", lambda x, y, t: np.ones(np.broadcast_shapes(x.shape, y.shape, t.shape)), True, (0.0, 0.0, 0.0), "unit"),
    "gauge_gaussian": Profile("gauge_gaussian", lambda x, y, t: np.exp(-(_s(x, y) ** 2 + t * t)), True,
                              (0.0, -1.0, -1.0), "gauge_gaussian", lambda x, y, t: -(_s(x, y) ** 2 + t * t)),
}
K_PRESETS = {
    "paraboloid": Profile("paraboloid", lambda x, y, t: -_s(x, y) + 0.0 * t, True, (-1.0, 0.0, 0.0), "paraboloid"),
    "zero": Profile("zero", lambda x, y, t: np.zeros(np.broadcast_shapes(x.shape, y.shape, t.shape)), True, (0.0, 0.0, 0.0), "zero"),
}


def tabulated_profile(name: str, s_values: Sequence[float], t_values: Sequence[float], table) -> Profile:
    """Axisymmetric profile from values on an (s, t) lattice, bilinear, clamped at the edges."""
    from scipy.interpolate import RegularGridInterpolator

    s_values = np.asarray(s_values, float)
    t_values = np.asarray(t_values, float)
    table = np.asarray(table, float)
    if table.shape != (s_values.size, t_values.size):
        raise ValueError(f"table shape {table.shape} != ({s_values.size}, {t_values.size})")
    if not np.all(np.isfinite(table)):
        raise ValueError("table has non-finite entries")
    interp = RegularGridInterpolator((s_values, t_values), table, method="linear", bounds_error=False, fill_value=None)

    def f(x, y, t):
        s = np.clip(_s(x, y), s_values[0], s_values[-1])
        tt = np.clip(t, t_values[0], t_values[-1])
        s, tt = np.broadcast_arrays(s, tt)
        return interp(np.stack([s.ravel(), tt.ravel()], axis=1)).reshape(s.shape)

    spec = {"table": {"s": s_values.tolist(), "t": t_values.tolist(), "values": table.tolist()}}
    return Profile(name, f, True, None, spec)


def resolve_profile(spec, presets: dict, kind: str) -> Profile:
    if isinstance(spec, Profile):
        return spec
    if isinstance(spec, str):
        if spec not in presets:
            raise ValueError(f"unknown {kind} preset {spec!r}; known: {sorted(presets)}")
        return presets[spec]
    if isinstance(spec, dict) and set(spec) == {"table"}:
        tab = spec["table"]
        if not isinstance(tab, dict) or set(tab) != {"s", "t", "values"}:
            raise ValueError(f"{kind} table needs exactly the keys s, t, values")
        return tabulated_profile(f"{kind}_table", tab["s"], tab["t"], tab["values"])
    if callable(spec):
        return Profile(getattr(spec, "__name__", kind), spec, False, None, None)
    raise ValueError(f"cannot interpret {kind} profile {spec!r}")


def _ball_rule(order: int = 12, panels: int = 32):
    """Nodes/weights in gauge-polar (rho = g^2, theta) for axisymmetric integrals over B_1.

    int_{B_R} f dx = pi int_0^{R^2} int_{-pi/2}^{pi/2} f(s, t) rho drho dtheta.
    Returns unit-interval fractions and weights without the Jacobian.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    edges = np.linspace(0.0, 1.0, panels + 1)
    u = (edges[:-1, None] + x[None, :] / panels).ravel()
    wu = np.tile(w / panels, panels)
    return u, wu


def integrate_ball(func, radius: float, axisymmetric: bool = True, order: int = 12, panels: int = 32,
                   n_phi: int = 32) -> float:
    """Integrate func(x, y, t) over the gauge ball B_radius."""
    u, wu = _ball_rule(order, panels)
    rho = radius ** 2 * u
    wr = radius ** 2 * wu
    th = -0.5 * math.pi + math.pi * u
    wt = math.pi * wu
    Rr, Th = np.meshgrid(rho, th, indexing="ij")
    W = (wr[:, None] * wt[None, :]) * Rr
    s = Rr * np.cos(Th)
    t = Rr * np.sin(Th)
    if axisymmetric:
        vals = func(np.sqrt(s), np.zeros_like(s), t)
        return float(math.pi * np.sum(W * vals))
    phi = 2 * math.pi * (np.arange(n_phi) + 0.5) / n_phi
    total = 0.0
    r = np.sqrt(s)
    for ph in phi:
        vals = func(r * math.cos(ph), r * math.sin(ph), t)
        total += np.sum(W * vals)
    # dx dy dt = (1/2) drho dtheta dphi in (rho, theta, phi) after s = r^2
    return float(0.5 * total * (2 * math.pi / n_phi))


@dataclass(frozen=True)
class WeightedMeasure:
    """tau(dx) = Q(x) exp(k_exponent K(x)) dx restricted to the gauge ball B_radius."""
    Q: Profile
    K: Profile
    gamma: float = 1.0
    k_exponent: float = 2.0
    radius: float = 3.0
    mass: float = field(init=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if not self.radius > 0:
            raise DomainError("truncation radius must be positive")
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(512, 3)) * np.array([self.radius, self.radius, self.radius ** 2])
        qv = self.Q(pts[:, 0], pts[:, 1], pts[:, 2])
        if not np.all(qv > 0):
            raise DomainError("Q must be positive")
        m = integrate_ball(lambda x, y, t: self.weight_xyt(x, y, t), self.radius, self.axisymmetric)
        if not (math.isfinite(m) and m > 0):
            raise DomainError(f"base mass must be finite and positive, got {m}")
        object.__setattr__(self, "mass", m)

    @classmethod
    def from_presets(cls, q="unit", k="paraboloid", **kw) -> "WeightedMeasure":
        return cls(resolve_profile(q, Q_PRESETS, "Q"), resolve_profile(k, K_PRESETS, "K"), **kw)

    @property
    def axisymmetric(self) -> bool:
        return self.Q.axisymmetric and self.K.axisymmetric

    @property
    def log_weight_poly(self):
        if self.Q.poly is None or self.K.poly is None:
            return None
        return tuple(float(a + self.k_exponent * b) for a, b in zip(self.Q.poly, self.K.poly))

    def log_q_xyt(self, x, y, t):
        if self.Q.log is not None:
            return np.broadcast_to(self.Q.log(np.asarray(x, float), np.asarray(y, float), np.asarray(t, float)),
                                   np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(t)))
        return np.log(self.Q(x, y, t))

    def log_weight_xyt(self, x, y, t):
        return self.log_q_xyt(x, y, t) + self.k_exponent * self.K(x, y, t)

    def weight_xyt(self, x, y, t):
        return np.exp(self.log_weight_xyt(x, y, t))

    def _split(self, points):
        p = np.asarray(points, float)
        return p[..., 0], p[..., 1], p[..., 2]

    def q_at(self, points):
        return self.Q(*self._split(points))

    def log_q_at(self, points):
        return self.log_q_xyt(*self._split(points))

    def k_at(self, points):
        return self.K(*self._split(points))

    def log_weight_at(self, points):
        return self.log_weight_xyt(*self._split(points))

    def weight_at(self, points):
        return self.weight_xyt(*self._split(points))

    # scalar evaluators on HPoint
    def q(self, p: HPoint) -> float:
        return float(self.Q(p.x, p.y, p.t))

    def k(self, p: HPoint) -> float:
        return float(self.K(p.x, p.y, p.t))

    def log_base_density(self, domain) -> np.ndarray:
        return self.log_weight_at(domain.nodes)

    def describe(self) -> dict:
        return {"Q": self.Q.spec if self.Q.spec is not None else self.Q.name,
                "K": self.K.spec if self.K.spec is not None else self.K.name,
                "gamma": self.gamma, "k_exponent": self.k_exponent, "radius": self.radius, "mass": self.mass}


@dataclass(frozen=True)
class ParticleConfig:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, float).reshape(-1, 3)
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coordinates")
        object.__setattr__(self, "coords", c)

    @classmethod
    def from_points(cls, points: Sequence[HPoint]) -> "ParticleConfig":
        return cls(np.array([[p.x, p.y, p.t] for p in points], float))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def points(self) -> list:
        return [HPoint.from_array(r) for r in self.coords]


def kernel_U(p: HPoint, q: HPoint, gamma: float) -> float:
    d = dist(p, q)
    if d == 0.0:
        raise SingularEvaluationError("kernel_U at coincident points")
    return -gamma * math.log(d)


def pair_log_sum(coords: np.ndarray) -> float:
    """sum_{i<j} ln dist(x_i, x_j)."""
    c = np.asarray(coords, float)
    L = log_dist_array(c[:, None, :], c[None, :, :])
    iu = np.triu_indices(c.shape[0], 1)
    v = L[iu]
    if not np.all(np.isfinite(v)):
        raise SingularEvaluationError("coincident particles")
    return float(np.sum(v))


def hamiltonian(c: ParticleConfig, gamma: float) -> float:
    """(1/(N-1)) sum_{i<j} U(x_i, x_j) = -(gamma/(N-1)) ln R^(N)."""
    if c.n < 2:
        raise DomainError("hamiltonian needs N >= 2")
    return -gamma * pair_log_sum(c.coords) / (c.n - 1)


# ---- functionals of a density on a node set -------------------------------

def _mass_vector(rho) -> np.ndarray:
    return rho.weights * rho.values


def base_density(rho, base) -> np.ndarray:
    """mu^(1) on rho's node set, normalised discretely so that sum w mu = 1."""
    lb = base.log_base_density(rho.domain)
    b = np.exp(lb - np.max(lb))
    return b / np.sum(rho.weights * b)


def energy(rho, gamma=None) -> float:
    """1/2 sum_ij w_i w_j rho_i rho_j U_ij with the singular rule on near pairs."""
    m = _mass_vector(rho)
    U = rho.domain.interaction(gamma)
    return 0.5 * float(m @ (U @ m))


def entropy(rho, base) -> float:
    """-sum_i w_i rho_i ln(rho_i / mu1_i), with 0 ln 0 = 0."""
    mu = base_density(rho, base)
    v = rho.values
    if np.any(v < 0):
        raise DomainError("negative density")
    pos = v > 0
    return -float(np.sum(rho.weights[pos] * v[pos] * np.log(v[pos] / mu[pos])))


def free_energy_density(rho, base, beta: float) -> float:
    return entropy(rho, base) + beta * energy(rho, getattr(base, "gamma", None))
