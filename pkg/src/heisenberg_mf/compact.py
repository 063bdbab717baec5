"""Finite node models standing in for a compact CR manifold.

A CompactModel is a node set with volumes, a symmetric kernel matrix
U_ij (diagonal regularised), Q > 0 and synthetic Qbar' samples.  Small-N
partition functions are evaluated exactly by nested sums, which lets the
finite-N free energy inequalities be checked to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import yaml

from .errors import DomainError

COMPACT_GAMMA = 1.0 / (4.0 * math.pi ** 2)
TOTAL_CURVATURE_MAX = 16.0 * math.pi ** 2
SLACK = 1e-10


@dataclass(frozen=True)
class CompactModel:
    volumes: np.ndarray
    kernel: np.ndarray
    Q: np.ndarray
    Qbar_prime: np.ndarray
    gamma: float = COMPACT_GAMMA
    positions: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.volumes, float)
        K = np.asarray(self.kernel, float)
        q = np.asarray(self.Q, float)
        qb = np.asarray(self.Qbar_prime, float)
        n = v.shape[0]
        if K.shape != (n, n) or q.shape != (n,) or qb.shape != (n,):
            raise ValueError("inconsistent model array shapes")
        if np.any(v <= 0) or np.any(q <= 0):
            raise ValueError("volumes and Q must be positive")
        if not np.all(np.isfinite(K)):
            raise ValueError("kernel has non-finite entries")
        if not np.allclose(K, K.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(K)))):
            raise ValueError("kernel must be symmetric")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        for name, val in (("volumes", v), ("kernel", 0.5 * (K + K.T)), ("Q", q), ("Qbar_prime", qb)):
            object.__setattr__(self, name, val)

    @property
    def node_count(self) -> int:
        return self.volumes.shape[0]

    # grid-like interface for the mean-field code
    @property
    def weights(self) -> np.ndarray:
        return self.volumes

    @property
    def size(self) -> int:
        return self.node_count

    @property
    def total_volume(self) -> float:
        return float(np.sum(self.volumes))

    @property
    def total_curvature(self) -> float:
        return float(np.sum(self.volumes * self.Qbar_prime))

    def interaction(self, gamma=None) -> np.ndarray:
        if gamma is not None and not math.isclose(gamma, self.gamma, rel_tol=1e-12):
            raise ValueError("a compact model carries its own gamma")
        return self.kernel

    def log_base_density(self, domain=None) -> np.ndarray:
        return np.log(self.Q)

    @property
    def base_probability(self) -> np.ndarray:
        """mu^(1) as node probabilities."""
        a = self.volumes * self.Q
        return a / a.sum()

    # serialisation
    def to_dict(self) -> dict:
        d = {"gamma": float(self.gamma), "volumes": self.volumes.tolist(), "kernel": self.kernel.tolist(),
             "Q": self.Q.tolist(), "Qbar_prime": self.Qbar_prime.tolist()}
        if self.positions is not None:
            d["positions"] = np.asarray(self.positions).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CompactModel":
        allowed = {"gamma", "volumes", "kernel", "Q", "Qbar_prime", "positions"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown model keys {sorted(extra)}")
        pos = d.get("positions")
        return cls(np.array(d["volumes"], float), np.array(d["kernel"], float), np.array(d["Q"], float),
                   np.array(d["Qbar_prime"], float), float(d.get("gamma", COMPACT_GAMMA)),
                   None if pos is None else np.array(pos, float))

    def save(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "CompactModel":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def synth_sphere_like_model(nodes: int, total_curvature: float, seed: int, gamma: float = COMPACT_GAMMA,
                            perturbation: float = 0.2, nonpositive: bool = True) -> CompactModel:
    """Synthetic model on the unit sphere in R^3.

    Nodes: Fibonacci points, jittered by the seed (two nodes: antipodal pair).
    Volumes: equal area 4 pi / n times a mild random factor.
    Kernel: -gamma ln d + gamma * (a1 d + a2 d^2) with |a_k| <= perturbation, d the
    chordal distance; the diagonal uses the cell-average value
    -gamma (ln h - 1/2) of ln over a flat disc of the cell's area pi h^2.
    With ``nonpositive`` a constant is added to the smooth part so that max U = 0;
    this fixes the free additive constant of the kernel (see compact.subadditivity_check).
    Q in [0.5, 1.5], Qbar' positive and rescaled to the requested total.
    """
    if not total_curvature < TOTAL_CURVATURE_MAX:
        raise DomainError(f"total curvature must be < 16 pi^2, got {total_curvature}")
    if nodes < 2:
        raise DomainError("need at least two nodes")
    rng = np.random.default_rng(seed)
    if nodes == 2:
        pos = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        vol = np.full(2, 2 * math.pi)
        q = np.ones(2)
        qb = np.ones(2)
        a = np.zeros(2)
    else:
        pos = _fibonacci_sphere(nodes) + 0.05 * rng.normal(size=(nodes, 3))
        pos /= np.linalg.norm(pos, axis=1, keepdims=True)
        vol = (4 * math.pi / nodes) * rng.uniform(0.8, 1.2, size=nodes)
        vol *= 4 * math.pi / vol.sum()
        q = rng.uniform(0.5, 1.5, size=nodes)
        qb = rng.uniform(0.5, 1.5, size=nodes)
        a = rng.uniform(-perturbation, perturbation, size=2)
    qb = qb * (total_curvature / np.sum(vol * qb))
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    h = np.sqrt(vol / math.pi)
    np.fill_diagonal(d, 1.0)
    logd = np.log(d)
    np.fill_diagonal(logd, np.log(h) - 0.5)
    np.fill_diagonal(d, 0.0)
    smooth = gamma * (a[0] * d + a[1] * d * d)
    U = -gamma * logd + smooth
    if nonpositive:
        U = U - np.max(U)
    return CompactModel(vol, U, q, qb, gamma, pos)


def two_node_model(total_curvature: float = 1.0, gamma: float = COMPACT_GAMMA) -> CompactModel:
    return synth_sphere_like_model(2, total_curvature, 0, gamma)


# ---- exact small-N quantities ---------------------------------------------

def _check_n(n: int):
    if not (1 <= n <= 4):
        raise DomainError("exact partition functions are limited to 1 <= n <= 4")


def log_partition_function(model: CompactModel, beta: float, n: int) -> float:
    """ln M^(n)(beta), with M^(n) = sum over node n-tuples of prod (w Q) exp(beta/(n-1) sum_{i<j} U)."""
    _check_n(n)
    a = model.volumes * model.Q
    if n == 1:
        return float(math.log(a.sum()))
    X = (beta / (n - 1)) * model.kernel
    xmax = float(np.max(X))
    E = np.exp(X - xmax)  # overflow guard, restored below
    if n == 2:
        s = a @ E @ a
    elif n == 3:
        # sum_i a_i (a*E_i)^T E (a*E_i)
        V = a[None, :] * E
        s = float(np.einsum("i,ij,jk,ik->", a, V, E, V))
    else:
        # sum_{i,j} a_i a_j E_ij v_ij^T E v_ij with v_ij = a * E_i * E_j
        V = a[None, None, :] * E[:, None, :] * E[None, :, :]
        inner = np.einsum("ijk,kl,ijl->ij", V, E, V)
        s = float(np.einsum("i,j,ij,ij->", a, a, E, inner))
    return float(math.log(s) + xmax * n * (n - 1) / 2)


def partition_function(model: CompactModel, beta: float, n: int) -> float:
    return math.exp(log_partition_function(model, beta, n))


def free_energy_N(model: CompactModel, beta: float, n: int) -> float:
    """ln M^(n)(beta) - n ln M^(1)."""
    return log_partition_function(model, beta, n) - n * log_partition_function(model, beta, 1)


def pair_mean_U(model: CompactModel) -> float:
    """mu1 x mu1 (U), diagonal included (independent draws may share a node)."""
    p = model.base_probability
    return float(p @ model.kernel @ p)


def subadditivity_check(model: CompactModel, beta: float, n1: int, n2: int, slack: float = SLACK):
    """(F^(n1+n2), F^(n1) + F^(n2), holds).

    The inequality is a theorem when n1, n2 >= 2.  A block of size 1 has
    F^(1) = 0, and the inequality then needs the N-particle pair mean of U to be
    <= 0, which U <= 0 guarantees; if mu1 x mu1 (U) > 0 Jensen's bound
    F^(2) >= beta mu1 x mu1 (U) > 0 breaks it.
    """
    if n1 < 1 or n2 < 1 or n1 + n2 > 4:
        raise DomainError("need n1, n2 >= 1 and n1 + n2 <= 4")
    lhs = free_energy_N(model, beta, n1 + n2)
    rhs = free_energy_N(model, beta, n1) + free_energy_N(model, beta, n2)
    return lhs, rhs, bool(lhs <= rhs + slack * max(1.0, abs(rhs)))


def jensen_lower_bound(model: CompactModel, beta: float, n: int, slack: float = SLACK):
    """(F^(n)/n, (beta/2) mu1 x mu1 (U), holds)."""
    _check_n(n)
    fn = free_energy_N(model, beta, n) / n
    bound = 0.5 * beta * pair_mean_U(model) if n >= 2 else 0.0
    return fn, bound, bool(fn >= bound - slack * max(1.0, abs(bound)))


def exact_marginal(model: CompactModel, beta: float, N: int, k: int = 1) -> np.ndarray:
    """Exact k-point marginal probabilities of the N-particle ensemble (N <= 4, k in {1, 2})."""
    _check_n(N)
    if k not in (1, 2) or k > N:
        raise DomainError("k must be 1 or 2 and <= N")
    a = model.volumes * model.Q
    m = a.size
    if N == 1:
        return a / a.sum()
    E = np.exp((beta / (N - 1)) * model.kernel)
    if N == 2:
        J = a[:, None] * a[None, :] * E
    elif N == 3:
        J = a[:, None] * a[None, :] * E * np.einsum("k,ik,jk->ij", a, E, E)
    else:
        V = a[None, None, :] * E[:, None, :] * E[None, :, :]
        J = a[:, None] * a[None, :] * E * np.einsum("ijk,kl,ijl->ij", V, E, V)
    J = J / J.sum()
    return J.sum(axis=1) if k == 1 else J.reshape(m, m)


def variational_gap(model: CompactModel, beta: float, rho_values, rng: np.random.Generator,
                    trials: int = 20, scale: float = 0.3):
    """Free energy of the fixed point minus the best of ``trials`` random perturbations."""
    from .meanfield import DensityField
    from .measures import free_energy_density

    rho = DensityField(model, rho_values)
    f0 = free_energy_density(rho, model, beta)
    others = []
    for _ in range(trials):
        pert = rho_values * np.exp(scale * rng.normal(size=rho_values.shape))
        pert = pert / np.sum(model.volumes * pert)
        others.append(free_energy_density(DensityField(model, pert), model, beta))
    return f0, np.array(others)
