"""Arithmetic on the Heisenberg group H^1.

Coordinates (x, y, t) with law

    (x, y, t) . (x', y', t') = (x + x', y + y', t + t' + 2 (x y' - y x'))

and the Koranyi gauge |p| = ((x^2 + y^2)^2 + t^2)^(1/4).  The distance
dist(p, q) = |q^{-1} p| is left invariant.  Lebesgue measure dx dy dt is
the Haar measure and scales as lambda^4 under dilations.

Scalar functions take HPoint; the ``*_array`` variants act on (..., 3)
arrays and are what the numerical code uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

HOMOGENEOUS_DIMENSION = 4
# |B_1| for the Koranyi ball, from dx dy dt = g^3 dg dtheta dphi in gauge-polar coordinates
UNIT_BALL_VOLUME = math.pi ** 2 / 2.0
# mean of ln|z| over B_h is ln h - 1/4
BALL_LOG_OFFSET = -0.25


@dataclass(frozen=True, slots=True)
class HPoint:
    x: float
    y: float
    t: float

    def __post_init__(self):
        for v in (self.x, self.y, self.t):
            if not math.isfinite(v):
                raise ValueError(f"non-finite coordinate in HPoint({self.x}, {self.y}, {self.t})")

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y
        yield self.t

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.t], dtype=float)

    @classmethod
    def from_array(cls, a) -> "HPoint":
        return cls(float(a[0]), float(a[1]), float(a[2]))


IDENTITY = HPoint(0.0, 0.0, 0.0)


def group_mul(p: HPoint, q: HPoint) -> HPoint:
    return HPoint(p.x + q.x, p.y + q.y, p.t + q.t + 2.0 * (p.x * q.y - p.y * q.x))


def group_inv(p: HPoint) -> HPoint:
    return HPoint(-p.x, -p.y, -p.t)


def gauge(p: HPoint) -> float:
    r2 = p.x * p.x + p.y * p.y
    return math.sqrt(math.hypot(r2, p.t))


def dist(p: HPoint, q: HPoint) -> float:
    """Left-invariant distance |q^{-1} p|."""
    return gauge(group_mul(group_inv(q), p))


def dilate(lam: float, p: HPoint) -> HPoint:
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    return HPoint(lam * p.x, lam * p.y, lam * lam * p.t)


# ---- array versions -------------------------------------------------------

def _check_finite(a: np.ndarray):
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite coordinates")


def mul_array(p, q) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.empty(np.broadcast_shapes(p.shape, q.shape))
    out[..., 0] = p[..., 0] + q[..., 0]
    out[..., 1] = p[..., 1] + q[..., 1]
    out[..., 2] = p[..., 2] + q[..., 2] + 2.0 * (p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0])
    return out


def inv_array(p) -> np.ndarray:
    return -np.asarray(p, dtype=float)


def gauge_array(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    r2 = p[..., 0] ** 2 + p[..., 1] ** 2
    return np.sqrt(np.hypot(r2, p[..., 2]))


def dist_array(p, q) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    dx = p[..., 0] - q[..., 0]
    dy = p[..., 1] - q[..., 1]
    dt = p[..., 2] - q[..., 2] + 2.0 * (q[..., 1] * p[..., 0] - q[..., 0] * p[..., 1])
    return np.sqrt(np.hypot(dx * dx + dy * dy, dt))


def log_dist_array(p, q) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    dx = p[..., 0] - q[..., 0]
    dy = p[..., 1] - q[..., 1]
    dt = p[..., 2] - q[..., 2] + 2.0 * (q[..., 1] * p[..., 0] - q[..., 0] * p[..., 1])
    r2 = dx * dx + dy * dy
    with np.errstate(divide="ignore"):
        return 0.25 * np.log(r2 * r2 + dt * dt)


def dilate_array(lam: float, p) -> np.ndarray:
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    p = np.asarray(p, dtype=float)
    return p * np.array([lam, lam, lam * lam])


def ring_log_mean(s1, t1, s2, t2):
    """Average of ln dist over a full rotation of one point about the t axis.

    For p = (r1, 0, t1) and q = (r2 cos phi, r2 sin phi, t2), with s = r^2,

        (1/2pi) int ln dist(p, q) dphi = (1/4) ln((s1 + s2)^2 + (t1 - t2)^2).
    """
    a = np.asarray(s1) + np.asarray(s2)
    b = np.asarray(t1) - np.asarray(t2)
    return 0.25 * np.log(a * a + b * b)


def gauge_polar_to_cartesian(g, theta, phi) -> np.ndarray:
    """g > 0, theta in [-pi/2, pi/2], phi in [0, 2pi).  Jacobian g^3."""
    g = np.asarray(g, dtype=float)
    r = g * np.sqrt(np.cos(theta))
    out = np.stack(np.broadcast_arrays(r * np.cos(phi), r * np.sin(phi), g * g * np.sin(theta)), axis=-1)
    return out


def sample_ball(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform (Haar) samples in the gauge ball of the given radius, by rejection from its box."""
    out = np.empty((0, 3))
    while out.shape[0] < n:
        m = max(2 * (n - out.shape[0]), 64)
        box = rng.uniform(-1.0, 1.0, size=(m, 3)) * np.array([radius, radius, radius * radius])
        keep = box[gauge_array(box) <= radius]
        out = np.concatenate([out, keep])
    return out[:n]


def quasi_triangle_ratio(samples: int, rng: np.random.Generator, scale: float = 3.0) -> float:
    """Largest dist(p,r) / (dist(p,q) + dist(q,r)) over random triples."""
    p, q, r = (rng.normal(size=(samples, 3)) * np.array([scale, scale, scale * scale]) for _ in range(3))
    num = dist_array(p, r)
    den = dist_array(p, q) + dist_array(q, r)
    ok = den > 0
    return float(np.max(num[ok] / den[ok]))
