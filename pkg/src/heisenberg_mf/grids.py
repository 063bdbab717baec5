"""Node sets with quadrature weights and cell-averaged log kernels.

GaugePolarGrid is the workhorse for axisymmetric problems (Q, K functions
of r^2 = x^2 + y^2 and t).  Averaging ln dist over rotations about the t axis
gives exactly

    (1/4) ln((s + s')^2 + (t - t')^2),   s = r^2,

so the problem lives on the half plane s >= 0 where Haar measure is
pi ds dt and the gauge ball B_R is the half disc of radius R^2.  Cells are
polar cells in (rho, theta) with rho = g^2, so gauge shells are unions of
cells.

PointGrid handles arbitrary 3D node sets (tensor grids included) with the
ball rule ln h - 1/4 for self pairs and pairs closer than a cell size.
"""
from __future__ import annotations

import math
from functools import cached_property

import numpy as np

from . import _backend
from .heisenberg import BALL_LOG_OFFSET, UNIT_BALL_VOLUME, gauge_array, log_dist_array


def _gauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


class Grid:
    """Common interface.  Subclasses set nodes (n,3) and weights (n,)."""

    nodes: np.ndarray
    weights: np.ndarray
    radius: float
    axisymmetric = False

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @cached_property
    def gauges(self) -> np.ndarray:
        return gauge_array(self.nodes)

    @cached_property
    def log_kernel(self) -> np.ndarray:
        """L[i, j] ~ mean of ln dist(node_i, y) over cell j."""
        return self._log_kernel()

    def interaction(self, gamma: float) -> np.ndarray:
        if gamma is None:
            raise ValueError("gamma is required for a grid interaction")
        return -gamma * self.log_kernel

    @cached_property
    def log_gauge(self) -> np.ndarray:
        """Cell averages of ln gauge(y)."""
        return self.log_potential_matrix(np.zeros((1, 3)))[0]

    def log_potential_matrix(self, points) -> np.ndarray:
        """M[p, j] ~ mean of ln dist(point_p, y) over cell j, for off-grid points."""
        raise NotImplementedError

    def log_potential(self, points, masses) -> np.ndarray:
        """sum_j masses_j * (cell-averaged ln dist(point, cell j))."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(points.shape[0])
        step = 512
        for lo in range(0, points.shape[0], step):
            out[lo:lo + step] = self.log_potential_matrix(points[lo:lo + step]) @ masses
        return out

    def shell_edges(self, n_bins: int) -> np.ndarray:
        raise NotImplementedError

    def shell_masses(self, values, edges) -> np.ndarray:
        """Integrate a density over gauge shells; edges must be cell-aligned."""
        edges = np.asarray(edges, dtype=float)
        idx = np.searchsorted(edges, self.gauges, side="right") - 1
        idx = np.clip(idx, 0, len(edges) - 2)
        return np.bincount(idx, weights=self.weights * np.asarray(values), minlength=len(edges) - 1)

    def symmetric_key(self) -> str:
        return type(self).__name__


class GaugePolarGrid(Grid):
    axisymmetric = True

    def __init__(self, radius: float, n_radial: int = 48, n_angular: int = 48,
                 far_order: int = 3, near_order: int = 12, near_factor: float = 3.0, backend=None):
        if radius <= 0 or n_radial < 1 or n_angular < 1:
            raise ValueError("bad grid parameters")
        self.radius = float(radius)
        self.n_radial = int(n_radial)
        self.n_angular = int(n_angular)
        self.far_order = int(far_order)
        self.near_order = int(near_order)
        self.near_factor = float(near_factor)
        self.kernels = backend if backend is not None else _backend.kernels
        self.rho_edges = np.linspace(0.0, self.radius ** 2, self.n_radial + 1)
        self.theta_edges = np.linspace(-0.5 * math.pi, 0.5 * math.pi, self.n_angular + 1)
        rc = 0.5 * (self.rho_edges[1:] + self.rho_edges[:-1])
        tc = 0.5 * (self.theta_edges[1:] + self.theta_edges[:-1])
        R, T = np.meshgrid(rc, tc, indexing="ij")
        self.cell_rho = R.ravel()
        self.cell_theta = T.ravel()
        self.s = self.cell_rho * np.cos(self.cell_theta)
        self.t = self.cell_rho * np.sin(self.cell_theta)
        self.nodes = np.column_stack([np.sqrt(self.s), np.zeros_like(self.s), self.t])
        dth = math.pi / self.n_angular
        area = 0.5 * (self.rho_edges[1:] ** 2 - self.rho_edges[:-1] ** 2)[:, None] * dth * np.ones((1, self.n_angular))
        self.weights = math.pi * area.ravel()
        self._dr = self.radius ** 2 / self.n_radial
        self._dth = dth

    @cached_property
    def gauges(self) -> np.ndarray:
        return np.sqrt(self.cell_rho)

    def _subpoints(self, order: int, cells=None):
        u, wu = _gauss(order)
        if cells is None:
            cells = np.arange(self.size)
        i_r, i_t = np.divmod(cells, self.n_angular)
        r0 = self.rho_edges[i_r][:, None, None]
        t0 = self.theta_edges[i_t][:, None, None]
        rr = r0 + self._dr * u[None, :, None]
        th = t0 + self._dth * u[None, None, :]
        w = (rr * wu[None, :, None] * wu[None, None, :]) * np.ones_like(th)
        w = w / w.sum(axis=(1, 2), keepdims=True)
        S = (rr * np.cos(th)).reshape(len(cells), -1)
        T = (rr * np.sin(th)).reshape(len(cells), -1)
        return np.ascontiguousarray(S), np.ascontiguousarray(T), np.ascontiguousarray(w.reshape(len(cells), -1))

    def _cell_diameter(self):
        return np.maximum(self._dr, (self.cell_rho + 0.5 * self._dr) * self._dth)

    def _assemble(self, s_tgt, t_tgt) -> np.ndarray:
        s_tgt = np.ascontiguousarray(s_tgt, dtype=float)
        t_tgt = np.ascontiguousarray(t_tgt, dtype=float)
        S, T, W = self._subpoints(self.far_order)
        out = np.empty((s_tgt.shape[0], self.size))
        self.kernels.ring_log_sum(s_tgt, t_tgt, S, T, W, out)
        # near-singular pairs: image point (-s_i, t_i) close to cell j
        diam = self._cell_diameter()
        d_img = np.hypot(s_tgt[:, None] + self.s[None, :], t_tgt[:, None] - self.t[None, :])
        ii, jj = np.nonzero(d_img < self.near_factor * diam[None, :])
        if ii.size:
            Sn, Tn, Wn = self._subpoints(self.near_order, jj)
            vals = np.empty(ii.size)
            self.kernels.ring_log_pairs(s_tgt[ii], t_tgt[ii], Sn, Tn, Wn, vals)
            out[ii, jj] = vals
        return out

    def _log_kernel(self) -> np.ndarray:
        return self._assemble(self.s, self.t)

    def log_potential_matrix(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        s = points[:, 0] ** 2 + points[:, 1] ** 2
        return self._assemble(s, points[:, 2])

    def shell_edges(self, n_bins: int) -> np.ndarray:
        if self.n_radial % n_bins:
            raise ValueError(f"n_bins={n_bins} does not divide n_radial={self.n_radial}")
        return np.sqrt(self.rho_edges[:: self.n_radial // n_bins])

    def shell_masses(self, values, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        rho_e = edges ** 2
        ok = np.all(np.min(np.abs(rho_e[:, None] - self.rho_edges[None, :]), axis=1) <= 1e-9 * self.radius ** 2)
        if not ok:
            raise ValueError("shell edges are not aligned with grid cells")
        idx = np.searchsorted(rho_e, self.cell_rho, side="right") - 1
        inside = (idx >= 0) & (idx < len(edges) - 1)
        m = np.zeros(len(edges) - 1)
        np.add.at(m, idx[inside], (self.weights * np.asarray(values))[inside])
        return m

    def symmetric_key(self) -> str:
        return f"GaugePolarGrid(R={self.radius!r},nr={self.n_radial},na={self.n_angular})"


class PointGrid(Grid):
    """Arbitrary nodes in H^1 with cell volumes; pointwise ln dist kernel."""

    def __init__(self, nodes, weights, radius: float | None = None):
        self.nodes = np.ascontiguousarray(np.asarray(nodes, dtype=float).reshape(-1, 3))
        self.weights = np.asarray(weights, dtype=float).ravel()
        if self.weights.shape[0] != self.nodes.shape[0]:
            raise ValueError("nodes and weights differ in length")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.nodes)):
            raise ValueError("weights must be positive and nodes finite")
        self.radius = float(radius) if radius is not None else float(np.max(gauge_array(self.nodes)))
        # gauge radius of a ball with the cell's volume
        self.cell_radius = (self.weights / UNIT_BALL_VOLUME) ** 0.25

    def _ball_rule(self, L, h):
        close = ~(L >= np.log(h))
        L[close] = (np.log(h) + BALL_LOG_OFFSET)[close]
        return L

    def _log_kernel(self) -> np.ndarray:
        L = log_dist_array(self.nodes[:, None, :], self.nodes[None, :, :])
        h = np.maximum(self.cell_radius[:, None], self.cell_radius[None, :])
        return self._ball_rule(L, h)

    def log_potential_matrix(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        L = log_dist_array(points[:, None, :], self.nodes[None, :, :])
        h = np.broadcast_to(self.cell_radius[None, :], L.shape)
        return self._ball_rule(L, h)

    def shell_edges(self, n_bins: int) -> np.ndarray:
        return np.linspace(0.0, self.radius, n_bins + 1)


class TensorGrid(PointGrid):
    """Cell-centred box grid on [-a,a]^2 x [-a^2,a^2], optionally clipped to the gauge ball B_a."""

    def __init__(self, radius: float, n_xy: int = 12, n_t: int = 12, clip_to_ball: bool = True):
        a = float(radius)
        hx = 2 * a / n_xy
        ht = 2 * a * a / n_t
        xc = -a + hx * (np.arange(n_xy) + 0.5)
        tc = -a * a + ht * (np.arange(n_t) + 0.5)
        X, Y, T = np.meshgrid(xc, xc, tc, indexing="ij")
        nodes = np.column_stack([X.ravel(), Y.ravel(), T.ravel()])
        if clip_to_ball:
            nodes = nodes[gauge_array(nodes) <= a]
        super().__init__(nodes, np.full(nodes.shape[0], hx * hx * ht), radius=a)
        self.n_xy = n_xy
        self.n_t = n_t

    def symmetric_key(self) -> str:
        return f"TensorGrid(R={self.radius!r},nxy={self.n_xy},nt={self.n_t})"
