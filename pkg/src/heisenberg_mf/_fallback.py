"""Pure Python / numpy versions of the hot kernels.

Same signatures and the same arithmetic order as the compiled module, so
both backends consume identical random streams and agree to rounding.
"""
import math

import numpy as np


def ring_log_sum(s_tgt, t_tgt, s_src, t_src, w_src, out):
    """out[i, j] = 1/4 sum_k w[j,k] ln((s_i + S[j,k])^2 + (t_i - T[j,k])^2)."""
    n = s_tgt.shape[0]
    chunk = max(1, 2_000_000 // max(1, s_src.size))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        a = s_tgt[lo:hi, None, None] + s_src[None]
        b = t_tgt[lo:hi, None, None] - t_src[None]
        out[lo:hi] = 0.25 * np.einsum("ijk,jk->ij", np.log(a * a + b * b), w_src)
    return out


def ring_log_pairs(s_tgt, t_tgt, s_src, t_src, w_src, out):
    """out[p] = 1/4 sum_k w[p,k] ln((s_p + S[p,k])^2 + (t_p - T[p,k])^2)."""
    a = s_tgt[:, None] + s_src
    b = t_tgt[:, None] - t_src
    out[:] = 0.25 * np.sum(w_src * np.log(a * a + b * b), axis=1)
    return out


def _log_weight(c, x, y, t):
    s = x * x + y * y
    return c[0] * s + c[1] * s * s + c[2] * t * t


def metropolis_sweeps(X, steps, logu, pair_coef, coeffs, radius4, first_sweep, burn_in, thin, out, log_weight=None):
    """Systematic-scan single-site Metropolis on N points in H^1.

    X: (N, 3) current configuration, updated in place.
    steps: (n_sweeps, N, 3) left-translation increments.
    logu: (n_sweeps, N) log uniforms for the accept test.
    pair_coef: beta * gamma / (N - 1); log target is
        -pair_coef sum_{i<j} ln d(x_i, x_j) + sum_l log_weight(x_l).
    coeffs: (c_s, c_ss, c_tt) of the polynomial log weight in s = r^2, t,
        used unless a Python callable ``log_weight(x, y, t)`` is given.
    radius4: R^4 of the truncation ball.
    Records X into out[k] after sweeps with index >= burn_in and
    (index - burn_in) % thin == 0.  Returns (accepted, recorded).
    """
    n_sweeps, n, _ = steps.shape
    c = (float(coeffs[0]), float(coeffs[1]), float(coeffs[2]))
    pts = [list(map(float, row)) for row in X]
    if log_weight is None:
        lw = [_log_weight(c, *p) for p in pts]
    else:
        lw = [float(log_weight(*p)) for p in pts]
    accepted = 0
    rec = 0
    for k in range(n_sweeps):
        st = steps[k]
        lu = logu[k]
        for i in range(n):
            xi, yi, ti = pts[i]
            dx, dy, dt = float(st[i, 0]), float(st[i, 1]), float(st[i, 2])
            # left translation by the increment: delta . x_i
            nx = dx + xi
            ny = dy + yi
            nt = dt + ti + 2.0 * (dx * yi - dy * xi)
            s = nx * nx + ny * ny
            if s * s + nt * nt > radius4:
                continue
            new_lw = _log_weight(c, nx, ny, nt) if log_weight is None else float(log_weight(nx, ny, nt))
            dlog = 0.0
            for j in range(n):
                if j == i:
                    continue
                xj, yj, tj = pts[j]
                ax = xi - xj
                ay = yi - yj
                at = ti - tj + 2.0 * (yj * xi - xj * yi)
                ar = ax * ax + ay * ay
                bx = nx - xj
                by = ny - yj
                bt = nt - tj + 2.0 * (yj * nx - xj * ny)
                br = bx * bx + by * by
                dlog += math.log(ar * ar + at * at) - math.log(br * br + bt * bt)
            dlog = 0.25 * pair_coef * dlog + new_lw - lw[i]
            if lu[i] < dlog:
                pts[i] = [nx, ny, nt]
                lw[i] = new_lw
                accepted += 1
        idx = first_sweep + k
        if idx >= burn_in and (idx - burn_in) % thin == 0:
            out[rec] = pts
            rec += 1
    X[:] = pts
    return accepted, rec
