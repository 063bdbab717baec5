"""Metropolis sampling of the N-particle canonical ensemble on a gauge ball.

Target density on (H^1)^N, up to normalisation:

    exp( beta/(N-1) sum_{i<j} U(x_i, x_j) ) prod_l Q(x_l) e^{k K(x_l)},

U = -gamma ln dist, restricted to x_l in B_R.  Moves are single-site left
translations x_i -> delta . x_i with delta = (s xi1, s xi2, s^2 xi3), xi
standard normal; Haar measure is bi-invariant so the proposal is symmetric.
Proposals leaving B_R are rejected.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _backend
from ._fallback import metropolis_sweeps as _py_sweeps
from .errors import DomainError, InsufficientSamplesError
from .heisenberg import gauge_array, log_dist_array, sample_ball
from .measures import ParticleConfig, WeightedMeasure, hamiltonian

BLOCK = 4096


@dataclass(frozen=True)
class EnsembleParams:
    beta: float
    n_particles: int
    chain_length: int
    burn_in: int
    proposal_scale: float
    seed: int
    thin: int = 1

    def __post_init__(self):
        if not (0 <= self.beta < 8):
            raise DomainError("beta must lie in [0, 8)")
        if self.n_particles < 2:
            raise DomainError("need at least two particles")
        if not (0 <= self.burn_in < self.chain_length):
            raise DomainError("need 0 <= burn_in < chain_length")
        if not self.proposal_scale > 0:
            raise DomainError("proposal_scale must be positive")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")
        if self.seed < 0:
            raise DomainError("seed must be unsigned")

    @property
    def n_records(self) -> int:
        return len(range(self.burn_in, self.chain_length, self.thin))


@dataclass
class Chain:
    """Recorded post-burn-in configurations, shape (records, N, 3)."""
    samples: np.ndarray
    params: EnsembleParams
    acceptance_rate: float
    radius: float
    gamma: float = 1.0

    def __len__(self):
        return self.samples.shape[0]

    def __getitem__(self, i) -> ParticleConfig:
        return ParticleConfig(self.samples[i])

    @property
    def n_particles(self) -> int:
        return self.samples.shape[1]


def _check_regime(params: EnsembleParams, base: WeightedMeasure):
    if not params.beta * base.gamma < 8:
        raise DomainError(f"beta*gamma = {params.beta * base.gamma} must be < 8")


def gibbs_log_density(c: ParticleConfig, params: EnsembleParams, base: WeightedMeasure) -> float:
    """beta * H_N(c) + sum_l ln(Q e^{kK})(x_l), or -inf outside the truncation ball."""
    if np.any(gauge_array(c.coords) > base.radius):
        return -math.inf
    return params.beta * hamiltonian(c, base.gamma) + float(np.sum(base.log_weight_at(c.coords)))


def _sweeper(base: WeightedMeasure, kernels):
    poly = base.log_weight_poly
    if poly is not None:
        return kernels.metropolis_sweeps, poly, None
    return _py_sweeps, (0.0, 0.0, 0.0), (lambda x, y, t: float(base.log_weight_xyt(x, y, t)))


def _draw_block(rng, n_sweeps, n, scale):
    steps = rng.standard_normal(size=(n_sweeps, n, 3))
    steps[..., :2] *= scale
    steps[..., 2] *= scale * scale
    logu = np.log(rng.random(size=(n_sweeps, n)))
    return np.ascontiguousarray(steps), np.ascontiguousarray(logu)


def run_chain(params: EnsembleParams, base: WeightedMeasure, backend: Optional[str] = None,
              initial: Optional[np.ndarray] = None) -> Chain:
    """Deterministic given params.seed (and identical across backends)."""
    _check_regime(params, base)
    kernels = _backend.kernels if backend is None else _backend.load(backend)
    sweeps, coeffs, lw = _sweeper(base, kernels)
    rng = np.random.default_rng(params.seed)
    N = params.n_particles
    X = sample_ball(N, base.radius, rng) if initial is None else np.array(initial, float)
    X = np.ascontiguousarray(X)
    out = np.empty((params.n_records, N, 3))
    pair_coef = params.beta * base.gamma / (N - 1)
    r4 = base.radius ** 4
    accepted = 0
    rec = 0
    done = 0
    while done < params.chain_length:
        b = min(BLOCK, params.chain_length - done)
        steps, logu = _draw_block(rng, b, N, params.proposal_scale)
        acc, nrec = sweeps(X, steps, logu, pair_coef, coeffs, r4, done, params.burn_in, params.thin,
                           out[rec:], lw)
        accepted += acc
        rec += nrec
        done += b
    assert rec == params.n_records
    return Chain(out, params, accepted / (params.chain_length * N), base.radius, base.gamma)


def chain_seeds(seed: int, n_chains: int) -> list:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in ss.spawn(n_chains)]


def run_chains(params: EnsembleParams, base: WeightedMeasure, n_chains: int, threads: int = 1,
               backend: Optional[str] = None) -> list:
    """Independent chains with seeds split from params.seed; order of results is fixed."""
    plist = [replace(params, seed=s) for s in chain_seeds(params.seed, n_chains)]
    if threads <= 1 or n_chains == 1:
        return [run_chain(p, base, backend) for p in plist]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda p: run_chain(p, base, backend), plist))


def metropolis_update(configs: np.ndarray, params: EnsembleParams, base: WeightedMeasure, seed: int,
                      sweeps: int = 1, backend: Optional[str] = None) -> np.ndarray:
    """Apply ``sweeps`` Metropolis sweeps independently to each configuration in (M, N, 3)."""
    kernels = _backend.kernels if backend is None else _backend.load(backend)
    fn, coeffs, lw = _sweeper(base, kernels)
    rng = np.random.default_rng(seed)
    N = configs.shape[1]
    out = np.array(configs, float)
    buf = np.empty((1, N, 3))
    for m in range(out.shape[0]):
        X = np.ascontiguousarray(out[m])
        steps, logu = _draw_block(rng, sweeps, N, params.proposal_scale)
        fn(X, steps, logu, params.beta * base.gamma / (N - 1), coeffs, base.radius ** 4, 0, sweeps - 1, 1, buf, lw)
        out[m] = X
    return out


# ---- estimators ---------------------------------------------------------------

def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Sokal's windowed estimate of the integrated autocorrelation time."""
    x = np.asarray(x, float)
    n = x.size
    if n < 4:
        return 1.0
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conjugate(f))[:n] / (n * var)
    tau = 1.0
    for w in range(1, n):
        tau += 2.0 * acf[w]
        if w >= c * tau:
            break
    return max(tau, 1.0)


def effective_sample_size(chain: Chain) -> float:
    return len(chain) / integrated_autocorr_time(gauge_array(chain.samples[:, 0, :]))


def _as_list(chains):
    return [chains] if isinstance(chains, Chain) else list(chains)


def _batches(values_per_chain: list, per_chain: int) -> list:
    out = []
    for v in values_per_chain:
        for part in np.array_split(v, per_chain):
            if len(part):
                out.append(part)
    return out


@dataclass
class MarginalEstimate:
    edges: np.ndarray
    masses: np.ndarray
    sample_count: int
    ess: float
    batch_masses: np.ndarray = field(repr=False)
    slots: int = 1

    @property
    def radial_bins(self) -> list:
        return [((float(a), float(b)), float(m)) for a, b, m in zip(self.edges[:-1], self.edges[1:], self.masses)]

    @property
    def stderr(self) -> np.ndarray:
        B = self.batch_masses.shape[0]
        return self.batch_masses.std(axis=0, ddof=1) / math.sqrt(B)

    def to_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "masses": self.masses.tolist(), "stderr": self.stderr.tolist(),
                "sample_count": int(self.sample_count), "ess": float(self.ess), "slots": int(self.slots)}


def _hist(g: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(edges, g, side="right") - 1, 0, len(edges) - 2)
    h = np.bincount(idx.ravel(), minlength=len(edges) - 1).astype(float)
    return h / h.sum()


def estimate_marginal(chains, k: Optional[int] = None, edges=None, n_bins: int = 10,
                      batches_per_chain: int = 10, min_ess: float = 50.0) -> MarginalEstimate:
    """Radial histogram of the 1-point law pooled over slots 0..k-1 (all slots by default)."""
    chains = _as_list(chains)
    N = chains[0].n_particles
    k = N if k is None else int(k)
    if not (1 <= k <= N):
        raise DomainError(f"k must lie in [1, {N}]")
    R = chains[0].radius
    edges = np.linspace(0.0, R, n_bins + 1) if edges is None else np.asarray(edges, float)
    gs = [gauge_array(c.samples[:, :k, :]) for c in chains]
    ess = float(sum(effective_sample_size(c) for c in chains))
    if ess < min_ess:
        raise InsufficientSamplesError(f"effective sample size {ess:.1f} below {min_ess}")
    pooled = np.concatenate([g.ravel() for g in gs])
    masses = _hist(pooled, edges)
    bm = np.array([_hist(b.ravel(), edges) for b in _batches(gs, batches_per_chain)])
    return MarginalEstimate(edges, masses, int(pooled.size), ess, bm, k)


def _pair_means(chain: Chain) -> np.ndarray:
    s = chain.samples
    L = log_dist_array(s[:, :, None, :], s[:, None, :, :])
    iu = np.triu_indices(s.shape[1], 1)
    return L[:, iu[0], iu[1]].mean(axis=1)


def pair_log_moment(chains, batches_per_chain: int = 10):
    """(beta * E[ln dist(X1, X2)], standard error) averaging over all pairs (exchangeability)."""
    chains = _as_list(chains)
    beta = chains[0].params.beta
    series = [_pair_means(c) for c in chains]
    bm = np.array([b.mean() for b in _batches(series, batches_per_chain)])
    value = beta * float(np.mean(np.concatenate(series)))
    err = abs(beta) * float(bm.std(ddof=1) / math.sqrt(bm.size))
    return value, err


def tightness_probe(chains, radii: Sequence[float], batches_per_chain: int = 10) -> list:
    """[(R, mass of the 1-marginal outside B_R, standard error)]."""
    chains = _as_list(chains)
    gs = [gauge_array(c.samples) for c in chains]
    out = []
    for R in radii:
        series = [(g > R).mean(axis=1) for g in gs]
        bm = np.array([b.mean() for b in _batches(series, batches_per_chain)])
        out.append((float(R), float(np.mean(np.concatenate(series))), float(bm.std(ddof=1) / math.sqrt(bm.size))))
    return out


# ---- persistence ----------------------------------------------------------------

def chain_metadata(chain: Chain) -> dict:
    return {"params": asdict(chain.params), "acceptance_rate": chain.acceptance_rate,
            "radius": chain.radius, "gamma": chain.gamma, "shape": list(chain.samples.shape)}


def save_chain(chain: Chain, path, fmt: str = "csv", extra: Optional[dict] = None):
    path = str(path)
    rows = chain.samples.reshape(len(chain), -1)
    if fmt == "csv":
        N = chain.n_particles
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"{c}{i}" for i in range(N) for c in ("x", "y", "t")])
            for r in rows:
                w.writerow([repr(float(v)) for v in r])
    elif fmt == "bin":
        rows.astype("<f8").tofile(path)
    else:
        raise ValueError("fmt must be 'csv' or 'bin'")
    meta = chain_metadata(chain)
    meta["format"] = fmt
    if extra:
        meta.update(extra)
    with open(path + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_chain(path) -> Chain:
    path = str(path)
    with open(path + ".json") as fh:
        meta = json.load(fh)
    shape = tuple(meta["shape"])
    if meta["format"] == "csv":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    else:
        data = np.fromfile(path, dtype="<f8")
    return Chain(data.reshape(shape), EnsembleParams(**meta["params"]), meta["acceptance_rate"],
                 meta["radius"], meta["gamma"])
