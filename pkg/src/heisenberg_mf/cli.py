"""Batch command line: solve, sample, verify, sweep.

    heisenberg-mf solve  --config run.yaml --out results/
    heisenberg-mf sample --config run.yaml --out results/ --threads 4
    heisenberg-mf verify --config run.yaml --out results/
    heisenberg-mf sweep  --config run.yaml --out results/ --betas 1,2,4,6

Exit codes: 0 ok, 1 unexpected error, 2 invalid configuration or parameters,
3 solver did not converge, 4 a probe failed, 5 required artifact missing.
Every output file gets a ``<file>.meta.json`` sidecar with the config hash and seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback

import numpy as np

from . import __version__, _backend
from . import experiments as ex
from .compact import CompactModel, synth_sphere_like_model
from .config import SCHEMA_VERSION, config_hash, load_config, validate_betas
from .diagnostics import FAIL, ProbeReport, asymptotic_slope_fit, summary_csv, total_curvature_check
from .ensemble import EnsembleParams, estimate_marginal, pair_log_moment, run_chains, save_chain, tightness_probe
from .errors import (ConvergenceError, DomainError, InsufficientSamplesError, MissingArtifactError,
                     ValidationError, BinningMismatchError)
from .grids import GaugePolarGrid, TensorGrid
from .meanfield import DensityField, reconstruct_u_compact, reconstruct_u_heisenberg, solve_fixed_point
from .measures import WeightedMeasure

EXIT_OK, EXIT_ERROR, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_PROBE, EXIT_MISSING = 0, 1, 2, 3, 4, 5


def _warn(msg: str):
    print(f"warning: {msg}", file=sys.stderr)


class Output:
    def __init__(self, directory: str, cfg: dict):
        self.dir = directory
        os.makedirs(directory, exist_ok=True)
        self.hash = config_hash(cfg)
        self.seed = cfg["seed"]

    def path(self, name: str) -> str:
        return os.path.join(self.dir, name)

    def _sidecar(self, name: str, extra=None):
        meta = {"file": name, "config_hash": self.hash, "seed": self.seed, "schema_version": SCHEMA_VERSION,
                "package_version": __version__}
        if extra:
            meta.update(extra)
        _dump_json(self.path(name + ".meta.json"), meta)

    def csv(self, name: str, header, rows, extra=None):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
        self._sidecar(name, extra)

    def json(self, name: str, obj, extra=None):
        _dump_json(self.path(name), obj)
        self._sidecar(name, extra)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return o


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---- builders -------------------------------------------------------------------

def build_measure(cfg: dict, check: bool = True) -> WeightedMeasure:
    m = cfg["measure"]
    try:
        base = WeightedMeasure.from_presets(m["q"], m["k"], gamma=m["gamma"], k_exponent=m["k_exponent"],
                                            radius=m["truncation_radius"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ValidationError(f"bad measure definition: {exc}") from exc
    if check:
        rep = ex.assumptions_probe(base, waived=m["allow_truncated"])
        if rep.verdict == FAIL:
            raise ValidationError("base measure fails the decay/moment/tail probes: "
                                  + "; ".join(f"{p}={v!r}" for p, v, _ in rep.values)
                                  + " (set measure.allow_truncated to treat it as supported on B_R)")
        if rep.notes:
            _warn(rep.notes)
    return base


def build_grid(cfg: dict, base: WeightedMeasure):
    g = cfg["grid"]
    if base.axisymmetric:
        return GaugePolarGrid(base.radius, g["n_radial"], g["n_angular"])
    return TensorGrid(base.radius, g["n_xy"], g["n_t"])


def build_compact(cfg: dict) -> CompactModel:
    c = cfg["compact"]
    if c["model_file"]:
        try:
            return CompactModel.load(c["model_file"])
        except OSError as exc:
            raise MissingArtifactError(f"compact model file {c['model_file']}: {exc}") from exc
    return synth_sphere_like_model(c["nodes"], c["total_curvature"], c["model_seed"], c["gamma"], c["perturbation"])


def _compact_beta(cfg, model) -> float:
    b = cfg["compact"]["beta"]
    return 2.0 * model.total_curvature if b is None else float(b)


def _solver_kw(cfg):
    s = cfg["solver"]
    return dict(damping=s["damping"], tol=s["tol"], max_iter=s["max_iter"])


# ---- writers ----------------------------------------------------------------------

def write_heisenberg_solution(out: Output, rho, u, report, base, prefix=""):
    nodes = rho.domain.nodes
    out.csv(prefix + "density.csv", ["x", "y", "t", "weight", "rho"],
            [(n[0], n[1], n[2], w, r) for n, w, r in zip(nodes, rho.weights, rho.values)])
    if u is not None:
        out.csv(prefix + "u.csv", ["x", "y", "t", "u"], [(n[0], n[1], n[2], v) for n, v in zip(nodes, u.values)])
    rep = report.to_dict()
    rep["measure"] = base.describe()
    if u is not None:
        rep["u"] = {"c": u.c, "lambda": u.lam, "normalization": u.normalization}
    out.json(prefix + "solver_report.json", rep)


def _heisenberg_u(cfg, rho, base, beta):
    norm = cfg["solver"]["normalization"]
    if beta == 0 and norm == "equation":
        _warn("beta = 0: using the 'lambda' normalisation of c")
        norm = "lambda"
    return reconstruct_u_heisenberg(rho, base, beta, norm)


# ---- commands ---------------------------------------------------------------------

def cmd_solve(cfg: dict, out: Output, threads: int = 1) -> int:
    if cfg["pipeline"] == "compact":
        model = build_compact(cfg)
        beta = _compact_beta(cfg, model)
        rho, report = solve_fixed_point(model, beta, **_solver_kw(cfg))
        u, lam, c = reconstruct_u_compact(rho, model, beta)
        out.csv("density.csv", ["node", "volume", "rho"], [(i, w, r) for i, (w, r) in enumerate(zip(model.volumes, rho.values))])
        out.csv("u.csv", ["node", "u"], list(enumerate(u)))
        rep = report.to_dict()
        rep["u"] = {"c": c, "lambda": lam, "normalization": "lambda"}
        rep["total_curvature"] = model.total_curvature
        out.json("solver_report.json", rep)
        return EXIT_OK
    base = build_measure(cfg)
    grid = build_grid(cfg, base)
    beta = cfg["solver"]["beta"]
    rho, report = solve_fixed_point(base, beta, grid=grid, **_solver_kw(cfg))
    write_heisenberg_solution(out, rho, _heisenberg_u(cfg, rho, base, beta), report, base)
    return EXIT_OK


def cmd_sample(cfg: dict, out: Output, threads: int = 1) -> int:
    if cfg["pipeline"] != "heisenberg":
        raise ValidationError("sampling is implemented for the heisenberg pipeline; compact marginals are exact sums")
    base = build_measure(cfg)
    e = cfg["ensemble"]
    params = EnsembleParams(e["beta"], e["n_particles"], e["chain_length"], e["burn_in"], e["proposal_scale"],
                            cfg["seed"], e["thin"])
    chains = run_chains(params, base, e["n_chains"], threads)
    grid = build_grid(cfg, base)
    edges = grid.shell_edges(e["n_bins"])
    marg = estimate_marginal(chains, edges=edges)
    d = marg.to_dict()
    d["acceptance_rates"] = [c.acceptance_rate for c in chains]
    out.json("marginal.json", d)
    val, se = pair_log_moment(chains)
    tight = tightness_probe(chains, e["tightness_radii"])
    out.json("moments.json", {"beta_pair_log_moment": val, "stderr": se,
                              "tightness": [{"radius": r, "outside_mass": m, "stderr": s} for r, m, s in tight]})
    if e["save_chain"]:
        ext = "csv" if e["chain_format"] == "csv" else "bin"
        for i, c in enumerate(chains):
            name = f"chain_{i}.{ext}"
            save_chain(c, out.path(name), e["chain_format"], {"config_hash": out.hash})
    return EXIT_OK


def _load_artifact_density(cfg, out: Output, grid):
    path = out.path("density.csv")
    meta = path + ".meta.json"
    if not (os.path.exists(path) and os.path.exists(meta)):
        return None
    with open(meta) as fh:
        if json.load(fh).get("config_hash") != out.hash:
            return None
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.size or not np.allclose(data[:, :3], grid.nodes, rtol=0, atol=1e-12):
        return None
    return DensityField(grid, data[:, 4])


def _run_probe(name: str, params: dict, cfg: dict, out: Output, ctx: dict, threads: int) -> ProbeReport:
    pipeline = cfg["pipeline"]
    if pipeline == "compact":
        if name == "compact_lemmas":
            return ex.compact_lemmas_probe(ex.synthetic_fleet(params.get("n_models", 20), params.get("seed", 2025)))
        if name == "variational":
            return ex.variational_probe(ex.synthetic_fleet(params.get("n_models", 20), params.get("seed", 2025)),
                                        trials=params.get("trials", 20))
        model = build_compact(cfg)
        return ex.compact_fixed_point_probe(model, params.get("beta", _compact_beta(cfg, model)), cfg["solver"]["tol"])
    base = ctx["base"]
    cache = ctx["cache"]
    if name == "fixed_point":
        return ex.fixed_point_probe(base, params.get("betas", [cfg["solver"]["beta"]]), cfg["solver"]["tol"], cache)
    if name == "homogeneity":
        return ex.homogeneity_probe(params.get("qs", [1.0, 2.0, 3.0]), params.get("samples", 400_000), cfg["seed"])
    if name == "lp_threshold":
        pairs = [tuple(p) for p in params["pairs"]] if "pairs" in params else ex.LP_PAIRS
        return ex.lp_probe(pairs, params.get("mesh_levels", 16))
    if name == "slope":
        return ex.slope_probe_family(base, params.get("betas", [1.0, 2.0, 4.0]), params.get("rtol", 0.10),
                                     params.get("target"), cache)
    if name == "total_curvature":
        return ex.total_curvature_probe(None, params.get("betas", [2.0, 4.0]),
                                        params.get("bound_betas", [1.0, 2.0, 4.0, 6.0, 7.5]), params.get("rtol", 0.05),
                                        cache)
    if name == "normality":
        return ex.normality_probe(base, params.get("beta", 2.0), cache)
    e = cfg["ensemble"]
    if name == "meanfield_concentration":
        return ex.concentration_probe(base, params.get("beta", 2.0), tuple(params.get("Ns", [4, 8, 16])),
                                      params.get("chain_length", 1_000_000), params.get("n_bins", e["n_bins"]),
                                      cfg["seed"], params.get("n_chains", e["n_chains"]), threads=threads,
                                      cache=cache, proposal_scale=e["proposal_scale"])
    if name == "moment_bracket":
        return ex.moment_bracket_probe(base, params.get("betas", [2.0, 6.0]), params.get("N", 8),
                                       params.get("chain_length", 400_000), cfg["seed"],
                                       params.get("n_chains", e["n_chains"]), threads, e["proposal_scale"])
    if name == "tightness":
        return ex.tightness_experiment(base, params.get("beta", 2.0), tuple(params.get("Ns", [4, 8, 16])),
                                       params.get("radius", 2.0), params.get("chain_length", 400_000), cfg["seed"],
                                       params.get("n_chains", e["n_chains"]), threads, e["proposal_scale"])
    if name == "assumptions":
        return ex.assumptions_probe(base, cfg["measure"]["allow_truncated"])
    raise ValidationError(f"unknown probe {name}")


def cmd_verify(cfg: dict, out: Output, threads: int = 1) -> int:
    probes = cfg["probes"]
    if not probes:
        _warn("empty probe list; nothing to verify")
        out.json("probes.json", [])
        return EXIT_OK
    ctx = {}
    if cfg["pipeline"] == "heisenberg":
        base = build_measure(cfg)
        grid = build_grid(cfg, base)
        cache = ex.SolveCache(grid, cfg["solver"]["tol"], cfg["solver"]["damping"], cfg["solver"]["max_iter"])
        rho = _load_artifact_density(cfg, out, grid)
        if rho is None and cfg["verify"]["require_artifacts"]:
            raise MissingArtifactError(f"no density.csv matching this configuration in {out.dir}; run 'solve' first")
        if rho is not None:
            from .meanfield import SolverReport
            cache._store[(id(base), float(cfg["solver"]["beta"]))] = (base, rho, SolverReport(converged=True))
        ctx = {"base": base, "grid": grid, "cache": cache}
    reports = []
    for p in probes:
        params = {k: v for k, v in p.items() if k != "name"}
        reports.append(_run_probe(p["name"], params, cfg, out, ctx, threads))
    out.json("probes.json", [r.to_dict() for r in reports])
    with open(out.path("probes_summary.csv"), "w") as fh:
        fh.write(summary_csv(reports))
    out._sidecar("probes_summary.csv")
    for r in reports:
        print(f"{r.name}: {r.verdict}")
    return EXIT_PROBE if any(r.verdict == FAIL for r in reports) else EXIT_OK


def cmd_sweep(cfg: dict, out: Output, threads: int = 1, betas=None) -> int:
    betas = list(cfg["sweep"]["betas"] if betas is None else betas)
    if cfg["pipeline"] != "heisenberg":
        raise ValidationError("sweep is implemented for the heisenberg pipeline")
    base = build_measure(cfg)
    validate_betas(betas, base.gamma)
    grid = build_grid(cfg, base)
    rows = []
    family = []
    prev = None
    header = ["beta", "iterations", "residual", "slope", "slope_r2", "total_curvature", "normalization"]
    status = EXIT_OK
    for b in betas:
        try:
            rho, report = solve_fixed_point(base, b, grid=grid, initial=prev, **_solver_kw(cfg))
        except ConvergenceError:
            status = EXIT_CONVERGENCE
            break
        prev = rho
        u = _heisenberg_u(cfg, rho, base, b)
        slope, r2 = asymptotic_slope_fit(u, base)
        tc = total_curvature_check(u, base, b).value if u.normalization == "equation" else float("nan")
        rows.append((b, report.iterations, report.final_residual, slope, r2, tc, u.normalization))
        family.append(u.values)
        out.csv("sweep_summary.csv", header, rows)
    if family:
        nodes = grid.nodes
        out.csv("u_family.csv", ["x", "y", "t"] + [f"u_beta={b!r}" for b in betas[:len(family)]],
                [tuple(n) + tuple(f[i] for f in family) for i, n in enumerate(nodes)])
    return status


COMMANDS = {"solve": cmd_solve, "sample": cmd_sample, "verify": cmd_verify, "sweep": cmd_sweep}


def _parser():
    p = argparse.ArgumentParser(prog="heisenberg-mf", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML configuration file")
        s.add_argument("--out", help="output directory (default: config output_dir or ./results)")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("--threads", type=int, default=1, help="worker threads for independent chains")
        if name == "sweep":
            s.add_argument("--betas", help="comma separated, strictly increasing beta list")
    return p


def _error(exc, code: int, out_dir=None) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if code == EXIT_ERROR:
        payload["traceback"] = traceback.format_exc()
    if isinstance(exc, ConvergenceError) and exc.report is not None:
        payload["report"] = {k: v for k, v in exc.report.to_dict().items() if k not in ("residual_history", "free_energy_history")}
    print(json.dumps(_jsonable(payload), sort_keys=True), file=sys.stderr)
    if out_dir:
        try:
            os.makedirs(out_dir, exist_ok=True)
            _dump_json(os.path.join(out_dir, "error.json"), {k: v for k, v in payload.items() if k != "traceback"})
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out_dir = args.out
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = load_config(args.config, overrides)
        out_dir = args.out or cfg["output_dir"] or "results"
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        betas = None
        if args.command == "sweep" and args.betas:
            try:
                betas = [float(b) for b in args.betas.split(",")]
            except ValueError as exc:
                raise ValidationError(f"bad --betas: {exc}") from exc
        out = Output(out_dir, cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.threads, betas)
        return COMMANDS[args.command](cfg, out, args.threads)
    except (ValidationError, DomainError, BinningMismatchError, InsufficientSamplesError) as exc:
        return _error(exc, EXIT_VALIDATION, out_dir)
    except ConvergenceError as exc:
        return _error(exc, EXIT_CONVERGENCE, out_dir)
    except MissingArtifactError as exc:
        return _error(exc, EXIT_MISSING, out_dir)
    except Exception as exc:  # noqa: BLE001
        return _error(exc, EXIT_ERROR, out_dir)


if __name__ == "__main__":
    sys.exit(main())
