"""Command-line front end: experiment configs, artifacts and run manifests.

Commands
    check-matrix   hypothesis flags and inverse of a coupling matrix
    gamma          Green's function / regular part probes
    qpoint         distinguished surface point for a level N
    degree         topological degree for (N, chi)
    global-solve   radial global solution summary (+ profile CSV)
    mass-map       height-to-mass sweep with Jacobian determinants
    green-probe    Fourier/Ewald probe table as CSV
    locations      solve a critical blowup configuration
    leading-term   regularized brackets and the total D
    b-coeff        local coefficients in the all-masses-4 regime
    pde-continue   mean-field continuation along a parameter ray
    verify-all     built-in verification suite (exit nonzero on failure)

Exit codes: 0 success (for pde-continue: surface or resolution stop),
2 solver abort, 64 usage error, 65 module error (structured JSON on stdout).
JSON for structured data, CSV for tabular series; every artifact lands in
the manifest with its content hash.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ToolkitError
from .system_algebra import (InteractionMatrix, ParameterPoint,
                             check_hypotheses, classify, degree, lambda_subset,
                             q_point, report_to_dict)
from .torus_green import GreenEvaluator
from .radial_solver import expansion_residual, integrate, solve_global, summarize
from .mass_map import det_grid, invert, jacobian, sigma_of_alpha
from .weights import WeightFunction, constant_weight
from .blowup_geometry import (BlowupConfiguration, coefficient_report,
                              location_residual, solve_locations)
from .leading_terms import (PartitionCells, b_coefficients, d_total,
                            lambda_prediction_q, regularized_bracket)
from .meanfield_pde import (ContinuationControls, continue_ray)

EXIT_OK = 0
EXIT_ABORT = 2
EXIT_USAGE = 64
EXIT_MODULE = 65


# ---------------------------------------------------------------- artifacts

def _hash_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Records the toolkit version, config hash and artifact hashes."""

    def __init__(self, command, config_blob=None):
        self.data = {
            "toolkit_version": __version__,
            "command": command,
            "config_hash": hashlib.sha256(
                (config_blob or "").encode()).hexdigest(),
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "status": "running",
            "artifacts": [],
        }

    def add(self, path):
        self.data["artifacts"].append(
            {"path": str(path), "sha256": _hash_file(path)})

    def finish(self, outdir, status="ok"):
        self.data["status"] = status
        path = Path(outdir) / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path


def _outdir(args):
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_json(obj, args, name, manifest=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_tolist) + "\n"
    sys.stdout.write(text)
    if getattr(args, "out", None):
        path = _outdir(args) / name
        path.write_text(text)
        if manifest:
            manifest.add(path)


def _tolist(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def _write_csv(path, header, rows, manifest=None):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([_csv_cell(c) for c in r])
    if manifest:
        manifest.add(path)


def _csv_cell(c):
    if isinstance(c, float) or isinstance(c, np.floating):
        return repr(float(c))
    return c


# ---------------------------------------------------------------- config IO

def load_matrix(spec):
    """Matrix from inline JSON or a file path; format {"n": ..., "a": [[...]]}."""
    if spec is None:
        raise ToolkitError("a coupling matrix is required (--matrix)")
    p = Path(spec)
    if p.exists():
        d = json.loads(p.read_text())
    else:
        d = json.loads(spec)
    a = np.asarray(d["a"], dtype=float)
    if "n" in d and int(d["n"]) != a.shape[0]:
        raise ToolkitError("matrix header n disagrees with entries")
    return InteractionMatrix.from_array(a)


def load_config(spec):
    if spec is None:
        return {}
    p = Path(spec)
    d = json.loads(p.read_text() if p.exists() else spec)
    return d


def load_weights(cfg, n):
    ws = cfg.get("weights")
    if ws is None:
        return tuple(constant_weight() for _ in range(n))
    if len(ws) != n:
        raise ToolkitError(f"{len(ws)} weights for {n} components")
    return tuple(WeightFunction.from_dict(w) for w in ws)


class ExperimentConfig:
    """Round-trippable experiment descriptor (bit-identical through JSON)."""

    def __init__(self, data):
        self.data = dict(data)

    @classmethod
    def load(cls, path):
        d = json.loads(Path(path).read_text())
        for key in ("matrix_file",):
            if key in d and not Path(d[key]).exists():
                raise ToolkitError(f"referenced file missing: {d[key]}")
        return cls(d)

    def dumps(self):
        return json.dumps(self.data, indent=2, sort_keys=True)

    def roundtrip_ok(self):
        return json.loads(self.dumps()) == self.data

    @property
    def seed(self):
        return int(self.data.get("seed", 0))


# ---------------------------------------------------------------- commands

def cmd_check_matrix(args):
    A = load_matrix(args.matrix)
    flags = check_hypotheses(A.a)
    out = {"n": A.n, "h1": flags["h1"], "h2": flags["h2"],
           "reasons": flags["reasons"], "a_inv": A.a_inv.tolist()}
    _emit_json(out, args, "matrix-report.json")
    return EXIT_OK


def cmd_gamma(args):
    ev = GreenEvaluator(args.mode)
    x = np.asarray(args.x, dtype=float)
    y = np.asarray(args.y, dtype=float) if args.y else x
    out = {"x": x.tolist(), "y": y.tolist(), "mode": args.mode,
           "regular_part": ev.regular_part(x, y),
           "robin_constant": ev.robin_constant}
    if not np.allclose(x, y):
        out["green"] = ev.green(x, y)
    _emit_json(out, args, "gamma.json")
    return EXIT_OK


def cmd_qpoint(args):
    A = load_matrix(args.matrix)
    q = q_point(A, args.N)
    lam = lambda_subset(A, q, range(1, A.n + 1))
    rep = classify(A, q.rho, args.N)
    out = {"q": q.rho.tolist(), "level": args.N, "lambda_I": lam,
           "classification": rep.classification,
           "normal": rep.normal.tolist()}
    _emit_json(out, args, "qpoint.json")
    return EXIT_OK


def cmd_degree(args):
    d = degree(args.N, args.chi)
    sys.stdout.write(f"{d}\n")
    if args.out:
        _emit_json({"N": args.N, "chi": args.chi, "degree": str(d)}, args,
                   "degree.json")
    return EXIT_OK


def cmd_global_solve(args):
    A = load_matrix(args.matrix)
    alpha = np.asarray(args.alpha, dtype=float)
    if alpha.size == 1 and A.n > 1:
        alpha = np.full(A.n, float(alpha))
    manifest = RunManifest("global-solve")
    profile, summ = solve_global(A, alpha, r_max=args.r_max, tol=args.tol)
    out = summ.to_dict()
    if args.out:
        path = _outdir(args) / "profile.csv"
        header = (["r"] + [f"U_{i+1}" for i in range(A.n)]
                  + [f"dU_{i+1}" for i in range(A.n)])
        rows = [[profile.grid[k]] + list(profile.U[:, k]) + list(profile.dU[:, k])
                for k in range(len(profile.grid))]
        _write_csv(path, header, rows, manifest)
        rep = expansion_residual(A, summ, profile)
        out["expansion"] = rep.to_dict()
    _emit_json(out, args, "global-solve.json", manifest)
    if args.out:
        manifest.finish(_outdir(args))
    return EXIT_OK


def cmd_mass_map(args):
    A = load_matrix(args.matrix)
    lo, hi, npts = args.grid
    axis = np.linspace(float(lo), float(hi), int(npts))
    samples = det_grid(A, [axis] * (A.n - 1), tol=args.tol)
    manifest = RunManifest("mass-map")
    header = ([f"alpha_{j+2}" for j in range(A.n - 1)]
              + [f"sigma_{i+1}" for i in range(A.n)] + ["det", "cond"])
    rows = [list(s.alpha_hat) + list(s.sigma) + [s.det, s.cond]
            for s in samples]
    out = {"min_abs_det": min(abs(s.det) for s in samples),
           "samples": len(samples)}
    if args.out:
        _write_csv(_outdir(args) / "mass-map.csv", header, rows, manifest)
    _emit_json(out, args, "mass-map.json", manifest)
    if args.out:
        manifest.finish(_outdir(args))
    return EXIT_OK


def cmd_green_probe(args):
    rng = np.random.default_rng(args.seed)
    ev_f = GreenEvaluator("fourier")
    ev_e = GreenEvaluator("ewald")
    rows = []
    worst = 0.0
    for _ in range(args.count):
        x, y = rng.random(2), rng.random(2)
        if np.linalg.norm((x - y) - np.round(x - y)) < 0.05:
            y = (y + 0.5) % 1.0
        gf, ge = ev_f.green(x, y), ev_e.green(x, y)
        gam = ev_e.regular_part(x, y)
        grad = ev_e.green_grad(x, y)
        worst = max(worst, abs(gf - ge))
        rows.append([*x, *y, ge, gam, *grad, abs(gf - ge)])
    manifest = RunManifest("green-probe")
    if args.out:
        _write_csv(_outdir(args) / "green-probe.csv",
                   ["x1", "x2", "y1", "y2", "G", "gamma", "dG1", "dG2",
                    "mode_diff"], rows, manifest)
    _emit_json({"probes": args.count, "max_mode_difference": worst,
                "robin_constant": ev_e.robin_constant}, args,
               "green-probe.json", manifest)
    if args.out:
        manifest.finish(_outdir(args))
    return EXIT_OK


def _config_objects(args):
    cfg = load_config(args.config)
    A = load_matrix(json.dumps(cfg["matrix"]) if "matrix" in cfg
                    else cfg.get("matrix_file"))
    weights = load_weights(cfg, A.n)
    return cfg, A, weights


def cmd_locations(args):
    cfg, A, weights = _config_objects(args)
    masses = np.asarray(cfg["masses"], dtype=float)
    N = int(cfg.get("points", 2))
    init = np.asarray(cfg.get("init"), dtype=float) if "init" in cfg else None
    if init is None:
        rng = np.random.default_rng(int(cfg.get("seed", 0)))
        init = rng.random((N, 2))
    config, iters = solve_locations(weights, masses, N, init,
                                    gauge=cfg.get("gauge"))
    rep = coefficient_report(config)
    out = {"configuration": config.to_dict(), "iterations": iters,
           "report": rep.to_dict()}
    manifest = RunManifest("locations", json.dumps(cfg, sort_keys=True))
    if args.out:
        _write_csv(_outdir(args) / "residuals.csv",
                   ["t", "R1", "R2"],
                   [[t + 1, *rep.residuals[t]] for t in range(config.N)],
                   manifest)
    _emit_json(out, args, "locations.json", manifest)
    if args.out:
        manifest.finish(_outdir(args))
    return EXIT_OK


def _summary_for_config(cfg, A, config):
    if "alpha" in cfg:
        _, summ = solve_global(A, np.asarray(cfg["alpha"], dtype=float))
    elif A.n == 1:
        _, summ = solve_global(A, np.zeros(1))
    else:
        sigma = np.linalg.solve(A.a, config.masses)
        ah = invert(A, sigma)
        _, summ = solve_global(A, np.concatenate([[0.0], ah]))
    return summ


def cmd_leading_term(args):
    cfg, A, weights = _config_objects(args)
    config = BlowupConfiguration(points=np.asarray(cfg["points"], dtype=float),
                                 masses=np.asarray(cfg["masses"], dtype=float),
                                 weights=weights)
    summ = _summary_for_config(cfg, A, config)
    delta0s = tuple(cfg.get("delta0_values", (0.08, 0.04, 0.02)))
    report = d_total(config, summ, delta0s=delta0s,
                     convention_factor=args.convention_factor)
    manifest = RunManifest("leading-term", json.dumps(cfg, sort_keys=True))
    if args.out:
        rows = []
        for i in report.minimal_indices:
            for t in range(config.N):
                for k, d0 in enumerate(report.delta0_values):
                    rows.append([i + 1, t + 1, d0, report.bracket[i, t, k]])
                rows.append([i + 1, t + 1, 0.0, report.bracket_limit[i, t]])
        _write_csv(_outdir(args) / "bracket-vs-delta0.csv",
                   ["i", "t", "delta0", "bracket"], rows, manifest)
    _emit_json(report.to_dict(), args, "leading-term.json", manifest)
    if args.out:
        manifest.finish(_outdir(args))
    return EXIT_OK


def cmd_b_coeff(args):
    cfg, A, weights = _config_objects(args)
    config = BlowupConfiguration(points=np.asarray(cfg["points"], dtype=float),
                                 masses=np.asarray(cfg["masses"], dtype=float),
                                 weights=weights)
    summ = _summary_for_config(cfg, A, config)
    b = b_coefficients(config, summ)
    eps = float(cfg.get("eps", 0.05))
    out = {"b": b.tolist(),
           "lambda_prediction": lambda_prediction_q(b, eps), "eps": eps}
    _emit_json(out, args, "b-coeff.json")
    return EXIT_OK


def cmd_pde_continue(args):
    cfg, A, weights = _config_objects(args)
    ctl = ContinuationControls(
        resolutions=tuple(cfg.get("resolutions", (128, 256, 512))),
        newton_tol=float(cfg.get("tol", 1e-10)),
        target_level=int(cfg.get("target_level", 1)),
        delta0=float(cfg.get("delta0", 0.15)),
        stop_eps_cells=float(cfg.get("stop_eps_cells", 8.0)),
        max_records=int(cfg.get("max_records", 400)),
        step0=float(cfg.get("step0", 0.5)))
    result = continue_ray(A, weights, np.asarray(cfg["rho_start"], dtype=float),
                          np.asarray(cfg["direction"], dtype=float), ctl)
    manifest = RunManifest("pde-continue", json.dumps(cfg, sort_keys=True))
    n = A.n
    max_b = max((r.n_detected for r in result.records), default=0)
    header = (["step", "resolution", "mode", "lambda_I", "residual",
               "N_detected"] + [f"rho_{i+1}" for i in range(n)]
              + [f"M_k{t+1}" for t in range(max_b)]
              + [f"eps_k{t+1}" for t in range(max_b)]
              + [f"rho_{i+1}{t+1}" for i in range(n) for t in range(max_b)]
              + [f"rho_bg_{i+1}" for i in range(n)])
    rows = [r.row(n, max_b) for r in result.records]
    if args.out:
        _write_csv(_outdir(args) / "continuation.csv", header, rows, manifest)
    _emit_json({"status": result.status, "records": len(result.records),
                "rho_final": result.rho.tolist()}, args, "pde-continue.json",
               manifest)
    if args.out:
        manifest.finish(_outdir(args),
                        "ok" if result.status != "abort" else "abort")
    return EXIT_OK if result.status in ("surface", "resolution") else EXIT_ABORT


def cmd_verify_all(args):
    from .verify import run_all
    ok = run_all(fast=not args.full, out=sys.stdout)
    return EXIT_OK if ok else EXIT_MODULE


# ---------------------------------------------------------------- dispatch

def build_parser():
    p = argparse.ArgumentParser(prog="liouville",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--out", help="artifact directory")
        sp.add_argument("--tol", type=float, default=1e-10)

    sp = sub.add_parser("check-matrix")
    sp.add_argument("--matrix", required=True)
    common(sp)
    sp.set_defaults(func=cmd_check_matrix)

    sp = sub.add_parser("gamma")
    sp.add_argument("--x", type=float, nargs=2, required=True)
    sp.add_argument("--y", type=float, nargs=2)
    sp.add_argument("--mode", choices=("ewald", "fourier"), default="ewald")
    common(sp)
    sp.set_defaults(func=cmd_gamma)

    sp = sub.add_parser("qpoint")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--N", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_qpoint)

    sp = sub.add_parser("degree")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--chi", type=int, required=True)
    common(sp)
    sp.set_defaults(func=cmd_degree)

    sp = sub.add_parser("global-solve")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--alpha", type=float, nargs="+", required=True)
    sp.add_argument("--r-max", type=float, default=1e5)
    common(sp)
    sp.set_defaults(func=cmd_global_solve)

    sp = sub.add_parser("mass-map")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--grid", nargs=3, default=("0", "3", "5"),
                    help="lo hi npts per alpha axis")
    common(sp)
    sp.set_defaults(func=cmd_mass_map)

    sp = sub.add_parser("green-probe")
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    common(sp)
    sp.set_defaults(func=cmd_green_probe)

    for name, fn in (("locations", cmd_locations),
                     ("leading-term", cmd_leading_term),
                     ("b-coeff", cmd_b_coeff),
                     ("pde-continue", cmd_pde_continue)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--convention-factor", type=int, choices=(1, 2),
                        default=2)
        sp.add_argument("--resolution", type=int)
        sp.add_argument("--delta0", type=float)
        common(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("verify-all")
    sp.add_argument("--full", action="store_true",
                    help="include the long-running continuation checks")
    common(sp)
    sp.set_defaults(func=cmd_verify_all)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    if not getattr(args, "command", None):
        parser.print_usage()
        return EXIT_USAGE
    try:
        return args.func(args)
    except ToolkitError as exc:
        sys.stdout.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_MODULE
    except (KeyError, ValueError, OSError) as exc:
        sys.stdout.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_MODULE


if __name__ == "__main__":
    sys.exit(main())
