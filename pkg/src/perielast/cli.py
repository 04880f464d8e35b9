"""Batch driver: config ingestion, pipeline orchestration, artifacts.

Config files are TOML. The sections used by the subcommands:

    [grid]    dim = 2, n = 64
    [medium]  kind = "constant" | "laminate" | "voxel" | "smooth" + fields
              (see fields.medium_from_config)
    [solver]  rel_tol, max_iter
    [run]     tasks = ["correctors", "effective", "dispersive",
                       "verify-laminate", "bloch-compare", "dtn-table"]
              out = "out"
    [bloch]   direction = [1.0, 0.0]; ts = [...] (|k| / 2 pi); eps = 1.0
    [dtn]     R, omega, lam, mu, N
    [laminate_check]  samples = 65536

Exit codes: 0 success, 2 config error, 3 solver non-convergence,
4 invariant failure. Reruns of an identical config are deterministic
(fixed seeds everywhere).
"""

import argparse
import hashlib
import json
import os
import platform
import sys
import time

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from .bloch import model_error_slopes, write_compare_csv
from .correctors import solve_all
from .dtn import dtn_table
from .effective import (build_effective_model, effective_C, effective_rho,
                        identity_checks)
from .fields import CellGrid, build_medium, medium_from_config
from .laminate import (DEFAULT_SAMPLES, laminate_effective_C,
                       profile_from_laminate, profile_from_smooth)
from .fields import LaminateMedium, SmoothMedium
from .solver import (CompatibilityError, NonConvergence, SolverConfig,
                     operator_spot_checks)
from .tensors import dump_tensor

TASK_ORDER = ("correctors", "effective", "dispersive", "verify-laminate",
              "bloch-compare", "dtn-table")
_DEPS = {"effective": ("correctors",),
         "dispersive": ("effective",),
         "verify-laminate": ("effective",),
         "bloch-compare": ("dispersive",)}


class ConfigError(ValueError):
    pass


def _closure(tasks):
    want = set()

    def add(t):
        if t not in TASK_ORDER:
            raise ConfigError("unknown task %r" % t)
        if t in want:
            return
        want.add(t)
        for dep in _DEPS.get(t, ()):
            add(dep)
    for t in tasks:
        add(t)
    return [t for t in TASK_ORDER if t in want]


def load_config(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    cfg = tomllib.loads(raw.decode("utf-8"))
    cfg["_sha256"] = hashlib.sha256(raw).hexdigest()
    cfg["_dir"] = os.path.dirname(os.path.abspath(path))
    return cfg


def _grid_from(cfg):
    g = cfg.get("grid", {})
    return CellGrid(int(g.get("dim", 2)), int(g.get("n", 64)))


def _solver_from(cfg, tol_override=None):
    s = dict(cfg.get("solver", {}))
    if tol_override is not None:
        s["rel_tol"] = tol_override
    return SolverConfig(rel_tol=float(s.get("rel_tol", 1e-10)),
                        max_iter=int(s.get("max_iter", 2000)),
                        preconditioner=s.get("preconditioner", "constant"),
                        compat_tol=float(s.get("compat_tol", 1e-8)))


def _check(checks, name, value, tol, ok=None):
    if ok is None:
        ok = bool(value <= tol)
    checks[name] = {"value": float(value), "tol": float(tol),
                    "pass": bool(ok)}
    print("  %-28s %-4s  %.3e (tol %.1e)"
          % (name, "PASS" if ok else "FAIL", value, tol))
    return ok


class Pipeline:
    """Holds the shared state of one run so tasks stay in dependency order."""

    def __init__(self, cfg, out_dir, threads, sconf):
        self.cfg = cfg
        self.out = out_dir
        self.threads = threads
        self.sconf = sconf
        self.grid = _grid_from(cfg)
        if "medium" not in cfg:
            raise ConfigError("config has no [medium] table")
        self.spec = medium_from_config(cfg["medium"], cfg.get("_dir", "."))
        self.medium = build_medium(self.spec, self.grid)
        self.cset = None
        self.Cbar = None
        self.rho_bar = None
        self.model = None
        self.checks = {}
        self.artifacts = {}

    def need_correctors(self, dispersive):
        if self.cset is None or (
                dispersive and "chi4" not in self.cset.arrays):
            self.cset = solve_all(self.medium, self.sconf,
                                  threads=self.threads,
                                  hat=dispersive, dispersive=dispersive)
        return self.cset

    def run_correctors(self, dispersive):
        cset = self.need_correctors(dispersive)
        cdir = os.path.join(self.out, "correctors")
        cset.save(cdir)
        self.artifacts["correctors"] = cdir
        path = os.path.join(self.out, "solver_reports.jsonl")
        with open(path, "w") as fh:
            for family, reps in cset.reports.items():
                for key, rep in reps.items():
                    row = {"family": family, "key": str(key)}
                    row.update(json.loads(rep.to_json_line()))
                    fh.write(json.dumps(row) + "\n")
        self.artifacts["solver_reports"] = path
        worst = max(cset.max_residual(f) or 0.0 for f in cset.arrays
                    if f in cset.reports)
        _check(self.checks, "solver_residuals", worst, 2 * self.sconf.rel_tol)

    def run_effective(self):
        cset = self.need_correctors(False)
        Cbar, rep = effective_C(self.medium.C, cset.field("chi1"))
        self.Cbar, self.rho_bar = Cbar, effective_rho(self.medium.rho)
        path = os.path.join(self.out, "effective_C.json")
        dump_tensor(Cbar, path)
        with open(os.path.join(self.out, "effective.json"), "w") as fh:
            json.dump({"rho_bar": self.rho_bar, "Cbar_file": "effective_C.json",
                       "margin": rep["margin"]}, fh, indent=1)
        self.artifacts["effective"] = path
        defect = max(rep["minor_defect"], rep["major_defect"])
        _check(self.checks, "Cbar_symmetry", defect, 1e-9)
        _check(self.checks, "Cbar_margin", rep["margin"], 1e-3,
               ok=rep["margin"] >= 1e-3)
        ident = identity_checks(self.medium, self.cset, Cbar) \
            if "chi4" in self.cset.arrays else None
        if ident is not None:
            _check(self.checks, "b_mean_plus_Cbar",
                   ident["b_mean_plus_Cbar"], 1e-9)
            _check(self.checks, "reciprocity", ident["reciprocity"], 1e-8)
            _check(self.checks, "tedious_integral",
                   ident["tedious_integral"], 1e-8)

    def run_dispersive(self):
        cset = self.need_correctors(True)
        self.model = build_effective_model(self.medium, cset)
        path = os.path.join(self.out, "model.json")
        self.model.save(path)
        self.artifacts["model"] = path

    def run_verify_laminate(self):
        samples = int(self.cfg.get("laminate_check", {}).get(
            "samples", DEFAULT_SAMPLES))
        if isinstance(self.spec, LaminateMedium):
            if self.spec.smoothing_width:
                raise ConfigError("oracle check needs an unsmoothed laminate")
            prof = profile_from_laminate(self.spec, self.grid.dim, samples)
        elif isinstance(self.spec, SmoothMedium):
            prof = profile_from_smooth(self.spec, self.grid.dim, samples)
        else:
            raise ConfigError("verify-laminate needs a laminate or 1-D "
                              "smooth medium")
        Cora = laminate_effective_C(prof)
        rel = (np.abs(self.Cbar.entries - Cora.entries).max()
               / np.abs(Cora.entries).max())
        _check(self.checks, "laminate_Cbar_agreement", rel, 1e-6)
        path = os.path.join(self.out, "laminate_check.json")
        with open(path, "w") as fh:
            json.dump({"samples": samples, "rel_error_Cbar": float(rel)},
                      fh, indent=1)
        self.artifacts["verify-laminate"] = path

    def run_bloch_compare(self):
        b = self.cfg.get("bloch", {})
        direction = b.get("direction")
        ts = b.get("ts")
        study = model_error_slopes(
            self.medium, self.model,
            direction=None if direction is None else np.asarray(direction,
                                                               dtype=float),
            ts=None if ts is None else np.asarray(ts, dtype=float),
            tol=float(b.get("tol", 1e-8)), eps=float(b.get("eps", 1.0)))
        path = os.path.join(self.out, "bloch_compare.csv")
        write_compare_csv(path, study)
        self.artifacts["bloch-compare"] = path
        summary = {"slope0": study["slope0"].tolist(),
                   "slope2": study["slope2"].tolist(),
                   "ratio_mid": study["ratio_mid"].tolist(),
                   "flags": study["flags"],
                   "worst_residual": study["worst_residual"]}
        with open(os.path.join(self.out, "bloch_summary.json"), "w") as fh:
            json.dump(summary, fh, indent=1)
        return study

    def run_dtn_table(self):
        self.artifacts["dtn-table"] = emit_dtn_table(self.cfg, self.out)


def emit_dtn_table(cfg, out_dir):
    t = cfg.get("dtn")
    if not t:
        raise ConfigError("config has no [dtn] table")
    N = int(t["N"])
    rows = dtn_table(range(N), float(t["R"]), float(t["omega"]),
                     (float(t["lam"]), float(t["mu"])))
    path = os.path.join(out_dir, "dtn_table.csv")
    with open(path, "w") as fh:
        fh.write("n,re_a,im_a,re_b,im_b,re_c,im_c,re_d,im_d\n")
        for co in rows:
            fh.write("%d," % co.n + ",".join(
                "%.16e" % v for pair in
                ((co.a_n.real, co.a_n.imag), (co.b_n.real, co.b_n.imag),
                 (co.c_n.real, co.c_n.imag), (co.d_n.real, co.d_n.imag))
                for v in pair) + "\n")
    return path


def _write_manifest(pipe, out_dir, cfg, tasks, seconds):
    manifest = {
        "package": "perielast",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config_sha256": cfg.get("_sha256", ""),
        "grid": {"dim": pipe.grid.dim, "n": pipe.grid.n},
        "medium_digest": pipe.medium.digest(),
        "rel_tol": pipe.sconf.rel_tol,
        "tasks": tasks,
        "artifacts": pipe.artifacts,
        "checks": pipe.checks,
        "seconds": seconds,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)
    return path


def cmd_run(args):
    cfg = load_config(args.config)
    run_tab = cfg.get("run", {})
    out_dir = args.out or run_tab.get("out", "out")
    os.makedirs(out_dir, exist_ok=True)
    tasks = _closure(run_tab.get("tasks", ["effective"]))
    pipe = Pipeline(cfg, out_dir, args.threads, _solver_from(cfg, args.tol))
    t0 = time.perf_counter()
    dispersive = any(t in tasks for t in ("dispersive", "bloch-compare"))
    for task in tasks:
        print("task: %s" % task)
        if task == "correctors":
            pipe.run_correctors(dispersive)
        elif task == "effective":
            pipe.run_effective()
        elif task == "dispersive":
            pipe.run_dispersive()
        elif task == "verify-laminate":
            pipe.run_verify_laminate()
        elif task == "bloch-compare":
            pipe.run_bloch_compare()
        elif task == "dtn-table":
            pipe.run_dtn_table()
    manifest = _write_manifest(pipe, out_dir, cfg, tasks,
                               time.perf_counter() - t0)
    print("manifest: %s" % manifest)
    failed = [k for k, v in pipe.checks.items() if not v["pass"]]
    if failed:
        print("FAILED checks: %s" % ", ".join(failed), file=sys.stderr)
        return 4
    return 0


def cmd_verify(args):
    """Full invariant battery on the configured medium."""
    cfg = load_config(args.config)
    out_dir = args.out or cfg.get("run", {}).get("out", "out")
    os.makedirs(out_dir, exist_ok=True)
    pipe = Pipeline(cfg, out_dir, args.threads, _solver_from(cfg, args.tol))
    t0 = time.perf_counter()
    print("verify: medium %s" % pipe.medium.digest()[:12])
    pipe.need_correctors(True)
    pipe.run_correctors(True)
    pipe.run_effective()
    pipe.run_dispersive()
    spot = operator_spot_checks(pipe.medium.C.values, pipe.grid, seed=7)
    _check(pipe.checks, "adjointness", spot["adjointness"], 1e-10)
    _check(pipe.checks, "energy_positivity", spot["energy"], 1e-10)
    if isinstance(pipe.spec, LaminateMedium) and not pipe.spec.smoothing_width:
        pipe.run_verify_laminate()
    if cfg.get("verify", {}).get("bloch", True):
        study = pipe.run_bloch_compare()
        if float(np.max(study["rel0"])) < 1e-10:
            _check(pipe.checks, "bloch_exact", float(np.max(study["rel0"])),
                   1e-10)
        else:
            s0 = float(study["slope0"].min())
            s2 = float(study["slope2"].min())
            _check(pipe.checks, "bloch_slope0", s0, 1.9, ok=s0 >= 1.9)
            _check(pipe.checks, "bloch_slope2_gain", s2 - s0, 1.5,
                   ok=s2 - s0 >= 1.5)
            _check(pipe.checks, "bloch_ratio_mid",
                   float(study["ratio_mid"].min()), 10.0,
                   ok=float(study["ratio_mid"].min()) >= 10.0)
    manifest = _write_manifest(pipe, out_dir, cfg, ["verify"],
                               time.perf_counter() - t0)
    print("manifest: %s" % manifest)
    failed = [k for k, v in pipe.checks.items() if not v["pass"]]
    print("verify: %d checks, %d failed" % (len(pipe.checks), len(failed)))
    return 4 if failed else 0


def cmd_dtn_table(args):
    cfg = load_config(args.config)
    out_dir = args.out or cfg.get("run", {}).get("out", "out")
    os.makedirs(out_dir, exist_ok=True)
    path = emit_dtn_table(cfg, out_dir)
    print("wrote %s" % path)
    return 0


def cmd_bloch_compare(args):
    cfg = load_config(args.config)
    out_dir = args.out or cfg.get("run", {}).get("out", "out")
    os.makedirs(out_dir, exist_ok=True)
    pipe = Pipeline(cfg, out_dir, args.threads, _solver_from(cfg, args.tol))
    pipe.need_correctors(True)
    pipe.run_dispersive()
    study = pipe.run_bloch_compare()
    print("slope0 %s  slope2 %s" % (np.round(study["slope0"], 3),
                                    np.round(study["slope2"], 3)))
    for flag in study["flags"]:
        print("flag: %s" % flag)
    print("wrote %s" % pipe.artifacts["bloch-compare"])
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="perielast",
        description="cell-problem solvers and dispersive effective models "
                    "for periodic elastic media")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("verify", cmd_verify),
                     ("dtn-table", cmd_dtn_table),
                     ("bloch-compare", cmd_bloch_compare)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--tol", type=float, default=None)
        p.set_defaults(fn=fn)
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except NonConvergence as exc:
        print("solver failed to converge: %s" % exc, file=sys.stderr)
        if exc.report is not None:
            print(exc.report.to_json_line(), file=sys.stderr)
        return 3
    except CompatibilityError as exc:
        print("invariant failure: %s" % exc, file=sys.stderr)
        return 4
    except (ConfigError, tomllib.TOMLDecodeError, KeyError, TypeError,
            ValueError, OSError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
