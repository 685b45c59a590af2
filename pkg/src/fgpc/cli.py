"""Command-line front end: ``fgpc run <config>`` and ``fgpc validate <config>``.

A run validates the whole configuration before any computation, stages
every artifact in a scratch directory next to the output directory and
only moves it into place once all stages have finished, so a failed run
leaves nothing behind.  Exit codes: 0 success, 2 partial (some branches,
map cells or oracle samples failed), 1 hard error.

The ``FGPC_NUM_THREADS`` environment variable sets the number of worker
threads for the convergence map.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import shutil
import sys
import tempfile
import threading
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (
    coefficient_grid, compare_summaries, convergence_map, marginal_at, marginal_from_values,
    mc_oracle, moments_from_coefficients, phase_portrait, sample_summary, summary_from_paths,
    surrogate_paths,
)
from .basis import Distribution, sample
from .config import ConfigError, load, violations
from .fourier import FourierGrid, to_real_layout
from .galerkin import FgpcProblem, Guess, hb_guess, initial_guess, solve_fgpc
from .hb import DeflationConfig, HbProblem, NewtonError, ResidualNaNError, StepConfig, continuation_sweep
from .systems import PeriodDetectionError, StiffnessError, make_system

RUN_FORMAT = "fgpc-run/1"
COMPUTE_ERRORS = (NewtonError, ResidualNaNError, StiffnessError, PeriodDetectionError,
                  np.linalg.LinAlgError, FloatingPointError)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else format(float(v), ".17g")
    return str(v)


class Artifacts:
    """Writes files into a staging directory and remembers what was written."""

    def __init__(self, root):
        self.root = Path(root)
        self.files = []

    def _path(self, name):
        self.files.append(name)
        return self.root / name

    def csv(self, name, header, rows):
        with open(self._path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])

    def json(self, name, obj):
        with open(self._path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _state_cols(prefix, n_d):
    return [f"{prefix}_x{i}" for i in range(n_d)]


def _series_rows(times, *series):
    """Rows ``[t, s0[0], s0[1], ..., s1[0], ...]`` for ``(n_d, n_t)`` series."""
    cols = [np.asarray(s) for s in series]
    return [[t, *(v for s in cols for v in s[:, j])] for j, t in enumerate(times)]


def _write_summary(art, name, summ):
    n_d = summ.mean.shape[0]
    keys = ["mean", "variance", "lower", "upper", "lower_path", "upper_path"]
    header = ["phase" if summ.normalized else "time"] + [c for k in keys for c in _state_cols(k, n_d)]
    art.csv(name, header, _series_rows(summ.times, *(getattr(summ, k) for k in keys)))


# --- stages ------------------------------------------------------------------


class Run:
    def __init__(self, cfg, out_dir, staging):
        self.cfg = cfg
        self.out_dir = out_dir
        self.art = Artifacts(staging)
        self.seed = int(cfg.get("seed", 0))
        self.stages = {}
        self.diag = {}
        self.partial = []
        sc = cfg["system"]
        self.system = make_system(sc["name"], sc.get("parameters"), sc.get("uncertain"),
                                  sc.get("initial_state"))
        self.dist = None
        if "distribution" in cfg:
            d = cfg["distribution"]
            self.dist = Distribution(d["family"], tuple(d["params"]))
        disc = cfg["discretization"]
        self.H, self.N = disc["H"], disc["N"]
        self.n_time, self.n_quad = disc.get("N_t"), disc.get("N_G")
        solver = cfg.get("solver", {})
        self.tol = solver.get("tol", 1e-10)
        self.max_iter = solver.get("max_iter", 50)
        self.anchor_state = solver.get("anchor_state", 0)
        self.zero_guess = solver.get("zero_guess", False)
        self.n_periods = solver.get("integration_periods", 300)
        self.analysis = cfg.get("analysis", {})
        self.solutions = []

    def stage(self, name, fn):
        t0 = time.perf_counter()
        fn()
        self.stages[name] = round(time.perf_counter() - t0, 6)

    def execute(self):
        if self.dist is not None:
            self.stage("solve", self.solve)
            for name in ("moments", "summary", "marginal", "coefficient_grid", "phase_portrait",
                         "mc_oracle"):
                if name in self.analysis:
                    self.stage(name, getattr(self, name))
            if "convergence_map" in self.analysis:
                self.stage("convergence_map", self.convergence_map)
        if "continuation" in self.analysis:
            self.stage("continuation", self.continuation)

    # solve ------------------------------------------------------------------

    def problem(self, H, N):
        return FgpcProblem.build(self.system, self.dist, H, N, self.n_time if H == self.H else None,
                                 self.n_quad if N == self.N else None, anchor_state=self.anchor_state)

    def solve(self):
        P = self.problem(self.H, self.N)
        x0 = self.cfg["system"].get("initial_state")
        guess = initial_guess(P, x0, self.zero_guess, self.n_periods)
        defl = self.cfg.get("deflation", {})
        if defl.get("enabled", False):
            dc = DeflationConfig(defl.get("power", 2.0), defl.get("shift", 1.0), defl.get("radius", 1e-6))
            res = solve_fgpc(P, guess, dc, defl.get("max_solutions", 10), self.tol, self.max_iter,
                             defl.get("phase_shifts", 8))
            self.solutions = list(res.solutions)
            branch_fail = [f for f in res.failures if "branch" in f]
            self.diag["deflation"] = {
                "roots": len(res.solutions),
                "unconverged_starts": len(res.failures) - len(branch_fail),
                "branch_failures": branch_fail,
            }
            if branch_fail:
                self.partial.append(f"{len(branch_fail)} branch(es) failed to lift to degree {self.N}")
            if not self.solutions:
                raise NewtonError("deflated solve found no solution", None, None)
        else:
            sol = solve_fgpc(P, guess, None, tol=self.tol, max_iter=self.max_iter)
            sol.label = "branch0"
            self.solutions = [sol]
        self.diag["solutions"] = []
        for s in self.solutions:
            self.art.json(f"solution_{s.label}.json", s.to_dict())
            self.diag["solutions"].append(
                {"label": s.label, "residual_norm": s.residual_norm, "iterations": s.iterations}
            )

    def selected(self):
        b = self.analysis.get("branch", "largest")
        if b == "all":
            return self.solutions
        i = 0 if b == "largest" else int(b)
        if i >= len(self.solutions):
            raise IndexError(f"analysis/branch {i} requested but only {len(self.solutions)} solutions exist")
        return [self.solutions[i]]

    # analyses ---------------------------------------------------------------

    def moments(self):
        n_t = self.analysis["moments"].get("n_time", 128)
        for s in self.selected():
            t = np.linspace(0.0, s.period, n_t)
            mean, var = moments_from_coefficients(s, t)
            header = ["time"] + _state_cols("mean", s.n_d) + _state_cols("variance", s.n_d)
            self.art.csv(f"moments_{s.label}.csv", header, _series_rows(t, mean, var))

    def summary(self):
        c = self.analysis["summary"]
        for s in self.selected():
            summ = sample_summary(s, self.dist, c.get("n_samples", 100000), self.seed, c.get("n_time", 128))
            _write_summary(self.art, f"summary_{s.label}.csv", summ)

    def marginal(self):
        c = self.analysis["marginal"]
        for s in self.selected():
            m = marginal_at(s, self.dist, c.get("n_samples", 100000), c["time"], self.seed,
                            c.get("state", 0), c.get("bins", "fd"))
            self._write_marginal(f"marginal_{s.label}", m, s.self_excited)

    def _write_marginal(self, stem, m, normalized):
        rows = [[m.edges[i], m.edges[i + 1], int(m.counts[i]), m.density[i]] for i in range(len(m.counts))]
        self.art.csv(f"{stem}.csv", ["bin_left", "bin_right", "count", "density"], rows)
        d = m.to_dict()
        d["time_axis"] = "normalized phase" if normalized else "time"
        self.art.json(f"{stem}.json", d)

    def coefficient_grid(self):
        for s in self.selected():
            g = coefficient_grid(s)
            header = ["state", "k"] + [f"m{m}" for m in range(s.N + 1)]
            rows = [[f"x{i}", k, *g.magnitudes[i, k]] for i in range(s.n_d) for k in range(s.H + 1)]
            if g.omega is not None:
                rows.append(["omega", "", *g.omega])
            self.art.csv(f"coefficient_grid_{s.label}.csv", header, rows)

    def phase_portrait(self):
        c = self.analysis["phase_portrait"]
        for s in self.selected():
            pp = phase_portrait(s, self.dist, c.get("n_samples", 100000), self.seed, n_time=c.get("n_time", 513))
            header = ["point", "mean_first", "mean_second", "lower_first", "lower_second",
                      "upper_first", "upper_second"]
            rows = [[j, *pp.mean[:, j], *pp.lower[:, j], *pp.upper[:, j]] for j in range(pp.mean.shape[1])]
            self.art.csv(f"phase_portrait_{s.label}.csv", header, rows)

    def mc_oracle(self):
        c = self.analysis["mc_oracle"]
        n, n_t = c["n_samples"], c.get("n_time", 128)
        thetas = np.sort(sample(self.dist, n, self.seed))
        self.diag["mc_oracle"] = {}
        for s in self.selected():
            initial = None
            if s.label != "branch0":
                # unstable branches are not reachable by time integration
                initial = s.problem().hb_problem().pack(s.coefficients_at(thetas[0]), s.omega_at(thetas[0])
                                                        if s.self_excited else None)
            mc = mc_oracle(self.system, thetas, s.H, s.n_time, initial,
                           s.anchor_value if s.self_excited else None, self.tol, self.max_iter)
            ok = mc.ok
            t0 = time.perf_counter()
            times = (np.linspace(0, 2 * np.pi, n_t) if s.self_excited else np.linspace(0, s.period, n_t))
            fg_paths = surrogate_paths(s, thetas, times)
            t_eval = time.perf_counter() - t0
            fg = summary_from_paths(times, fg_paths[ok], thetas[ok], s.self_excited)
            ref = summary_from_paths(times, mc.paths(times)[ok], thetas[ok], s.self_excited)
            _write_summary(self.art, f"mc_summary_{s.label}.csv", ref)
            diff = compare_summaries(fg, ref)
            header = ["phase" if s.self_excited else "time"] + [
                c for k in ("mean", "lower", "upper") for c in _state_cols(k, s.n_d)]
            self.art.csv(f"difference_{s.label}.csv", header,
                         _series_rows(times, diff.mean, diff.lower, diff.upper))
            real = to_real_layout(mc.coefficients)
            coef_cols = [f"x{i}_{n}" for i in range(s.n_d) for n in
                         ["a0"] + [f"{ab}{k}" for k in range(1, s.H + 1) for ab in "ab"]]
            rows = [[i, th, bool(ok[i]), int(mc.iterations[i]), mc.omega[i], *real[i].reshape(-1)]
                    for i, th in enumerate(thetas)]
            self.art.csv(f"mc_oracle_{s.label}.csv", ["index", "theta", "converged", "iterations", "omega"]
                         + coef_cols, rows)
            d = {
                "samples": n, "failures": len(mc.failures),
                "max_abs_mean_difference": diff.max_abs_mean,
                "oracle_seconds": mc.wall_time, "surrogate_eval_seconds": t_eval,
                "speedup": mc.wall_time / t_eval if t_eval > 0 else None,
            }
            if "marginal" in self.analysis:
                tp = self.analysis["marginal"]["time"]
                st = self.analysis["marginal"].get("state", 0)
                a = surrogate_paths(s, thetas, np.array([tp]))[ok, st, 0]
                b = mc.paths(np.array([tp]))[ok, st, 0]
                from scipy import stats

                d["marginal_ks"] = float(stats.ks_2samp(a, b, method="asymp").statistic)
                self._write_marginal(f"mc_marginal_{s.label}", marginal_from_values(b, tp), s.self_excited)
            self.diag["mc_oracle"][s.label] = d
            if mc.failures:
                self.partial.append(f"{len(mc.failures)} oracle samples failed on {s.label}")

    def convergence_map(self):
        c = self.analysis["convergence_map"]
        guesses, lock = {}, threading.Lock()
        x0 = self.cfg["system"].get("initial_state")

        def solve_fn(H, N):
            P = FgpcProblem.build(self.system, self.dist, H, N, anchor_state=self.anchor_state)
            with lock:
                if H not in guesses:
                    guesses[H] = hb_guess(self.system, P.grid, P.nominal_theta, x0, self.n_periods)
            g = guesses[H]
            Pa = P.with_anchor(g.anchor_value)
            return solve_fgpc(Pa, Guess(Pa.lift(g.unknowns), g.anchor_value), None,
                              tol=self.tol, max_iter=self.max_iter)

        workers = int(os.environ.get("FGPC_NUM_THREADS", "1") or 1)
        emap = convergence_map(solve_fn, c["H_list"], c["N_list"], tuple(c["reference"]), self.dist,
                               c.get("n_samples", 1000), self.seed, max_workers=max(workers, 1))
        rows = [[H, N, emap[H, N]] for H in emap.H_list for N in emap.N_list]
        self.art.csv("convergence_map.csv", ["H", "N", "error"], rows)
        self.diag["convergence_map"] = {
            "absent": [f"H={H},N={N}: {m}" for (H, N), m in sorted(emap.failures.items())],
            "workers": workers,
        }
        if emap.failures:
            self.partial.append(f"{len(emap.failures)} convergence-map cells failed")

    def continuation(self):
        c = self.analysis["continuation"]
        sc = self.cfg["system"]
        name = self.system.uncertain or "alpha"
        values = c.get("parameter_values", [self.system.parameters[name]])
        step = StepConfig(c.get("ds", 0.05), c.get("ds_min", 1e-5), c.get("ds_max", 0.1),
                          c.get("max_points", 5000), self.tol)
        grid = FourierGrid(self.H, self.n_time, self.system.n_d, self.system.d_nl)
        out = []
        for v in values:
            params = dict(sc.get("parameters", {}))
            params[name] = float(v)
            system = make_system(sc["name"], params, None, sc.get("initial_state"))
            br = continuation_sweep(HbProblem(system, grid), c["omega_range"], step)
            header = ["Omega"] + [f"x{i}_k{k}" for i in range(system.n_d) for k in range(self.H + 1)] + ["label"]
            fname = f"branch_{name}_{float(v):g}.csv"
            self.art.csv(fname, header, br.to_rows())
            band = br.three_solution_band()
            out.append({"parameter": name, "value": float(v), "file": fname, "points": len(br.omega),
                        "folds": br.fold_frequencies(), "three_solution_band": band,
                        "truncated": br.truncated})
            if br.truncated:
                self.partial.append(f"branch at {name}={v} truncated")
        bands = [o["three_solution_band"] for o in out]
        common = None
        if bands and all(b is not None for b in bands):
            lo, hi = max(b[0] for b in bands), min(b[1] for b in bands)
            common = [lo, hi] if lo < hi else None
        self.art.json("continuation.json", {"branches": out, "common_three_solution_band": common})

    def manifest(self, exit_code):
        return {
            "format": RUN_FORMAT,
            "config": self.cfg,
            "seed": self.seed,
            "versions": {"fgpc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "stages_seconds": self.stages,
            "diagnostics": self.diag,
            "partial_failures": self.partial,
            "exit_code": exit_code,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "artifacts": sorted(self.art.files),
        }


# --- entry points ------------------------------------------------------------


def _load(path):
    try:
        return load(path), None
    except OSError as exc:
        return None, f"cannot read {path}: {exc.strerror}"
    except Exception as exc:  # yaml syntax errors
        return None, f"{path}: not a valid YAML document ({exc})"


def cmd_validate(args):
    cfg, err = _load(args.config)
    v = [err] if err else violations(cfg)
    if v:
        print(f"{args.config}: {len(v)} violation(s)")
        for line in v:
            print(f"  - {line}")
        return 1
    print(f"{args.config}: OK")
    return 0


def execute(cfg, out_dir):
    """Run a validated config into `out_dir`; returns the exit code."""
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not (out_dir / "manifest.json").exists():
        print(f"error: {out_dir} exists and is not a previous run directory", file=sys.stderr)
        return 1
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        run = Run(cfg, out_dir, staging)
        run.execute()
        code = 2 if run.partial else 0
        run.art.json("manifest.json", run.manifest(code))
    except (ConfigError, ValueError, IndexError, *COMPUTE_ERRORS) as exc:
        shutil.rmtree(staging, ignore_errors=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if out_dir.exists():
        shutil.rmtree(out_dir)
    staging.rename(out_dir)
    for msg in run.partial:
        print(f"warning: {msg}", file=sys.stderr)
    print(f"wrote {len(run.art.files)} artifacts to {out_dir}")
    return code


def cmd_run(args):
    cfg, err = _load(args.config)
    v = [err] if err else violations(cfg)
    if v:
        print(f"{args.config}: invalid configuration", file=sys.stderr)
        for line in v:
            print(f"  - {line}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["output"] = str(args.out)
    out = cfg.get("output") or str(Path("runs") / Path(args.config).stem)
    return execute(cfg, out)


def build_parser():
    p = argparse.ArgumentParser(prog="fgpc", description="Harmonic balance x polynomial chaos surrogates.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config and write artifacts")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--out", help="override the output directory")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config without computing anything")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
