"""Command-line entry point: validate, simulate, sample-study, converge.

Exit codes: 0 ok, 1 validation-suite failure, 2 config error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, summation, svg, trajio
from .errors import ConfigError, IntegrationAbort, ParameterError
from .modenergy import (SpectralProbe, counting_report, default_eps3, modulated_energy_direct,
                        sobolev_distance, theorem_monitor)
from .nbody import integrate, separation_floor
from .sampling import SampleSpec, sample_iid, scaling_study

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _dump(obj) -> str:
    """Stable JSON text: sorted keys, repr floats, non-finite values as strings."""
    def clean(v):
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, (np.floating, float)):
            v = float(v)
            return v if math.isfinite(v) else str(v)
        if isinstance(v, np.integer):
            return int(v)
        return v
    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


class Manifest:
    """Written before any work starts and completed last, so interrupted runs stay marked."""

    def __init__(self, out_dir: Path, command: str, cfg):
        self.path = out_dir / "manifest.json"
        self.t0 = time.perf_counter()
        self.data = {
            "status": "incomplete",
            "command": command,
            "code_version": f"mflab {__version__}",
            "config_hash": cfg.digest(),
            "config": cfg.resolved(),
            "started": _now(),
            "threads": summation.get_num_threads(),
            "outputs": {},
        }
        self.flush()

    def add(self, key, path: Path):
        self.data["outputs"][key] = path.name if path.parent == self.path.parent else str(path)

    def flush(self):
        self.path.write_text(_dump(self.data))

    def finish(self, status="complete", **extra):
        self.data.update(extra)
        self.data["status"] = status
        self.data["finished"] = _now()
        self.data["wall_clock_s"] = round(time.perf_counter() - self.t0, 3)
        if status == "complete":
            base = self.path.parent
            missing = [p for p in self.data["outputs"].values() if not (base / p).exists()]
            if missing:
                self.data["status"] = "incomplete"
                self.data["missing"] = missing
        self.flush()


# ---------------------------------------------------------------------------
# simulate


def _write(path: Path, text: str, manifest: Manifest, key: str):
    path.write_text(text)
    manifest.add(key, path)


def _fit_counting_constant(profile, n, seed, eps3, count):
    """Largest t = 0 counting ratio over an i.i.d. ensemble of ``count`` seeds."""
    ratios = []
    for k in range(count):
        st = sample_iid(SampleSpec(profile, n, (seed + k) % 2**64))
        ratios.append(counting_report(st, profile, eps3).ratio)
    return max(ratios), ratios


def run_simulation(cfg, out: Path, manifest: Manifest, n: int | None = None,
                   log=print) -> dict:
    n = n or cfg.n
    profile, J, seed = cfg.profile(), cfg.rotation(), cfg.seeds[0]
    dg = cfg.diagnostics
    state = sample_iid(SampleSpec(profile, n, seed))
    log(f"sampled N={n} (seed {seed}); integrating to t={cfg.t_end}")
    traj = integrate(state, J, cfg.t_end, cfg.controls(), times=cfg.sample_times(),
                     method=cfg.method, theta=cfg.theta)
    states = traj.states()
    reports = [modulated_energy_direct(s, profile) for s in states]
    f_avg = np.array([r.f_n_avg for r in reports])
    d = cfg.dim
    h0 = traj.hamiltonian[0]
    drift = np.abs(traj.hamiltonian - h0) / h0

    # minimal separation: energy floor with the exact constant, plus the t = 0 fit
    h_sup = float(traj.hamiltonian.max())
    floor = separation_floor(h_sup, n, d)
    fitted_const = traj.min_separation[0] * (n * n * h0) ** (1 / (d - 2))
    floor_fit = separation_floor(h_sup, n, d, const=fitted_const)

    growth = theorem_monitor(traj.times, f_avg, n, d, h_sup, profile.sup_norm)

    counting = None
    count_rows = [(math.nan,) * 4] * len(states)
    if dg.counting:
        eps3 = dg.eps3 or default_eps3(n)
        const, ratios0 = _fit_counting_constant(profile, n, seed, eps3, dg.counting_seeds)
        crs = [counting_report(s, profile, eps3, f_n=r.f_n) for s, r in zip(states, reports)]
        count_rows = [(c.lhs, c.rhs, c.ratio, const * c.rhs) for c in crs]
        violations = [i for i, c in enumerate(crs) if c.lhs > const * c.rhs]
        counting = {"eps3": eps3, "fitted_constant": const, "fit_seeds": dg.counting_seeds,
                    "t0_ratios": ratios0, "max_ratio": max(c.ratio for c in crs),
                    "violations": violations}

    sob = np.full(len(states), math.nan)
    sob_tail = math.nan
    if dg.sobolev:
        probe = SpectralProbe(dg.sobolev_s, dg.sobolev_cutoff, dg.sobolev_radial_nodes,
                              dg.sobolev_sphere_degree)
        vals = [sobolev_distance(s, profile, probe) for s in states]
        sob = np.array([v.value for v in vals])
        sob_tail = vals[0].tail_bound

    # outputs
    _write(out / "trajectory.csv", trajio.trajectory_csv(
        traj.times, traj.hamiltonian, traj.min_separation, traj.positions), manifest,
        "trajectory_csv")
    binpath = out / "trajectory.mfl"
    trajio.write_binary(binpath, traj)
    manifest.add("trajectory_binary", binpath)

    head = ["t", "f_n", "f_n_avg", "pair_sum", "mf_self", "cross", "hamiltonian",
            "energy_drift", "minsep", "minsep_floor", "counting_lhs", "counting_rhs",
            "counting_ratio", "counting_envelope", "theorem_envelope", "sobolev"]
    lines = [",".join(head)]
    for k, r in enumerate(reports):
        row = [traj.times[k], r.f_n, r.f_n_avg, r.pair_sum, r.mf_self, r.cross,
               traj.hamiltonian[k], drift[k], traj.min_separation[k], floor,
               *count_rows[k], growth.envelope[k], sob[k]]
        lines.append(",".join(repr(float(v)) for v in row))
    _write(out / "diagnostics.csv", "\n".join(lines) + "\n", manifest, "diagnostics_csv")

    report = {
        "n": n, "d": d, "seed": seed, "t_end": cfg.t_end,
        "samples": [dict(r.to_json(), t=float(t)) for r, t in zip(reports, traj.times)],
        "hamiltonian": {"initial": h0, "max_relative_drift": float(drift.max())},
        "min_separation": {"observed_min": float(traj.min_separation.min()),
                           "energy_floor": floor, "fitted_constant_t0": fitted_const,
                           "fitted_floor": floor_fit,
                           "floor_respected": bool(traj.min_separation.min() >= floor)},
        "theorem_monitor": growth.to_json(),
        "growth_ratio": float(np.max(np.abs(f_avg)) / abs(f_avg[0])) if f_avg[0] else None,
        "counting": counting,
        "sobolev": ({"s": dg.sobolev_s, "cutoff": dg.sobolev_cutoff, "tail_bound": sob_tail,
                     "values": sob.tolist()} if dg.sobolev else None),
        "integrator": {"accepted": traj.stats.accepted, "rejected": traj.stats.rejected,
                       "rhs_evals": traj.stats.rhs_evals},
    }
    _write(out / "report.json", _dump(report), manifest, "report_json")

    fplot = svg.Plot("Modulated energy |F_N^avg(t)|", "t", "|F_N^avg|")
    fplot.add(traj.times, np.abs(f_avg), "observed")
    fplot.add(traj.times, growth.envelope, f"envelope, C_fit = {growth.c_fit:.3g}", "dashed")
    hplot = svg.Plot("Relative Hamiltonian drift", "t", "|H(t) - H(0)| / H(0)")
    hplot.add(traj.times, drift, "drift")
    mplot = svg.Plot("Minimal separation", "t", "min |x_i - x_j|")
    mplot.add(traj.times, traj.min_separation, "observed")
    mplot.add(traj.times, np.full(len(traj.times), floor), "energy floor", "dashed")
    for name, plot in (("f_avg.svg", fplot), ("energy_drift.svg", hplot),
                       ("minsep.svg", mplot)):
        _write(out / name, plot.render(), manifest, name.replace(".", "_"))
    return report


# ---------------------------------------------------------------------------
# study commands


def run_sample_study(cfg, out: Path, manifest: Manifest, seeds=None) -> dict:
    if not cfg.n_values or len(cfg.n_values) < 3:
        raise ConfigError("a scaling study needs at least 3 values", field="experiment.n_values")
    seeds = seeds if seeds is not None else cfg.seeds
    study = scaling_study(cfg.profile(), cfg.n_values, seeds)
    _write(out / "study.csv", study.to_csv(), manifest, "study_csv")
    _write(out / "study.json", study.to_json() + "\n", manifest, "study_json")
    plot = svg.Plot("Median |F_N^avg(0)| against N", "N", "median |F_N^avg|",
                    logx=True, logy=True)
    plot.add(study.n_values, study.medians, "median over seeds", "points")
    fit = np.exp(study.intercept) * np.asarray(study.n_values, float) ** study.slope
    plot.add(study.n_values, fit, f"fit, slope {study.slope:.3f}", "dashed")
    _write(out / "loglog.svg", plot.render(), manifest, "loglog_svg")
    return study.summary()


def run_converge(cfg, out: Path, manifest: Manifest, log=print) -> dict:
    summary = {"scaling": run_sample_study(cfg, out, manifest), "runs": []}
    for n in cfg.n_values:
        sub = out / f"n{n}"
        sub.mkdir(parents=True, exist_ok=True)
        inner = Manifest(sub, "simulate", cfg)
        rep = run_simulation(cfg, sub, inner, n=n, log=log)
        inner.finish()
        manifest.add(f"n{n}_manifest", inner.path)
        summary["runs"].append({"n": n, "c_fit": rep["theorem_monitor"]["c_fit"],
                                "growth_ratio": rep["growth_ratio"],
                                "sup_f_avg": rep["theorem_monitor"]["sup_f_avg"]})
    cf = [r["c_fit"] for r in summary["runs"]]
    summary["c_fit_spread"] = (max(cf) / min(cf)) if min(cf) > 0 else None
    _write(out / "converge.json", _dump(summary), manifest, "converge_json")
    return summary


# ---------------------------------------------------------------------------
# argument handling


def _parser():
    p = argparse.ArgumentParser(prog="mflab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for pair sums (default: $MFLAB_THREADS or 1)")
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")

    v = sub.add_parser("validate", parents=[common], help="run the identity suite")
    v.add_argument("--corrupt-cd", type=float, default=None, help=argparse.SUPPRESS)

    for name, helptext in (("simulate", "sample, integrate and evaluate diagnostics"),
                           ("sample-study", "F_N^avg(0) scaling over an N ladder"),
                           ("converge", "scaling study plus one run per N")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", type=Path, default=None, help="output directory")
        if name == "sample-study":
            s.add_argument("--seeds", type=int, default=None,
                           help="use seeds 0..K-1 instead of the configured list")
    return p


def _cmd_validate(args) -> int:
    from .validate import format_table, run_suite
    results = run_suite(args.corrupt_cd)
    ok = all(r.passed for r in results)
    if args.json:
        print(_dump({"passed": ok, "checks": [r.to_json() for r in results]}), end="")
    else:
        print(format_table(results))
        for r in results:
            if not r.passed:
                print(f"FAILED: {r.name}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VALIDATION


def _cmd_run(args) -> int:
    log = (lambda *a: print(*a, file=sys.stderr)) if args.json else print
    try:
        cfg = cfgmod.load(args.config)
        if args.command == "sample-study" and args.seeds is not None:
            if args.seeds < 1:
                raise ConfigError("must be >= 1", field="--seeds")
            cfg.seeds = list(range(args.seeds))
        if args.command in ("sample-study", "converge") and not cfg.n_values:
            raise ConfigError("required for this command", field="experiment.n_values")
        if args.command in ("sample-study", "converge") and len(cfg.n_values) < 3:
            raise ConfigError("at least 3 values required", field="experiment.n_values")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    command = args.command
    if command == "simulate" and cfg.n is None:
        command = "converge"  # an N ladder dispatches the convergence study
        if len(cfg.n_values) < 3:
            print("config error: experiment.n_values: at least 3 values required",
                  file=sys.stderr)
            return EXIT_CONFIG
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, command, cfg)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if command == "simulate":
                result = run_simulation(cfg, out, manifest, log=log)
            elif command == "sample-study":
                result = run_sample_study(cfg, out, manifest)
            else:
                result = run_converge(cfg, out, manifest, log=log)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except IntegrationAbort as exc:
        manifest.finish("aborted", error=str(exc), abort_time=exc.t,
                        diagnostic=exc.diagnostic)
        print(f"runtime abort at t={exc.t}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ParameterError, ConfigError) as exc:
        manifest.finish("failed", error=str(exc))
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest.finish(warnings=[str(w.message) for w in caught])
    if args.json:
        print(_dump(manifest.data), end="")
    else:
        log(f"wrote {len(manifest.data['outputs'])} outputs to {out}")
        if command == "simulate":
            tm = result["theorem_monitor"]
            log(f"C_fit = {tm['c_fit']:.3e}, max energy drift = "
                f"{result['hamiltonian']['max_relative_drift']:.2e}")
        elif "slope" in result:
            log(f"fitted slope = {result['slope']:.3f}")
        else:
            log(f"fitted slope = {result['scaling']['slope']:.3f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("config error: --threads: must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        summation.set_num_threads(args.threads)
    elif os.environ.get("MFLAB_THREADS"):
        summation.set_num_threads(summation.get_num_threads())
    if args.command == "validate":
        return _cmd_validate(args)
    return _cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
