"""Command-line experiment runner: predict, simulate, verify, sweep, report.

Exit codes: 0 ok, 2 configuration error, 3 missing artifact, 4 numerical failure.
"""

import argparse
import glob
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import io as sio
from .empirical import Trajectory, run_plan
from .ensembles import sample_data
from .errors import ConfigError, ContractViolation, InvalidArgument, MissingArtifact, NumericalFailure
from .state_evolution import SEParameters, amp_tau_recursion, run_state_evolution
from .verify import (DeviationReport, compare_estimates, fixpoint_audit, pool_reports, rate_sweep, se_estimates,
                     slug, trial_seed)

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERICAL = 0, 2, 3, 4


def _out(args, cfg):
    out = args.out or cfg.out
    if not out:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    os.makedirs(out, exist_ok=True)
    return out


def _load(args):
    cfg = cfgmod.load(args.config)
    if args.seed_override is not None:
        cfg.seed = int(args.seed_override)
    return cfg


def _tau_reference(cfg):
    """(steps, tau^2) of the scalar AMP recursion when the plan is the AMP preset."""
    meta = cfg.plan.meta
    if cfg.plan.name != "amp-linear":
        return None
    taus = amp_tau_recursion(meta["sigma2"], meta["aspect"], meta["lambdas"], meta["v1_norm"] ** 2)
    return np.arange(2, 2 * len(taus) + 1, 2), taus


def norms_rows(cfg, se):
    ref = _tau_reference(cfg)
    tau = {int(s): float(t) for s, t in zip(*ref)} if ref else {}
    return [[k + 1, se.kinds[k], se.K_g[k, k], se.K_h[k, k], tau.get(k + 1)] for k in range(se.T)]


def cmd_predict(cfg, out):
    se, bank = run_state_evolution(cfg.plan, cfg.aspect, **cfg.mc_kwargs())
    audit = fixpoint_audit(se, bank)
    estimates = se_estimates(bank, cfg.tests)
    sio.write_json(os.path.join(out, "se.json"), se.to_dict())
    sio.write_json(os.path.join(out, "audit.json"), audit)
    sio.write_json(os.path.join(out, "estimates.json"),
                   {"plan_signature": se.plan_signature, "kinds": se.kinds, "R": bank.R, "d_mc": bank.d_mc,
                    "n_mc": bank.n_mc, "seed": bank.seed,
                    "tests": [psi.describe() for psi in cfg.tests],
                    "estimates": {k: list(v) for k, v in estimates.items()}})
    sio.write_rows(os.path.join(out, "se_norms.csv"), ["step", "kind", "u_norm2", "v_norm2", "tau2_reference"],
                   norms_rows(cfg, se))
    if cfg.source.get("mc", {}).get("save_bank"):
        bank.save(os.path.join(out, "bank.npz"))
    return se, bank, audit


def _read_se(out):
    return SEParameters.from_dict(sio.read_json(os.path.join(out, "se.json")))


def _simulate_one(job):
    plan, se, n, d, seed, tol, method = job
    try:
        traj = run_plan(sample_data(n, d, seed), plan, se=se, seed=seed, saddle_tol=tol, saddle_method=method)
        return traj, None
    except NumericalFailure as exc:
        return None, f"{type(exc).__name__}: {exc}"


def cmd_simulate(cfg, out, workers=1):
    se = _read_se(out)
    if se.plan_signature != cfg.plan.signature():
        raise ContractViolation("se.json was produced for a different plan")
    jobs = [(cfg.plan, se, cfg.n, cfg.d, trial_seed(cfg.seed, cfg.n, i), cfg.saddle_tol, cfg.saddle_method)
            for i in range(cfg.trials)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_one, jobs))
    else:
        results = [_simulate_one(j) for j in jobs]
    summary = []
    for i, ((traj, err), job) in enumerate(zip(results, jobs)):
        if traj is not None:
            traj.write(os.path.join(out, f"traj_{i}"))
        summary.append({"trial": i, "seed": job[4], "ok": traj is not None, "error": err})
    sio.write_json(os.path.join(out, "simulate.json"), {"n": cfg.n, "d": cfg.d, "trials": summary})
    if not any(s["ok"] for s in summary):
        raise NumericalFailure("every trial failed: " + "; ".join(s["error"] for s in summary))
    return summary


def _trajectories(out):
    stems = sorted(p[:-5] for p in glob.glob(os.path.join(out, "traj_*.json")))
    if not stems:
        raise MissingArtifact(f"no trajectory files in {out}; run simulate first")
    return [Trajectory.read(s) for s in stems]


def cmd_verify(cfg, out):
    stored = sio.read_json(os.path.join(out, "estimates.json"))
    estimates = {k: tuple(v) for k, v in stored["estimates"].items()}
    reports = []
    for traj in _trajectories(out):
        if traj.plan_signature != stored["plan_signature"]:
            raise ContractViolation(f"trajectory seed {traj.seed} was run under a different plan")
        reports.append(compare_estimates(traj, estimates, cfg.tests, stored["kinds"], cfg.delta))
    report = pool_reports(reports)
    report.write(os.path.join(out, "deviation"))
    return report


def cmd_sweep(cfg, out, workers=1):
    if not cfg.n_list:
        raise ConfigError("run.n_list: required for sweep")
    se, bank = run_state_evolution(cfg.plan, cfg.aspect, **cfg.mc_kwargs())
    rep = rate_sweep(cfg.plan, cfg.tests, cfg.n_list, trials=cfg.trials, seed=cfg.seed, aspect=cfg.aspect,
                     se=se, bank=bank, workers=workers, delta=cfg.delta)
    rep.write(out)
    return rep


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    if isinstance(x, float):
        return f"{x:.4g}"
    return str(x)


def _table(header, rows):
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(_fmt(v) for v in row) + " |" for row in rows]
    return "\n".join(lines)


def cmd_report(out):
    from . import plotting

    paths = {k: os.path.join(out, f"{k}.json") for k in ("se", "audit", "deviation", "sweep")}
    present = {k: p for k, p in paths.items() if os.path.exists(p)}
    if not present:
        raise MissingArtifact(f"no artifacts to report on in {out}")
    parts = ["# Experiment report", ""]
    if "se" in present:
        se = SEParameters.from_dict(sio.read_json(present["se"]))
        steps = np.arange(1, se.T + 1)
        rows = [[k + 1, se.kinds[k], se.K_g[k, k], se.K_h[k, k], se.diagnostics[k].get("iterations")]
                for k in range(se.T)]
        parts += ["## State evolution", "", _table(["step", "kind", "|u|^2", "|v|^2", "fixed-point sweeps"], rows),
                  "", "![norms](se_norms.svg)", ""]
        plotting.norms_figure(os.path.join(out, "se_norms.svg"), steps, np.diag(se.K_g), np.diag(se.K_h))
    if "audit" in present:
        audit = sio.read_json(present["audit"])
        parts += ["## Moment-matching audit (MC standard errors)", "",
                  _table(["block", "max residual", "max abs difference"],
                         [[k, b["max_residual"], b["max_abs_difference"]] for k, b in sorted(audit.items())]), ""]
    if "deviation" in present:
        dev = DeviationReport.from_dict(sio.read_json(present["deviation"]))
        parts += [f"## Deviations (n = {dev.n}, d = {dev.d}, T = {dev.T}, {len(dev.seeds)} trial(s))", "",
                  _table(["test", "empirical", "SE", "SE std err", "deviation", "rate reference"],
                         [[r["test"], r["empirical"], r["se_estimate"], r["se_std_error"], r["deviation"],
                           r["delta1_reference"]] for r in dev.rows]), ""]
    if "sweep" in present:
        sw = sio.read_json(present["sweep"])
        parts += ["## Rate sweep", ""]
        rows = []
        for name in sw["tests"]:
            med = sw["medians"][name]
            s = slug(name)
            sio.write_csv(os.path.join(out, f"sweep_{s}.csv"), ["n", "median_deviation", "delta1_reference"],
                          [sw["n_list"], med, sw["delta1"]])
            plotting.sweep_figure(os.path.join(out, f"sweep_{s}.svg"), name, sw["n_list"], med, sw["delta1"],
                                  sw["slopes"][name])
            rows.append([name, sw["slopes"][name], "yes" if sw["degenerate"][name] else "no"] + med)
        parts += [_table(["test", "slope", "degenerate"] + [f"n={n}" for n in sw["n_list"]], rows), ""]
        parts += [f"![{name}](sweep_{slug(name)}.svg)" for name in sw["tests"]] + [""]
    text = "\n".join(parts)
    sio.atomic_write(os.path.join(out, "report.md"), text)
    return text


def build_parser():
    p = argparse.ArgumentParser(prog="selab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("predict", "simulate", "verify", "sweep", "report"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=name != "report", help="TOML experiment configuration")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--workers", type=int, default=1, help="parallel trial workers")
        s.add_argument("--seed-override", type=int, default=None, help="replace run.seed")
    return p


def run(args):
    if args.command == "report" and not args.config:
        if not args.out:
            raise ConfigError("report needs --out or --config")
        cmd_report(args.out)
        return
    cfg = _load(args)
    out = _out(args, cfg)
    if args.command == "predict":
        cmd_predict(cfg, out)
    elif args.command == "simulate":
        cmd_simulate(cfg, out, args.workers)
    elif args.command == "verify":
        cmd_verify(cfg, out)
    elif args.command == "sweep":
        cmd_sweep(cfg, out, args.workers)
    else:
        cmd_report(out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except (ConfigError, ContractViolation, InvalidArgument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
