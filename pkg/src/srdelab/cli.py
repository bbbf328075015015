"""``srde`` command line.

Exit codes: 0 success, 2 configuration error, 3 assumption check failed under
``--strict``, 4 I/O error.
"""

import argparse
import csv
import json
import math
import os
import subprocess
import sys

import numpy as np

from . import __version__, kernels
from .config import RunConfig, load_config, with_overrides
from .convolution import ConvolutionConfig, moment_bound_check, sup_moment_scaling
from .errors import AssumptionViolation, ConfigError, InvalidArgument, SweepIOError
from .harness import SweepSpec, persist_results, run_sweep, to_json_ready
from .model import ModelSpec
from .ode import table
from .sde import SdeConfig, moment_estimate, run_sde_trials
from .spde import SolverConfig, simulate_spde, sine_initial
from .spectral import (check_assumptions, dirichlet_interval_basis, load_spectrum_csv,
                       power_law_noise, NoiseSpectrum)

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_IO = 0, 2, 3, 4


class _Strict(Exception):
    pass


def version_string():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=os.path.dirname(os.path.abspath(__file__)),
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ---------------------------------------------------------------------------
# building domain objects from a RunConfig


def model_from(cfg):
    return ModelSpec(cfg.beta, cfg.gamma, cfg.k1, cfg.k2, cfg.c0, cfg.drift, cfg.diffusion)


def basis_from(cfg):
    return dirichlet_interval_basis(cfg.domain_length, cfg.num_modes, cfg.grid_size)


def spectrum_from(cfg):
    if cfg.lambdas == "white":
        return NoiseSpectrum("white", cfg.rho, cfg.theta)
    if cfg.lambdas == "power-law":
        return power_law_noise(cfg.delta, cfg.rho, cfg.theta)
    try:
        return load_spectrum_csv(cfg.lambdas, cfg.rho, cfg.theta)
    except OSError as exc:
        raise ConfigError(f"cannot read spectrum {cfg.lambdas}: {exc}", key="lambdas") from exc


def solver_from(cfg):
    return SolverConfig(
        num_modes=cfg.num_modes, grid_size=cfg.grid_size, noise_modes=cfg.noise_modes,
        dt=1e-4 if cfg.dt is None else cfg.dt,
        horizon=1.0 if cfg.horizon is None else cfg.horizon,
        explosion_threshold=cfg.explosion_threshold,
        scheme="semi_implicit_split" if cfg.scheme is None else cfg.scheme,
        ladder_enabled=cfg.ladder_enabled, record_every=cfg.record_every)


def sde_from(cfg):
    model_from(cfg)  # same validation as the SPDE commands
    return SdeConfig(
        dimension=cfg.dimension, beta=cfg.beta,
        gamma=0.0 if cfg.diffusion == "additive" else cfg.gamma, x0=cfg.x0,
        dt=1e-3 if cfg.dt is None else cfg.dt,
        horizon=1.0 if cfg.horizon is None else cfg.horizon,
        exit_radius=cfg.exit_radius,
        scheme="tamed_euler" if cfg.scheme is None else cfg.scheme,
        drift_coeff=0.0 if cfg.drift == "zero" else cfg.k1, noise_coeff=cfg.k2)


def convolution_from(cfg):
    return ConvolutionConfig(
        alpha=cfg.alpha, zeta=cfg.zeta, p=cfg.p,
        dt=1e-3 if cfg.dt is None else cfg.dt,
        horizon=1.0 if cfg.horizon is None else cfg.horizon, rule=cfg.rule)


# ---------------------------------------------------------------------------
# output helpers


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _summary(cfg, payload):
    head = {"version": version_string(), "backend": kernels.BACKEND,
            "config_digest": cfg.digest()}
    head.update(payload)
    return to_json_ready(head)


def _write_json(args, name, data):
    with open(_out_path(args, name), "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(args, name, header, rows):
    with open(_out_path(args, name), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _strict_check(args, cfg):
    report = check_assumptions(basis_from(cfg), spectrum_from(cfg), model_from(cfg))
    if args.strict and not report.ok:
        raise _Strict(report)
    return report


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args, cfg):
    report = check_assumptions(basis_from(cfg), spectrum_from(cfg), model_from(cfg))
    data = _summary(cfg, {"report": report.to_dict()})
    print(json.dumps(data, indent=2, sort_keys=True))
    if args.write:
        _write_json(args, "check.json", data)
    if args.strict and not report.ok:
        raise _Strict(report)


def cmd_ode(args, cfg):
    rows = table(cfg.beta, cfg.k1, cfg.phi0, cfg.times)
    w = csv.writer(sys.stdout, lineterminator="\n")
    header = ("t", "exact", "envelope", "uniform_bound")
    w.writerow(header)
    w.writerows((repr(a), repr(b), repr(c), repr(d)) for a, b, c, d in rows)
    if args.write:
        _write_csv(args, "ode.csv", header, [[repr(v) for v in r] for r in rows])


def cmd_sde(args, cfg):
    sc = sde_from(cfg)
    trials = run_sde_trials(sc, cfg.trials, cfg.master_seed)
    persist_results(trials, _out_path(args, "sde_trials.csv"))
    summary = {"trials": cfg.trials,
               "exits": sum(t.exit_reason != "horizon" for t in trials),
               "sde": sc.to_dict()}
    if cfg.trials >= 100:
        est = moment_estimate(sc, cfg.trials, cfg.master_seed)
        summary["moment_mean"], summary["moment_stderr"] = est.mean, est.stderr
    data = _summary(cfg, summary)
    _write_json(args, "sde_summary.json", data)
    print(json.dumps(data, indent=2, sort_keys=True))


def cmd_simulate(args, cfg):
    _strict_check(args, cfg)
    basis = basis_from(cfg)
    u0 = sine_initial(basis, cfg.u0_amplitude, cfg.u0_mode)
    rec = simulate_spde(u0, model_from(cfg), spectrum_from(cfg), basis, solver_from(cfg),
                        cfg.master_seed)
    persist_results(rec, _out_path(args, "trajectory.csv"))
    data = _summary(cfg, {
        "seed": rec.seed, "record_digest": rec.digest, "verdict": rec.verdict,
        "verdict_time": rec.verdict_time, "wall_time": rec.wall_time,
        "crossings": [[c.time, c.direction, c.level] for c in rec.crossings]})
    _write_json(args, "trajectory.json", data)
    print(json.dumps({k: v for k, v in data.items() if k != "crossings"}, indent=2,
                     sort_keys=True))


def cmd_sweep(args, cfg):
    _strict_check(args, cfg)
    spec = SweepSpec(betas=tuple(sorted(cfg.beta_values)), gammas=tuple(sorted(cfg.gamma_values)),
                     trials=cfg.trials, model=model_from(cfg), solver=solver_from(cfg),
                     spectrum=spectrum_from(cfg), domain_length=cfg.domain_length,
                     u0_amplitude=cfg.u0_amplitude, master_seed=cfg.master_seed,
                     workers=cfg.workers)
    os.makedirs(args.out, exist_ok=True)
    emap = run_sweep(spec, out_dir=args.out)
    data = _summary(cfg, {"sweep_digest": spec.digest(), "results_digest": emap.digest(),
                          "eta": emap.eta, "thresholds": emap.threshold_lines(),
                          "boundary_cells": emap.boundary_cells()})
    _write_json(args, "sweep_summary.json", data)
    sys.stdout.write(emap.to_csv())


def cmd_convolution(args, cfg):
    cc = convolution_from(cfg)
    model, spectrum, basis = model_from(cfg), spectrum_from(cfg), basis_from(cfg)
    payload = {"convolution": cc.__dict__.copy()}
    if args.experiment in ("moment", "both"):
        n = cc.times.size - 1
        rep = moment_bound_check(cc, model, spectrum, basis, np.full(n, cfg.u0_amplitude),
                                 max(cfg.trials, 100), cfg.master_seed)
        _write_csv(args, "convolution_report.csv", ("t", "lhs", "rhs", "ratio"),
                   [(repr(t), repr(a), repr(b), repr(r)) for t, a, b, r, *_ in rep.rows()])
        payload["moment_log_slope"] = rep.log_slope
        payload["max_ratio"] = float(np.max(rep.ratio))
    if args.experiment in ("scaling", "both"):
        fit = sup_moment_scaling(cc, spectrum, basis, max(cfg.trials, 100), cfg.horizons,
                                 cfg.master_seed, sigma=model.k2)
        payload["scaling"] = fit.to_dict()
    data = _summary(cfg, payload)
    _write_json(args, "convolution_fit.json", data)
    print(json.dumps(data, indent=2, sort_keys=True))


COMMANDS = {"check": cmd_check, "ode": cmd_ode, "sde": cmd_sde, "simulate": cmd_simulate,
            "sweep": cmd_sweep, "convolution": cmd_convolution}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat key=value config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (u64)")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                        help="worker processes (else $SRDE_WORKERS, else config)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--strict", action="store_true", default=argparse.SUPPRESS,
                        help="exit 3 when the assumption check fails")

    p = argparse.ArgumentParser(prog="srde", parents=[common],
                                description="stochastic reaction-diffusion laboratory")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("check", parents=[common], help="assumption report as JSON")
    s.add_argument("--write", action="store_true", help="also write check.json to --out")
    s = sub.add_parser("ode", parents=[common], help="exact ODE solution and envelopes")
    s.add_argument("--write", action="store_true", help="also write ode.csv to --out")
    sub.add_parser("sde", parents=[common], help="comparison SDE trials")
    sub.add_parser("simulate", parents=[common], help="one SPDE trajectory")
    sub.add_parser("sweep", parents=[common], help="(beta, gamma) explosion map")
    s = sub.add_parser("convolution", parents=[common], help="stochastic convolution experiments")
    s.add_argument("--experiment", choices=("moment", "scaling", "both"), default="both")
    return p


def _resolve(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    workers = getattr(args, "workers", None)
    if workers is None and os.environ.get("SRDE_WORKERS"):
        try:
            workers = int(os.environ["SRDE_WORKERS"])
        except ValueError:
            raise ConfigError("SRDE_WORKERS must be an integer", key="workers") from None
    cfg = with_overrides(cfg, master_seed=getattr(args, "seed", None), workers=workers)
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1", key="workers")
    if not 0 <= cfg.master_seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer", key="master_seed")
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.out = getattr(args, "out", "srde-output")
    args.strict = getattr(args, "strict", False)
    try:
        cfg = _resolve(args)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidArgument, AssumptionViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _Strict as exc:
        failed = [d for d in exc.args[0].diagnostics if d.startswith("FAIL")]
        print("assumption check failed: " + "; ".join(failed), file=sys.stderr)
        return EXIT_ASSUMPTION
    except SweepIOError as exc:
        print(f"I/O error: {exc} (resume from cell {exc.resume_token})", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
