"""Command-line entry point ``msfilter``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from msfilter.errors import ConfigError, NumericalError
from msfilter.experiments import EXPERIMENTS, build_config, parse_config_text, run_experiment, spectral_rows
from msfilter.inference import IdentifiabilityError, grid_mle, predicted_mle_std, reduced_mle
from msfilter.likelihood import mc_log_lik, reduced_log_lik
from msfilter.sde import read_path_csv, simulate_xy, write_path_csv
from msfilter.spectral import eigen_coefficients, invariant_mean

GRID_POINTS = 401


def _common(p):
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--seed", type=int, help="master seed (u64)")
    p.add_argument("--threads", type=int, help="worker processes")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--long", action="store_true", default=None, help="add the delta=0.001 CLT run")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--model", help="model name (ou-max, constant-h)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; repeatable")


def build_parser():
    parser = argparse.ArgumentParser(prog="msfilter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one (X, Y) path and write t,x,y CSV")
    _common(p)
    p.add_argument("--theta", type=float, help="simulation parameter (default: alpha)")

    p = sub.add_parser("spectral", help="eigen-coefficient table theta,c0..cK,v2")
    _common(p)
    p.add_argument("--theta", type=float, nargs="+", help="parameters (default: theta_list)")

    p = sub.add_parser("loglik", help="Monte-Carlo and reduced log-likelihoods of a path CSV")
    _common(p)
    p.add_argument("path", help="path CSV written by 'simulate'")
    p.add_argument("--theta", type=float, nargs="+")
    p.add_argument("-N", "--particles", type=int)

    p = sub.add_parser("mle", help="reduced-likelihood estimators for a path CSV")
    _common(p)
    p.add_argument("path", help="path CSV written by 'simulate'")

    p = sub.add_parser("run", help="run the experiment named in the config")
    _common(p)
    p.add_argument("--experiment", choices=EXPERIMENTS)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _common(p)
    return parser


def _load(args, **extra):
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    overrides = dict(extra)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    overrides.update(master_seed=args.seed, thread_count=args.threads, long=args.long,
                     output=args.out, model=args.model)
    return build_config(values, overrides, args.preset)


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_path(filename):
    try:
        with open(filename) as fh:
            return read_path_csv(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read path CSV {filename!r}: {exc}") from None


def cmd_simulate(args):
    cfg = _load(args, experiment="clt")
    model = cfg.make_model()
    theta = cfg.alpha if args.theta is None else args.theta
    if not model.contains(theta):
        raise ConfigError(f"theta={theta} outside {list(model.theta_bounds)}")
    path = simulate_xy(model, theta, cfg.delta, cfg.T, cfg.step(), cfg.x0(), cfg.master_seed)
    _emit(write_path_csv(path), args.out)


def cmd_spectral(args):
    cfg = _load(args, experiment="spectral_report")
    thetas = args.theta or cfg.theta_list
    model = cfg.make_model()
    rows = spectral_rows(model, thetas, cfg.K, cfg.n_quad)
    cols = ["theta"] + [f"c{i}" for i in range(cfg.K + 1)] + ["v2"]
    lines = [",".join(cols)]
    lines += [",".join(repr(float(r[c])) for c in cols) for r, _ in rows]
    _emit("\n".join(lines) + "\n", args.out)


def cmd_loglik(args):
    overrides = {"experiment": "clt"}
    if args.particles is not None:
        overrides["n_particles"] = args.particles
    cfg = _load(args, **overrides)
    path = _read_path(args.path)
    model = cfg.make_model()
    thetas = args.theta or cfg.theta_list
    lines = ["theta,rho_mc,rho_reduced,ess"]
    for i, th in enumerate(thetas):
        if not model.contains(th):
            raise ConfigError(f"theta={th} outside {list(model.theta_bounds)}")
        est = mc_log_lik(model, th, path, cfg.n_particles, cfg.master_seed + i)
        rho_bar = reduced_log_lik(invariant_mean(model, th, cfg.n_quad), path.y_T, path.T)
        lines.append(f"{th!r},{est.value!r},{rho_bar!r},{est.ess!r}")
    _emit("\n".join(lines) + "\n", args.out)


def cmd_mle(args):
    cfg = _load(args, experiment="mle_hist")
    path = _read_path(args.path)
    model = cfg.make_model()
    T, y_T = path.T, path.y_T
    hbar_of = lambda th: invariant_mean(model, th, cfg.n_quad)  # noqa: E731
    root = reduced_mle(model, hbar_of, y_T, T)
    grid = np.linspace(*model.theta_bounds, GRID_POINTS)
    best = grid_mle(lambda th: reduced_log_lik(hbar_of(th), y_T, T), grid)
    table = eigen_coefficients(model, root.theta_hat, cfg.K, cfg.n_quad)
    try:
        se = predicted_mle_std(table.hdot, T)
    except ValueError:
        se = math.nan
    text = (
        "estimator,theta_hat,flag,objective\n"
        f"reduced_root,{root.theta_hat!r},{root.clamped},{root.objective_value!r}\n"
        f"reduced_grid,{best.theta_hat!r},{best.clamped},{best.objective_value!r}\n"
        f"# predicted_std={se!r}\n"
    )
    _emit(text, args.out)


def cmd_experiment(args, name=None):
    overrides = {}
    name = name or getattr(args, "experiment", None)
    if name:
        overrides["experiment"] = name
    cfg = _load(args, **overrides)
    report = run_experiment(cfg)
    _emit(report.to_csv(), cfg.output)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            cmd_simulate(args)
        elif args.command == "spectral":
            cmd_spectral(args)
        elif args.command == "loglik":
            cmd_loglik(args)
        elif args.command == "mle":
            cmd_mle(args)
        elif args.command == "run":
            cmd_experiment(args)
        else:
            cmd_experiment(args, args.command)
    except NumericalError as exc:
        where = f" (trial {exc.trial_index})" if exc.trial_index is not None else ""
        print(f"msfilter: numerical failure{where}: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, IdentifiabilityError) as exc:
        print(f"msfilter: configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
