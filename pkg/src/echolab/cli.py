"""Command-line interface for the echo laboratory."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .experiments import (DecaySeries, ExperimentConfig, figure_pipeline,
                          fit_rate, run_experiment)
from .maps import (CAT_SAWTOOTH, SAWTOOTH_POLY, MapSpec, lambda1_of_t,
                   lyapunov_lambda)
from .semiclassics import map_lyapunov


def _add_map_args(p: argparse.ArgumentParser):
    p.add_argument("--family", choices=[CAT_SAWTOOTH, SAWTOOTH_POLY],
                   default=CAT_SAWTOOTH, help="map family")
    p.add_argument("--K", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--poly-i", type=int, default=2, choices=[2, 3],
                   help="polynomial perturbation order (sawtooth_poly)")
    p.add_argument("--seed", type=int, default=0)


def _add_run_args(p: argparse.ArgumentParser):
    _add_map_args(p)
    p.add_argument("--N", type=int, default=4096, help="Hilbert dimension")
    p.add_argument("--sigma", type=float, default=100.0,
                   help="quantum perturbation strength eps/hbar")
    p.add_argument("--xi", default="sqrt-hbar",
                   help="packet width: 'sqrt-hbar' or a value")
    p.add_argument("--packets", type=int, default=200)
    p.add_argument("--tmax", type=int, default=14)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--drop-q", type=float, default=0.02)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output CSV path")


def _config_from(args, curves) -> ExperimentConfig:
    xi = args.xi if args.xi == "sqrt-hbar" else float(args.xi)
    return ExperimentConfig(
        family=args.family, K=args.K, eta=args.eta, poly_i=args.poly_i,
        N=args.N, sigma=args.sigma, xi_rule=xi, n_packets=args.packets,
        t_max=args.tmax, mc_samples=args.mc_samples, drop_q=args.drop_q,
        seed=args.seed, out=args.out, workers=args.workers, curves=curves)


def _map_spec_from(args, epsilon=0.0) -> MapSpec:
    return MapSpec(family=args.family, K=args.K, eta=args.eta,
                   epsilon=epsilon, poly_i=args.poly_i)


def cmd_lyapunov(args):
    spec = _map_spec_from(args)
    lam = lyapunov_lambda(spec, args.ensemble, args.steps, args.seed)
    print(f"lambda = {lam:.6f}")
    if spec.eta == 0.0:
        print(f"sawtooth closed form = {spec.sawtooth_lambda():.6f}")


def cmd_lambda1(args):
    spec = _map_spec_from(args)
    lam1 = lambda1_of_t(spec, args.ensemble, args.tmax, args.seed)
    print("t,Lambda1,I_Lambda")
    for t in range(1, args.tmax + 1):
        print(f"{t},{lam1[t]:.10e},{np.exp(-lam1[t] * t):.10e}")
    lam = map_lyapunov(spec)
    print(f"# lambda = {lam:.6f}", file=sys.stderr)


def cmd_fidelity(args):
    cfg = _config_from(args, curves=("M",))
    series = run_experiment(cfg)
    _emit(series, args.out)


def cmd_semiclassical(args):
    cfg = _config_from(args, curves=("I_s", "I_Lambda"))
    series = run_experiment(cfg)
    _emit(series, args.out)


def cmd_classical_echo(args):
    cfg = _config_from(args, curves=("M_cl",))
    series = run_experiment(cfg)
    _emit(series, args.out)


def cmd_figure(args):
    series, summary = figure_pipeline(args.figure_id, args.scale, args.seed,
                                      out=args.out, workers=args.workers)
    for k in sorted(summary):
        print(f"{k} = {summary[k]}")


def cmd_fit(args):
    series = DecaySeries.from_csv(args.input)
    fit = fit_rate(series, args.column, (args.window[0], args.window[1]))
    print(f"rate = {fit.rate:.6f} +- {fit.stderr:.6f} "
          f"(window [{fit.t_lo}, {fit.t_hi}], R^2 = {fit.r_squared:.4f})")


def _emit(series: DecaySeries, out):
    if out is None:
        sys.stdout.write(series.to_csv())
    else:
        print(f"wrote {out}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="echolab",
        description="Loschmidt-echo laboratory for quantized torus maps")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lyapunov", help="maximal Lyapunov exponent")
    _add_map_args(p)
    p.add_argument("--ensemble", type=int, default=256)
    p.add_argument("--steps", type=int, default=2000)
    p.set_defaults(fn=cmd_lyapunov)

    p = sub.add_parser("lambda1", help="finite-time inverse-expansion rate")
    _add_map_args(p)
    p.add_argument("--ensemble", type=int, default=200_000)
    p.add_argument("--tmax", type=int, default=30)
    p.set_defaults(fn=cmd_lambda1)

    p = sub.add_parser("fidelity", help="packet-averaged quantum fidelity")
    _add_run_args(p)
    p.set_defaults(fn=cmd_fidelity)

    p = sub.add_parser("semiclassical",
                       help="inverse-slope and inverse-expansion predictors")
    _add_run_args(p)
    p.set_defaults(fn=cmd_semiclassical)

    p = sub.add_parser("classical-echo", help="classical disk-return echo")
    _add_run_args(p)
    p.set_defaults(fn=cmd_classical_echo)

    p = sub.add_parser("figure", help="reproduce one of the four figures")
    p.add_argument("figure_id", type=int, choices=[1, 2, 3, 4])
    p.add_argument("--scale", choices=["full", "desk"], default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output stem or CSV path")
    p.set_defaults(fn=cmd_figure)

    p = sub.add_parser("fit", help="log-linear decay-rate fit on a CSV column")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--column", default="M_mean")
    p.add_argument("--window", type=int, nargs=2, required=True,
                   metavar=("T_LO", "T_HI"))
    p.set_defaults(fn=cmd_fit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
