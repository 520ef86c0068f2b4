"""Command line front end.

Subcommands:
    sweep           run the (lambda, N, seed) grid from a JSON config
    se-curves       dump the scalar-map, fixed-point, and penalty curves
    min-lambda      search the predicted-risk minimizer inside a bracket
    check-instance  generate (or load) one instance and run sanity checks

Exit codes: 0 success, 2 invalid config or arguments, 3 a cell or check failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ._version import __version__
from .experiments import (ExperimentConfig, dump_se_curves, minimum_lambda,
                          run_sweep, write_curve_tables, write_records_csv)
from .instances import generate, load_instance, singular_edge_check
from .scalars import Prior, get_preset
from .state_evolution import SEParams

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_FAILED_CELL = 3


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _prior_from_obj(obj):
    if isinstance(obj, str):
        return get_preset(obj)
    return Prior.from_json(obj)


def _params_from_obj(obj):
    return SEParams(delta=float(obj["delta"]), sigma2=float(obj["sigma2"]),
                    prior=_prior_from_obj(obj["prior"]))


def _cmd_sweep(args):
    raw = _load_json(args.config)
    config = ExperimentConfig.from_json(raw)
    out_dir = args.out or config.out
    os.makedirs(out_dir, exist_ok=True)
    records = run_sweep(config, threads=args.threads, seed_base=args.seed_base)
    csv_path = os.path.join(out_dir, "sweep.csv")
    write_records_csv(records, csv_path,
                      sidecar_path=os.path.join(out_dir, "sweep.json"),
                      config=config)
    n_err = sum(1 for r in records if r.error)
    print(f"wrote {len(records)} records to {csv_path} ({n_err} failed)")
    if args.gnuplot:
        gp = os.path.join(out_dir, "sweep.gp")
        with open(gp, "w") as fh:
            fh.write('set datafile separator ","\n'
                     'set xlabel "lambda"\nset ylabel "MSE"\nset key top left\n'
                     f'plot "{csv_path}" using 1:5 skip 1 with points title "lasso", \\\n'
                     f'     "{csv_path}" using 1:7 skip 1 with lines title "predicted"\n')
        print(f"wrote {gp}")
    return _EXIT_FAILED_CELL if n_err else _EXIT_OK


def _cmd_se_curves(args):
    raw = _load_json(args.config)
    params = _params_from_obj(raw)
    alpha_grid = np.asarray(raw["alpha_grid"], dtype=float) if "alpha_grid" in raw else None
    tau2_grid = np.asarray(raw["tau2_grid"], dtype=float) if "tau2_grid" in raw else None
    f_map_alpha = float(raw.get("f_map_alpha", 2.0))
    out_dir = args.out or raw.get("out", "results")
    os.makedirs(out_dir, exist_ok=True)
    tables = dump_se_curves(params, alpha_grid=alpha_grid, tau2_grid=tau2_grid,
                            f_map_alpha=f_map_alpha)
    paths = write_curve_tables(tables, out_dir)
    dropped = sum(1 for row in tables.tau_star if row[2])
    for name, path in sorted(paths.items()):
        print(f"wrote {path}")
    if dropped:
        print(f"warning: {dropped} alpha values at or below the admissible minimum were dropped",
              file=sys.stderr)
    if args.gnuplot:
        gp = os.path.join(out_dir, "se_curves.gp")
        with open(gp, "w") as fh:
            fh.write('set datafile separator ","\nset key top left\n'
                     f'plot "{paths["f_map.csv"]}" using 1:2 skip 1 with lines title "F", x title "diagonal"\n'
                     'pause -1\n'
                     f'plot "{paths["tau_star.csv"]}" using 1:2 skip 1 with lines title "tau*"\n'
                     'pause -1\n'
                     f'plot "{paths["lambda_of_alpha.csv"]}" using 1:2 skip 1 with lines title "lambda"\n')
        print(f"wrote {gp}")
    return _EXIT_OK


def _cmd_min_lambda(args):
    raw = _load_json(args.config)
    params = _params_from_obj(raw)
    bracket = raw.get("lambda_bracket", [0.05, 2.0])
    result = minimum_lambda(params, bracket)
    print(f"lambda_opt = {result.lambda_opt:.6f}")
    print(f"mse_opt    = {result.mse_opt:.6f}")
    if not result.unimodal:
        print("warning: sampled profile is not unimodal; returned the best coarse grid point")
    return _EXIT_OK


def _cmd_check_instance(args):
    if args.file:
        inst = load_instance(args.file)
        delta = inst.delta
    else:
        raw = _load_json(args.config)
        params = _params_from_obj(raw)
        N = int(raw["N_list"][0]) if "N_list" in raw else 2000
        seeds = raw.get("seeds", [0])
        ensemble = raw.get("ensemble", "gaussian")
        inst = generate(params, N, ensemble, args.seed_base + int(seeds[0]))
        delta = params.delta
    sigma_max, sigma_min, ok = singular_edge_check(inst.A, delta)
    sqrt_inv = 1.0 / np.sqrt(delta)
    norms = np.linalg.norm(inst.A, axis=0)
    print(f"instance: N={inst.N} n={inst.n} ensemble={inst.ensemble} seed={inst.seed}")
    print(f"sigma_max = {sigma_max:.6f} (limit {sqrt_inv + 1:.6f})")
    print(f"sigma_min = {sigma_min:.6f} (limit {abs(sqrt_inv - 1):.6f})")
    print(f"column norms in [{norms.min():.6f}, {norms.max():.6f}]")
    print(f"edge check: {'pass' if ok else 'FAIL'}")
    return _EXIT_OK if ok else _EXIT_FAILED_CELL


def build_parser():
    parser = argparse.ArgumentParser(prog="amplasso",
                                     description="Sparse-recovery sweeps: message passing vs reference solver vs theory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=False, help="JSON config path")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--seed-base", type=int, default=0, help="offset added to every seed")

    p = sub.add_parser("sweep", parents=[common], help="run the full cell grid")
    p.add_argument("--gnuplot", action="store_true", help="also emit a plot script")
    p.set_defaults(func=_cmd_sweep, needs_config=True)

    p = sub.add_parser("se-curves", parents=[common], help="dump theory curves")
    p.add_argument("--gnuplot", action="store_true", help="also emit a plot script")
    p.set_defaults(func=_cmd_se_curves, needs_config=True)

    p = sub.add_parser("min-lambda", parents=[common], help="minimize predicted risk over the penalty")
    p.set_defaults(func=_cmd_min_lambda, needs_config=True)

    p = sub.add_parser("check-instance", parents=[common], help="sanity-check one instance")
    p.add_argument("--file", default=None, help="saved instance container to check instead of generating")
    p.set_defaults(func=_cmd_check_instance, needs_config=False)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.needs_config and not args.config:
        print(f"error: {args.command} requires --config", file=sys.stderr)
        return _EXIT_CONFIG
    if args.command == "check-instance" and not (args.config or args.file):
        print("error: check-instance requires --config or --file", file=sys.stderr)
        return _EXIT_CONFIG
    try:
        return args.func(args)
    except KeyError as exc:
        print(f"error: missing config key {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
