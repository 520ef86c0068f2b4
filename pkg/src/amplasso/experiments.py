"""Batch sweeps over (lambda, N, seed) cells and curve dumps for plotting.

A cell is one random instance: solve it with the reference solver, run the
message-passing iteration on it, and record both empirical risks next to
the theoretical prediction. Cells are independent, so the sweep is a plain
worker pool; the prediction is computed once per lambda and shared.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from ._version import __version__
from .amp import run_amp
from .instances import ENSEMBLES, empirical_observable, generate
from .lasso import solve_lasso
from .scalars import Prior, get_preset
from .state_evolution import SEParams, alpha_min, fixed_point, predicted_risk

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a sweep, JSON round-trippable."""

    delta: float
    sigma2: float
    prior: Prior
    lambda_grid: tuple
    N_list: tuple
    seeds: tuple
    ensemble: str = "gaussian"
    amp_t_max: int = 200
    amp_stop_tol: float = 1e-8
    amp_policy: str = "residual"
    lasso_tol: float = 1e-8
    lasso_max_iter: int = 50_000
    out: str = "results"

    def validate(self):
        if not (0 < self.delta):
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if len(self.lambda_grid) == 0:
            raise ValueError("lambda_grid is empty")
        if any(lam <= 0 for lam in self.lambda_grid):
            raise ValueError("lambda values must be positive")
        if len(self.N_list) == 0:
            raise ValueError("N_list is empty")
        if any(N < 2 for N in self.N_list):
            raise ValueError("N values must be at least 2")
        if len(self.seeds) == 0:
            raise ValueError("seeds is empty")
        if self.ensemble not in ENSEMBLES:
            raise ValueError(f"unknown ensemble {self.ensemble!r}")
        if self.amp_policy not in ("se", "residual"):
            raise ValueError(f"unknown amp_policy {self.amp_policy!r}")

    @property
    def se_params(self):
        return SEParams(delta=self.delta, sigma2=self.sigma2, prior=self.prior)

    def to_json(self):
        return {
            "delta": self.delta,
            "sigma2": self.sigma2,
            "prior": self.prior.to_json(),
            "lambda_grid": list(self.lambda_grid),
            "N_list": list(self.N_list),
            "seeds": list(self.seeds),
            "ensemble": self.ensemble,
            "amp_t_max": self.amp_t_max,
            "amp_stop_tol": self.amp_stop_tol,
            "amp_policy": self.amp_policy,
            "lasso_tol": self.lasso_tol,
            "lasso_max_iter": self.lasso_max_iter,
            "out": self.out,
        }

    # keys other subcommands read from the same config file
    AUX_KEYS = frozenset({"alpha_grid", "tau2_grid", "f_map_alpha", "lambda_bracket"})

    @classmethod
    def from_json(cls, obj):
        prior = obj["prior"]
        if isinstance(prior, str):
            prior = get_preset(prior)
        else:
            prior = Prior.from_json(prior)
        kwargs = {k: v for k, v in obj.items() if k not in cls.AUX_KEYS}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(kwargs) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        kwargs["prior"] = prior
        kwargs["lambda_grid"] = tuple(float(v) for v in obj["lambda_grid"])
        kwargs["N_list"] = tuple(int(v) for v in obj["N_list"])
        kwargs["seeds"] = tuple(int(v) for v in obj["seeds"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass
class ExperimentRecord:
    lam: float
    N: int
    seed: int
    ensemble: str
    mse_lasso: float
    mse_amp: float
    mse_predicted: float
    amp_lasso_gap: float
    l1_lasso: float
    l1_predicted: float
    kkt_residual: float
    wall_time_generate: float
    wall_time_lasso: float
    wall_time_amp: float
    error: str = ""


RECORD_COLUMNS = ("lambda", "N", "seed", "ensemble", "mse_lasso", "mse_amp",
                  "mse_predicted", "amp_lasso_gap", "l1_lasso", "l1_predicted",
                  "kkt_residual", "wall_time_generate", "wall_time_lasso",
                  "wall_time_amp", "error")


def run_cell(config, lam, N, seed, prediction, collect=None):
    """One (lambda, N, seed) cell. `prediction` is the shared per-lambda bundle.

    `collect`, if given, is a dict that receives the heavyweight intermediates
    (instance, lasso solution, amp state and diagnostics) for callers that
    want more than the record.
    """
    t0 = time.perf_counter()
    inst = generate(config.se_params, N, config.ensemble, seed)
    t1 = time.perf_counter()
    sol = solve_lasso(inst.A, inst.y, lam, tol=config.lasso_tol,
                      max_iter=config.lasso_max_iter)
    t2 = time.perf_counter()
    state, diag = run_amp(inst, config.se_params, lam,
                          t_max=config.amp_t_max, stop_tol=config.amp_stop_tol,
                          threshold_policy=config.amp_policy)
    t3 = time.perf_counter()
    if collect is not None:
        collect.update(instance=inst, lasso=sol, amp_state=state, amp_diagnostics=diag)
    return ExperimentRecord(
        lam=lam, N=N, seed=seed, ensemble=config.ensemble,
        mse_lasso=empirical_observable(sol.x_hat, inst.x0, "squared_error"),
        mse_amp=empirical_observable(state.x, inst.x0, "squared_error"),
        mse_predicted=prediction.mse_predicted,
        amp_lasso_gap=float(np.mean((state.x - sol.x_hat) ** 2)),
        l1_lasso=empirical_observable(sol.x_hat, inst.x0, "l1"),
        l1_predicted=prediction.l1_predicted,
        kkt_residual=sol.kkt_residual,
        wall_time_generate=t1 - t0,
        wall_time_lasso=t2 - t1,
        wall_time_amp=t3 - t2,
    )


def run_sweep(config, threads=1, seed_base=0):
    """All cells of the config; failures become error-tagged records.

    Deterministic given (config, seed_base): the result is sorted by
    (lambda, N, seed) regardless of completion order.
    """
    config.validate()
    params = config.se_params
    predictions = {lam: predicted_risk(params, lam) for lam in config.lambda_grid}
    cells = [(lam, N, seed_base + seed)
             for lam in config.lambda_grid
             for N in config.N_list
             for seed in config.seeds]

    def work(cell):
        lam, N, seed = cell
        try:
            return run_cell(config, lam, N, seed, predictions[lam])
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            return ExperimentRecord(
                lam=lam, N=N, seed=seed, ensemble=config.ensemble,
                mse_lasso=float("nan"), mse_amp=float("nan"),
                mse_predicted=predictions[lam].mse_predicted,
                amp_lasso_gap=float("nan"), l1_lasso=float("nan"),
                l1_predicted=predictions[lam].l1_predicted,
                kkt_residual=float("nan"), wall_time_generate=float("nan"),
                wall_time_lasso=float("nan"), wall_time_amp=float("nan"),
                error=f"{type(exc).__name__}: {exc}")

    if threads <= 1:
        records = [work(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(work, cells))
    records.sort(key=lambda r: (r.lam, r.N, r.seed))
    return records


def write_records_csv(records, csv_path, sidecar_path=None, config=None):
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([r.lam, r.N, r.seed, r.ensemble, r.mse_lasso,
                             r.mse_amp, r.mse_predicted, r.amp_lasso_gap,
                             r.l1_lasso, r.l1_predicted, r.kkt_residual,
                             r.wall_time_generate, r.wall_time_lasso,
                             r.wall_time_amp, r.error])
    if sidecar_path is not None:
        sidecar = {"version": __version__,
                   "config": config.to_json() if config is not None else None,
                   "n_records": len(records),
                   "n_errors": sum(1 for r in records if r.error)}
        with open(sidecar_path, "w") as fh:
            json.dump(sidecar, fh, indent=2)
            fh.write("\n")


@dataclass
class CurveTables:
    """Plot-ready tables: the scalar map, its fixed point, and the penalty map.

    f_map rows: (tau2, f_value). tau_star rows: (alpha, tau_star, warning).
    lambda_of_alpha rows: (alpha, lambda, warning). Rows whose alpha is at or
    below the admissible minimum carry nan values and a warning message.
    """

    f_map: list
    tau_star: list
    lambda_of_alpha: list


def dump_se_curves(params, alpha_grid=None, tau2_grid=None, f_map_alpha=2.0):
    """Tables behind the three classic diagnostic plots.

    The first table traces tau2 -> F(tau2, alpha*tau) at fixed alpha
    (default 2.0); the second and third trace the fixed point tau*(alpha)
    and the calibrated penalty lambda(alpha) over alpha_grid.
    """
    from .state_evolution import calibrate_lambda, se_map

    if alpha_grid is None:
        lo = alpha_min(params.delta)
        alpha_grid = np.linspace(lo + 0.05, 4.0, 80)
    if tau2_grid is None:
        tau2_grid = np.linspace(1e-4, 2.0 * params.tau2_init, 200)

    f_rows = [(float(t2), se_map(params, float(t2), f_map_alpha * math.sqrt(float(t2))))
              for t2 in tau2_grid]

    a_min = alpha_min(params.delta)
    tau_rows = []
    lam_rows = []
    for a in alpha_grid:
        a = float(a)
        if a <= a_min:
            warn = f"alpha <= alpha_min ({a_min:.6g}), dropped"
            tau_rows.append((a, float("nan"), warn))
            lam_rows.append((a, float("nan"), warn))
            continue
        tau2_star = fixed_point(params, a).tau2_star
        tau_rows.append((a, math.sqrt(tau2_star), ""))
        lam_rows.append((a, calibrate_lambda(params, a), ""))
    return CurveTables(f_map=f_rows, tau_star=tau_rows, lambda_of_alpha=lam_rows)


def write_curve_tables(tables, out_dir):
    import os

    paths = {}
    spec = [("f_map.csv", ("tau2", "f_value"), tables.f_map),
            ("tau_star.csv", ("alpha", "tau_star", "warning"), tables.tau_star),
            ("lambda_of_alpha.csv", ("alpha", "lambda", "warning"), tables.lambda_of_alpha)]
    for fname, header, rows in spec:
        path = os.path.join(out_dir, fname)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        paths[fname] = path
    return paths


@dataclass
class MinimumLambdaResult:
    lambda_opt: float
    mse_opt: float
    unimodal: bool


def minimum_lambda(params, lambda_bracket, rel_tol=1e-4, coarse_points=17):
    """Penalty minimizing the predicted risk inside the bracket.

    Samples a coarse grid first; if the profile is not unimodal on it, the
    best grid point is returned with unimodal=False instead of trusting a
    golden-section search that assumes unimodality.
    """
    lo, hi = float(lambda_bracket[0]), float(lambda_bracket[1])
    if not (0 < lo <= hi):
        raise ValueError(f"bracket must satisfy 0 < lo <= hi, got ({lo}, {hi})")

    def risk(lam):
        return predicted_risk(params, lam).mse_predicted

    if hi == lo:
        return MinimumLambdaResult(lo, risk(lo), True)

    grid = np.linspace(lo, hi, coarse_points)
    vals = [risk(float(l)) for l in grid]
    k = int(np.argmin(vals))
    diffs = np.sign(np.diff(vals))
    changes = int(np.count_nonzero(np.diff(diffs[diffs != 0])))
    if changes > 1:
        return MinimumLambdaResult(float(grid[k]), vals[k], False)

    a = float(grid[max(k - 1, 0)])
    b = float(grid[min(k + 1, coarse_points - 1)])
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = risk(c), risk(d)
    while (b - a) > rel_tol * max(1.0, abs(b)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = risk(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = risk(d)
    lam = 0.5 * (a + b)
    return MinimumLambdaResult(lam, risk(lam), True)
