"""Benchmark harness: config schema, preset parameter rules, multi-seed
execution, CSV emission, and stepsize grid search.

A run config is a single YAML mapping (unknown keys are rejected):

    problem: game-exp1          # preset name (see problems.PROBLEM_PRESETS)
    problem_overrides: {}       # kwargs forwarded to the problem builder
    algorithms: [og, ...]       # default: the preset's standard line-up
    algo_overrides:             # optional per-algorithm parameter overrides
      vfog-saga: {eta: 0.01, s: 3.0, batch: 50}
    seeds: [0, 1, ..., 9]       # one problem instance per seed
    epochs: 200                 # oracle budget per run, in full passes
    probe_cadence: 1.0          # residual probes, in epochs
    pb_scale: 1.0               # scales prob/batch of control-variate runs
    timing: none                # none -> wallclock column written as 0
    out: results                # output directory

Per instance the harness writes ``<preset>.csv`` with the pinned header

    instance_id,seed,algorithm,k,oracle_calls,epoch,residual_sq,fb_residual_sq,wallclock_ns

(one row per probe) plus ``<preset>_mean.csv`` with seed-averaged curves.
With the default ``timing: none`` a rerun of the same config is byte-identical
and parallel workers produce the same files as a serial pass.
"""

from __future__ import annotations

import csv
import functools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import baselines, estimators, problems
from .core import ConfigError, FiniteSumProblem, RngStream
from .solver import Budget, RunTrace, ScheduleParams, VfogSolver, run

CSV_HEADER = ["instance_id", "seed", "algorithm", "k", "oracle_calls", "epoch",
              "residual_sq", "fb_residual_sq", "wallclock_ns"]

ALGORITHMS = ["vfog-exact", "vfog-sgd", "vfog-svrg", "vfog-saga", "vfog-sarah",
              "og", "vreg", "vrfrbs"]

# Line-ups used by the experiment presets (seven stochastic-vs-baseline curves
# for the game; the saddle MDP drops the plain mini-batch variant).
DEFAULT_LINEUP = {
    "game": ["og", "vrfrbs", "vreg", "vfog-sgd", "vfog-svrg", "vfog-saga", "vfog-sarah"],
    "mdp": ["og", "vrfrbs", "vreg", "vfog-svrg", "vfog-saga", "vfog-sarah"],
    "linear": ["og", "vfog-exact"],
}

LEGEND_NAMES = {
    "og": "OG", "vrfrbs": "VrFRBS", "vreg": "VrEG", "vfog-sgd": "VFOG-Sgd",
    "vfog-svrg": "VFOG-Svrg", "vfog-saga": "VFOG-Saga", "vfog-sarah": "VFOG-Sarah",
    "vfog-exact": "VFOG-Exact",
}


# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    problem: str
    seeds: list[int]
    epochs: float = 200.0
    probe_cadence: float = 1.0
    algorithms: list[str] = field(default_factory=list)
    problem_overrides: dict = field(default_factory=dict)
    algo_overrides: dict = field(default_factory=dict)
    pb_scale: float = 1.0
    timing: str = "none"
    out: str = "results"
    gridsearch: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return self.problem.split("-")[0]


_TOP_KEYS = {"problem", "problem_overrides", "algorithms", "algo_overrides",
             "seeds", "epochs", "probe_cadence", "pb_scale", "timing", "out",
             "gridsearch"}
_ALGO_KEYS = {"eta", "s", "rho_n", "rho_c", "prob", "batch"}
_GRID_KEYS = {"interval", "points", "pilot_epochs", "pilot_seeds"}


def parse_config(data: dict) -> RunConfig:
    """Validate a raw config mapping; unknown keys anywhere are rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "problem" not in data:
        raise ConfigError("config needs a 'problem' preset name")
    problem = data["problem"]
    if problem not in problems.PROBLEM_PRESETS:
        raise ConfigError(f"unknown problem preset {problem!r}")
    seeds = data.get("seeds", list(range(10)))
    if not isinstance(seeds, list) or not seeds or not all(
            isinstance(s, int) for s in seeds):
        raise ConfigError("'seeds' must be a non-empty list of integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("'seeds' must not repeat")
    cfg = RunConfig(
        problem=problem,
        seeds=list(seeds),
        epochs=float(data.get("epochs", 200)),
        probe_cadence=float(data.get("probe_cadence", 1.0)),
        algorithms=list(data.get("algorithms", [])),
        problem_overrides=dict(data.get("problem_overrides", {})),
        algo_overrides={k: dict(v) for k, v in data.get("algo_overrides", {}).items()},
        pb_scale=float(data.get("pb_scale", 1.0)),
        timing=str(data.get("timing", "none")),
        out=str(data.get("out", "results")),
        gridsearch=dict(data.get("gridsearch", {})),
    )
    if cfg.epochs < 0:
        raise ConfigError("'epochs' must be nonnegative")
    if cfg.probe_cadence <= 0:
        raise ConfigError("'probe_cadence' must be positive")
    if cfg.timing not in ("none", "wallclock"):
        raise ConfigError("'timing' must be 'none' or 'wallclock'")
    if not cfg.algorithms:
        cfg.algorithms = list(DEFAULT_LINEUP.get(cfg.family, ["vfog-exact"]))
    for a in cfg.algorithms:
        if a not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {a!r}; available: {ALGORITHMS}")
    for a, ov in cfg.algo_overrides.items():
        if a not in ALGORITHMS:
            raise ConfigError(f"algo_overrides for unknown algorithm {a!r}")
        bad = set(ov) - _ALGO_KEYS
        if bad:
            raise ConfigError(f"unknown override keys for {a!r}: {sorted(bad)}")
    bad = set(cfg.gridsearch) - _GRID_KEYS
    if bad:
        raise ConfigError(f"unknown gridsearch keys: {sorted(bad)}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(yaml.safe_load(fh))


# ---------------------------------------------------------------------------
# Stepper construction per preset family
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=4)
def _cached_problem(preset: str, seed: int, overrides: tuple) -> FiniteSumProblem:
    return problems.build_preset(preset, seed, **dict(overrides))


def build_problem(cfg: RunConfig, seed: int) -> FiniteSumProblem:
    return _cached_problem(cfg.problem, seed,
                           tuple(sorted(cfg.problem_overrides.items())))


def _default_params(cfg: RunConfig, problem: FiniteSumProblem, algo: str) -> dict:
    """Stepsize / probability / batch rules reproducing the experiment setups."""
    n = problem.n
    L = problem.meta.L
    fam = cfg.family
    scale = cfg.pb_scale
    p_cv = estimators.practical_prob_svrg(n) * scale
    b_cv = max(1, estimators.floor_stable(estimators.practical_batch_cv(n) * scale))
    p_sar = estimators.practical_prob_sarah(n) * scale
    b_sar = max(1, estimators.floor_stable(estimators.practical_batch_sarah(n) * scale))
    # stepsize attenuation found by grid search for the MDP saddle family
    att_fast, att_slow = (1e-3, 1e-2) if fam == "mdp" else (1.0, 1.0)
    if algo == "og":
        return {"eta": att_slow / L}
    if algo == "vreg":
        return {"eta": att_fast * baselines.vreg_stepsize(p_cv, L),
                "prob": p_cv, "batch": b_cv}
    if algo == "vrfrbs":
        return {"eta": att_slow * baselines.vrfrbs_stepsize(p_cv, L),
                "prob": p_cv, "batch": b_cv}
    eta_vfog = att_fast / L if fam == "mdp" else 1.0 / (8.0 * L)
    base = {"eta": eta_vfog, "s": 3.0, "rho_n": 0.0, "rho_c": 0.0}
    if algo == "vfog-exact":
        return base
    if algo == "vfog-sgd":
        return {**base, "batch": "epoch-cube"}
    if algo == "vfog-svrg":
        return {**base, "prob": p_cv, "batch": b_cv}
    if algo == "vfog-saga":
        return {**base, "batch": b_cv}
    if algo == "vfog-sarah":
        return {**base, "prob": p_sar, "batch": b_sar}
    raise ConfigError(f"unknown algorithm {algo!r}")


def make_stepper(cfg: RunConfig, problem: FiniteSumProblem, algo: str, seed: int,
                 eta_override: float | None = None):
    """Instantiate the stepper for one (algorithm, seed) cell."""
    params = _default_params(cfg, problem, algo)
    params.update(cfg.algo_overrides.get(algo, {}))
    if eta_override is not None:
        params["eta"] = eta_override
    x0 = problem.extra["x0"]
    rng = RngStream(seed, cfg.problem, algo)
    if algo == "og":
        return baselines.PegSolver(problem, x0, params["eta"])
    if algo == "vreg":
        return baselines.VrEgSolver(problem, x0, params["eta"], params["prob"],
                                    params["batch"], rng)
    if algo == "vrfrbs":
        return baselines.VrFrbsSolver(problem, x0, params["eta"], params["prob"],
                                      params["batch"], rng)
    sched = ScheduleParams(s=params["s"], eta=params["eta"],
                           rho_n=params["rho_n"], rho_c=params["rho_c"])
    if algo == "vfog-exact":
        est = estimators.ExactEstimator()
    elif algo == "vfog-sgd":
        batch = params["batch"]
        rule = estimators.sgd_epoch_batch_rule(problem.n) if batch == "epoch-cube" else batch
        est = estimators.MiniBatchEstimator(rule, sigma2=problem.meta.sigma2, s=params["s"])
    elif algo == "vfog-svrg":
        est = estimators.LSvrgEstimator(params["prob"], params["batch"])
    elif algo == "vfog-saga":
        est = estimators.SagaEstimator(params["batch"], update_at="current")
    elif algo == "vfog-sarah":
        est = estimators.LSarahEstimator(params["prob"], params["batch"])
    else:
        raise ConfigError(f"unknown algorithm {algo!r}")
    return VfogSolver(problem, x0, sched, est, rng)


# ---------------------------------------------------------------------------
# Cell execution and CSV emission
# ---------------------------------------------------------------------------


def run_cell(cfg: RunConfig, algo: str, seed: int,
             eta_override: float | None = None,
             epochs: float | None = None) -> RunTrace:
    problem = build_problem(cfg, seed)
    stepper = make_stepper(cfg, problem, algo, seed, eta_override)
    budget = Budget(max_epochs=cfg.epochs if epochs is None else epochs)
    return run(problem, stepper, budget, probe_cadence=cfg.probe_cadence)


def _cell_worker(args):
    cfg_dict, algo, seed = args
    cfg = parse_config(cfg_dict)
    trace = run_cell(cfg, algo, seed)
    rows = [[cfg.problem, seed, algo, r.k, r.oracle_calls, r.epoch,
             r.residual_sq, r.fb_residual_sq,
             r.wallclock_ns if cfg.timing == "wallclock" else 0]
            for r in trace.records]
    return algo, seed, rows, trace.failed, trace.failure_reason


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_csv(path: Path, rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def aggregate_rows(rows: list[list], cadence: float = 1.0) -> list[list]:
    """Mean over seeds per (algorithm, epoch bucket).

    Buckets are multiples of the probe cadence; a step that jumps across two
    thresholds leaves that seed out of the skipped bucket, so the mean runs
    over the seeds that probed it.
    """
    by_algo_bucket: dict[tuple, list[list]] = {}
    for row in rows:
        bucket = math.floor(row[5] / cadence + 1e-9)
        by_algo_bucket.setdefault((row[2], bucket), []).append(row)
    out = []
    for (algo, bucket) in sorted(by_algo_bucket):
        grp = np.array([[r[3], r[4], r[5], r[6], r[7], r[8]] for r in
                        by_algo_bucket[(algo, bucket)]], dtype=float)
        mean = grp.mean(axis=0)
        out.append([by_algo_bucket[(algo, bucket)][0][0], "mean", algo,
                    mean[0], mean[1], mean[2], mean[3], mean[4], mean[5]])
    return out


@dataclass
class BenchResult:
    csv_path: Path
    mean_csv_path: Path
    failures: list[str]
    summary: dict


def cli_run(cfg: RunConfig, out_dir: str | Path | None = None,
            jobs: int = 1) -> BenchResult:
    """Execute every (algorithm x seed) cell and write the instance CSVs.

    Cells are independent, so they run on a process pool when ``jobs > 1``;
    results are ordered by (algorithm, seed) before writing, so parallel and
    serial passes emit identical files.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    cells = [(algo, seed) for algo in cfg.algorithms for seed in cfg.seeds]
    cfg_dict = _to_dict(cfg)
    results = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for algo, seed, rows, failed, reason in pool.map(
                    _cell_worker, [(cfg_dict, a, s) for a, s in cells]):
                results[(algo, seed)] = (rows, failed, reason)
    else:
        for a, s in cells:
            algo, seed, rows, failed, reason = _cell_worker((cfg_dict, a, s))
            results[(algo, seed)] = (rows, failed, reason)

    all_rows, failures = [], []
    for algo in cfg.algorithms:
        for seed in cfg.seeds:
            rows, failed, reason = results[(algo, seed)]
            all_rows.extend(rows)
            if failed:
                failures.append(f"{algo} seed {seed}: {reason}")
    csv_path = out / f"{cfg.problem}.csv"
    write_csv(csv_path, all_rows)
    mean_path = out / f"{cfg.problem}_mean.csv"
    write_csv(mean_path, aggregate_rows(all_rows, cfg.probe_cadence))

    summary = {}
    for algo in cfg.algorithms:
        finals = [results[(algo, seed)][0][-1][6] for seed in cfg.seeds
                  if results[(algo, seed)][0]]
        summary[algo] = float(np.mean(finals)) if finals else math.nan
    return BenchResult(csv_path=csv_path, mean_csv_path=mean_path,
                       failures=failures, summary=summary)


def _to_dict(cfg: RunConfig) -> dict:
    return {
        "problem": cfg.problem, "problem_overrides": cfg.problem_overrides,
        "algorithms": cfg.algorithms, "algo_overrides": cfg.algo_overrides,
        "seeds": cfg.seeds, "epochs": cfg.epochs,
        "probe_cadence": cfg.probe_cadence, "pb_scale": cfg.pb_scale,
        "timing": cfg.timing, "out": cfg.out, "gridsearch": cfg.gridsearch,
    }


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


@dataclass
class GridResult:
    best: dict
    table: dict


def cli_gridsearch(cfg: RunConfig, jobs: int = 1) -> GridResult:
    """Pick the stepsize minimizing the final pilot residual per algorithm.

    The grid is log-spaced (boundary inclusive) over ``interval`` multipliers
    of ``1 / L_ref``, where ``L_ref`` is the problem's stepsize-scaling norm.
    Diverged grid points are skipped; if an algorithm diverges everywhere the
    search fails loudly.
    """
    gs = cfg.gridsearch
    lo, hi = gs.get("interval", [1e-5, 10.0])
    points = int(gs.get("points", 13))
    pilot_epochs = float(gs.get("pilot_epochs", 10.0))
    pilot_seeds = list(gs.get("pilot_seeds", [cfg.seeds[0]]))
    if points < 1 or lo <= 0 or hi <= lo and points > 1:
        raise ConfigError("invalid gridsearch interval/points")
    problem0 = build_problem(cfg, pilot_seeds[0])
    L_ref = problem0.extra.get("L_B", problem0.meta.L)
    grid = (np.logspace(math.log10(lo), math.log10(hi), points) / L_ref
            if points > 1 else np.array([lo / L_ref]))

    table, best = {}, {}
    for algo in cfg.algorithms:
        scores = []
        for eta in grid:
            finals = []
            for seed in pilot_seeds:
                try:
                    trace = run_cell(cfg, algo, seed, eta_override=float(eta),
                                     epochs=pilot_epochs)
                except ConfigError:
                    trace = None
                if trace is None or trace.failed or not trace.records:
                    finals.append(math.inf)
                else:
                    finals.append(trace.records[-1].residual_sq)
            scores.append(float(np.mean(finals)))
        table[algo] = list(zip(grid.tolist(), scores))
        finite = [(sc, eta) for eta, sc in table[algo] if math.isfinite(sc)]
        if not finite:
            raise ConfigError(
                f"grid search failed: every stepsize diverged for {algo!r} "
                f"(grid = {[f'{g:.3g}' for g in grid.tolist()]})")
        best[algo] = min(finite)[1]
    return GridResult(best=best, table=table)
