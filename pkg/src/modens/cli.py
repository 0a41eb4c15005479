"""Command-line drivers: experiment configuration, seeded replication, and
machine-readable result emission.

Commands: toy, train-eval, compare, gamma-sweep, bo, calibrate. Result
records are JSON lines; tables are comma-delimited text; every run writes
a ``manifest.json`` capturing the resolved configuration so outputs can be
reproduced byte-for-byte (single-threaded mode is the reference path).
All numbers are emitted at 9 significant digits.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bayesopt import BOConfig, run_bo
from .data import (DatasetSpec, SplitSpec, dataset_from_manifest, fit_scaling,
                   prepare_splits, read_manifest, scale_dataset, synth_1d)
from .ensemble import ensemble_predict
from .errors import DivergenceError, ParseError, SplitError
from .evaluate import (DEFAULT_LEVELS, calibration_curve, dataset_metrics,
                       fisher_combine, normal_quantile, paired_t_test_one_tailed)
from .network import forward_batch
from .rng import REPLICATE, derive_seed
from .training import (MOD_FAMILY, STRATEGIES, TrainConfig, select_gamma,
                       train_ensemble)

REGRESSION_GAMMA_GRID = (0.01, 0.1, 1.0, 5.0, 10.0, 20.0, 50.0)
BO_GAMMA_GRID = (0.0, 5.0, 10.0, 20.0, 40.0, 80.0)
_GAMMA_STRATEGIES = MOD_FAMILY + ("neg_corr",)


def fmt9(x: float) -> str:
    return "%.9g" % float(x)


def round9(x):
    if isinstance(x, float):
        return float(fmt9(x)) if np.isfinite(x) else None
    return x


def cli_strategy(name: str) -> str:
    key = name.replace("-", "_")
    if key not in STRATEGIES:
        raise argparse.ArgumentTypeError(
            f"unknown strategy {name!r}; choose from "
            + ", ".join(s.replace("_", "-") for s in STRATEGIES))
    return key


def parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from err


def write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    tmp.replace(path)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt9(c) if isinstance(c, float) else str(c) for c in row))
    write_atomic(path, "\n".join(lines) + "\n")


def write_jsonl(path: Path, records: list[dict]) -> None:
    lines = [json.dumps({k: round9(v) if isinstance(v, float) else v
                         for k, v in rec.items()}, sort_keys=True)
             for rec in records]
    write_atomic(path, "\n".join(lines) + "\n")


def write_manifest(out: Path, command: str, resolved: dict, datasets: list[str],
                   started: float) -> None:
    manifest = {
        "command": command,
        "resolved_config": {k: round9(v) if isinstance(v, float) else v
                            for k, v in sorted(resolved.items())},
        "master_seed": resolved.get("seed"),
        "datasets": datasets,
        "artifact_version": __version__,
        "duration_s": round(time.monotonic() - started, 3),
    }
    write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# Argument plumbing. Flags default to None so a config file can fill them;
# precedence is command line > config file > built-in default.

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--strategy", action="append", type=cli_strategy, default=None,
                   help="strategy name (repeatable)")
    p.add_argument("--gamma-grid", type=parse_float_list, default=None)
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None)


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--l2", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--members", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--alpha-adv", type=float, default=None)
    p.add_argument("--k", type=int, default=None)


_TRAIN_DEFAULTS = {
    "seed": 0, "replicates": 10, "threads": 1, "lr": 0.01, "l2": 0.01,
    "batch_size": 32, "epochs": 100, "patience": 10, "members": 4, "hidden": 50,
    "optimizer": "adam", "delta": 0.05, "alpha_adv": 0.01, "k": 5,
}

_DEFAULTS = {
    "toy": {**_TRAIN_DEFAULTS, "strategy": ["deep_ens", "mod"], "gamma": 3.0,
            "n_per_region": 50, "noise_std": None, "grid_points": 256,
            "val_fraction": 0.25, "epochs": 300, "patience": 20, "l2": 1e-4},
    "train-eval": {**_TRAIN_DEFAULTS, "strategy": ["deep_ens", "mod"],
                   "gamma_grid": list(REGRESSION_GAMMA_GRID)},
    "compare": {"metric": "nll_ood"},
    "gamma-sweep": {**_TRAIN_DEFAULTS, "strategy": ["mod"], "replicates": 5,
                    "gamma_grid": list(REGRESSION_GAMMA_GRID)},
    "bo": {**_TRAIN_DEFAULTS, "strategy": ["deep_ens", "mod"], "replicates": 5,
           "gamma_grid": list(BO_GAMMA_GRID), "rounds": 30, "batch": 10,
           "beta": 1.0, "initial": 200, "bottom_fraction": 0.9,
           "val_fraction": 0.1, "epochs": 30, "patience": 10},
    "calibrate": {**_TRAIN_DEFAULTS, "strategy": ["deep_ens", "mod"],
                  "gamma_grid": list(REGRESSION_GAMMA_GRID), "replicates": 1},
}


def resolve_config(args: argparse.Namespace, command: str) -> dict:
    """Merge CLI flags, the optional config file, and built-in defaults."""
    resolved = dict(_DEFAULTS[command])
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise ParseError(f"cannot read config {args.config}: {err}") from err
        if "resolved_config" in loaded:  # accept a manifest.json as config
            loaded = loaded["resolved_config"]
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key in ("config", "out"):
                continue
            if key == "strategy" and isinstance(value, list):
                value = [cli_strategy(str(v)) for v in value]
            resolved[key] = value
    for key, value in vars(args).items():
        if key in ("config", "func") or value is None:
            continue
        resolved[key] = value
    if resolved.get("out") is None:
        raise ParseError("an output directory is required (--out)")
    for key, value in resolved.items():
        if isinstance(value, Path):
            resolved[key] = str(value)
        elif isinstance(value, (list, tuple)):
            resolved[key] = [str(v) if isinstance(v, Path) else v for v in value]
    return resolved


def train_config_from(resolved: dict, strategy: str, seed: int,
                      gamma: float = 0.0) -> TrainConfig:
    return TrainConfig(
        strategy=strategy, gamma=gamma, lr=resolved["lr"], l2=resolved["l2"],
        batch_size=resolved["batch_size"], max_epochs=resolved["epochs"],
        patience=resolved["patience"], k=resolved["k"], delta=resolved["delta"],
        alpha_adv=resolved["alpha_adv"], n_members=resolved["members"],
        seed=seed, optimizer=resolved["optimizer"], hidden_width=resolved["hidden"])


def _train_with_selection(splits, resolved: dict, strategy: str, seed: int):
    """Train a strategy, selecting gamma on validation NLL when it has one."""
    base = train_config_from(resolved, strategy, seed)
    grid = [float(g) for g in resolved["gamma_grid"]]
    if strategy in _GAMMA_STRATEGIES and len(grid) > 1:
        sel = select_gamma(splits, base, grid)
        return sel.ensemble, sel.best_gamma
    if strategy in _GAMMA_STRATEGIES:
        gamma = grid[0] if grid else 0.0
        ensemble, _ = train_ensemble(splits, replace(base, gamma=gamma))
        return ensemble, gamma
    ensemble, _ = train_ensemble(splits, base)
    return ensemble, 0.0


def _load_dataset_spec(resolved: dict, key: str = "dataset") -> DatasetSpec:
    path = resolved.get(key)
    if path is None:
        raise ParseError(f"a dataset manifest is required (--{key})")
    manifest = read_manifest(path)
    return dataset_from_manifest(manifest, base_dir=Path(path).parent)


def _split_spec(spec: DatasetSpec, seed: int) -> SplitSpec:
    if spec.train_count is not None:
        return SplitSpec(train_count=spec.train_count, val_count=spec.val_count,
                         seed=seed)
    return SplitSpec(train_fraction=spec.train_fraction or 0.4,
                     val_fraction=spec.val_fraction or 0.1, seed=seed)


def _run_units(units, threads: int):
    if threads <= 1:
        return [fn() for fn in units]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda fn: fn(), units))


# ---------------------------------------------------------------------------
# Commands

def cmd_toy(args: argparse.Namespace) -> int:
    started = time.monotonic()
    resolved = resolve_config(args, "toy")
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    seed = int(resolved["seed"])
    noise = resolved["noise_std"]
    ds = synth_1d(int(resolved["n_per_region"]), seed=seed,
                  **({"noise_std": float(noise)} if noise is not None else {}))
    n = len(ds)
    n_val = max(1, int(resolved["val_fraction"] * n))
    spec = SplitSpec(train_count=n - n_val - 1, val_count=n_val, seed=seed)
    # wasteful single-row test split keeps the standard pipeline applicable
    train, val, _, _ = prepare_splits(ds, None, spec)
    grid = np.linspace(0.0, 1.0, int(resolved["grid_points"]))[:, None]
    z95 = normal_quantile(0.975)
    for strategy in resolved["strategy"]:
        gamma = float(resolved["gamma"]) if strategy in _GAMMA_STRATEGIES else 0.0
        config = train_config_from(resolved, strategy, seed, gamma=gamma)
        ensemble, _ = train_ensemble((train, val), config)
        member_mus = []
        for member in ensemble.members:
            mu, _, _ = forward_batch(member, grid)
            member_mus.append(mu)
        mu_bar, s2_eps, s2_mod, s2_bar = ensemble_predict(ensemble, grid)
        half = z95 * np.sqrt(s2_bar)
        header = (["x"] + [f"mu_{i}" for i in range(len(member_mus))]
                  + ["mu_bar", "sigma2_eps", "sigma2_mod", "lower95", "upper95"])
        rows = []
        for i in range(grid.shape[0]):
            rows.append([float(grid[i, 0])] + [float(m[i]) for m in member_mus]
                        + [float(mu_bar[i]), float(s2_eps[i]), float(s2_mod[i]),
                           float(mu_bar[i] - half[i]), float(mu_bar[i] + half[i])])
        write_csv(out / f"toy_{strategy.replace('_', '-')}.csv", header, rows)
    write_manifest(out, "toy", resolved, ["synth1d"], started)
    return 0


def _train_eval_unit(spec: DatasetSpec, resolved: dict, rep: int, master_seed: int):
    rep_seed = derive_seed(master_seed, REPLICATE, rep)
    splits = prepare_splits(spec.dataset, spec.ood_rule, _split_spec(spec, rep_seed))
    train, val, test, ood = splits
    records = []
    for strategy in resolved["strategy"]:
        ensemble, gamma = _train_with_selection((train, val), resolved, strategy,
                                                rep_seed)
        nll_in, rmse_in = dataset_metrics(ensemble, test)
        nll_ood, rmse_ood = (dataset_metrics(ensemble, ood) if ood is not None
                             else (None, None))
        records.append({"strategy": strategy.replace("_", "-"), "gamma": gamma,
                        "seed": rep_seed, "nll_in": nll_in, "nll_ood": nll_ood,
                        "rmse_in": rmse_in, "rmse_ood": rmse_ood})
    return records


def cmd_train_eval(args: argparse.Namespace) -> int:
    started = time.monotonic()
    resolved = resolve_config(args, "train-eval")
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    spec = _load_dataset_spec(resolved)
    master_seed = int(resolved["seed"])
    reps = int(resolved["replicates"])
    units = [lambda rep=rep: _train_eval_unit(spec, resolved, rep, master_seed)
             for rep in range(reps)]
    failures: list[str] = []
    records: list[dict] = []
    for rep, result in enumerate(_run_units([_guard(u) for u in units],
                                            int(resolved["threads"]))):
        if isinstance(result, Exception):
            failures.append(f"replicate {rep}: {result}")
        else:
            records.extend(result)
    write_jsonl(out / "results.jsonl", records)
    aggregates = []
    for strategy in resolved["strategy"]:
        name = strategy.replace("_", "-")
        rows = [r for r in records if r["strategy"] == name]
        agg = {"strategy": name, "replicates": len(rows)}
        for metric in ("nll_in", "nll_ood", "rmse_in", "rmse_ood"):
            vals = [r[metric] for r in rows if r[metric] is not None]
            agg[f"mean_{metric}"] = float(np.mean(vals)) if vals else None
            agg[f"sd_{metric}"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        aggregates.append(agg)
    write_jsonl(out / "aggregates.jsonl", aggregates)
    write_manifest(out, "train-eval", resolved, [spec.dataset.name], started)
    if failures:
        print("failed units:\n  " + "\n  ".join(failures), file=sys.stderr)
        return 1
    return 0


def _guard(fn):
    def wrapped():
        try:
            return fn()
        except (DivergenceError, SplitError, ParseError, ValueError) as err:
            return err
    return wrapped


def cmd_compare(args: argparse.Namespace) -> int:
    started = time.monotonic()
    resolved = resolve_config(args, "compare")
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    metric = resolved["metric"]
    if metric not in ("nll_in", "nll_ood", "rmse_in", "rmse_ood"):
        raise ParseError(f"unknown metric {metric!r}")
    if not resolved.get("run"):
        raise ParseError("at least one --run directory is required")
    # per dataset: strategy -> {seed: value}
    by_dataset: dict[str, dict[str, dict[int, float]]] = {}
    for run_dir in resolved["run"]:
        run_dir = Path(run_dir)
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        dataset = manifest["datasets"][0]
        table = by_dataset.setdefault(dataset, {})
        for line in (run_dir / "results.jsonl").read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            if rec.get(metric) is None:
                raise ParseError(f"{run_dir}: metric {metric} missing in records")
            cell = table.setdefault(rec["strategy"], {})
            if rec["seed"] in cell:
                raise ParseError(f"duplicate record for {rec['strategy']} "
                                 f"seed {rec['seed']} on {dataset}")
            cell[rec["seed"]] = rec[metric]
    strategies = sorted({s for table in by_dataset.values() for s in table})
    if len(strategies) < 2:
        raise ParseError("need results for at least two strategies")
    records = []
    for a in strategies:
        for b in strategies:
            if a == b:
                continue
            per_dataset_p = []
            for dataset, table in sorted(by_dataset.items()):
                if a not in table or b not in table:
                    continue
                seeds_a, seeds_b = set(table[a]), set(table[b])
                if seeds_a != seeds_b:
                    raise ParseError(f"mismatched seed sets for {a} vs {b} on {dataset}")
                seeds = sorted(seeds_a)
                res = paired_t_test_one_tailed(
                    np.array([table[a][s] for s in seeds]),
                    np.array([table[b][s] for s in seeds]))
                records.append({"kind": "dataset", "a": a, "b": b, "dataset": dataset,
                                "metric": metric, "t": res.statistic,
                                "p": res.p_value, "n": res.n})
                per_dataset_p.append(res.p_value)
            if per_dataset_p:
                comb = fisher_combine([max(p, 1e-300) for p in per_dataset_p])
                records.append({"kind": "combined", "a": a, "b": b, "metric": metric,
                                "statistic": comb.statistic, "p": comb.p_value,
                                "n_datasets": comb.n})
    write_jsonl(out / "comparisons.jsonl", records)
    write_manifest(out, "compare", resolved, sorted(by_dataset), started)
    return 0


def cmd_gamma_sweep(args: argparse.Namespace) -> int:
    started = time.monotonic()
    resolved = resolve_config(args, "gamma-sweep")
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    spec = _load_dataset_spec(resolved)
    strategy = resolved["strategy"][0]
    if strategy not in _GAMMA_STRATEGIES:
        raise ParseError(f"{strategy} takes no gamma; sweep needs a penalty strategy")
    master_seed = int(resolved["seed"])
    reps = int(resolved["replicates"])
    grid = sorted(float(g) for g in resolved["gamma_grid"])

    def unit(gamma, rep):
        rep_seed = derive_seed(master_seed, REPLICATE, rep)
        train, val, test, _ = prepare_splits(spec.dataset, spec.ood_rule,
                                             _split_spec(spec, rep_seed))
        config = train_config_from(resolved, strategy, rep_seed, gamma=gamma)
        ensemble, _ = train_ensemble((train, val), config)
        return dataset_metrics(ensemble, test)[0]

    units = [lambda g=g, r=r: unit(g, r) for g in grid for r in range(reps)]
    results = _run_units(units, int(resolved["threads"]))
    rows = []
    for i, gamma in enumerate(grid):
        nlls = results[i * reps:(i + 1) * reps]
        rows.append([float(gamma), float(np.mean(nlls)),
                     float(np.std(nlls, ddof=1)) if reps > 1 else 0.0, reps])
    write_csv(out / "gamma_sweep.csv", ["gamma", "mean_nll", "sd_nll", "replicates"],
              rows)
    write_manifest(out, "gamma-sweep", resolved, [spec.dataset.name], started)
    return 0


def cmd_bo(args: argparse.Namespace) -> int:
    started = time.monotonic()
    resolved = resolve_config(args, "bo")
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    spec = _load_dataset_spec(resolved, key="pool")
    pool = spec.dataset
    if pool.scaling is None and not pool.declared_domain:
        pool = scale_dataset(pool, fit_scaling(pool.features, pool.targets))
    master_seed = int(resolved["seed"])
    reps = int(resolved["replicates"])

    def unit(strategy, rep):
        bo_seed = derive_seed(master_seed, REPLICATE, rep)
        config = BOConfig(
            rounds=int(resolved["rounds"]), batch_per_round=int(resolved["batch"]),
            beta=float(resolved["beta"]), gamma_grid=tuple(resolved["gamma_grid"]),
            val_fraction=float(resolved["val_fraction"]),
            initial_size=int(resolved["initial"]),
            bottom_fraction=float(resolved["bottom_fraction"]), seed=bo_seed,
            train_config=train_config_from(resolved, strategy, bo_seed))
        return run_bo(pool, config)

    failures: list[str] = []
    aggregate_rows = []
    for strategy in resolved["strategy"]:
        name = strategy.replace("_", "-")
        units = [lambda s=strategy, r=r: unit(s, r) for r in range(reps)]
        traces = _run_units([_guard(u) for u in units], int(resolved["threads"]))
        curves = []
        for rep, trace in enumerate(traces):
            if isinstance(trace, Exception):
                failures.append(f"{name} replicate {rep}: {trace}")
                continue
            rows = []
            for i in range(len(trace.regrets)):
                rows.append([i + 1, ";".join(str(j) for j in trace.acquired_indices[i]),
                             float(trace.incumbents[i]), float(trace.regrets[i]),
                             float(trace.chosen_gammas[i])])
            write_csv(out / f"bo_trace_{name}_r{rep}.csv",
                      ["round", "acquired_indices", "incumbent", "regret", "gamma"],
                      rows)
            curves.append(trace.regrets)
        if curves:
            arr = np.asarray(curves)
            for r in range(arr.shape[1]):
                aggregate_rows.append([name, r + 1, float(arr[:, r].mean()),
                                       float(arr[:, r].std(ddof=1)) if arr.shape[0] > 1
                                       else 0.0, arr.shape[0]])
    write_csv(out / "bo_aggregate.csv",
              ["strategy", "round", "mean_regret", "sd_regret", "replicates"],
              aggregate_rows)
    write_manifest(out, "bo", resolved, [pool.name], started)
    if failures:
        print("failed units:\n  " + "\n  ".join(failures), file=sys.stderr)
        return 1
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    resolved = resolve_config(args, "calibrate")
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    spec = _load_dataset_spec(resolved)
    master_seed = int(resolved["seed"])
    rep_seed = derive_seed(master_seed, REPLICATE, 0)
    train, val, test, ood = prepare_splits(spec.dataset, spec.ood_rule,
                                           _split_spec(spec, rep_seed))
    levels = resolved.get("levels") or list(DEFAULT_LEVELS)
    for strategy in resolved["strategy"]:
        name = strategy.replace("_", "-")
        ensemble, _ = _train_with_selection((train, val), resolved, strategy, rep_seed)
        for split_name, split in (("in", test), ("ood", ood)):
            if split is None:
                continue
            curve = calibration_curve(ensemble, split, levels=levels)
            rows = [[float(e), float(o)] for e, o in
                    zip(curve.expected_levels, curve.observed_frequencies)]
            write_csv(out / f"calibration_{name}_{split_name}.csv",
                      ["expected", "observed"], rows)
    write_manifest(out, "calibrate", resolved, [spec.dataset.name], started)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modens",
        description="Diversity-regularized deep ensembles: training, evaluation, "
                    "and Bayesian optimization drivers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy", help="1-D uncertainty-collapse demonstration")
    _add_common(p)
    _add_training(p)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--n-per-region", type=int, default=None)
    p.add_argument("--noise-std", type=float, default=None)
    p.add_argument("--grid-points", type=int, default=None)
    p.add_argument("--val-fraction", type=float, default=None)
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("train-eval", help="replicated train/evaluate on a dataset")
    _add_common(p)
    _add_training(p)
    p.add_argument("--dataset", type=Path, default=None, help="dataset manifest")
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("compare", help="paired t-tests between strategies")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--run", action="append", type=Path, default=None,
                   help="train-eval output directory (repeatable)")
    p.add_argument("--metric", default=None,
                   choices=("nll_in", "nll_ood", "rmse_in", "rmse_ood"))
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gamma-sweep", help="in-distribution NLL across gamma values")
    _add_common(p)
    _add_training(p)
    p.add_argument("--dataset", type=Path, default=None)
    p.set_defaults(func=cmd_gamma_sweep)

    p = sub.add_parser("bo", help="batch-UCB Bayesian optimization on a pool")
    _add_common(p)
    _add_training(p)
    p.add_argument("--pool", type=Path, default=None, help="pool dataset manifest")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--initial", type=int, default=None)
    p.add_argument("--bottom-fraction", type=float, default=None)
    p.add_argument("--val-fraction", type=float, default=None)
    p.set_defaults(func=cmd_bo)

    p = sub.add_parser("calibrate", help="calibration curves per strategy and split")
    _add_common(p)
    _add_training(p)
    p.add_argument("--dataset", type=Path, default=None)
    p.add_argument("--levels", type=parse_float_list, default=None)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, SplitError, DivergenceError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
