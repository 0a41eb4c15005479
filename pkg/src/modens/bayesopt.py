"""Batch Bayesian optimization over a finite candidate pool with UCB.

Each round retrains the ensemble on the labeled set (with validation-based
gamma selection when the strategy takes a penalty), scores the unacquired
pool by mu_bar + beta * sigma_mod, and reveals the targets of the top
batch. Exploration is driven by the model-uncertainty component only, not
by the predicted noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .ensemble import Ensemble, ensemble_predict
from .errors import DivergenceError
from .evaluate import simple_regret
from .rng import BO_INIT, BO_ROUND, derive_seed, stream
from .training import TrainConfig, select_gamma, train_ensemble


@dataclass(frozen=True)
class BOConfig:
    rounds: int = 30
    batch_per_round: int = 10
    beta: float = 1.0
    gamma_grid: tuple[float, ...] = (0.0, 5.0, 10.0, 20.0, 40.0, 80.0)
    val_fraction: float = 0.1
    initial_size: int = 200
    bottom_fraction: float = 0.9   # initial points are drawn from this lower quantile
    seed: int = 0
    train_config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.rounds < 0 or self.batch_per_round < 1:
            raise ValueError("rounds must be >= 0 and batch_per_round >= 1")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.initial_size < 2:
            raise ValueError("need at least 2 initial points")
        if not 0 < self.bottom_fraction <= 1:
            raise ValueError("bottom_fraction must lie in (0, 1]")


@dataclass
class BOTrace:
    """Per-round acquisition record. Lists have one entry per round; the
    pre-acquisition state is kept separately as ``initial_*``."""

    initial_indices: np.ndarray
    initial_incumbent: float
    initial_regret: float
    acquired_indices: list[np.ndarray] = field(default_factory=list)
    incumbents: list[float] = field(default_factory=list)
    regrets: list[float] = field(default_factory=list)
    chosen_gammas: list[float] = field(default_factory=list)

    @property
    def final_regret(self) -> float:
        return self.regrets[-1] if self.regrets else self.initial_regret


def ucb_scores(ensemble: Ensemble, candidates: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """mu_bar + beta * sqrt(sigma2_mod) per candidate row."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if candidates.shape[0] == 0:
        raise ValueError("need at least one candidate")
    mu_bar, _, sigma2_mod, _ = ensemble_predict(ensemble, candidates)
    return mu_bar + beta * np.sqrt(sigma2_mod)


def acquire_batch(scores: np.ndarray, acquired_mask: np.ndarray, batch: int) -> np.ndarray:
    """Indices of the top-``batch`` unacquired scores, ties to lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    acquired_mask = np.asarray(acquired_mask, dtype=bool)
    open_idx = np.flatnonzero(~acquired_mask)
    if open_idx.size < batch:
        raise ValueError(f"only {open_idx.size} unacquired candidates, need {batch}")
    # stable sort on negated scores keeps ascending-index order among ties
    order = np.argsort(-scores[open_idx], kind="stable")
    return np.sort(open_idx[order[:batch]])


def _train_on_labeled(pool: Dataset, labeled: np.ndarray, config: BOConfig,
                      round_index: int) -> tuple[Ensemble, float]:
    """Split the labeled set 90/10, pick gamma if applicable, train."""
    n = labeled.size
    n_val = max(1, int(round(config.val_fraction * n)))
    perm = stream(config.seed, BO_ROUND, round_index).permutation(n)
    val_idx = labeled[perm[:n_val]]
    train_idx = labeled[perm[n_val:]]
    def sub(idx):
        return replace(pool, features=pool.features[idx], targets=pool.targets[idx],
                       sequences=(tuple(pool.sequences[i] for i in idx)
                                  if pool.sequences is not None else None))

    splits = (sub(train_idx), sub(val_idx))
    tc = replace(config.train_config,
                 seed=derive_seed(config.seed, BO_ROUND, round_index, 1))
    uses_gamma = tc.strategy in ("mod", "mod_in", "mod_r", "mod_adv", "neg_corr")
    if uses_gamma and len(config.gamma_grid) > 1:
        sel = select_gamma(splits, tc, config.gamma_grid)
        return sel.ensemble, sel.best_gamma
    if uses_gamma:
        gamma = float(config.gamma_grid[0]) if config.gamma_grid else tc.gamma
        ensemble, _ = train_ensemble(splits, replace(tc, gamma=gamma))
        return ensemble, gamma
    ensemble, _ = train_ensemble(splits, tc)
    return ensemble, 0.0


def run_bo(pool: Dataset, config: BOConfig) -> BOTrace:
    """Run the full acquisition loop on a fully labeled pool.

    Pool targets are hidden by construction: training only ever sees rows
    whose indices have been acquired. Deterministic given the seed.
    """
    n = len(pool)
    need = config.initial_size + config.rounds * config.batch_per_round
    if n < need:
        raise ValueError(f"pool of {n} too small for initial {config.initial_size} "
                         f"plus {config.rounds} rounds of {config.batch_per_round}")
    global_max = float(pool.targets.max())

    order = np.argsort(pool.targets, kind="stable")
    bottom = int(config.bottom_fraction * n)
    if bottom < config.initial_size:
        raise ValueError(f"bottom {config.bottom_fraction:.0%} of the pool has "
                         f"{bottom} rows, fewer than initial_size={config.initial_size}")
    eligible = order[:bottom]
    rng = stream(config.seed, BO_INIT)
    initial = np.sort(rng.choice(eligible, size=config.initial_size, replace=False))

    labeled = initial.copy()
    mask = np.zeros(n, dtype=bool)
    mask[labeled] = True
    incumbent = float(pool.targets[labeled].max())
    trace = BOTrace(initial_indices=initial, initial_incumbent=incumbent,
                    initial_regret=simple_regret(pool.targets[labeled], global_max))
    for round_index in range(1, config.rounds + 1):
        try:
            ensemble, gamma = _train_on_labeled(pool, labeled, config, round_index)
        except DivergenceError as err:
            raise DivergenceError(f"round {round_index}: {err}") from err
        scores = ucb_scores(ensemble, pool.features, beta=config.beta)
        picked = acquire_batch(scores, mask, config.batch_per_round)
        mask[picked] = True
        labeled = np.concatenate([labeled, picked])
        incumbent = max(incumbent, float(pool.targets[picked].max()))
        trace.acquired_indices.append(picked)
        trace.incumbents.append(incumbent)
        trace.regrets.append(global_max - incumbent)
        trace.chosen_gammas.append(gamma)
    return trace
