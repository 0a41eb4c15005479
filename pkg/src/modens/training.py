"""Minibatch ensemble training under every supported strategy.

Per step, each member's update gradient is

    (1/|B|) d/d_theta_m [ sum_b NLL(theta_m; x_b, y_b) ]  +  c * d/d_theta_m penalty

where the penalty and its coefficient ``c`` depend on the strategy:

    deep_ens      no penalty
    deep_ens_at   no penalty; the NLL runs over the union of the clean
                  minibatch and per-member adversarial copies
    mod           c = -gamma, penalty = mean model variance at inputs drawn
                  uniformly from the input box (or the 8-mer universe)
    mod_in        as mod, with inputs resampled from the training data
    mod_r         as mod, with kNN inverse-density weights on the inputs
    mod_adv       as mod, after one variance-descent step on the inputs
    neg_corr      c = +gamma, penalty = negative-correlation form on the
                  minibatch itself (equal to -M * model variance per point,
                  so adding it also rewards member disagreement)

All member gradients are computed against pre-update parameters, so the
update is synchronous and member-order independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import dna
from .augment import (AugmentBatch, BoxBounds, adversarial_training_batch,
                      adversarial_variance_step, knn_weights, sample_training,
                      sample_uniform_box)
from .data import Dataset
from .ensemble import (Ensemble, init_ensemble, member_deviations,
                       mod_variance_gradient)
from .errors import DivergenceError
from .network import (HeadConfig, NetworkGradient, NetworkParams, OptimizerState,
                      backward, copy_params, forward_batch, gaussian_nll_gradients,
                      gaussian_nll_terms, init_optimizer_state, optimizer_step,
                      tree_map)
from .rng import AUGMENT, BATCH, stream

STRATEGIES = ("deep_ens", "deep_ens_at", "neg_corr", "mod", "mod_in", "mod_r", "mod_adv")
MOD_FAMILY = ("mod", "mod_in", "mod_r", "mod_adv")
# Sign of the gamma-weighted penalty inside the minimized objective. The
# mod-family penalty (a variance, >= 0) is subtracted; the negative-
# correlation form (<= 0) is added. Both reward member disagreement.
PENALTY_SIGN = {"mod": -1.0, "mod_in": -1.0, "mod_r": -1.0, "mod_adv": -1.0,
                "neg_corr": 1.0}


@dataclass(frozen=True)
class TrainConfig:
    strategy: str = "deep_ens"
    gamma: float = 0.0
    lr: float = 0.01
    l2: float = 0.0
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    k: int = 5                 # kNN neighbors for mod_r
    delta: float = 0.05        # adversarial-training step size
    alpha_adv: float = 0.01    # variance-descent step size for mod_adv
    n_members: int = 4
    seed: int = 0
    optimizer: str = "adam"
    hidden_width: int = 50
    heads: HeadConfig = field(default_factory=HeadConfig)
    # Diagnostic switch: skip kNN reweighting so mod_r reduces to mod.
    force_uniform_weights: bool = False
    # When False, keep the final-epoch parameters instead of restoring the
    # best validation epoch (diversity develops slowly and the best val
    # epoch can predate it; the toy protocol trains to completion).
    restore_best: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.lr <= 0 or self.l2 < 0:
            raise ValueError("lr must be positive and l2 nonnegative")
        if self.batch_size < 1 or self.n_members < 2:
            raise ValueError("batch_size must be >= 1 and n_members >= 2")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")
        if self.strategy == "deep_ens_at" and not self.delta > 0:
            raise ValueError("deep_ens_at requires a positive delta")
        if self.strategy == "mod_r" and self.k < 1:
            raise ValueError("mod_r requires k >= 1")
        if self.strategy == "mod_adv" and self.alpha_adv < 0:
            raise ValueError("mod_adv requires a nonnegative alpha_adv")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    """Per-epoch history. ``train_nll`` is the running mean of member
    minibatch NLLs (clean points only); ``val_nll`` is the ensemble NLL on
    the validation split after the epoch."""

    train_nll: list[float] = field(default_factory=list)
    val_nll: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0


@dataclass
class StepContext:
    """Per-run state a training step needs besides the minibatch."""

    bounds: BoxBounds
    train_features: np.ndarray
    rng_augment: np.random.Generator
    sample_augment: Callable[[int, np.random.Generator], np.ndarray]
    discrete: bool = False


def _member_forwards(ensemble: Ensemble, X: np.ndarray):
    mus, sigma2s, caches = [], [], []
    for member in ensemble.members:
        mu, s2, cache = forward_batch(member, X)
        mus.append(mu)
        sigma2s.append(s2)
        caches.append(cache)
    return np.stack(mus), np.stack(sigma2s), caches


def _penalty_with_caches(strategy: str, ensemble: Ensemble, minibatch: np.ndarray,
                         aug: AugmentBatch | None):
    """Penalty value, per-member upstream mean-gradients, member caches."""
    m = ensemble.n_members
    if strategy == "neg_corr":
        points = np.atleast_2d(minibatch)
        weights = None
    else:
        if aug is None or aug.points.shape[0] == 0:
            raise ValueError(f"strategy {strategy!r} needs a nonempty augmented batch")
        points, weights = aug.points, aug.weights
    b = points.shape[0]
    mus, _, caches = _member_forwards(ensemble, points)
    dev = member_deviations(mus, mus.mean(axis=0))    # (M, b)
    if strategy == "neg_corr":
        # sum_m dev_m * sum_{m'!=m} dev_m' = -sum_m dev_m^2 per point
        value = float(-(dev * dev).sum() / b)
        upstream = -2.0 * dev / b
    else:
        var = (dev * dev).mean(axis=0)                # (b,)
        value = float((weights * var).sum() / b)
        upstream = (weights / b) * mod_variance_gradient(mus)
    return value, upstream, caches


def penalty_term(strategy: str, ensemble: Ensemble, minibatch: np.ndarray,
                 aug: AugmentBatch | None) -> tuple[float, np.ndarray]:
    """Diversity penalty over a batch and its partials w.r.t. member means.

    Returns ``(value, upstream)`` with ``upstream[m, b]`` the exact partial
    of the value w.r.t. member m's mean at point b.
    """
    if strategy not in MOD_FAMILY + ("neg_corr",):
        raise ValueError(f"strategy {strategy!r} has no penalty term")
    value, upstream, _ = _penalty_with_caches(strategy, ensemble, minibatch, aug)
    return value, upstream


def _adversarial_points(ensemble: Ensemble, X: np.ndarray, y: np.ndarray,
                        config: TrainConfig, bounds: BoxBounds) -> list[np.ndarray]:
    return [adversarial_training_batch(member, X, y, config.delta, bounds)
            for member in ensemble.members]


def member_gradients(ensemble: Ensemble, xb: np.ndarray, yb: np.ndarray,
                     config: TrainConfig, aug: AugmentBatch | None,
                     bounds: BoxBounds | None = None,
                     at_points: list[np.ndarray] | None = None,
                     ) -> tuple[list[NetworkGradient], float]:
    """Per-member gradients of the full step objective (pre-update params).

    Returns the gradients and the mean clean-minibatch NLL across members.
    ``at_points`` lets callers freeze the adversarial copies (tests);
    normally they are derived from the current parameters.
    """
    xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
    yb = np.asarray(yb, dtype=np.float64)
    b = xb.shape[0]
    strategy = config.strategy

    if strategy == "deep_ens_at" and at_points is None:
        at_points = _adversarial_points(ensemble, xb, yb, config, bounds)

    grads: list[NetworkGradient] = []
    clean_nll = 0.0
    for i, member in enumerate(ensemble.members):
        if strategy == "deep_ens_at":
            X = np.vstack([xb, at_points[i]])
            y = np.concatenate([yb, yb])
        else:
            X, y = xb, yb
        mu, s2, cache = forward_batch(member, X)
        terms = gaussian_nll_terms(mu, s2, y)
        clean_nll += float(terms[:b].mean())
        if not np.isfinite(terms).all():
            raise DivergenceError("non-finite minibatch loss")
        d_mu, d_s2 = gaussian_nll_gradients(mu, s2, y)
        scale = 1.0 / X.shape[0]
        grads.append(backward(member, cache, (d_mu * scale, d_s2 * scale)))

    if strategy in PENALTY_SIGN and config.gamma != 0.0:
        coeff = PENALTY_SIGN[strategy] * config.gamma
        _, upstream, caches = _penalty_with_caches(strategy, ensemble, xb, aug)
        for i, member in enumerate(ensemble.members):
            pen_grad = backward(member, caches[i], (upstream[i], 0.0))
            grads[i] = tree_map(lambda g, p: g + coeff * p, grads[i], pen_grad)
    return grads, clean_nll / ensemble.n_members


def batch_objective(ensemble: Ensemble, xb: np.ndarray, yb: np.ndarray,
                    config: TrainConfig, aug: AugmentBatch | None,
                    at_points: list[np.ndarray] | None = None) -> float:
    """Scalar step objective whose member-wise gradient ``member_gradients``
    assembles: sum over members of the mean NLL, plus the signed penalty."""
    xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
    yb = np.asarray(yb, dtype=np.float64)
    total = 0.0
    for i, member in enumerate(ensemble.members):
        if config.strategy == "deep_ens_at":
            X = np.vstack([xb, at_points[i]])
            y = np.concatenate([yb, yb])
        else:
            X, y = xb, yb
        mu, s2, _ = forward_batch(member, X)
        total += float(gaussian_nll_terms(mu, s2, y).mean())
    if config.strategy in PENALTY_SIGN and config.gamma != 0.0:
        value, _, _ = _penalty_with_caches(config.strategy, ensemble, xb, aug)
        total += PENALTY_SIGN[config.strategy] * config.gamma * value
    return total


def _sample_augment(ensemble: Ensemble, xb: np.ndarray, config: TrainConfig,
                    ctx: StepContext) -> AugmentBatch | None:
    """Strategy-specific augmented batch; consumes the augment stream."""
    if config.strategy not in MOD_FAMILY:
        return None
    b = xb.shape[0]
    if config.strategy == "mod_in":
        points = sample_training(ctx.train_features, b, ctx.rng_augment)
    else:
        points = ctx.sample_augment(b, ctx.rng_augment)
    if config.strategy == "mod_adv" and config.alpha_adv != 0.0:
        points = adversarial_variance_step(ensemble, points, config.alpha_adv, ctx.bounds)
    if config.strategy == "mod_r" and not config.force_uniform_weights:
        weights = knn_weights(points, xb, min(config.k, b))
    else:
        weights = np.ones(b)
    return AugmentBatch(points=points, weights=weights)


def train_step(ensemble: Ensemble, states: list[OptimizerState], xb: np.ndarray,
               yb: np.ndarray, config: TrainConfig, ctx: StepContext
               ) -> tuple[Ensemble, list[OptimizerState], float]:
    """One synchronous minibatch update of every member."""
    xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
    aug = _sample_augment(ensemble, xb, config, ctx)
    grads, clean_nll = member_gradients(ensemble, xb, yb, config, aug,
                                        bounds=ctx.bounds)
    new_members, new_states = [], []
    for member, grad, state in zip(ensemble.members, grads, states):
        p, s = optimizer_step(member, grad, state, lr=config.lr, l2=config.l2,
                              kind=config.optimizer)
        new_members.append(p)
        new_states.append(s)
    return Ensemble(members=new_members), new_states, clean_nll


def _build_context(train: Dataset, config: TrainConfig) -> StepContext:
    discrete = train.sequences is not None
    if discrete and config.strategy == "mod_adv":
        raise ValueError("mod_adv applies to continuous features only")
    if discrete:
        universe = dna.encoded_canonical_universe()

        def sampler(n, rng):
            return universe[rng.integers(0, universe.shape[0], size=n)].copy()
    else:
        bounds = train.bounds

        def sampler(n, rng):
            return sample_uniform_box(bounds, n, rng)

    return StepContext(bounds=train.bounds, train_features=train.features,
                       rng_augment=stream(config.seed, AUGMENT),
                       sample_augment=sampler, discrete=discrete)


def train_ensemble(splits: tuple[Dataset, Dataset], config: TrainConfig
                   ) -> tuple[Ensemble, TrainReport]:
    """Epoch loop with early stopping on validation ensemble NLL.

    Stops when the best validation NLL has not improved for ``patience``
    consecutive epochs (or at ``max_epochs``) and returns the parameters
    from the best validation epoch.
    """
    from .evaluate import dataset_metrics  # late import: evaluate depends on data only

    train, val = splits
    if len(train) < 1 or len(val) < 1:
        raise ValueError("train and validation splits must be nonempty")
    ensemble = init_ensemble(config.n_members, train.dim, config.hidden_width,
                             config.seed, config.heads)
    states = [init_optimizer_state(m) for m in ensemble.members]
    rng_batch = stream(config.seed, BATCH)
    ctx = _build_context(train, config)
    report = TrainReport()
    best_nll = np.inf
    best_members: list[NetworkParams] | None = None
    bad_epochs = 0
    n = len(train)
    for epoch in range(1, config.max_epochs + 1):
        perm = rng_batch.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            try:
                ensemble, states, loss = train_step(
                    ensemble, states, train.features[idx], train.targets[idx],
                    config, ctx)
            except DivergenceError as err:
                raise DivergenceError(str(err), epoch=epoch) from err
            losses.append(loss)
        report.train_nll.append(float(np.mean(losses)))
        val_nll = dataset_metrics(ensemble, val)[0]
        report.val_nll.append(val_nll)
        report.stopped_epoch = epoch
        if val_nll < best_nll:
            best_nll = val_nll
            best_members = [copy_params(m) for m in ensemble.members]
            report.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break
    if config.restore_best and best_members is not None:
        ensemble = Ensemble(members=best_members)
    return ensemble, report


@dataclass
class GammaSelection:
    """Outcome of validation-based gamma selection."""

    best_gamma: float
    table: list[tuple[float, float]]   # (gamma, validation NLL) per grid entry
    ensemble: Ensemble
    report: TrainReport


def select_gamma(splits: tuple[Dataset, Dataset], base_config: TrainConfig,
                 gamma_grid) -> GammaSelection:
    """Train once per gamma and keep the best validation-NLL ensemble.

    Exact ties go to the larger gamma (prefer the strongest penalty that
    does not hurt validation performance). Diverged entries are skipped;
    if every entry diverges the error lists the failed values.
    """
    from .evaluate import dataset_metrics

    grid = [float(g) for g in gamma_grid]
    if not grid:
        raise ValueError("gamma grid must be nonempty")
    table: list[tuple[float, float]] = []
    best: GammaSelection | None = None
    best_nll = np.inf
    failed: list[float] = []
    for gamma in grid:
        config = replace(base_config, gamma=gamma)
        try:
            ensemble, report = train_ensemble(splits, config)
        except DivergenceError:
            failed.append(gamma)
            table.append((gamma, float("nan")))
            continue
        val_nll = dataset_metrics(ensemble, splits[1])[0]
        table.append((gamma, val_nll))
        if (best is None or val_nll < best_nll
                or (val_nll == best_nll and gamma > best.best_gamma)):
            best = GammaSelection(best_gamma=gamma, table=[], ensemble=ensemble,
                                  report=report)
            best_nll = val_nll
    if best is None:
        raise DivergenceError(f"all gamma candidates diverged: {failed}")
    best.table = table
    return best
