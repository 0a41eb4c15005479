"""Augmented-input generation and weighting for the diversity penalties.

Covers uniform sampling over the input box (or the canonical 8-mer
universe in discrete mode), resampling of training rows, inverse-density
kNN weights, the adversarial variance step, adversarial training
examples, and the worst-case point-mass KL used to sanity-check that the
uniform augmenting distribution is the minimax choice.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dna
from .ensemble import Ensemble, ensemble_forward, mod_variance_gradient
from .network import NetworkParams, forward_batch, gaussian_nll_gradients, input_gradient


@dataclass(frozen=True)
class BoxBounds:
    """Axis-aligned input box; the support of the uniform augmenting distribution."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("bounds must be 1-D arrays of equal length")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @staticmethod
    def unit(dim: int) -> "BoxBounds":
        return BoxBounds(np.zeros(dim), np.ones(dim))

    def clip(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.lower, self.upper)


@dataclass
class AugmentBatch:
    """Augmented inputs with their penalty weights (all 1 unless reweighted)."""

    points: np.ndarray   # (B, D)
    weights: np.ndarray  # (B,)

    def __post_init__(self):
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points and weights disagree on batch size")


def sample_uniform_box(bounds: BoxBounds, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points, coordinate i uniform on [lower_i, upper_i]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    u = rng.random((n, bounds.dim))
    return bounds.lower + u * (bounds.upper - bounds.lower)


def sample_uniform_discrete(universe: Sequence[str], n: int,
                            rng: np.random.Generator) -> np.ndarray:
    """``n`` one-hot rows drawn uniformly from a sequence universe."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if len(universe) == 0:
        raise ValueError("empty universe")
    idx = rng.integers(0, len(universe), size=n)
    if universe is dna.enumerate_canonical_8mers():
        return dna.encoded_canonical_universe()[idx].copy()
    return np.stack([dna.encode_dna(universe[i]) for i in idx])


def sample_training(features: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` rows drawn uniformly with replacement from training features."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("training features must be a nonempty 2-D array")
    if n < 1:
        raise ValueError("n must be at least 1")
    idx = rng.integers(0, features.shape[0], size=n)
    return features[idx].copy()


def knn_weights(augmented: np.ndarray, minibatch: np.ndarray, k: int) -> np.ndarray:
    """Normalized sums of squared distances to the k nearest minibatch rows.

    Each augmented point scores the sum of squared Euclidean distances to
    its k nearest neighbors in the minibatch; scores are divided by the
    batch maximum so the farthest point gets weight exactly 1. If every
    score is zero the weights fall back to all ones.
    """
    augmented = np.atleast_2d(np.asarray(augmented, dtype=np.float64))
    minibatch = np.atleast_2d(np.asarray(minibatch, dtype=np.float64))
    if augmented.shape[0] < 1:
        raise ValueError("need at least one augmented point")
    if k < 1 or k > minibatch.shape[0]:
        raise ValueError(f"k={k} out of range for a minibatch of {minibatch.shape[0]}")
    # (B, |B|) squared distances
    diff = augmented[:, None, :] - minibatch[None, :, :]
    sq = np.einsum("bij,bij->bi", diff, diff)
    part = np.partition(sq, k - 1, axis=1)[:, :k]
    sums = part.sum(axis=1)
    top = sums.max()
    if top <= 0.0:
        return np.ones_like(sums)
    return sums / top


def adversarial_variance_step(ensemble: Ensemble, points: np.ndarray,
                              alpha_adv: float, bounds: BoxBounds) -> np.ndarray:
    """Move each point one gradient step toward lower model variance.

    The step is -alpha_adv * grad_x sigma2_mod(x), clipped back into the
    box. Points whose gradient is non-finite are left unmoved.
    """
    if alpha_adv < 0:
        raise ValueError("alpha_adv must be nonnegative")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    mus, _ = ensemble_forward(ensemble, points)
    upstream_mu = mod_variance_gradient(mus)  # (M, n)
    grad = np.zeros_like(points)
    for m, member in enumerate(ensemble.members):
        grad += input_gradient(member, points, (upstream_mu[m], 0.0))
    bad = ~np.all(np.isfinite(grad), axis=1)
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} adversarial step(s) skipped: non-finite gradient",
                      RuntimeWarning)
        grad[bad] = 0.0
    return bounds.clip(points - alpha_adv * grad)


def adversarial_training_example(member: NetworkParams, x: np.ndarray, y: float,
                                 delta: float, bounds: BoxBounds | None = None
                                 ) -> tuple[np.ndarray, float]:
    """Fast-gradient-sign perturbation of a training point, label unchanged.

    x' = x + delta * sign(d NLL / d x); coordinates with zero partials stay
    put. The point is clipped into ``bounds`` when given.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    mu, sigma2, _ = forward_batch(member, x[None, :])
    d_mu, d_sigma2 = gaussian_nll_gradients(mu, sigma2, np.asarray([y]))
    g = input_gradient(member, x, (float(d_mu[0]), float(d_sigma2[0])))
    x_adv = x + delta * np.sign(g)
    if bounds is not None:
        x_adv = bounds.clip(x_adv)
    return x_adv, y


def adversarial_training_batch(member: NetworkParams, X: np.ndarray, y: np.ndarray,
                               delta: float, bounds: BoxBounds | None = None) -> np.ndarray:
    """Vectorized adversarial examples for a whole minibatch."""
    X = np.asarray(X, dtype=np.float64)
    mu, sigma2, _ = forward_batch(member, X)
    d_mu, d_sigma2 = gaussian_nll_gradients(mu, sigma2, y)
    g = input_gradient(member, X, (d_mu, d_sigma2))
    X_adv = X + delta * np.sign(g)
    return bounds.clip(X_adv) if bounds is not None else X_adv


def worst_case_pointmass_kl(pmf: np.ndarray) -> float:
    """max over point masses P of KL(P || pmf), i.e. -ln(min entry).

    A zero entry makes the worst case infinite; that case returns +inf and
    emits a warning rather than raising.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim != 1 or pmf.size == 0:
        raise ValueError("pmf must be a nonempty vector")
    if np.any(pmf < 0) or not np.isclose(pmf.sum(), 1.0, atol=1e-9):
        raise ValueError("pmf entries must be nonnegative and sum to 1")
    low = pmf.min()
    if low == 0.0:
        warnings.warn("pmf has a zero entry: worst-case KL is infinite", RuntimeWarning)
        return float("inf")
    return float(-np.log(low))
