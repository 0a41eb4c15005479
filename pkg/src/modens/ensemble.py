"""Aggregation of member predictions into one Gaussian predictive distribution.

The ensemble estimate at an input is N(mu_bar, sigma2_bar) with

    mu_bar     = mean of member means
    sigma2_eps = mean of member variances        (predicted noise)
    sigma2_mod = population variance of member means  (model uncertainty)
    sigma2_bar = sigma2_eps + sigma2_mod

Population variance (divisor M) is used so that the analytic gradient
d sigma2_mod / d mu_m = (2/M)(mu_m - mu_bar) is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (HeadConfig, NetworkParams, PredictiveParams,
                      forward_batch, init_params)
from .rng import INIT, stream


@dataclass
class Ensemble:
    """A fixed-size collection of identically shaped networks."""

    members: list[NetworkParams]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("an ensemble needs at least 2 members")
        d0, h0 = self.members[0].input_dim, self.members[0].hidden_width
        for m in self.members[1:]:
            if (m.input_dim, m.hidden_width) != (d0, h0):
                raise ValueError("members must share architecture dimensions")

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def input_dim(self) -> int:
        return self.members[0].input_dim


@dataclass(frozen=True)
class EnsemblePrediction:
    mu_bar: float
    sigma2_eps: float
    sigma2_mod: float
    sigma2_bar: float


def member_deviations(mus: np.ndarray, mu_bar: np.ndarray) -> np.ndarray:
    """Member-mean deviations, exactly zero where all members agree.

    Summation rounding can make mean(x, x, x) differ from x by one ulp;
    forcing the identical-members case to zero keeps 'all means equal
    implies sigma2_mod == 0' exact, which downstream code relies on.
    """
    dev = mus - mu_bar
    identical = np.all(mus == mus[:1], axis=0)
    if np.any(identical):
        dev = np.where(identical, 0.0, dev)
    return dev


def init_ensemble(n_members: int, input_dim: int, hidden_width: int,
                  seed: int, heads: HeadConfig | None = None) -> Ensemble:
    """Independently initialized members, each from its own seeded stream."""
    members = [init_params(input_dim, hidden_width, stream(seed, INIT, m), heads)
               for m in range(n_members)]
    return Ensemble(members=members)


def aggregate_arrays(mus: np.ndarray, sigma2s: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Aggregate (M, n) member outputs into per-row ensemble moments."""
    mus = np.asarray(mus, dtype=np.float64)
    sigma2s = np.asarray(sigma2s, dtype=np.float64)
    if mus.shape[0] < 2:
        raise ValueError("need at least 2 member predictions")
    mu_bar = mus.mean(axis=0)
    sigma2_eps = sigma2s.mean(axis=0)
    sigma2_mod = np.mean(member_deviations(mus, mu_bar) ** 2, axis=0)
    return mu_bar, sigma2_eps, sigma2_mod, sigma2_eps + sigma2_mod


def aggregate(member_preds: list[PredictiveParams]) -> EnsemblePrediction:
    """Collapse per-member predictions at one input into a single Gaussian."""
    mus = np.array([[p.mu] for p in member_preds])
    sigma2s = np.array([[p.sigma2] for p in member_preds])
    mu_bar, s2_eps, s2_mod, s2_bar = aggregate_arrays(mus, sigma2s)
    return EnsemblePrediction(mu_bar=float(mu_bar[0]), sigma2_eps=float(s2_eps[0]),
                              sigma2_mod=float(s2_mod[0]), sigma2_bar=float(s2_bar[0]))


def ensemble_forward(ensemble: Ensemble, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stacked member outputs over a batch: (M, n) means and variances."""
    mus, sigma2s = [], []
    for m in ensemble.members:
        mu, s2, _ = forward_batch(m, X)
        mus.append(mu)
        sigma2s.append(s2)
    return np.stack(mus), np.stack(sigma2s)


def ensemble_predict(ensemble: Ensemble, X: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-row (mu_bar, sigma2_eps, sigma2_mod, sigma2_bar) over a batch."""
    mus, sigma2s = ensemble_forward(ensemble, X)
    return aggregate_arrays(mus, sigma2s)


def ensemble_nll(pred: EnsemblePrediction, y: float) -> float:
    """Gaussian NLL of ``y`` under the collapsed ensemble distribution."""
    if not pred.sigma2_bar > 0:
        raise ValueError(f"sigma2_bar must be positive, got {pred.sigma2_bar}")
    return float(0.5 * np.log(2.0 * np.pi * pred.sigma2_bar)
                 + (y - pred.mu_bar) ** 2 / (2.0 * pred.sigma2_bar))


def mod_variance_gradient(member_mus: np.ndarray) -> np.ndarray:
    """Partials of the population variance of member means w.r.t. each mean.

    Supports a length-M vector (one input) or an (M, n) matrix (per-row
    gradients over a batch). Entries sum to zero along the member axis.
    """
    mus = np.asarray(member_mus, dtype=np.float64)
    m = mus.shape[0]
    if m < 2:
        raise ValueError("need at least 2 members")
    single = mus.ndim == 1
    stacked = mus[:, None] if single else mus
    grad = (2.0 / m) * member_deviations(stacked, stacked.mean(axis=0))
    return grad[:, 0] if single else grad
