"""Metrics and statistics: NLL/RMSE over datasets, calibration curves,
simple regret, one-tailed paired t-tests, and Fisher p-value combination.

Tail probabilities delegate to scipy's regularized incomplete beta/gamma
routines; the test suite checks them against quadrature oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import Dataset
from .ensemble import Ensemble, ensemble_predict
from .network import gaussian_nll_terms

# Nominal confidence levels used when none are given: 0.05 .. 0.95.
DEFAULT_LEVELS = tuple(np.round(np.arange(1, 20) * 0.05, 2))


@dataclass(frozen=True)
class CalibrationCurve:
    expected_levels: np.ndarray
    observed_frequencies: np.ndarray


@dataclass(frozen=True)
class StatResult:
    statistic: float
    p_value: float
    n: int
    degenerate: bool = False


def normal_quantile(p: float | np.ndarray) -> float | np.ndarray:
    """Standard-normal quantile (inverse CDF)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("quantile argument must lie strictly in (0, 1)")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


def student_t_cdf(t: float, df: int) -> float:
    """P(T <= t) for Student's t with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("df must be at least 1")
    return float(special.stdtr(df, t))


def chi2_sf(x: float, df: int) -> float:
    """Upper-tail probability P(X >= x) for chi-square with ``df`` dof."""
    if df < 1:
        raise ValueError("df must be at least 1")
    return float(special.chdtrc(df, x))


def dataset_metrics(ensemble: Ensemble, ds: Dataset) -> tuple[float, float]:
    """Mean ensemble NLL and RMSE of the ensemble mean over a dataset."""
    mu_bar, _, _, sigma2_bar = ensemble_predict(ensemble, ds.features)
    nll = float(np.mean(gaussian_nll_terms(mu_bar, sigma2_bar, ds.targets)))
    rmse = float(np.sqrt(np.mean((mu_bar - ds.targets) ** 2)))
    return nll, rmse


def calibration_from_moments(mu: np.ndarray, sigma2: np.ndarray, y: np.ndarray,
                             levels=DEFAULT_LEVELS) -> CalibrationCurve:
    """Observed coverage of central predictive intervals at each level."""
    levels = np.asarray(levels, dtype=np.float64)
    if np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("levels must lie strictly in (0, 1)")
    mu, sigma2, y = (np.asarray(a, dtype=np.float64) for a in (mu, sigma2, y))
    z = special.ndtri((1.0 + levels) / 2.0)             # (L,)
    half = z[:, None] * np.sqrt(sigma2)[None, :]        # (L, n)
    inside = np.abs(y[None, :] - mu[None, :]) <= half
    return CalibrationCurve(expected_levels=levels,
                            observed_frequencies=inside.mean(axis=1))


def calibration_curve(ensemble: Ensemble, ds: Dataset,
                      levels=DEFAULT_LEVELS) -> CalibrationCurve:
    mu_bar, _, _, sigma2_bar = ensemble_predict(ensemble, ds.features)
    return calibration_from_moments(mu_bar, sigma2_bar, ds.targets, levels)


def simple_regret(acquired_targets: np.ndarray, global_max: float) -> float:
    """Gap between the global best and the best target acquired so far."""
    acquired_targets = np.asarray(acquired_targets, dtype=np.float64)
    if acquired_targets.size == 0:
        raise ValueError("need at least one acquired target")
    return float(global_max - acquired_targets.max())


def paired_t_test_one_tailed(a: np.ndarray, b: np.ndarray) -> StatResult:
    """One-tailed paired t-test of the alternative mean(a) < mean(b).

    Zero-variance differences degenerate to p in {0, 0.5, 1} by the sign
    of the mean difference.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    n = a.size
    if n < 2:
        raise ValueError("need at least 2 pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        p = 0.5 if mean == 0.0 else (0.0 if mean < 0 else 1.0)
        return StatResult(statistic=float("-inf") if mean < 0 else
                          (float("inf") if mean > 0 else 0.0),
                          p_value=p, n=n, degenerate=True)
    t = mean / (sd / np.sqrt(n))
    return StatResult(statistic=float(t), p_value=student_t_cdf(float(t), n - 1), n=n)


def fisher_combine(p_values) -> StatResult:
    """Fisher's method: X = -2 sum(ln p) against chi-square with 2k dof."""
    p = np.asarray(list(p_values), dtype=np.float64)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    if np.any(p == 0):
        return StatResult(statistic=float("inf"), p_value=0.0, n=p.size, degenerate=True)
    x = float(-2.0 * np.sum(np.log(p)))
    return StatResult(statistic=x, p_value=chi2_sf(x, 2 * p.size), n=p.size)
