"""Shared fixtures and finite-difference helpers."""

from __future__ import annotations

import numpy as np
import pytest

from modens.ensemble import Ensemble
from modens.network import NetworkParams, flatten, init_params, unflatten


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def random_params(rng: np.random.Generator, input_dim=3, hidden=5,
                  heads=None) -> NetworkParams:
    p = init_params(input_dim, hidden, rng, heads)
    # nonzero biases so bias gradients are exercised too
    p.hidden_b = rng.normal(scale=0.3, size=hidden)
    p.mean_b = np.asarray(rng.normal(scale=0.3))
    p.var_b = np.asarray(rng.normal(scale=0.3))
    return p


def random_ensemble(rng: np.random.Generator, n_members=3, input_dim=3,
                    hidden=5, heads=None) -> Ensemble:
    return Ensemble([random_params(rng, input_dim, hidden, heads)
                     for _ in range(n_members)])


def central_difference(f, v: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    grad = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = step
        grad[i] = (f(v + e) - f(v - e)) / (2.0 * step)
    return grad


def relative_errors(analytic: np.ndarray, numeric: np.ndarray,
                    floor: float = 1e-6) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(floor, np.abs(numeric))


def flatten_ensemble(ensemble: Ensemble) -> np.ndarray:
    return np.concatenate([flatten(m) for m in ensemble.members])


def unflatten_ensemble(ensemble: Ensemble, v: np.ndarray) -> Ensemble:
    members, off = [], 0
    for m in ensemble.members:
        size = flatten(m).size
        members.append(unflatten(m, v[off:off + size]))
        off += size
    return Ensemble(members)
