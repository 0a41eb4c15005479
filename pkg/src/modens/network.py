"""One-hidden-layer heteroskedastic regression network.

Forward evaluation, Gaussian negative log-likelihood, exact reverse-mode
gradients (hand-derived for this fixed topology), and SGD/Adam updates.
All operations are pure: parameters are never mutated in place.

Architecture:
    z  = W x + b            hidden pre-activation, W is (H, D)
    h  = relu(z)
    mu = mean_low + (mean_high - mean_low) * sigmoid(mean_w . h + mean_b)
         (or the raw affine value when ``linear_mean`` is set)
    sigma2 = sigma2_min + (sigma2_max - sigma2_min) * sigmoid(var_w . h + var_b)

The bounded variance head keeps the NLL away from -inf; the bounded mean
head matches targets scaled to a known interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import DivergenceError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_ARRAY_FIELDS = ("hidden_w", "hidden_b", "mean_w", "mean_b", "var_w", "var_b")
# Bias vectors/scalars are excluded from L2 regularization.
_WEIGHT_FIELDS = ("hidden_w", "mean_w", "var_w")


@dataclass(frozen=True)
class HeadConfig:
    """Output-head parameterization, shared by all members of an ensemble."""

    mean_low: float = 0.0
    mean_high: float = 1.0
    sigma2_min: float = 1e-6
    sigma2_max: float = 1.0
    linear_mean: bool = False

    def __post_init__(self):
        if not self.sigma2_min > 0:
            raise ValueError("sigma2_min must be positive")
        if not self.sigma2_max > self.sigma2_min:
            raise ValueError("sigma2_max must exceed sigma2_min")
        if not self.linear_mean and not self.mean_high > self.mean_low:
            raise ValueError("mean_high must exceed mean_low")


@dataclass
class NetworkParams:
    """Weights and biases of one network. Arrays are float64 and owned."""

    hidden_w: np.ndarray  # (H, D)
    hidden_b: np.ndarray  # (H,)
    mean_w: np.ndarray    # (H,)
    mean_b: np.ndarray    # scalar ()
    var_w: np.ndarray     # (H,)
    var_b: np.ndarray     # scalar ()
    heads: HeadConfig = field(default_factory=HeadConfig)

    @property
    def hidden_width(self) -> int:
        return self.hidden_w.shape[0]

    @property
    def input_dim(self) -> int:
        return self.hidden_w.shape[1]

    def validate(self) -> None:
        h, d = self.hidden_w.shape
        if h < 1 or d < 1:
            raise ValueError(f"invalid dimensions H={h}, D={d}")
        expected = {
            "hidden_b": (h,), "mean_w": (h,), "mean_b": (),
            "var_w": (h,), "var_b": (),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        for name in _ARRAY_FIELDS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")


# Gradients share the parameter structure exactly.
NetworkGradient = NetworkParams


@dataclass(frozen=True)
class PredictiveParams:
    """Predicted Gaussian for one input: mean and variance in target units."""

    mu: float
    sigma2: float


@dataclass
class ForwardCache:
    """Intermediate values saved by ``forward`` for the backward pass."""

    x: np.ndarray       # (n, D)
    z: np.ndarray       # (n, H) hidden pre-activations
    h: np.ndarray       # (n, H)
    mean_sig: np.ndarray  # (n,) sigmoid of mean pre-activation (NaN if linear head)
    var_sig: np.ndarray   # (n,) sigmoid of variance pre-activation
    mu: np.ndarray      # (n,)
    sigma2: np.ndarray  # (n,)


@dataclass
class OptimizerState:
    """Adam moment estimates (unused but carried for SGD)."""

    first_moment: NetworkGradient
    second_moment: NetworkGradient
    step_count: int = 0


def tree_map(fn, *trees: NetworkParams) -> NetworkParams:
    """Apply ``fn`` elementwise across the array fields of parameter trees."""
    out = {name: fn(*(getattr(t, name) for t in trees)) for name in _ARRAY_FIELDS}
    return NetworkParams(**out, heads=trees[0].heads)


def zeros_like(params: NetworkParams) -> NetworkGradient:
    return tree_map(np.zeros_like, params)


def copy_params(params: NetworkParams) -> NetworkParams:
    return tree_map(np.copy, params)


def flatten(params: NetworkParams) -> np.ndarray:
    """Concatenate all parameters into one vector (field order is fixed)."""
    return np.concatenate([np.ravel(getattr(params, n)) for n in _ARRAY_FIELDS])


def unflatten(template: NetworkParams, vec: np.ndarray) -> NetworkParams:
    """Inverse of ``flatten`` against the shapes of ``template``."""
    out, off = {}, 0
    for name in _ARRAY_FIELDS:
        arr = getattr(template, name)
        out[name] = vec[off:off + arr.size].reshape(arr.shape).astype(np.float64)
        off += arr.size
    if off != vec.size:
        raise ValueError(f"vector has {vec.size} entries, expected {off}")
    return NetworkParams(**out, heads=template.heads)


def init_params(input_dim: int, hidden_width: int, rng: np.random.Generator,
                heads: HeadConfig | None = None) -> NetworkParams:
    """Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases."""
    heads = heads or HeadConfig()
    lim_hidden = np.sqrt(6.0 / (input_dim + hidden_width))
    lim_head = np.sqrt(6.0 / (hidden_width + 1))
    return NetworkParams(
        hidden_w=rng.uniform(-lim_hidden, lim_hidden, size=(hidden_width, input_dim)),
        hidden_b=np.zeros(hidden_width),
        mean_w=rng.uniform(-lim_head, lim_head, size=hidden_width),
        mean_b=np.zeros(()),
        var_w=rng.uniform(-lim_head, lim_head, size=hidden_width),
        var_b=np.zeros(()),
        heads=heads,
    )


def forward_batch(params: NetworkParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Evaluate the network on a batch of rows.

    Returns per-row ``mu``, ``sigma2`` and the cache for ``backward``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ValueError(
            f"input has shape {X.shape}, expected (n, {params.input_dim})")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input")
    hc = params.heads
    z = X @ params.hidden_w.T + params.hidden_b
    h = np.maximum(z, 0.0)
    a_mean = h @ params.mean_w + params.mean_b
    a_var = h @ params.var_w + params.var_b
    if hc.linear_mean:
        mean_sig = np.full_like(a_mean, np.nan)
        mu = a_mean
    else:
        mean_sig = expit(a_mean)
        mu = hc.mean_low + (hc.mean_high - hc.mean_low) * mean_sig
    var_sig = expit(a_var)
    sigma2 = hc.sigma2_min + (hc.sigma2_max - hc.sigma2_min) * var_sig
    cache = ForwardCache(x=X, z=z, h=h, mean_sig=mean_sig, var_sig=var_sig,
                         mu=mu, sigma2=sigma2)
    return mu, sigma2, cache


def forward(params: NetworkParams, x: np.ndarray) -> tuple[PredictiveParams, ForwardCache]:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D input, got shape {x.shape}")
    mu, sigma2, cache = forward_batch(params, x[None, :])
    return PredictiveParams(mu=float(mu[0]), sigma2=float(sigma2[0])), cache


def gaussian_nll(pred: PredictiveParams, y: float) -> float:
    """0.5*ln(2*pi*sigma2) + (y - mu)^2 / (2*sigma2)."""
    if not pred.sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {pred.sigma2}")
    return float(0.5 * np.log(2.0 * np.pi * pred.sigma2)
                 + (y - pred.mu) ** 2 / (2.0 * pred.sigma2))


def gaussian_nll_terms(mu: np.ndarray, sigma2: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized per-row Gaussian NLL."""
    mu, sigma2, y = (np.asarray(a, dtype=np.float64) for a in (mu, sigma2, y))
    if np.any(sigma2 <= 0):
        raise ValueError("sigma2 must be positive")
    return 0.5 * np.log(2.0 * np.pi * sigma2) + (y - mu) ** 2 / (2.0 * sigma2)


def gaussian_nll_gradients(mu: np.ndarray, sigma2: np.ndarray, y: np.ndarray
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Partials of the per-row NLL with respect to mu and sigma2."""
    mu, sigma2, y = (np.asarray(a, dtype=np.float64) for a in (mu, sigma2, y))
    r = mu - y
    d_mu = r / sigma2
    d_sigma2 = (sigma2 - r * r) / (2.0 * sigma2 * sigma2)
    return d_mu, d_sigma2


def _upstream_arrays(cache: ForwardCache, d_mu, d_sigma2) -> tuple[np.ndarray, np.ndarray]:
    n = cache.x.shape[0]
    d_mu = np.broadcast_to(np.asarray(d_mu, dtype=np.float64), (n,))
    d_sigma2 = np.broadcast_to(np.asarray(d_sigma2, dtype=np.float64), (n,))
    return d_mu, d_sigma2


def _head_chain(params: NetworkParams, cache: ForwardCache, d_mu, d_sigma2
                ) -> tuple[np.ndarray, np.ndarray]:
    """Per-row partials with respect to the two head pre-activations."""
    hc = params.heads
    d_mu, d_sigma2 = _upstream_arrays(cache, d_mu, d_sigma2)
    if hc.linear_mean:
        alpha = d_mu
    else:
        alpha = d_mu * (hc.mean_high - hc.mean_low) * cache.mean_sig * (1.0 - cache.mean_sig)
    beta = d_sigma2 * (hc.sigma2_max - hc.sigma2_min) * cache.var_sig * (1.0 - cache.var_sig)
    return alpha, beta


def backward(params: NetworkParams, cache: ForwardCache,
             upstream: tuple[np.ndarray, np.ndarray]) -> NetworkGradient:
    """Exact partials of ``sum_i (d_mu_i * mu_i + d_sigma2_i * sigma2_i)``.

    ``upstream`` holds the output cotangents ``(d_mu, d_sigma2)``, scalars
    or per-row arrays. Composing with ``gaussian_nll_gradients`` yields the
    NLL gradient. The cache must come from ``forward`` on the same params.
    """
    if cache.z.shape[1] != params.hidden_width or cache.x.shape[1] != params.input_dim:
        raise ValueError("cache shape does not match parameters (stale cache?)")
    alpha, beta = _head_chain(params, cache, *upstream)
    gate = cache.z > 0.0
    # (n, H) cotangent of the hidden pre-activation
    dz = (alpha[:, None] * params.mean_w[None, :]
          + beta[:, None] * params.var_w[None, :]) * gate
    return NetworkGradient(
        hidden_w=dz.T @ cache.x,
        hidden_b=dz.sum(axis=0),
        mean_w=cache.h.T @ alpha,
        mean_b=np.asarray(alpha.sum()),
        var_w=cache.h.T @ beta,
        var_b=np.asarray(beta.sum()),
        heads=params.heads,
    )


def input_gradient(params: NetworkParams, x: np.ndarray,
                   upstream: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Exact partials of the upstream-weighted outputs w.r.t. the input.

    Accepts a single vector (returns shape (D,)) or a batch of rows
    (returns one gradient row per input row).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    _, _, cache = forward_batch(params, X)
    alpha, beta = _head_chain(params, cache, *upstream)
    dz = (alpha[:, None] * params.mean_w[None, :]
          + beta[:, None] * params.var_w[None, :]) * (cache.z > 0.0)
    dx = dz @ params.hidden_w
    return dx[0] if single else dx


def init_optimizer_state(params: NetworkParams) -> OptimizerState:
    return OptimizerState(first_moment=zeros_like(params),
                          second_moment=zeros_like(params), step_count=0)


def optimizer_step(params: NetworkParams, grad: NetworkGradient,
                   state: OptimizerState, lr: float, l2: float = 0.0,
                   kind: str = "adam") -> tuple[NetworkParams, OptimizerState]:
    """One SGD or Adam update. L2 applies to weights only, not biases."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    if kind not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {kind!r}")
    for name in _ARRAY_FIELDS:
        if not np.all(np.isfinite(getattr(grad, name))):
            raise DivergenceError(f"non-finite gradient in {name}")

    def effective(name: str) -> np.ndarray:
        g = getattr(grad, name)
        if l2 and name in _WEIGHT_FIELDS:
            g = g + l2 * getattr(params, name)
        return g

    if kind == "sgd":
        new = {n: getattr(params, n) - lr * effective(n) for n in _ARRAY_FIELDS}
        new_state = OptimizerState(first_moment=state.first_moment,
                                   second_moment=state.second_moment,
                                   step_count=state.step_count + 1)
    else:
        t = state.step_count + 1
        c1 = 1.0 - ADAM_BETA1 ** t
        c2 = 1.0 - ADAM_BETA2 ** t
        new, m_new, v_new = {}, {}, {}
        for name in _ARRAY_FIELDS:
            g = effective(name)
            m = ADAM_BETA1 * getattr(state.first_moment, name) + (1.0 - ADAM_BETA1) * g
            v = ADAM_BETA2 * getattr(state.second_moment, name) + (1.0 - ADAM_BETA2) * g * g
            new[name] = getattr(params, name) - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
            m_new[name], v_new[name] = m, v
        new_state = OptimizerState(
            first_moment=NetworkGradient(**m_new, heads=params.heads),
            second_moment=NetworkGradient(**v_new, heads=params.heads),
            step_count=t,
        )
    return NetworkParams(**new, heads=params.heads), new_state
