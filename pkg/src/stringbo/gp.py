"""Gaussian-process regression over strings.

The surrogate covariance is ``output_scale * K + noise_variance * I`` where K
is the normalized (split) SSK Gram matrix, or one of the baseline kernels.
Hyperparameters are fitted by maximizing log marginal likelihood with analytic
gradients; decays are optimized directly, scale parameters in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .kernels import (
    KernelParams,
    Tokens,
    as_tokens,
    cross_gram,
    gram,
    gram_with_grads,
    ngram_feature_kernel,
    onehot_linear_kernel,
    self_kernel_cache,
)

LOG2PI = math.log(2.0 * math.pi)

DECAY_BOUNDS = (0.05, 0.99)
LOG_SCALE_BOUNDS = (math.log(1e-6), math.log(1e2))
LOG_LENGTHSCALE_BOUNDS = (math.log(1e-2), math.log(1e3))

JITTER_INIT = 1e-8
JITTER_MAX = 1e-2


class Dataset:
    """Ordered (string, value) observations; duplicate strings are merged by
    averaging their observed values at insertion."""

    def __init__(self):
        self._index: dict[Tokens, int] = {}
        self.strings: list[Tokens] = []
        self._sums: list[float] = []
        self._counts: list[int] = []

    @classmethod
    def from_pairs(cls, pairs) -> "Dataset":
        ds = cls()
        for s, y in pairs:
            ds.add(s, y)
        return ds

    def add(self, s: Tokens, y: float) -> None:
        s = as_tokens(s)
        if s in self._index:
            i = self._index[s]
            self._sums[i] += y
            self._counts[i] += 1
        else:
            self._index[s] = len(self.strings)
            self.strings.append(s)
            self._sums.append(y)
            self._counts.append(1)

    def __contains__(self, s) -> bool:
        return as_tokens(s) in self._index

    def __len__(self) -> int:
        return len(self.strings)

    @property
    def values(self) -> np.ndarray:
        return np.array([s / c for s, c in zip(self._sums, self._counts)])


@dataclass
class Posterior:
    mean: float
    variance: float


@dataclass
class GpModel:
    """Immutable fitted GP; build() computes and caches the Cholesky factor."""

    data: Dataset
    kernel_kind: str = "ssk"
    kernel_params: KernelParams = field(default_factory=KernelParams)
    output_scale: float = 1.0
    noise_variance: float = 0.0
    ngram_lengthscale: float = 1.0
    y_mean: float = 0.0
    y_std: float = 1.0
    chol: np.ndarray | None = None
    _K: np.ndarray | None = None
    _alpha: np.ndarray | None = None
    _ref_self: list[np.ndarray] | None = None

    @classmethod
    def build(cls, data: Dataset, **kw) -> "GpModel":
        model = cls(data=data, **kw)
        if len(data) > 0:
            K = model._train_gram()
            C, L = _regularized_cholesky(
                model.output_scale * K, model.noise_variance, len(data)
            )
            z = model._z()
            model.chol = L
            model._K = K
            model._alpha = sla.cho_solve((L, True), z)
        if model.kernel_kind == "ssk" and len(data) > 0:
            model._ref_self = self_kernel_cache(data.strings, model.kernel_params)
        return model

    def _z(self) -> np.ndarray:
        return (self.data.values - self.y_mean) / self.y_std

    def _train_gram(self) -> np.ndarray:
        return gram(
            self.data.strings,
            self.kernel_params,
            self.kernel_kind,
            max_n=self.kernel_params.max_order,
            lengthscale=self.ngram_lengthscale,
        ).values

    def _cross(self, queries: list[Tokens]) -> np.ndarray:
        refs = self.data.strings
        if self.kernel_kind == "ssk":
            return cross_gram(queries, refs, self.kernel_params, ref_self=self._ref_self)
        out = np.empty((len(queries), len(refs)))
        for i, q in enumerate(queries):
            for j, r in enumerate(refs):
                if self.kernel_kind == "ngram":
                    out[i, j] = ngram_feature_kernel(
                        q, r, self.kernel_params.max_order, self.ngram_lengthscale
                    )
                else:
                    out[i, j] = onehot_linear_kernel(q, r)
        return out

    def _self_value(self, q: Tokens) -> float:
        if self.kernel_kind == "ssk":
            return float(self.kernel_params.splits)
        if self.kernel_kind == "ngram":
            return 1.0
        return float(len(q))

    def predict_batch(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and variances for a batch of query strings."""
        queries = [as_tokens(q) for q in queries]
        kself = np.array([self._self_value(q) for q in queries])
        prior_var = self.output_scale * kself * self.y_std**2
        if len(self.data) == 0:
            return np.full(len(queries), self.y_mean), prior_var
        kq = self.output_scale * self._cross(queries)
        mean_z = kq @ self._alpha
        v = sla.solve_triangular(self.chol, kq.T, lower=True)
        var_z = self.output_scale * kself - np.sum(v * v, axis=0)
        var = np.clip(var_z, 0.0, self.output_scale * kself) * self.y_std**2
        return self.y_mean + self.y_std * mean_z, var


def predict(model: GpModel, query: Tokens) -> Posterior:
    means, variances = model.predict_batch([query])
    return Posterior(mean=float(means[0]), variance=float(variances[0]))


def _regularized_cholesky(K_scaled: np.ndarray, noise: float, t: int):
    """Cholesky of K + noise*I with an escalating jitter ladder."""
    base = np.mean(np.diag(K_scaled)) + noise
    jitter = JITTER_INIT * base
    C0 = K_scaled + noise * np.eye(t)
    while True:
        C = C0 + jitter * np.eye(t)
        try:
            L = sla.cholesky(C, lower=True)
            return C, L
        except sla.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX * base:
                raise np.linalg.LinAlgError(
                    "covariance not positive definite after maximum jitter"
                )


def log_marginal_likelihood(model: GpModel) -> tuple[float, dict[str, float]]:
    """Evidence of the (standardized) observations and its parameter gradients.

    Gradients are with respect to the free parameters: the two decays (SSK) or
    the lengthscale (ngram), plus output_scale and noise_variance (both in
    their natural, not log, parameterization).
    """
    t = len(model.data)
    if t == 0:
        raise ValueError("log marginal likelihood needs at least one observation")
    z = model._z()
    grads_K: dict[str, np.ndarray] = {}
    if model.kernel_kind == "ssk":
        K, dKm, dKg = gram_with_grads(model.data.strings, model.kernel_params)
        grads_K["match_decay"] = model.output_scale * dKm
        grads_K["gap_decay"] = model.output_scale * dKg
    elif model.kernel_kind == "ngram":
        K = model._train_gram()
        # dK/d ls for SE on fixed features: K * d^2 / ls^3, with d^2 = -2 ls^2 log K
        ls = model.ngram_lengthscale
        with np.errstate(divide="ignore"):
            logK = np.where(K > 0, np.log(np.maximum(K, 1e-300)), 0.0)
        grads_K["lengthscale"] = model.output_scale * K * (-2.0 * logK) / ls
    else:
        K = model._train_gram()
    C, L = _regularized_cholesky(model.output_scale * K, model.noise_variance, t)
    alpha = sla.cho_solve((L, True), z)
    value = -0.5 * float(z @ alpha) - float(np.sum(np.log(np.diag(L)))) - 0.5 * t * LOG2PI
    Cinv = sla.cho_solve((L, True), np.eye(t))
    A = np.outer(alpha, alpha) - Cinv
    grads = {name: 0.5 * float(np.sum(A * dC)) for name, dC in grads_K.items()}
    grads["output_scale"] = 0.5 * float(np.sum(A * K))
    grads["noise_variance"] = 0.5 * float(np.trace(A))
    return value, grads


def _theta_names(kernel_kind: str) -> list[str]:
    if kernel_kind == "ssk":
        return ["match_decay", "gap_decay", "log_output_scale", "log_noise"]
    if kernel_kind == "ngram":
        return ["log_lengthscale", "log_output_scale", "log_noise"]
    if kernel_kind == "onehot":
        return ["log_output_scale", "log_noise"]
    raise ValueError(f"unknown kernel kind {kernel_kind!r}")


def _theta_bounds(kernel_kind: str) -> list[tuple[float, float]]:
    bounds = []
    for name in _theta_names(kernel_kind):
        if name in ("match_decay", "gap_decay"):
            bounds.append(DECAY_BOUNDS)
        elif name == "log_lengthscale":
            bounds.append(LOG_LENGTHSCALE_BOUNDS)
        else:
            bounds.append(LOG_SCALE_BOUNDS)
    return bounds


def _model_from_theta(theta, names, data, kernel_kind, base_params, y_mean, y_std):
    kw = dict(zip(names, theta))
    params = base_params
    if kernel_kind == "ssk":
        params = replace(
            base_params, match_decay=kw["match_decay"], gap_decay=kw["gap_decay"]
        )
    return GpModel(
        data=data,
        kernel_kind=kernel_kind,
        kernel_params=params,
        output_scale=math.exp(kw["log_output_scale"]),
        noise_variance=math.exp(kw["log_noise"]),
        ngram_lengthscale=math.exp(kw.get("log_lengthscale", 0.0)),
        y_mean=y_mean,
        y_std=y_std,
    )


def fit(
    data: Dataset,
    kernel_kind: str = "ssk",
    init: KernelParams | None = None,
    restarts: int = 5,
    rng: np.random.Generator | None = None,
    init_output_scale: float = 1.0,
    init_noise: float = 1e-2,
    init_lengthscale: float = 1.0,
) -> GpModel:
    """Maximize log marginal likelihood over kernel and scale parameters.

    One optimization run is warm-started from ``init``; the remaining
    ``restarts - 1`` start from random points within the bounds. Observations
    are standardized internally; predictions are reported on the original
    scale.
    """
    if len(data) < 2:
        raise ValueError("fit needs at least 2 observations")
    if init is None:
        init = KernelParams()
    if rng is None:
        rng = np.random.default_rng(0)
    y = data.values
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if y_std < 1e-12:
        y_std = 1.0

    names = _theta_names(kernel_kind)
    bounds = _theta_bounds(kernel_kind)

    def theta0_warm():
        kw = {
            "match_decay": float(np.clip(init.match_decay, *DECAY_BOUNDS)),
            "gap_decay": float(np.clip(init.gap_decay, *DECAY_BOUNDS)),
            "log_lengthscale": math.log(init_lengthscale),
            "log_output_scale": math.log(init_output_scale),
            "log_noise": math.log(init_noise),
        }
        return np.array([kw[n] for n in names])

    def negloglik(theta):
        model = _model_from_theta(theta, names, data, kernel_kind, init, y_mean, y_std)
        try:
            value, grads = log_marginal_likelihood(model)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros(len(theta))
        g = np.zeros(len(theta))
        for i, name in enumerate(names):
            if name == "log_output_scale":
                g[i] = grads["output_scale"] * model.output_scale
            elif name == "log_noise":
                g[i] = grads["noise_variance"] * model.noise_variance
            elif name == "log_lengthscale":
                g[i] = grads["lengthscale"] * model.ngram_lengthscale
            else:
                g[i] = grads[name]
        if not np.isfinite(value):
            return np.inf, np.zeros(len(theta))
        return -value, -g

    starts = [theta0_warm()]
    for _ in range(max(restarts - 1, 0)):
        starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))

    best_theta = None
    best_val = np.inf
    for theta0 in starts:
        f0, _ = negloglik(theta0)
        if f0 < best_val:
            best_val, best_theta = f0, theta0
        res = optimize.minimize(
            negloglik, theta0, jac=True, method="L-BFGS-B", bounds=bounds
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta = res.fun, res.x
    if best_theta is None or not np.isfinite(best_val):
        raise RuntimeError("likelihood non-finite at every restart")
    model = _model_from_theta(best_theta, names, data, kernel_kind, init, y_mean, y_std)
    return GpModel.build(
        data=data,
        kernel_kind=kernel_kind,
        kernel_params=model.kernel_params,
        output_scale=model.output_scale,
        noise_variance=model.noise_variance,
        ngram_lengthscale=model.ngram_lengthscale,
        y_mean=y_mean,
        y_std=y_std,
    )
