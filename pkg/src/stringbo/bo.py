"""The Bayesian-optimization loop over string spaces.

Each step refits the GP surrogate by marginal likelihood (warm-started from
the previous step), maximizes expected improvement with the configured
optimizer, evaluates the winner and appends to the trace. Per-step overhead
excludes objective evaluation time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import ga as ga_mod
from .acquisition import AcquisitionContext, expected_improvement_batch
from .ga import GaConfig
from .gp import Dataset, GpModel, fit
from .kernels import KernelParams, Tokens, as_tokens
from .spaces import CandidateSet, GrammarConstrained, StringSpace


@dataclass(frozen=True)
class BoConfig:
    budget: int = 10
    init_count: int | None = None  # None -> min(5, alphabet size)
    kernel_kind: str = "ssk"
    kernel_init: KernelParams = field(default_factory=KernelParams)
    ga: GaConfig = field(default_factory=GaConfig)
    acquisition_optimizer: str = "ga"  # ga | rs | subsample
    rs_samples: int = 10_000
    subsample_count: int = 100
    fit_restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.init_count is not None and self.init_count < 1:
            raise ValueError("init_count must be >= 1")
        if self.acquisition_optimizer not in ("ga", "rs", "subsample"):
            raise ValueError(f"unknown optimizer {self.acquisition_optimizer!r}")


@dataclass
class StepRecord:
    step: int
    string: Tokens
    value: float
    best_so_far: float
    params: dict | None  # surrogate params after the fit; None for init rows
    overhead_s: float


@dataclass
class BoTrace:
    seed: int
    records: list[StepRecord] = field(default_factory=list)
    error: str | None = None

    @property
    def best_so_far(self) -> np.ndarray:
        return np.array([r.best_so_far for r in self.records])


class BoRunError(RuntimeError):
    """Objective failure; carries the trace collected so far."""

    def __init__(self, message: str, trace: BoTrace):
        super().__init__(message)
        self.trace = trace


def default_init_count(space: StringSpace) -> int:
    return min(5, space.alphabet_size())


def _model_params(model: GpModel) -> dict:
    return {
        "lambda_m": model.kernel_params.match_decay,
        "lambda_g": model.kernel_params.gap_decay,
        "output_scale": model.output_scale,
        "noise_var": model.noise_variance,
    }


def _propose(space, cfg, ctx, data, rng):
    """Maximize EI with the configured optimizer; returns the proposal plus a
    pool of scored alternates for duplicate replacement."""

    def batch_ei(strings):
        return expected_improvement_batch(ctx, strings)

    if cfg.acquisition_optimizer == "ga":
        best, _, pop = ga_mod.maximize(
            None, space, cfg.ga, rng, batch_score=batch_ei, return_population=True
        )
        pool = [ind.string for ind in pop]
        return best, pool
    if cfg.acquisition_optimizer == "rs":
        best, _, pool = ga_mod.random_search_maximize(
            None, space, cfg.rs_samples, rng, batch_score=batch_ei, return_samples=True
        )
        return best, pool
    # candidate subsampling: draw unseen candidates without replacement
    if not isinstance(space, CandidateSet):
        raise ValueError("the subsample optimizer requires a candidate set")
    unseen = [s for s in space.strings if s not in data]
    if not unseen:
        unseen = list(space.strings)
    count = min(cfg.subsample_count, len(unseen))
    idx = rng.choice(len(unseen), size=count, replace=False)
    pool = [unseen[int(i)] for i in idx]
    values = batch_ei(pool)
    return pool[int(np.argmax(values))], pool


def run(objective: Callable[[Tokens], float], space: StringSpace, cfg: BoConfig) -> BoTrace:
    seq = np.random.SeedSequence(cfg.seed)
    init_rng, opt_rng, fit_rng, fb_rng = [
        np.random.default_rng(s) for s in seq.spawn(4)
    ]
    trace = BoTrace(seed=cfg.seed)
    data = Dataset()
    best = -np.inf

    def evaluate(s: Tokens, step: int, params: dict | None, overhead: float) -> None:
        nonlocal best
        try:
            y = float(objective(s))
        except Exception as exc:
            trace.error = str(exc)
            raise BoRunError(f"objective failed on step {step}: {exc}", trace) from exc
        data.add(s, y)
        best = max(best, y)
        trace.records.append(
            StepRecord(
                step=step,
                string=s,
                value=y,
                best_so_far=best,
                params=params,
                overhead_s=overhead,
            )
        )

    init_count = cfg.init_count or default_init_count(space)
    for i, s in enumerate(space.sample(init_rng, init_count), start=1):
        evaluate(s, i, None, 0.0)

    warm = cfg.kernel_init
    warm_scale, warm_noise, warm_ls = 1.0, 1e-2, 1.0
    for step in range(1, cfg.budget + 1):
        t0 = time.perf_counter()
        if len(data) < 2:
            # degenerate space; fall back to an unfitted prior-scale model
            model = GpModel.build(
                data,
                kernel_kind=cfg.kernel_kind,
                kernel_params=warm,
                output_scale=warm_scale,
                noise_variance=warm_noise,
                ngram_lengthscale=warm_ls,
            )
        else:
                model = fit(
                data,
                kernel_kind=cfg.kernel_kind,
                init=warm,
                restarts=cfg.fit_restarts,
                rng=fit_rng,
                init_output_scale=warm_scale,
                init_noise=warm_noise,
                init_lengthscale=warm_ls,
            )
        warm = model.kernel_params
        warm_scale, warm_noise = model.output_scale, model.noise_variance
        warm_ls = model.ngram_lengthscale
        ctx = AcquisitionContext.from_model(model)
        proposal, pool = _propose(space, cfg, ctx, data, opt_rng)
        if proposal in data:
            unseen = [s for s in pool if s not in data]
            if unseen:
                ei = expected_improvement_batch(ctx, unseen)
                proposal = unseen[int(np.argmax(ei))]
            else:
                proposal = space.sample(fb_rng, 1)[0]
        overhead = time.perf_counter() - t0
        evaluate(proposal, init_count + step, _model_params(model), overhead)
    return trace


def run_replicated(
    objective,
    space: StringSpace,
    cfg: BoConfig,
    seeds: Sequence[int],
    objective_factory: Callable[[int], Callable[[Tokens], float]] | None = None,
) -> list[BoTrace]:
    """One independent run per seed. ``objective_factory`` builds a per-seed
    objective (needed for noisy objectives to stay seed-deterministic);
    otherwise ``objective`` is shared. Failed seeds keep their partial trace
    with the error recorded."""
    if not seeds:
        raise ValueError("seed list must be nonempty")
    traces = []
    for seed in seeds:
        fn = objective_factory(seed) if objective_factory is not None else objective
        try:
            traces.append(run(fn, space, replace(cfg, seed=seed)))
        except BoRunError as exc:
            traces.append(exc.trace)
    return traces
