"""Built-in benchmark tasks: synthetic pattern counting, symbolic regression,
and a synthetic codon-space task."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .bo import BoConfig
from .kernels import KernelParams, Tokens, as_tokens
from .objectives import PatternSpec, SymRegSpec, count_pattern, max_pattern_count, symreg_score
from .spaces import GrammarConstrained, StringSpace, Unconstrained, protein_space
from .grammar import ARITHMETIC_GRAMMAR, SamplerConfig


@dataclass(frozen=True)
class Task:
    name: str
    space: StringSpace
    steps: int
    # objective_factory(rng) -> callable(Tokens) -> float
    objective_factory: Callable[[np.random.Generator], Callable[[Tokens], float]]
    # (min, max) of the noise-free objective, for [0, 100] standardization
    value_range: tuple[float, float] | None = None
    kernel_init: KernelParams = field(default_factory=KernelParams)


def _pattern_task(name, alphabet, length, spec: PatternSpec, steps) -> Task:
    space = Unconstrained.fixed_length(alphabet, length)
    noise_free = replace(spec, noise_sd=None)
    fmax = max_pattern_count(length, list(alphabet), noise_free)

    def factory(rng):
        return lambda s: count_pattern(s, spec, rng)

    return Task(
        name=name,
        space=space,
        steps=steps,
        objective_factory=factory,
        value_range=(0.0, float(fmax)),
    )


def _symreg_task() -> Task:
    # depth cap 10 keeps expressions short enough for the kernel to stay
    # discriminative; deeper spaces are dominated by long constant-valued junk
    space = GrammarConstrained(
        grammar=ARITHMETIC_GRAMMAR, sampler=SamplerConfig(max_depth=10)
    )
    spec = SymRegSpec()

    def factory(rng):
        return lambda s: symreg_score(s, spec)

    return Task(name="symreg", space=space, steps=50, objective_factory=factory)


def _protein_task() -> Task:
    # synthetic stand-in for an external folding-energy scorer: maximize the
    # number of 'a' bases across the gene's codons
    space = protein_space("TIKENIFGVS", representation="codon")

    def objective(s: Tokens) -> float:
        return float(sum(tok.count("a") for tok in as_tokens(s)))

    fmax = sum(max(c.count("a") for c in ps) for ps in space.position_sets)
    fmin = sum(min(c.count("a") for c in ps) for ps in space.position_sets)

    def factory(rng):
        return objective

    return Task(
        name="protein-tikenifgvs",
        space=space,
        steps=20,
        objective_factory=factory,
        value_range=(float(fmin), float(fmax)),
    )


_SQRT2 = math.sqrt(2.0)

TASKS: dict[str, Task] = {
    t.name: t
    for t in [
        _pattern_task("count-101-bin20", "01", 20, PatternSpec(("1", "0", "1")), 10),
        _pattern_task(
            "count-101-nooverlap-bin20",
            "01",
            20,
            PatternSpec(("1", "0", "1"), mode="non_overlapping"),
            15,
        ),
        _pattern_task("count-10qq1-bin20", "01", 20, PatternSpec(tuple("10??1")), 25),
        _pattern_task(
            "count-101-window-bin30",
            "01",
            30,
            PatternSpec(("1", "0", "1"), window=(0, 15)),
            40,
        ),
        _pattern_task(
            "count-101-noisy-bin20", "01", 20, PatternSpec(("1", "0", "1"), noise_sd=_SQRT2), 25
        ),
        _pattern_task("count-123-quat30", "0123", 30, PatternSpec(("1", "2", "3")), 20),
        _pattern_task("count-01qq4-quin20", "01234", 20, PatternSpec(tuple("01??4")), 50),
        _symreg_task(),
        _protein_task(),
    ]
}


def standardized_score(task: Task, value: float) -> float:
    """Map a raw objective value to the task's [0, 100] scale."""
    if task.value_range is None:
        raise ValueError(f"task {task.name} has no standardization range")
    lo, hi = task.value_range
    return 100.0 * (value - lo) / (hi - lo)


def task_config(task: Task, optimizer: str = "ga", seed: int = 0) -> BoConfig:
    return BoConfig(
        budget=task.steps,
        kernel_init=task.kernel_init,
        acquisition_optimizer=optimizer,
        seed=seed,
    )
