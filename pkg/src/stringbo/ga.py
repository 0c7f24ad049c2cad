"""Genetic-algorithm acquisition maximizer with tournament selection.

Genotypes are token strings for character spaces and parse trees for grammar
spaces. Scores are maximized; the loop ends once the best score of the newest
population regresses below the best seen so far, or after a bounded run of
exactly-tied generations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .grammar import ParseTree, crossover_trees, derive, mutate_tree
from .kernels import Tokens, as_tokens
from .spaces import (
    CandidateSet,
    GrammarConstrained,
    LocallyConstrained,
    StringSpace,
    Unconstrained,
)


@dataclass(frozen=True)
class GaConfig:
    population: int = 100
    tournament_fraction: float = 0.5
    crossover_prob: float = 0.75
    mutation_prob: float = 0.1
    max_generations: int = 100
    patience: int = 10

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        for p in (self.tournament_fraction, self.crossover_prob, self.mutation_prob):
            if not (0.0 <= p <= 1.0):
                raise ValueError("probabilities must lie in [0, 1]")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class Individual:
    genotype: Tokens | ParseTree
    score: float | None = None

    @property
    def string(self) -> Tokens:
        if isinstance(self.genotype, ParseTree):
            return derive(self.genotype)
        return self.genotype


def mutate_string(s: Tokens, space: StringSpace, rng: np.random.Generator) -> Tokens:
    """Redraw one uniformly chosen position (or block, for block-structured
    spaces) from its permitted set; the redraw may reproduce the original."""
    s = as_tokens(s)
    if isinstance(space, LocallyConstrained):
        if space.block_sets is not None:
            b = int(rng.integers(0, len(space.block_sets)))
            allowed = space.block_sets[b]
            block = allowed[int(rng.integers(0, len(allowed)))]
            w = space.block_size
            return s[: b * w] + block + s[(b + 1) * w :]
        i = int(rng.integers(0, len(s)))
        ps = space.position_sets[i]
        return s[:i] + (ps[int(rng.integers(0, len(ps)))],) + s[i + 1 :]
    if isinstance(space, Unconstrained):
        i = int(rng.integers(0, len(s)))
        toks = space.alphabet.tokens
        return s[:i] + (toks[int(rng.integers(0, len(toks)))],) + s[i + 1 :]
    raise ValueError(f"string mutation undefined for {type(space).__name__}")


def crossover_strings(
    s1: Tokens, s2: Tokens, rng: np.random.Generator, space: StringSpace | None = None
) -> tuple[Tokens, Tokens]:
    """Swap prefixes at a uniformly drawn point; positions never move, so
    per-position constraints are preserved. Block-structured spaces restrict
    the point to block boundaries."""
    s1, s2 = as_tokens(s1), as_tokens(s2)
    block = 1
    if isinstance(space, LocallyConstrained) and space.block_sets is not None:
        block = space.block_size
    if isinstance(space, LocallyConstrained) and len(s1) != len(s2):
        raise ValueError("crossover in fixed-length spaces needs equal lengths")
    units = min(len(s1), len(s2)) // block
    if units < 2:
        return s1, s2
    point = int(rng.integers(1, units)) * block
    return s2[:point] + s1[point:], s1[:point] + s2[point:]


def tournament(pop: Sequence[Individual], p_t: float, rng: np.random.Generator) -> Individual:
    """Best-scored member of ceil(p_t * N) draws with replacement; ties break
    uniformly at random among the tied entrants.

    Random tie-breaking matters on plateaued score landscapes: a deterministic
    rule (e.g. earliest index) returns the same individual from every
    tournament once scores tie, collapsing population diversity within a
    generation and starving crossover of distinct parents.
    """
    if not pop:
        raise ValueError("tournament needs a nonempty population")
    k = max(1, math.ceil(p_t * len(pop)))
    idx = sorted(set(int(i) for i in rng.integers(0, len(pop), size=k)))
    top = max(pop[i].score for i in idx)
    winners = [i for i in idx if pop[i].score == top]
    return pop[winners[int(rng.integers(0, len(winners)))]]


def _perturb(genotype, space, cfg_sampler, rng):
    if isinstance(genotype, ParseTree):
        return mutate_tree(genotype, space.grammar, space.sampler, rng)
    return mutate_string(genotype, space, rng)


def _cross(g1, g2, space, rng):
    if isinstance(g1, ParseTree):
        c1, c2, _ = crossover_trees(g1, g2, rng, max_depth=space.sampler.max_depth)
        return c1, c2
    return crossover_strings(g1, g2, rng, space)


def evolve(
    pop: Sequence[Individual],
    cfg: GaConfig,
    space: StringSpace,
    rng: np.random.Generator,
) -> list[Individual]:
    """One generation: tournament-select parents, crossover with probability
    p_c, mutate offspring with probability p_m, until N new members exist."""
    N = len(pop)
    new: list[Individual] = []
    while len(new) < N:
        s1 = tournament(pop, cfg.tournament_fraction, rng).genotype
        if rng.random() < cfg.crossover_prob:
            s2 = tournament(pop, cfg.tournament_fraction, rng).genotype
            s1, s2 = _cross(s1, s2, space, rng)
            if rng.random() < cfg.mutation_prob:
                s1 = _perturb(s1, space, None, rng)
            if rng.random() < cfg.mutation_prob:
                s2 = _perturb(s2, space, None, rng)
            new.append(Individual(genotype=s1))
            new.append(Individual(genotype=s2))
        else:
            if rng.random() < cfg.mutation_prob:
                s1 = _perturb(s1, space, None, rng)
            new.append(Individual(genotype=s1))
    return new[:N]


def _score_all(pop, score, batch_score):
    strings = [ind.string for ind in pop]
    if batch_score is not None:
        values = batch_score(strings)
    else:
        values = [score(s) for s in strings]
    for ind, v in zip(pop, values):
        ind.score = float(v)


def maximize(
    score: Callable[[Tokens], float],
    space: StringSpace,
    cfg: GaConfig,
    rng: np.random.Generator,
    batch_score: Callable[[list[Tokens]], Sequence[float]] | None = None,
    return_population: bool = False,
):
    """Run the GA and return (best_string, best_score); the best individual is
    tracked across all populations, including the final one.

    A generation whose best falls strictly below the best score seen so far
    ends the search at once; an exact plateau (common on piecewise-constant
    scores) keeps evolving for up to ``cfg.patience`` consecutive stalled
    generations before giving up, bounded overall by the generation cap.
    """
    if isinstance(space, CandidateSet):
        raise ValueError("GA operators are undefined on candidate sets; use random search")
    pop = [Individual(genotype=g) for g in space.sample_genotypes(rng, cfg.population)]
    _score_all(pop, score, batch_score)
    best = max(pop, key=lambda ind: ind.score)
    stall = 0
    for _ in range(cfg.max_generations):
        pop = evolve(pop, cfg, space, rng)
        _score_all(pop, score, batch_score)
        gen_best = max(pop, key=lambda ind: ind.score)
        if gen_best.score > best.score:
            best = gen_best
            stall = 0
        else:
            stall += 1
            if gen_best.score < best.score or stall >= cfg.patience:
                break
    if return_population:
        return best.string, best.score, pop
    return best.string, best.score


def random_search_maximize(
    score: Callable[[Tokens], float],
    space: StringSpace,
    samples: int,
    rng: np.random.Generator,
    batch_score: Callable[[list[Tokens]], Sequence[float]] | None = None,
    return_samples: bool = False,
):
    """Score ``samples`` space draws and return the argmax (first on ties)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    strings = space.sample(rng, samples)
    if batch_score is not None:
        values = np.asarray(batch_score(strings), dtype=float)
    else:
        values = np.array([score(s) for s in strings], dtype=float)
    i = int(np.argmax(values))
    if return_samples:
        return strings[i], float(values[i]), strings
    return strings[i], float(values[i])
