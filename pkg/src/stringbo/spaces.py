"""String-space regimes: validity checking, seeded sampling, codon spaces.

Four regimes are supported: unconstrained strings over an alphabet,
locally constrained fixed-length strings with per-position symbol sets,
grammar-constrained spaces (delegating to the grammar module), and explicit
candidate sets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .grammar import Grammar, ParseTree, SamplerConfig, derive, sample_tree
from .kernels import Tokens, as_tokens


@dataclass(frozen=True)
class Alphabet:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("alphabet must be nonempty")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("alphabet tokens must be distinct")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self.tokens


class StringSpace:
    """Base interface: validity, seeded sampling and genotype handling."""

    def is_valid(self, s: Tokens) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> list[Tokens]:
        raise NotImplementedError

    def sample_genotypes(self, rng: np.random.Generator, count: int):
        return self.sample(rng, count)

    @staticmethod
    def genotype_string(genotype) -> Tokens:
        if isinstance(genotype, ParseTree):
            return derive(genotype)
        return genotype

    def alphabet_size(self) -> int:
        raise NotImplementedError

    def size(self) -> float:
        """Number of member strings (may be inf for unbounded spaces)."""
        raise NotImplementedError

    def enumerate(self) -> Iterator[Tokens]:
        raise NotImplementedError


@dataclass(frozen=True)
class Unconstrained(StringSpace):
    alphabet: Alphabet
    length_range: tuple[int, int]

    def __post_init__(self):
        lo, hi = self.length_range
        if not (1 <= lo <= hi):
            raise ValueError("length_range must satisfy 1 <= min <= max")

    @classmethod
    def fixed_length(cls, alphabet: Iterable[str], length: int) -> "Unconstrained":
        return cls(Alphabet(tuple(alphabet)), (length, length))

    def is_valid(self, s: Tokens) -> bool:
        s = as_tokens(s)
        lo, hi = self.length_range
        return lo <= len(s) <= hi and all(t in self.alphabet for t in s)

    def sample(self, rng, count):
        lo, hi = self.length_range
        toks = self.alphabet.tokens
        out = []
        for _ in range(count):
            length = int(rng.integers(lo, hi + 1))
            out.append(tuple(toks[i] for i in rng.integers(0, len(toks), size=length)))
        return out

    def alphabet_size(self):
        return len(self.alphabet)

    def size(self):
        lo, hi = self.length_range
        return sum(len(self.alphabet) ** L for L in range(lo, hi + 1))

    def enumerate(self):
        lo, hi = self.length_range
        for L in range(lo, hi + 1):
            for combo in itertools.product(self.alphabet.tokens, repeat=L):
                yield combo


@dataclass(frozen=True)
class LocallyConstrained(StringSpace):
    """Fixed-length space where position i draws from its own set.

    When ``block_sets`` is given, positions are additionally grouped into
    fixed-width blocks (e.g. codons over bases) and validity/perturbation is
    enforced at block granularity.
    """

    position_sets: tuple[tuple[str, ...], ...]
    block_size: int = 1
    block_sets: tuple[tuple[Tokens, ...], ...] | None = None

    def __post_init__(self):
        if not self.position_sets:
            raise ValueError("locally constrained space needs at least one position")
        for i, ps in enumerate(self.position_sets):
            if not ps:
                raise ValueError(f"position {i} has an empty permitted set")
        if self.block_sets is not None:
            if len(self.position_sets) != self.block_size * len(self.block_sets):
                raise ValueError("block structure does not cover the string length")

    @property
    def length(self):
        return len(self.position_sets)

    def is_valid(self, s: Tokens) -> bool:
        s = as_tokens(s)
        if len(s) != self.length:
            return False
        if any(tok not in ps for tok, ps in zip(s, self.position_sets)):
            return False
        if self.block_sets is not None:
            w = self.block_size
            for b, allowed in enumerate(self.block_sets):
                if s[b * w : (b + 1) * w] not in allowed:
                    return False
        return True

    def sample(self, rng, count):
        out = []
        for _ in range(count):
            if self.block_sets is not None:
                s: tuple[str, ...] = ()
                for allowed in self.block_sets:
                    s += allowed[int(rng.integers(0, len(allowed)))]
                out.append(s)
            else:
                out.append(
                    tuple(ps[int(rng.integers(0, len(ps)))] for ps in self.position_sets)
                )
        return out

    def alphabet_size(self):
        union = set()
        for ps in self.position_sets:
            union.update(ps)
        return len(union)

    def size(self):
        if self.block_sets is not None:
            return math.prod(len(b) for b in self.block_sets)
        return math.prod(len(ps) for ps in self.position_sets)

    def enumerate(self):
        if self.block_sets is not None:
            for blocks in itertools.product(*self.block_sets):
                yield tuple(itertools.chain.from_iterable(blocks))
        else:
            for combo in itertools.product(*self.position_sets):
                yield combo


@dataclass(frozen=True)
class GrammarConstrained(StringSpace):
    grammar: Grammar
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def is_valid(self, s) -> bool:
        # Strings produced by this artifact always travel with their parse
        # trees; structural membership is what we can check here.
        if isinstance(s, ParseTree):
            return s.symbol == self.grammar.start
        s = as_tokens(s)
        return len(s) > 0 and all(t in self.grammar.terminals for t in s)

    def sample(self, rng, count):
        return [derive(t) for t in self.sample_genotypes(rng, count)]

    def sample_genotypes(self, rng, count):
        return [sample_tree(self.grammar, self.sampler, rng) for _ in range(count)]

    def alphabet_size(self):
        return len(self.grammar.terminals)

    def size(self):
        return math.inf


@dataclass(frozen=True)
class CandidateSet(StringSpace):
    strings: tuple[Tokens, ...]

    def __post_init__(self):
        if not self.strings:
            raise ValueError("candidate set must be nonempty")

    @classmethod
    def from_iterable(cls, strings: Iterable) -> "CandidateSet":
        seen = dict.fromkeys(as_tokens(s) for s in strings)
        return cls(tuple(seen))

    def is_valid(self, s) -> bool:
        return as_tokens(s) in set(self.strings)

    def sample(self, rng, count):
        n = len(self.strings)
        if count <= n:
            idx = rng.choice(n, size=count, replace=False)
        else:
            idx = rng.choice(n, size=count, replace=True)
        return [self.strings[int(i)] for i in idx]

    def alphabet_size(self):
        union = set()
        for s in self.strings:
            union.update(s)
        return len(union)

    def size(self):
        return len(self.strings)

    def enumerate(self):
        return iter(self.strings)


def is_valid(space: StringSpace, s) -> bool:
    return space.is_valid(s)


def sample(space: StringSpace, rng: np.random.Generator, count: int) -> list[Tokens]:
    if count < 1:
        raise ValueError("count must be >= 1")
    return space.sample(rng, count)


# ---------------------------------------------------------------------------
# codon-constrained gene spaces
# ---------------------------------------------------------------------------

_CODON_TABLE_TEXT = """
F -> ttt|ttc
L -> tta|ttg|ctt|ctc|cta|ctg
S -> tct|tcc|tca|tcg|agt|agc
Y -> tat|tac
C -> tgt|tgc
W -> tgg
P -> cct|ccc|cca|ccg
H -> cat|cac
Q -> caa|cag
R -> cgt|cgc|cga|cgg|aga|agg
I -> att|atc|ata
M -> atg
T -> act|acc|aca|acg
N -> aat|aac
K -> aaa|aag
V -> gtt|gtc|gta|gtg
A -> gct|gcc|gca|gcg
D -> gat|gac
E -> gaa|gag
G -> ggt|ggc|gga|ggg
"""

CodonTable = dict[str, list[str]]


def load_codon_table(text: str) -> CodonTable:
    """Parse "X -> cod1|cod2|..." lines; commas tolerated as separators."""
    table: CodonTable = {}
    for line in text.splitlines():
        line = line.strip().rstrip(".")
        if not line or line.startswith("#"):
            continue
        lhs, _, rhs = line.partition("->")
        aa = lhs.strip()
        codons = [c.strip() for c in rhs.replace(",", "|").split("|") if c.strip()]
        if len(aa) != 1:
            raise ValueError(f"bad amino-acid key {aa!r}")
        for c in codons:
            if len(c) != 3 or any(ch not in "acgt" for ch in c):
                raise ValueError(f"bad codon {c!r} for {aa}")
        table[aa] = codons
    return table


STANDARD_CODON_TABLE: CodonTable = load_codon_table(_CODON_TABLE_TEXT)


def protein_space(
    protein: str,
    table: CodonTable | None = None,
    representation: str = "codon",
    enforce_codons: bool = True,
) -> LocallyConstrained:
    """Locally constrained space of genes encoding ``protein``.

    representation="codon": one position per residue, tokens are codons.
    representation="base": single-base tokens, length 3x the residue count.
    With enforce_codons (default) base-level moves stay codon-aligned; without
    it, each base position independently allows the union of characters its
    residue's codons place at that offset (a relaxation that admits some
    codon-invalid strings).
    """
    if table is None:
        table = STANDARD_CODON_TABLE
    codon_sets = []
    for aa in protein:
        if aa not in table:
            raise ValueError(f"unknown amino acid {aa!r}")
        codon_sets.append(tuple(table[aa]))
    if representation == "codon":
        return LocallyConstrained(position_sets=tuple(codon_sets))
    if representation != "base":
        raise ValueError(f"unknown representation {representation!r}")
    position_sets = []
    for codons in codon_sets:
        for offset in range(3):
            chars = tuple(dict.fromkeys(c[offset] for c in codons))
            position_sets.append(chars)
    if not enforce_codons:
        return LocallyConstrained(position_sets=tuple(position_sets))
    block_sets = tuple(tuple(tuple(c) for c in codons) for codons in codon_sets)
    return LocallyConstrained(
        position_sets=tuple(position_sets), block_size=3, block_sets=block_sets
    )


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def load_candidate_set(text: str) -> CandidateSet:
    """One string per line; '#'-prefixed comment lines and blanks ignored."""
    strings = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        strings.append(as_tokens(line))
    return CandidateSet.from_iterable(strings)


def load_local_constraints(text: str) -> LocallyConstrained:
    """Line i lists the permitted tokens for position i, space-separated."""
    sets = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sets.append(tuple(line.split()))
    return LocallyConstrained(position_sets=tuple(sets))
