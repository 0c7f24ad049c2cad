"""Context-free grammars, discounted derivation sampling, and tree operators.

Grammar files use one rule group per line, ``LHS -> alt1 | alt2``, with
terminals in single quotes and whitespace-separated symbols; the first LHS is
the start symbol. Parse trees are immutable; mutation and crossover rebuild
the spine above the edited node.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .kernels import Tokens

# Arithmetic-expression grammar used by the symbolic-regression benchmark.
ARITHMETIC_GRAMMAR_TEXT = """
S -> S '+' T | S '*' T | S '/' T | T
T -> '(' S ')' | 'sin(' S ')' | 'exp(' S ')' | 'x' | '1' | '2' | '3'
"""


@dataclass(frozen=True)
class Rule:
    lhs: str
    rhs: tuple[tuple[str, bool], ...]  # (symbol, is_terminal)

    def rhs_nonterminals(self) -> list[str]:
        return [sym for sym, terminal in self.rhs if not terminal]


@dataclass(frozen=True)
class Grammar:
    nonterminals: frozenset[str]
    terminals: frozenset[str]
    rules: tuple[Rule, ...]
    start: str
    # minimum derivation depth needed to finish each rule, for depth-bounded
    # sampling (index-aligned with rules)
    rule_min_depth: tuple[int, ...] = ()

    def rules_for(self, nonterminal: str) -> list[int]:
        return [i for i, r in enumerate(self.rules) if r.lhs == nonterminal]


@dataclass(frozen=True)
class SamplerConfig:
    discount: float = 0.1
    max_depth: int = 30
    max_retries: int = 100

    def __post_init__(self):
        if not (0.0 < self.discount <= 1.0):
            raise ValueError("discount must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class ParseTree:
    symbol: str
    rule_index: int
    children: tuple["ParseTree | str", ...]


_TOKEN_RE = re.compile(r"'[^']*'|\S+")


def load_grammar(text: str) -> Grammar:
    """Parse and validate a grammar file; raises on unknown symbols,
    unreachable or unproductive nonterminals."""
    raw_rules: list[tuple[str, list[str]]] = []
    order: list[str] = []
    for line in text.splitlines():
        line = line.strip().rstrip(",")
        if not line or line.startswith("#"):
            continue
        lhs, arrow, rhs = line.partition("->")
        if not arrow:
            raise ValueError(f"missing '->' in rule line {line!r}")
        lhs = lhs.strip()
        if not lhs or " " in lhs:
            raise ValueError(f"bad rule head {lhs!r}")
        if lhs not in order:
            order.append(lhs)
        for alt in rhs.split("|"):
            symbols = _TOKEN_RE.findall(alt.strip())
            if not symbols:
                raise ValueError(f"empty alternative in rule for {lhs}")
            raw_rules.append((lhs, symbols))
    if not raw_rules:
        raise ValueError("empty rule set")
    nonterminals = frozenset(order)
    rules = []
    terminals = set()
    for lhs, symbols in raw_rules:
        rhs = []
        for sym in symbols:
            if sym.startswith("'") and sym.endswith("'"):
                tok = sym[1:-1]
                terminals.add(tok)
                rhs.append((tok, True))
            elif sym in nonterminals:
                rhs.append((sym, False))
            else:
                raise ValueError(f"unknown symbol {sym!r} in rule for {lhs}")
        rules.append(Rule(lhs=lhs, rhs=tuple(rhs)))
    g = Grammar(
        nonterminals=nonterminals,
        terminals=frozenset(terminals),
        rules=tuple(rules),
        start=order[0],
    )
    nt_depth, rule_depth = _min_depths(g)
    for nt in nonterminals:
        if math.isinf(nt_depth[nt]):
            raise ValueError(f"nonterminal {nt!r} is unproductive")
    reachable = {g.start}
    frontier = [g.start]
    while frontier:
        nt = frontier.pop()
        for i in g.rules_for(nt):
            for sym in g.rules[i].rhs_nonterminals():
                if sym not in reachable:
                    reachable.add(sym)
                    frontier.append(sym)
    unreachable = nonterminals - reachable
    if unreachable:
        raise ValueError(f"unreachable nonterminals: {sorted(unreachable)}")
    return Grammar(
        nonterminals=nonterminals,
        terminals=frozenset(terminals),
        rules=tuple(rules),
        start=order[0],
        rule_min_depth=tuple(rule_depth),
    )


def _min_depths(g: Grammar) -> tuple[dict[str, float], list[float]]:
    nt_depth = {nt: math.inf for nt in g.nonterminals}
    rule_depth = [math.inf] * len(g.rules)
    changed = True
    while changed:
        changed = False
        for i, rule in enumerate(g.rules):
            nts = rule.rhs_nonterminals()
            d = 1.0 if not nts else 1.0 + max(nt_depth[s] for s in nts)
            if d < rule_depth[i]:
                rule_depth[i] = d
                changed = True
            if d < nt_depth[rule.lhs]:
                nt_depth[rule.lhs] = d
                changed = True
    return nt_depth, rule_depth


ARITHMETIC_GRAMMAR = load_grammar(ARITHMETIC_GRAMMAR_TEXT)


def sample_tree(g: Grammar, cfg: SamplerConfig, rng: np.random.Generator) -> ParseTree:
    """Random derivation with rule probabilities proportional to
    ``discount ** n`` where n counts prior uses of the rule on the current
    root-to-node branch. Rules that cannot finish within the remaining depth
    budget are ineligible, so sampling terminates for any validated grammar."""
    if cfg.max_depth < min(g.rule_min_depth[i] for i in g.rules_for(g.start)):
        raise ValueError("max_depth too small to derive any string")
    for _ in range(cfg.max_retries):
        try:
            return _expand(g, cfg, rng, g.start, cfg.max_depth, {})
        except _RetryNeeded:
            continue
    raise RuntimeError("sampling retry budget exhausted")


class _RetryNeeded(Exception):
    pass


def _expand(g, cfg, rng, nonterminal, budget, branch_counts) -> ParseTree:
    eligible = [i for i in g.rules_for(nonterminal) if g.rule_min_depth[i] <= budget]
    if not eligible:
        raise _RetryNeeded
    weights = np.array([cfg.discount ** branch_counts.get(i, 0) for i in eligible])
    probs = weights / weights.sum()
    choice = eligible[int(rng.choice(len(eligible), p=probs))]
    branch_counts[choice] = branch_counts.get(choice, 0) + 1
    children: list[ParseTree | str] = []
    for sym, terminal in g.rules[choice].rhs:
        if terminal:
            children.append(sym)
        else:
            children.append(_expand(g, cfg, rng, sym, budget - 1, branch_counts))
    branch_counts[choice] -= 1
    return ParseTree(symbol=nonterminal, rule_index=choice, children=tuple(children))


def derive(tree: ParseTree) -> Tokens:
    """In-order concatenation of terminal leaves."""
    out: list[str] = []

    def walk(node):
        for child in node.children:
            if isinstance(child, str):
                out.append(child)
            else:
                walk(child)

    walk(tree)
    return tuple(out)


def iter_nodes(tree: ParseTree) -> Iterator[tuple[ParseTree, tuple[int, ...], int]]:
    """Yield (node, path, depth) for every internal node, root first."""
    stack = [(tree, (), 0)]
    while stack:
        node, path, depth = stack.pop()
        yield node, path, depth
        for i, child in enumerate(node.children):
            if isinstance(child, ParseTree):
                stack.append((child, path + (i,), depth + 1))


def replace_subtree(tree: ParseTree, path: tuple[int, ...], new: ParseTree) -> ParseTree:
    if not path:
        return new
    i = path[0]
    children = list(tree.children)
    children[i] = replace_subtree(children[i], path[1:], new)
    return ParseTree(symbol=tree.symbol, rule_index=tree.rule_index, children=tuple(children))


def _subtree_at(tree: ParseTree, path: tuple[int, ...]) -> ParseTree:
    for i in path:
        tree = tree.children[i]
    return tree


def validate_tree(tree: ParseTree, g: Grammar) -> bool:
    """Structural check: each node's children match its rule's rhs exactly."""
    rule = g.rules[tree.rule_index]
    if rule.lhs != tree.symbol or len(rule.rhs) != len(tree.children):
        return False
    for (sym, terminal), child in zip(rule.rhs, tree.children):
        if terminal:
            if child != sym:
                return False
        else:
            if isinstance(child, str) or child.symbol != sym:
                return False
            if not validate_tree(child, g):
                return False
    return True


def mutate_tree(
    t: ParseTree, g: Grammar, cfg: SamplerConfig, rng: np.random.Generator
) -> ParseTree:
    """Replace a uniformly chosen internal node's subtree with a fresh
    expansion from the same nonterminal, within the remaining depth budget."""
    nodes = list(iter_nodes(t))
    node, path, depth = nodes[int(rng.integers(0, len(nodes)))]
    budget = max(cfg.max_depth - depth, 1)
    for _ in range(cfg.max_retries):
        try:
            new = _expand(g, cfg, rng, node.symbol, budget, {})
            return replace_subtree(t, path, new)
        except _RetryNeeded:
            budget += 1  # pathological depth placement; relax minimally
    raise RuntimeError("mutation retry budget exhausted")


def tree_height(tree: ParseTree) -> int:
    """Number of internal-node levels, matching the sampler's depth budget:
    a tree of only-terminal children has height 1."""
    stack = [(tree, 1)]
    best = 1
    while stack:
        node, h = stack.pop()
        best = max(best, h)
        for child in node.children:
            if isinstance(child, ParseTree):
                stack.append((child, h + 1))
    return best


def crossover_trees(
    t1: ParseTree,
    t2: ParseTree,
    rng: np.random.Generator,
    max_depth: int | None = None,
) -> tuple[ParseTree, ParseTree, bool]:
    """Swap two subtrees sharing a head nonterminal, chosen uniformly over
    matching node pairs. The root-root pair is excluded unless it is the only
    match. Returns (offspring1, offspring2, swapped).

    With ``max_depth`` set, pairs whose swap would push either offspring past
    that height are excluded; without the cap, repeated crossover lets tree
    height grow without bound across generations."""
    nodes1 = list(iter_nodes(t1))
    nodes2 = list(iter_nodes(t2))
    if max_depth is None:
        pairs = [
            (p1, p2)
            for n1, p1, _ in nodes1
            for n2, p2, _ in nodes2
            if n1.symbol == n2.symbol
        ]
    else:
        heights1 = {p1: tree_height(n1) for n1, p1, _ in nodes1}
        heights2 = {p2: tree_height(n2) for n2, p2, _ in nodes2}
        pairs = [
            (p1, p2)
            for n1, p1, d1 in nodes1
            for n2, p2, d2 in nodes2
            if n1.symbol == n2.symbol
            and d1 + heights2[p2] <= max_depth
            and d2 + heights1[p1] <= max_depth
        ]
    nontrivial = [(p1, p2) for p1, p2 in pairs if p1 or p2]
    pool = nontrivial if nontrivial else pairs
    if not pool:
        return t1, t2, False
    p1, p2 = pool[int(rng.integers(0, len(pool)))]
    sub1 = _subtree_at(t1, p1)
    sub2 = _subtree_at(t2, p2)
    return replace_subtree(t1, p1, sub2), replace_subtree(t2, p2, sub1), True


# ---------------------------------------------------------------------------
# serialization (parenthesized text form, for logging)
# ---------------------------------------------------------------------------


def tree_to_text(tree: ParseTree) -> str:
    parts = [f"({tree.symbol}:{tree.rule_index}"]
    for child in tree.children:
        if isinstance(child, str):
            parts.append(f" '{child}'")
        else:
            parts.append(" " + tree_to_text(child))
    parts.append(")")
    return "".join(parts)


def tree_from_text(text: str) -> ParseTree:
    pos = 0

    def parse() -> ParseTree:
        nonlocal pos
        assert text[pos] == "("
        pos += 1
        head = ""
        while text[pos] not in " )":
            head += text[pos]
            pos += 1
        symbol, _, idx = head.partition(":")
        children: list[ParseTree | str] = []
        while True:
            while pos < len(text) and text[pos] == " ":
                pos += 1
            if text[pos] == ")":
                pos += 1
                return ParseTree(symbol, int(idx), tuple(children))
            if text[pos] == "'":
                end = text.index("'", pos + 1)
                children.append(text[pos + 1 : end])
                pos = end + 1
            else:
                children.append(parse())

    return parse()
