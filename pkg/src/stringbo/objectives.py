"""Benchmark objectives: pattern counting, symbolic regression, external scorers."""

from __future__ import annotations

import math
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .kernels import Tokens, as_tokens

NONFINITE_PENALTY = -10.0


@dataclass(frozen=True)
class PatternSpec:
    """Pattern-count objective; '?' in the pattern matches any single token.

    ``window=(lo, hi)`` restricts counting to matches lying entirely inside
    ``s[lo:hi]``. ``noise_sd`` adds one Gaussian draw per evaluation.
    """

    pattern: Tokens
    mode: str = "overlapping"
    window: tuple[int, int] | None = None
    noise_sd: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "pattern", as_tokens(self.pattern))
        if not self.pattern:
            raise ValueError("pattern must be nonempty")
        if self.mode not in ("overlapping", "non_overlapping"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _matches_at(s: Tokens, pattern: Tokens, i: int) -> bool:
    return all(p == "?" or s[i + j] == p for j, p in enumerate(pattern))


def count_pattern(s: Tokens, spec: PatternSpec, rng: np.random.Generator | None = None) -> float:
    s = as_tokens(s)
    k = len(spec.pattern)
    lo, hi = spec.window if spec.window is not None else (0, len(s))
    lo, hi = max(lo, 0), min(hi, len(s))
    count = 0
    i = lo
    while i <= hi - k:
        if _matches_at(s, spec.pattern, i):
            count += 1
            i += k if spec.mode == "non_overlapping" else 1
        else:
            i += 1
    value = float(count)
    if spec.noise_sd:
        if rng is None:
            raise ValueError("noisy objective needs an rng")
        value += spec.noise_sd * rng.standard_normal()
    return value


def max_pattern_count(length: int, alphabet: Sequence[str], spec: PatternSpec) -> int:
    """Exact maximum of the (noise-free) pattern count over all strings of
    ``length`` via dynamic programming over suffix states."""
    k = len(spec.pattern)
    lo, hi = spec.window if spec.window is not None else (0, length)
    # state: suffix of the last up-to-(k-1) tokens (cleared after a match in
    # non-overlapping mode); value: best count achievable so far
    states: dict[Tokens, int] = {(): 0}
    for pos in range(length):
        nxt: dict[Tokens, int] = {}
        for suffix, count in states.items():
            for tok in alphabet:
                w = suffix + (tok,)
                c = count
                matched = False
                if len(w) >= k and lo <= pos - k + 1 and pos + 1 <= hi:
                    matched = _matches_at(w, spec.pattern, len(w) - k)
                if matched:
                    c += 1
                    ns = () if spec.mode == "non_overlapping" else w[-(k - 1):] if k > 1 else ()
                else:
                    ns = w[-(k - 1):] if k > 1 else ()
                if nxt.get(ns, -1) < c:
                    nxt[ns] = c
        states = nxt
    return max(states.values())


# ---------------------------------------------------------------------------
# symbolic regression over the arithmetic grammar
# ---------------------------------------------------------------------------

_MULTI_TOKENS = ("sin(", "exp(")


def tokenize_expression(text: str) -> Tokens:
    toks: list[str] = []
    i = 0
    while i < len(text):
        for mt in _MULTI_TOKENS:
            if text.startswith(mt, i):
                toks.append(mt)
                i += len(mt)
                break
        else:
            toks.append(text[i])
            i += 1
    return tuple(toks)


class _ExprParser:
    """Recursive-descent evaluator mirroring the flat left-associative
    structure of the arithmetic grammar (+, * and / share one precedence)."""

    def __init__(self, tokens: Tokens, x):
        self.tokens = tokens
        self.pos = 0
        self.x = x

    def _peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _take(self):
        tok = self._peek()
        if tok is None:
            raise ValueError("unexpected end of expression")
        self.pos += 1
        return tok

    def expression(self):
        value = self.atom()
        while self._peek() in ("+", "*", "/"):
            op = self._take()
            rhs = self.atom()
            with np.errstate(all="ignore"):
                if op == "+":
                    value = value + rhs
                elif op == "*":
                    value = value * rhs
                else:
                    value = np.divide(value, rhs)
        return value

    def atom(self):
        tok = self._take()
        with np.errstate(all="ignore"):
            if tok == "x":
                return self.x
            if tok in ("1", "2", "3"):
                return float(tok) * np.ones_like(np.asarray(self.x, dtype=float))
            if tok == "(":
                v = self.expression()
                self._expect(")")
                return v
            if tok == "sin(":
                v = np.sin(self.expression())
                self._expect(")")
                return v
            if tok == "exp(":
                v = np.exp(self.expression())
                self._expect(")")
                return v
        raise ValueError(f"unexpected token {tok!r}")

    def _expect(self, tok):
        got = self._take()
        if got != tok:
            raise ValueError(f"expected {tok!r}, got {got!r}")


def eval_expression(s: Tokens | str, x) -> np.ndarray | float:
    """Evaluate an arithmetic-grammar expression at input(s) ``x``.

    Division by zero and overflow propagate as non-finite values for the
    caller (symreg_score) to penalize.
    """
    if isinstance(s, str):
        tokens = tokenize_expression(s)
    else:
        tokens = as_tokens(s)
    parser = _ExprParser(tokens, np.asarray(x, dtype=float))
    value = parser.expression()
    if parser.pos != len(tokens):
        raise ValueError(f"trailing tokens {tokens[parser.pos:]!r}")
    return value


def _default_target(x):
    return 1.0 / 3.0 + x + np.sin(x * x)


@dataclass(frozen=True)
class SymRegSpec:
    target: Callable = _default_target
    grid: np.ndarray = field(default_factory=lambda: np.linspace(-10.0, 10.0, 1000))
    penalty: float = NONFINITE_PENALTY

    def __post_init__(self):
        if len(self.grid) == 0:
            raise ValueError("grid must be nonempty")


def symreg_score(s: Tokens | str, spec: SymRegSpec | None = None) -> float:
    """-log(1 + MSE) against the target over the grid; always <= 0, equal to
    0 iff the expression matches exactly. Non-finite evaluations score the
    fixed penalty."""
    if spec is None:
        spec = SymRegSpec()
    try:
        values = eval_expression(s, spec.grid)
    except ValueError:
        return spec.penalty
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        return spec.penalty
    mse = float(np.mean((values - spec.target(spec.grid)) ** 2))
    if not math.isfinite(mse):
        return spec.penalty
    return -math.log1p(mse)


# ---------------------------------------------------------------------------
# external scorers
# ---------------------------------------------------------------------------


def external_objective(
    command_template: str,
    negate: bool = False,
    timeout: float | None = None,
) -> Callable[[Tokens], float]:
    """Adapter running an external command per evaluation.

    If the template contains ``{}`` the string is substituted there;
    otherwise it is written to the process's stdin. The first
    whitespace-delimited token of stdout is parsed as the score.
    """

    def evaluate(s: Tokens) -> float:
        text = "".join(as_tokens(s))
        if "{}" in command_template:
            argv = [
                part.replace("{}", text) for part in shlex.split(command_template)
            ]
            stdin = None
        else:
            argv = shlex.split(command_template)
            stdin = text
        try:
            proc = subprocess.run(
                argv, input=stdin, capture_output=True, text=True, timeout=timeout
            )
        except subprocess.TimeoutExpired as exc:
            raise RuntimeError(f"external objective timed out on {text!r}") from exc
        if proc.returncode != 0:
            raise RuntimeError(
                f"external objective failed on {text!r} (exit {proc.returncode}): "
                f"{proc.stderr.strip()}"
            )
        fields = proc.stdout.split()
        if not fields:
            raise RuntimeError(f"external objective produced no output on {text!r}")
        try:
            value = float(fields[0])
        except ValueError as exc:
            raise RuntimeError(
                f"unparseable objective output {fields[0]!r} on {text!r}"
            ) from exc
        return -value if negate else value

    return evaluate
