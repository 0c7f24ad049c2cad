"""Objective tests: pattern counting, expression evaluation, external adapter."""

import sys

import numpy as np
import pytest

from stringbo.grammar import ARITHMETIC_GRAMMAR, SamplerConfig, derive, sample_tree
from stringbo.kernels import as_tokens
from stringbo.objectives import (
    NONFINITE_PENALTY,
    PatternSpec,
    SymRegSpec,
    count_pattern,
    eval_expression,
    external_objective,
    max_pattern_count,
    symreg_score,
    tokenize_expression,
)


def spec(pattern, **kw):
    return PatternSpec(pattern=as_tokens(pattern), **kw)


def test_count_pattern_cases():
    assert count_pattern(as_tokens("101101"), spec("101")) == 2
    assert count_pattern(as_tokens("10101"), spec("101")) == 2
    assert count_pattern(as_tokens("10101"), spec("101", mode="non_overlapping")) == 1
    assert count_pattern(as_tokens("10011"), spec("10?1")) == 1
    assert count_pattern(as_tokens("0000"), spec("101")) == 0


def test_count_pattern_window():
    s = as_tokens("1010000101")
    assert count_pattern(s, spec("101")) == 2
    assert count_pattern(s, spec("101", window=(0, 5))) == 1
    assert count_pattern(s, spec("101", window=(5, 10))) == 1


def test_count_pattern_noise_uses_rng():
    s = as_tokens("101101")
    ps = spec("101", noise_sd=1.0)
    a = count_pattern(s, ps, np.random.default_rng(0))
    b = count_pattern(s, ps, np.random.default_rng(0))
    c = count_pattern(s, ps, np.random.default_rng(1))
    assert a == b
    assert a != c
    assert count_pattern(s, spec("101")) == 2  # noise-free without rng


def test_max_pattern_count_known_values():
    # "101" repeats every 2 characters once started: 9 fits in 20
    assert max_pattern_count(20, "01", spec("101")) == 9
    assert max_pattern_count(5, "01", spec("101", mode="non_overlapping")) == 1
    assert max_pattern_count(6, "01", spec("101", mode="non_overlapping")) == 2
    assert max_pattern_count(4, "01", spec("101", window=(0, 3))) == 1


def test_max_pattern_count_matches_exhaustive_search():
    import itertools

    cases = [
        spec("101"),
        spec("101", mode="non_overlapping"),
        spec("10?1"),
        spec("101", window=(1, 6)),
    ]
    for ps in cases:
        for length in (4, 6, 8):
            best = max(
                count_pattern(s, ps)
                for s in itertools.product("0", "1", repeat=length // 2)
            ) if False else max(
                count_pattern(s, ps) for s in itertools.product("01", repeat=length)
            )
            assert max_pattern_count(length, "01", ps) == best, (ps, length)


def test_tokenize_expression_multichar_tokens():
    assert tokenize_expression("sin(x)+exp(1)*2") == (
        "sin(", "x", ")", "+", "exp(", "1", ")", "*", "2",
    )


def eval_tree(tree, x):
    """Independent evaluator operating on the parse tree itself."""
    import math

    if tree.symbol == "T":
        toks = [c for c in tree.children]
        if isinstance(toks[0], str):
            if toks[0] == "x":
                return x
            if toks[0] in "123":
                return float(toks[0]) * np.ones_like(x)
            if toks[0] == "(":
                return eval_tree(toks[1], x)
            if toks[0] == "sin(":
                return np.sin(eval_tree(toks[1], x))
            if toks[0] == "exp(":
                return np.exp(eval_tree(toks[1], x))
        raise AssertionError(tree)
    # S: left-fold with flat precedence
    kids = list(tree.children)
    if len(kids) == 1:
        return eval_tree(kids[0], x)
    left = eval_tree(kids[0], x)
    op = kids[1]
    right = eval_tree(kids[2], x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if op == "+":
            return left + right
        if op == "*":
            return left * right
        if op == "/":
            return left / right
    raise AssertionError(op)


def test_eval_expression_matches_tree_evaluator():
    rng = np.random.default_rng(0)
    x = np.linspace(-3, 3, 50)
    cfg = SamplerConfig()
    checked = 0
    for _ in range(1000):
        t = sample_tree(ARITHMETIC_GRAMMAR, cfg, rng)
        s = derive(t)
        with np.errstate(all="ignore"):
            want = eval_tree(t, x)
            got = eval_expression(s, x)
        mask = np.isfinite(want)
        np.testing.assert_allclose(
            np.asarray(got)[mask], np.asarray(want)[mask], rtol=1e-12, atol=1e-12
        )
        checked += 1
    assert checked == 1000


def test_eval_expression_flat_precedence():
    # operators associate left with equal precedence: 1+2*3 = (1+2)*3
    assert eval_expression("1+2*3", 0.0) == 9.0
    assert eval_expression(as_tokens("2*3+1"), 0.0) == 7.0


def test_symreg_score_on_target_is_maximal():
    # the target 1/3 + x + sin(x*x) expressed in the grammar scores log1p(0)
    target = tokenize_expression("1/3+x+sin(x*x)")
    assert symreg_score(target) == pytest.approx(0.0, abs=1e-12)
    assert symreg_score(tokenize_expression("x")) < 0.0


def test_symreg_score_penalizes_invalid():
    assert symreg_score(as_tokens("++")) == NONFINITE_PENALTY
    assert symreg_score(tokenize_expression("1/(x+x)")) > NONFINITE_PENALTY  # finite on grid?


def test_symreg_spec_defaults():
    s = SymRegSpec()
    assert s.grid.shape == (1000,)
    assert s.grid[0] == -10 and s.grid[-1] == 10


def test_external_objective_echo():
    fn = external_objective(f"{sys.executable} -c \"import sys; print(float(sys.argv[1].count('1')))\" {{}}")
    assert fn(as_tokens("10101")) == 3.0


def test_external_objective_negate():
    fn = external_objective(
        f"{sys.executable} -c \"import sys; print(sys.argv[1].count('1'))\" {{}}",
        negate=True,
    )
    assert fn(as_tokens("111")) == -3.0


def test_external_objective_failure_reports_string():
    fn = external_objective(f"{sys.executable} -c \"import sys; sys.exit(2)\" {{}}")
    with pytest.raises(RuntimeError) as exc:
        fn(as_tokens("abc"))
    assert "abc" in str(exc.value)
