"""End-to-end acceptance checks.

Each test prints a one-line summary (bypassing capture) with the measured
quantities so a full `pytest -v` log doubles as a results report. The BO
replications are the expensive part; they fan out over a small process pool.
"""

import itertools
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from stringbo.analysis import kpca
from stringbo.benchmarks import TASKS
from stringbo.bo import BoConfig, run
from stringbo.ga import GaConfig, maximize
from stringbo.gp import Dataset, GpModel, fit, log_marginal_likelihood
from stringbo.grammar import (
    ARITHMETIC_GRAMMAR,
    SamplerConfig,
    crossover_trees,
    derive,
    mutate_tree,
    sample_tree,
    validate_tree,
)
from stringbo.kernels import (
    KernelParams,
    as_tokens,
    ssk,
    ssk_bruteforce,
    ssk_grad,
    ssk_normalized,
    ssk_split,
)
from stringbo.objectives import PatternSpec, count_pattern, max_pattern_count
from stringbo.spaces import LocallyConstrained, Unconstrained, protein_space

WORKERS = min(4, os.cpu_count() or 1)


def _report(capsys, line):
    with capsys.disabled():
        print(f"\n[acceptance] {line}")


def _random_string(rng, alphabet, max_len=8, min_len=1):
    n = int(rng.integers(min_len, max_len + 1))
    return tuple(alphabet[i] for i in rng.integers(0, len(alphabet), size=n))


# ---------------------------------------------------------------------------
# process-pool workers (module level so they pickle)
# ---------------------------------------------------------------------------


def _pattern_bo_final(args):
    alphabet, length, pattern, init_count, budget, optimizer, seed = args
    space = Unconstrained.fixed_length(alphabet, length)
    spec = PatternSpec(pattern=as_tokens(pattern))
    cfg = BoConfig(
        budget=budget,
        init_count=init_count,
        acquisition_optimizer=optimizer,
        seed=seed,
    )
    trace = run(lambda s: count_pattern(s, spec), space, cfg)
    return float(trace.best_so_far[-1])


def _symreg_bo_bests(seed):
    task = TASKS["symreg"]
    cfg = BoConfig(
        budget=35,
        init_count=15,
        kernel_init=task.kernel_init,
        fit_restarts=2,
        seed=seed,
    )
    trace = run(task.objective_factory(np.random.default_rng(seed)), task.space, cfg)
    return list(trace.best_so_far)


# ---------------------------------------------------------------------------
# 1. kernel oracle equivalence
# ---------------------------------------------------------------------------


def test_c01_kernel_matches_bruteforce_oracle(capsys):
    rng = np.random.default_rng(11)
    alphabets = ["ab", "abc", "01"]
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        alphabet = alphabets[int(rng.integers(0, len(alphabets)))]
        a = _random_string(rng, alphabet)
        b = _random_string(rng, alphabet)
        params = KernelParams(
            match_decay=float(rng.choice([0.25, 0.5, 0.8])),
            gap_decay=float(rng.choice([0.25, 0.5, 0.8])),
            max_order=int(rng.integers(1, 4)),
        )
        worst = max(worst, abs(ssk(a, b, params) - ssk_bruteforce(a, b, params)))
    elapsed = time.perf_counter() - t0
    _report(capsys, f"C1 kernel vs brute force: max |diff| {worst:.2e} over 200 cases ({elapsed:.1f}s)")
    assert worst <= 1e-10
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 2. contribution table
# ---------------------------------------------------------------------------


def test_c02_contribution_table(capsys):
    from stringbo.kernels import subsequence_contribution

    lm, lg = 0.5, 0.25
    params = KernelParams(match_decay=lm, gap_decay=lg, max_order=5)
    expected = {
        ("genetics", "genic"): lm**5 * lg**2,
        ("genetics", "geno"): 0.0,
        ("genetics", "ge"): lm**2 * (1 + lg**2),
        ("genomic", "genic"): lm**5 * lg**2,
        ("genomic", "geno"): lm**4,
        ("genomic", "ge"): lm**2,
        ("genomes", "genic"): 0.0,
        ("genomes", "geno"): lm**4,
        ("genomes", "ge"): lm**2 * (1 + lg**4),
    }
    for (s, u), want in expected.items():
        got = subsequence_contribution(as_tokens(u), as_tokens(s), params)
        assert got == pytest.approx(want, abs=1e-12), (s, u)
    _report(capsys, "C2 contribution table: all 9 cells match the closed-form polynomials")


# ---------------------------------------------------------------------------
# 3. gradient checks
# ---------------------------------------------------------------------------


def test_c03_gradient_checks(capsys):
    rng = np.random.default_rng(17)
    h = 1e-6
    worst_kernel = 0.0
    for _ in range(20):
        a = _random_string(rng, "abc", max_len=7, min_len=2)
        b = _random_string(rng, "abc", max_len=7, min_len=2)
        params = KernelParams(
            match_decay=float(rng.uniform(0.3, 0.9)),
            gap_decay=float(rng.uniform(0.3, 0.9)),
            max_order=int(rng.integers(1, 5)),
        )
        _, dm, dg = ssk_grad(a, b, params)
        for got, key in [(dm, "match_decay"), (dg, "gap_decay")]:
            x0 = getattr(params, key)
            up = ssk(a, b, replace(params, **{key: x0 + h}))
            dn = ssk(a, b, replace(params, **{key: x0 - h}))
            fd = (up - dn) / (2 * h)
            worst_kernel = max(worst_kernel, abs(got - fd) / max(abs(fd), 1e-8))
    assert worst_kernel < 1e-5

    worst_lml = 0.0
    for trial in range(20):
        n = 5
        strings = []
        while len(strings) < n:
            s = _random_string(rng, "01", max_len=8, min_len=4)
            if s not in strings:
                strings.append(s)
        data = Dataset.from_pairs(list(zip(strings, rng.normal(size=n))))
        base = dict(
            data=data,
            kernel_params=KernelParams(
                float(rng.uniform(0.4, 0.9)), float(rng.uniform(0.4, 0.9)), max_order=3
            ),
            output_scale=float(rng.uniform(0.5, 2.0)),
            noise_variance=float(rng.uniform(0.1, 0.5)),
        )
        _, grads = log_marginal_likelihood(GpModel(**base))

        def value_at(**changes):
            kw = dict(base)
            if "match_decay" in changes or "gap_decay" in changes:
                kw["kernel_params"] = replace(kw["kernel_params"], **changes)
            else:
                kw.update(changes)
            v, _ = log_marginal_likelihood(GpModel(**kw))
            return v

        for key in ["match_decay", "gap_decay", "output_scale", "noise_variance"]:
            x0 = getattr(base["kernel_params"], key, base.get(key))
            fd = (value_at(**{key: x0 + h}) - value_at(**{key: x0 - h})) / (2 * h)
            worst_lml = max(worst_lml, abs(grads[key] - fd) / max(abs(fd), 1e-8))
    _report(
        capsys,
        f"C3 gradients: kernel FD rel err {worst_kernel:.2e} (<1e-5), "
        f"LML FD rel err {worst_lml:.2e} (<1e-4)",
    )
    assert worst_lml < 1e-4


# ---------------------------------------------------------------------------
# 4. normalization / split invariants
# ---------------------------------------------------------------------------


def test_c04_normalization_and_split_invariants(capsys):
    rng = np.random.default_rng(23)
    for _ in range(50):
        a = _random_string(rng, "abc", max_len=9, min_len=1)
        b = _random_string(rng, "abc", max_len=9, min_len=1)
        params = KernelParams(
            match_decay=float(rng.uniform(0.3, 0.95)),
            gap_decay=float(rng.uniform(0.3, 0.95)),
            max_order=int(rng.integers(1, 5)),
        )
        assert ssk_normalized(a, a, params) == 1.0
        assert ssk_split(a, b, replace(params, splits=1)) == ssk_normalized(a, b, params)
        m = int(rng.integers(1, min(len(a), 4) + 1))
        assert ssk_split(a, a, replace(params, splits=m)) == pytest.approx(m, abs=1e-12)
    _report(capsys, "C4 invariants: self-normalization, m=1 split identity, split(a,a)=m (50 cases each)")


# ---------------------------------------------------------------------------
# 5. structural validity
# ---------------------------------------------------------------------------


def test_c05_structural_validity(capsys):
    g = ARITHMETIC_GRAMMAR
    cfg = SamplerConfig(max_depth=30)
    rng = np.random.default_rng(31)
    trees = [sample_tree(g, cfg, rng) for _ in range(10_000)]
    assert all(validate_tree(t, g) for t in trees)
    assert all(len(derive(t)) > 0 for t in trees)
    for t in trees[:1000]:
        assert validate_tree(mutate_tree(t, g, cfg, rng), g)
    for t1, t2 in zip(trees[:1000], trees[1000:2000]):
        c1, c2, _ = crossover_trees(t1, t2, rng)
        assert validate_tree(c1, g) and validate_tree(c2, g)

    from stringbo.ga import crossover_strings, mutate_string

    space = LocallyConstrained(
        position_sets=[tuple("ab"), tuple("cde"), tuple("f"), tuple("gh"), tuple("ij")]
    )
    s = space.sample(rng, 1)[0]
    for _ in range(10_000):
        s = mutate_string(s, space, rng)
        assert space.is_valid(s)
        c1, c2 = crossover_strings(s, space.sample(rng, 1)[0], rng, space)
        assert space.is_valid(c1) and space.is_valid(c2)
    _report(
        capsys,
        "C5 validity: 10k grammar samples + 1k mutations + 1k crossovers and "
        "10k locally-constrained ops all valid",
    )


# ---------------------------------------------------------------------------
# 6. protein space size
# ---------------------------------------------------------------------------


def test_c06_protein_space_size(capsys):
    space = protein_space("TIKENIFGVS", representation="codon")
    size = space.size()
    _report(capsys, f"C6 codon space for TIKENIFGVS: {size} members (expected 55296)")
    assert size == 55_296


# ---------------------------------------------------------------------------
# 7. desk-scale benchmark row: count "101" on {0,1}^20
# ---------------------------------------------------------------------------


def test_c07_bin20_bo_vs_random(capsys):
    fmax = max_pattern_count(20, list("01"), PatternSpec(pattern=as_tokens("101")))
    assert fmax == 9
    seeds = list(range(15))
    jobs = [("01", 20, "101", 2, 10, "ga", s) for s in seeds]
    with ProcessPoolExecutor(max_workers=WORKERS) as ex:
        finals = list(ex.map(_pattern_bo_final, jobs))
    bo_mean = 100.0 * float(np.mean(finals)) / fmax

    spec = PatternSpec(pattern=as_tokens("101"))
    space = Unconstrained.fixed_length("01", 20)
    rs_finals = []
    for seed in seeds:
        draws = space.sample(np.random.default_rng(seed), 12)
        rs_finals.append(max(count_pattern(s, spec) for s in draws))
    rs_mean = 100.0 * float(np.mean(rs_finals)) / fmax
    _report(
        capsys,
        f"C7 count-101-bin20 (12 evals, 15 seeds): BO mean {bo_mean:.1f} (>=95), "
        f"random mean {rs_mean:.1f} (<=70)",
    )
    assert bo_mean >= 95.0
    assert rs_mean <= 70.0


# ---------------------------------------------------------------------------
# 8. GA vs random-search acquisition maximization
# ---------------------------------------------------------------------------


def test_c08_quat30_ga_beats_rs_acquisition(capsys):
    seeds = list(range(15))
    jobs = [("0123", 30, "123", 10, 20, opt, s) for opt in ("ga", "rs") for s in seeds]
    with ProcessPoolExecutor(max_workers=WORKERS) as ex:
        finals = list(ex.map(_pattern_bo_final, jobs))
    ga_mean = float(np.mean(finals[:15]))
    rs_mean = float(np.mean(finals[15:]))
    _report(
        capsys,
        f"C8 count-123-quat30 (30 evals, 15 seeds): GA acquisition mean {ga_mean:.2f} "
        f"> RS acquisition mean {rs_mean:.2f}",
    )
    assert ga_mean > rs_mean


# ---------------------------------------------------------------------------
# 9. GA oracle check on exhaustively enumerable spaces
# ---------------------------------------------------------------------------


def test_c09_ga_finds_exhaustive_optimum(capsys):
    cases = [
        ("bin12 '101'", Unconstrained.fixed_length("01", 12), "101"),
        ("bin8 '10?1'", Unconstrained.fixed_length("01", 8), "10?1"),
        ("quat6 '1?3'", Unconstrained.fixed_length("0123", 6), "1?3"),
        (
            "local4096 '101'",
            LocallyConstrained(position_sets=[tuple("01")] * 8 + [tuple("0123")] * 2),
            "101",
        ),
    ]
    lines = []
    for name, space, pattern in cases:
        assert space.size() <= 4096
        spec = PatternSpec(pattern=as_tokens(pattern))
        optimum = max(count_pattern(s, spec) for s in space.enumerate())
        wins = 0
        for seed in range(15):
            _, best = maximize(
                lambda s: count_pattern(s, spec),
                space,
                GaConfig(population=64),
                np.random.default_rng(seed),
            )
            wins += best == optimum
        lines.append(f"{name}: {wins}/15")
        assert wins >= 14, name
    _report(capsys, "C9 GA oracle (optimum found, N=64): " + ", ".join(lines))


# ---------------------------------------------------------------------------
# 10. kernel PCA sanity
# ---------------------------------------------------------------------------


def test_c10_kpca_sanity(capsys):
    rng = np.random.default_rng(41)
    strings = [_random_string(rng, "abcd", max_len=10, min_len=3) for _ in range(12)]
    strings.append(strings[0])  # exact duplicate must land on the same point
    params = KernelParams(0.8, 0.8, max_order=3)
    r1 = kpca(strings, params, components=3)
    r2 = kpca(strings, params, components=3)
    min_eig = float(r1.eigenvalues.min())
    assert min_eig >= -1e-8
    assert np.allclose(r1.components[0], r1.components[-1], atol=1e-6)
    assert np.allclose(np.abs(r1.components), np.abs(r2.components))
    _report(capsys, f"C10 KPCA: min eigenvalue {min_eig:.2e}, duplicates coincide, repeat-run stable")


# ---------------------------------------------------------------------------
# 11. end-to-end CLI determinism
# ---------------------------------------------------------------------------


def test_c11_cli_benchmark_byte_identical(capsys, tmp_path):
    outs = []
    for name in ("a", "b"):
        outdir = tmp_path / name
        cmd = [
            sys.executable,
            "-m",
            "stringbo.cli",
            "benchmark",
            "--task",
            "count-101-bin20",
            "--seeds",
            "3",
            "--out",
            str(outdir),
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        files = sorted(p.name for p in outdir.iterdir())
        assert files
        outs.append({p.name: p.read_bytes() for p in outdir.iterdir()})
    assert outs[0] == outs[1]
    _report(capsys, f"C11 CLI determinism: {len(outs[0])} CSVs byte-identical across two runs")


# ---------------------------------------------------------------------------
# substitutes for the out-of-scope experiments
# ---------------------------------------------------------------------------


def test_c12_symreg_bo_improves_on_random(capsys):
    seeds = list(range(15))
    with ProcessPoolExecutor(max_workers=WORKERS) as ex:
        all_bests = list(ex.map(_symreg_bo_bests, seeds))
    for bests in all_bests:
        assert len(bests) == 50
        assert all(b2 >= b1 for b1, b2 in zip(bests, bests[1:]))
    bo_mean = float(np.mean([b[-1] for b in all_bests]))

    task = TASKS["symreg"]
    rs_finals = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        obj = task.objective_factory(rng)
        rs_finals.append(max(obj(s) for s in task.space.sample(rng, 50)))
    rs_mean = float(np.mean(rs_finals))
    _report(
        capsys,
        f"C12 symbolic regression (50 evals, 15 seeds): BO mean {bo_mean:.3f} "
        f"> random mean {rs_mean:.3f}, traces monotone",
    )
    assert bo_mean > rs_mean


def test_c13_codon_space_bo_run(capsys):
    task = TASKS["protein-tikenifgvs"]
    finals, init_bests = [], []
    for seed in range(3):
        cfg = BoConfig(budget=10, seed=seed)
        trace = run(task.objective_factory(np.random.default_rng(seed)), task.space, cfg)
        bests = trace.best_so_far
        assert all(b2 >= b1 for b1, b2 in zip(bests, bests[1:]))
        init_count = len(trace.records) - 10
        init_bests.append(bests[init_count - 1])
        finals.append(bests[-1])
    _report(
        capsys,
        f"C13 TIKENIFGVS codon-space BO (3 seeds): init best mean {np.mean(init_bests):.2f} "
        f"-> final best mean {np.mean(finals):.2f}, traces monotone",
    )
    assert float(np.mean(finals)) >= float(np.mean(init_bests))
