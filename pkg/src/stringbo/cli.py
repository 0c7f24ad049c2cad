"""Command-line front end: run configs, built-in benchmarks, KPCA, aggregation."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, benchmarks
from .bo import BoConfig, run_replicated
from .ga import GaConfig
from .grammar import ARITHMETIC_GRAMMAR, load_grammar
from .kernels import KernelParams, as_tokens
from .objectives import PatternSpec, count_pattern, external_objective, symreg_score
from .spaces import (
    Alphabet,
    GrammarConstrained,
    Unconstrained,
    load_candidate_set,
    load_codon_table,
    load_local_constraints,
    protein_space,
)

log = logging.getLogger("stringbo")


def _setup_logging():
    level = os.environ.get("STRINGBO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _parse_seeds(text: str) -> list[int]:
    if "," in text:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    else:
        seeds = list(range(int(text)))
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    return seeds


def _space_from_config(spec: dict, args):
    kind = spec["type"]
    if kind == "unconstrained":
        lo = spec.get("min_length", spec.get("length"))
        hi = spec.get("max_length", spec.get("length"))
        return Unconstrained(Alphabet(tuple(spec["alphabet"])), (lo, hi))
    if kind == "local":
        return load_local_constraints(Path(spec["file"]).read_text())
    if kind == "grammar":
        if spec.get("builtin") == "arithmetic" or "file" not in spec:
            return GrammarConstrained(grammar=ARITHMETIC_GRAMMAR)
        return GrammarConstrained(grammar=load_grammar(Path(spec["file"]).read_text()))
    if kind == "candidates":
        return load_candidate_set(Path(spec["file"]).read_text())
    if kind == "protein":
        table = None
        if spec.get("codon_table"):
            table = load_codon_table(Path(spec["codon_table"]).read_text())
        return protein_space(
            spec["protein"],
            table=table,
            representation=spec.get("representation", "codon"),
            enforce_codons=spec.get("enforce_codons", True),
        )
    raise ValueError(f"unknown space type {kind!r}")


def _objective_factory_from_config(spec: dict):
    kind = spec["type"]
    if kind == "pattern":
        ps = PatternSpec(
            pattern=as_tokens(spec["pattern"]),
            mode=spec.get("mode", "overlapping"),
            window=tuple(spec["window"]) if spec.get("window") else None,
            noise_sd=spec.get("noise_sd"),
        )

        def factory(seed):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
            return lambda s: count_pattern(s, ps, rng)

        return factory
    if kind == "symreg":
        return lambda seed: symreg_score
    if kind == "external":
        fn = external_objective(
            spec["command"], negate=spec.get("negate", False), timeout=spec.get("timeout")
        )
        return lambda seed: fn
    raise ValueError(f"unknown objective type {kind!r}")


def _bo_config_from_config(cfg: dict, seed: int = 0) -> BoConfig:
    kernel = cfg.get("kernel", {})
    params = KernelParams(
        match_decay=kernel.get("match_decay", 0.8),
        gap_decay=kernel.get("gap_decay", 0.8),
        max_order=kernel.get("max_order", 5),
        splits=kernel.get("splits", 1),
    )
    ga = GaConfig(**cfg.get("ga", {}))
    return BoConfig(
        budget=cfg["budget"],
        init_count=cfg.get("init_count"),
        kernel_kind=kernel.get("kind", "ssk"),
        kernel_init=params,
        ga=ga,
        acquisition_optimizer=cfg.get("optimizer", "ga"),
        rs_samples=cfg.get("rs_samples", 10_000),
        subsample_count=cfg.get("subsample_count", 100),
        seed=seed,
    )


def _config_worker(cfg: dict, seed: int):
    space = _space_from_config(cfg["space"], None)
    objective_factory = _objective_factory_from_config(cfg["objective"])
    traces = run_replicated(
        None, space, _bo_config_from_config(cfg), [seed], objective_factory=objective_factory
    )
    return traces[0]


def _benchmark_worker(task_name: str, optimizer: str, seed: int):
    task = benchmarks.TASKS[task_name]

    def objective_factory(s):
        rng = np.random.default_rng(np.random.SeedSequence([s, 7]))
        return task.objective_factory(rng)

    traces = run_replicated(
        None,
        task.space,
        benchmarks.task_config(task, optimizer=optimizer),
        [seed],
        objective_factory=objective_factory,
    )
    return traces[0]


def _run_seeds(worker, worker_args: tuple, seeds, jobs):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(worker, *worker_args, seed) for seed in seeds]
            return [f.result() for f in futures]
    return [worker(*worker_args, seed) for seed in seeds]


def _write_outputs(traces, outdir: Path, prefix: str, timings: bool = False):
    # Wall-clock overheads are scrubbed by default so that identical
    # config+seeds give byte-identical files; --timings opts back in.
    if not timings:
        traces = [
            replace(
                t, records=[replace(r, overhead_s=0.0) for r in t.records]
            )
            for t in traces
        ]
    outdir.mkdir(parents=True, exist_ok=True)
    for trace in traces:
        (outdir / f"{prefix}_seed{trace.seed}.csv").write_text(analysis.trace_to_csv(trace))
    ok = [t for t in traces if t.error is None]
    if ok and len({len(t.records) for t in ok}) == 1:
        rows = analysis.aggregate(ok)
        (outdir / f"{prefix}_aggregate.csv").write_text(analysis.aggregate_to_csv(rows))


def cmd_run(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    seeds = _parse_seeds(args.seeds) if args.seeds else cfg.get("seeds", [0])
    traces = _run_seeds(_config_worker, (cfg,), seeds, args.jobs)
    _write_outputs(traces, Path(args.out), "run", timings=args.timings)
    failed = [t.seed for t in traces if t.error is not None]
    if failed:
        print(f"seeds failed: {failed}", file=sys.stderr)
        return 1
    return 0


def cmd_benchmark(args) -> int:
    if args.task not in benchmarks.TASKS:
        print(
            f"unknown task {args.task!r}; available: {', '.join(sorted(benchmarks.TASKS))}",
            file=sys.stderr,
        )
        return 2
    seeds = _parse_seeds(args.seeds)
    traces = _run_seeds(_benchmark_worker, (args.task, args.optimizer), seeds, args.jobs)
    _write_outputs(traces, Path(args.out), args.task, timings=args.timings)
    failed = [t.seed for t in traces if t.error is not None]
    if failed:
        print(f"seeds failed: {failed}", file=sys.stderr)
        return 1
    return 0


def _read_strings_file(path: Path):
    text = path.read_text()
    strings, scores = [], []
    first = text.splitlines()[0] if text.strip() else ""
    if "," in first:
        for row in csv.DictReader(io.StringIO(text)):
            strings.append(as_tokens(row["string"]))
            if "score" in row and row["score"]:
                scores.append(float(row["score"]))
    else:
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                strings.append(as_tokens(line))
    return strings, (scores if scores else None)


def cmd_kpca(args) -> int:
    strings, scores = _read_strings_file(Path(args.strings))
    params = KernelParams(
        match_decay=args.match_decay,
        gap_decay=args.gap_decay,
        max_order=args.max_order,
        splits=args.splits,
    )
    result = analysis.kpca(strings, params, components=args.components)
    Path(args.out).write_text(analysis.kpca_to_csv(strings, result, scores))
    return 0


def cmd_aggregate(args) -> int:
    traces = [analysis.trace_from_csv(Path(p).read_text()) for p in args.traces]
    rows = analysis.aggregate(traces)
    Path(args.out).write_text(analysis.aggregate_to_csv(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stringbo")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="execute a JSON run config")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--seeds", default=None, help="count or comma-separated list")
    pr.add_argument("--jobs", type=int, default=1)
    pr.add_argument("--timings", action="store_true", help="keep wall-clock overhead in CSVs")
    pr.set_defaults(fn=cmd_run)

    pb = sub.add_parser("benchmark", help="run a named built-in task")
    pb.add_argument("--task", required=True)
    pb.add_argument("--seeds", default="15")
    pb.add_argument("--optimizer", choices=["ga", "rs", "subsample"], default="ga")
    pb.add_argument("--out", default="results")
    pb.add_argument("--jobs", type=int, default=1)
    pb.add_argument("--timings", action="store_true", help="keep wall-clock overhead in CSVs")
    pb.set_defaults(fn=cmd_benchmark)

    pk = sub.add_parser("kpca", help="kernel PCA of a string set")
    pk.add_argument("--strings", required=True)
    pk.add_argument("--out", required=True)
    pk.add_argument("--components", type=int, default=2)
    pk.add_argument("--match-decay", dest="match_decay", type=float, default=0.8)
    pk.add_argument("--gap-decay", dest="gap_decay", type=float, default=0.8)
    pk.add_argument("--max-order", dest="max_order", type=int, default=5)
    pk.add_argument("--splits", type=int, default=1)
    pk.set_defaults(fn=cmd_kpca)

    pa = sub.add_parser("aggregate", help="merge trace CSVs")
    pa.add_argument("traces", nargs="+")
    pa.add_argument("--out", required=True)
    pa.set_defaults(fn=cmd_aggregate)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except Exception as exc:  # surface a diagnostic, nonzero exit
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
