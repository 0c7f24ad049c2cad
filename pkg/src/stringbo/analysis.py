"""Result aggregation, trace CSV serialization, and kernel PCA."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .bo import BoTrace, StepRecord
from .kernels import KernelParams, Tokens, as_tokens, gram

TRACE_COLUMNS = [
    "seed",
    "step",
    "string",
    "value",
    "best_so_far",
    "lambda_m",
    "lambda_g",
    "output_scale",
    "noise_var",
    "overhead_s",
]

EIG_TOL = -1e-8


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class KpcaResult:
    components: np.ndarray  # (n_strings, n_components)
    eigenvalues: np.ndarray  # non-increasing


def kpca(strings, params: KernelParams, components: int = 2) -> KpcaResult:
    """Top principal components of the normalized SSK feature space.

    The Gram matrix is double-centered and eigendecomposed; coordinates are
    eigenvectors scaled by sqrt(eigenvalue). Component signs are canonicalized
    so the largest-magnitude coordinate is positive.
    """
    strings = [as_tokens(s) for s in strings]
    if len(strings) < 2:
        raise ValueError("kpca needs at least 2 strings")
    K = gram(strings, params, "ssk").values
    n = len(strings)
    one = np.full((n, n), 1.0 / n)
    Kc = K - one @ K - K @ one + one @ K @ one
    eigvals, eigvecs = np.linalg.eigh(Kc)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    comps = min(components, n)
    coords = eigvecs[:, :comps] * np.sqrt(np.clip(eigvals[:comps], 0.0, None))
    for j in range(comps):
        pivot = np.argmax(np.abs(coords[:, j]))
        if coords[pivot, j] < 0:
            coords[:, j] = -coords[:, j]
    return KpcaResult(components=coords, eigenvalues=eigvals)


def aggregate(traces: list[BoTrace]) -> list[dict]:
    """Per-step mean and standard error of best-so-far plus mean overhead."""
    if not traces:
        raise ValueError("no traces to aggregate")
    lengths = {len(t.records) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"traces have unequal lengths {sorted(lengths)}")
    n = len(traces)
    rows = []
    for i in range(lengths.pop()):
        best = np.array([t.records[i].best_so_far for t in traces])
        overhead = np.array([t.records[i].overhead_s for t in traces])
        sd = float(np.std(best, ddof=1)) if n > 1 else 0.0
        rows.append(
            {
                "step": traces[0].records[i].step,
                "mean_best": float(np.mean(best)),
                "stderr_best": sd / math.sqrt(n),
                "mean_overhead_s": float(np.mean(overhead)),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def trace_to_csv(trace: BoTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace.records:
        p = r.params or {}
        w.writerow(
            [
                trace.seed,
                r.step,
                "".join(r.string),
                _fmt(r.value),
                _fmt(r.best_so_far),
                _fmt(p["lambda_m"]) if "lambda_m" in p else "",
                _fmt(p["lambda_g"]) if "lambda_g" in p else "",
                _fmt(p["output_scale"]) if "output_scale" in p else "",
                _fmt(p["noise_var"]) if "noise_var" in p else "",
                _fmt(r.overhead_s),
            ]
        )
    return buf.getvalue()


def trace_from_csv(text: str) -> BoTrace:
    reader = csv.DictReader(io.StringIO(text))
    records = []
    seed = 0
    for row in reader:
        seed = int(row["seed"])
        params = None
        if row["lambda_m"]:
            params = {
                "lambda_m": float(row["lambda_m"]),
                "lambda_g": float(row["lambda_g"]),
                "output_scale": float(row["output_scale"]),
                "noise_var": float(row["noise_var"]),
            }
        records.append(
            StepRecord(
                step=int(row["step"]),
                string=as_tokens(row["string"]),
                value=float(row["value"]),
                best_so_far=float(row["best_so_far"]),
                params=params,
                overhead_s=float(row["overhead_s"]),
            )
        )
    return BoTrace(seed=seed, records=records)


def aggregate_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "mean_best", "stderr_best", "mean_overhead_s"])
    for r in rows:
        w.writerow(
            [r["step"], _fmt(r["mean_best"]), _fmt(r["stderr_best"]), _fmt(r["mean_overhead_s"])]
        )
    return buf.getvalue()


def kpca_to_csv(strings, result: KpcaResult, scores=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    ncomp = result.components.shape[1]
    header = ["string"] + [f"pc{j+1}" for j in range(ncomp)]
    if scores is not None:
        header.append("score")
    w.writerow(header)
    for i, s in enumerate(strings):
        row = ["".join(as_tokens(s))] + [_fmt(v) for v in result.components[i]]
        if scores is not None:
            row.append(_fmt(scores[i]))
        w.writerow(row)
    return buf.getvalue()
