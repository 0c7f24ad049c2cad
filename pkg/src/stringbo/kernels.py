"""Subsequence string kernel (SSK), its gradients and variants, plus baseline kernels.

Strings are represented as tuples of tokens. A token is usually a single
character, but may be a multi-character unit (e.g. a codon) that the kernel
treats as one symbol.

The SSK counts shared, possibly non-contiguous token subsequences of up to
``max_order`` tokens. Each occurrence of a subsequence ``u`` in a string is
weighted ``match_decay**len(u) * gap_decay**g`` where ``g`` is the number of
skipped positions inside the occurrence's index span, so contiguous
occurrences carry no gap penalty.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit, prange

Tokens = tuple[str, ...]


def as_tokens(s: str | Sequence[str]) -> Tokens:
    """Coerce a plain string (one token per character) or token sequence."""
    if isinstance(s, str):
        return tuple(s)
    return tuple(s)


@dataclass(frozen=True)
class KernelParams:
    """SSK hyperparameters: decays, maximum subsequence order, split count."""

    match_decay: float = 0.8
    gap_decay: float = 0.8
    max_order: int = 5
    splits: int = 1

    def validate(self) -> None:
        if not (math.isfinite(self.match_decay) and math.isfinite(self.gap_decay)):
            raise ValueError("kernel decays must be finite")
        if not (0.0 < self.match_decay <= 1.0):
            raise ValueError(f"match_decay must be in (0, 1], got {self.match_decay}")
        if not (0.0 < self.gap_decay <= 1.0):
            raise ValueError(f"gap_decay must be in (0, 1], got {self.gap_decay}")
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        if self.splits < 1:
            raise ValueError("splits must be >= 1")


@dataclass
class GramMatrix:
    values: np.ndarray
    row_strings: list[Tokens]


# ---------------------------------------------------------------------------
# numba cores
#
# The dynamic program follows the vectorized matrix recursion
#   K'_0 = 1;  K''_i = lm^2 (M . K'_{i-1});  k_i = sum(K''_i);
#   K'_i = D_a^T K''_i D_b
# where D_l is the upper-shifted geometric matrix D[j, k] = lg^(k-j-1) for
# k > j. Multiplication by D (and by dD/d lg) is done with linear column/row
# scans instead of explicit matrix products, which keeps one pair at
# O(order * |a| * |b|).
# ---------------------------------------------------------------------------


@njit(cache=True)
def _ssk_core(xa, xb, lm, lg, n):  # pragma: no cover - exercised via wrappers
    la = xa.shape[0]
    lb = xb.shape[0]
    order = min(n, la, lb)
    lm2 = lm * lm
    Kp = np.ones((la, lb))
    Kpp = np.empty((la, lb))
    S = np.empty((la, lb))
    total = 0.0
    for i in range(order):
        ki = 0.0
        for j in range(la):
            for k in range(lb):
                if xa[j] == xb[k]:
                    v = lm2 * Kp[j, k]
                    Kpp[j, k] = v
                    ki += v
                else:
                    Kpp[j, k] = 0.0
        total += ki
        if i == order - 1:
            break
        # S = Kpp @ D_b
        for j in range(la):
            S[j, 0] = 0.0
        for k in range(1, lb):
            for j in range(la):
                S[j, k] = lg * S[j, k - 1] + Kpp[j, k - 1]
        # Kp = D_a^T @ S
        for k in range(lb):
            Kp[0, k] = 0.0
        for j in range(1, la):
            for k in range(lb):
                Kp[j, k] = lg * Kp[j - 1, k] + S[j - 1, k]
    return total


@njit(cache=True)
def _ssk_core_grad(xa, xb, lm, lg, n):  # pragma: no cover
    la = xa.shape[0]
    lb = xb.shape[0]
    order = min(n, la, lb)
    lm2 = lm * lm
    Kp = np.ones((la, lb))
    dKp_m = np.zeros((la, lb))
    dKp_g = np.zeros((la, lb))
    Kpp = np.empty((la, lb))
    dKpp_m = np.empty((la, lb))
    dKpp_g = np.empty((la, lb))
    total = 0.0
    dtot_m = 0.0
    dtot_g = 0.0
    for i in range(order):
        ki = 0.0
        dki_m = 0.0
        dki_g = 0.0
        for j in range(la):
            for k in range(lb):
                if xa[j] == xb[k]:
                    v = lm2 * Kp[j, k]
                    Kpp[j, k] = v
                    ki += v
                    vm = 2.0 * lm * Kp[j, k] + lm2 * dKp_m[j, k]
                    dKpp_m[j, k] = vm
                    dki_m += vm
                    vg = lm2 * dKp_g[j, k]
                    dKpp_g[j, k] = vg
                    dki_g += vg
                else:
                    Kpp[j, k] = 0.0
                    dKpp_m[j, k] = 0.0
                    dKpp_g[j, k] = 0.0
        total += ki
        dtot_m += dki_m
        dtot_g += dki_g
        if i == order - 1:
            break
        # column scans: X @ D_b and X @ dD_b (the latter from the former)
        S = np.zeros((la, lb))
        Sm = np.zeros((la, lb))
        Sg = np.zeros((la, lb))
        U = np.zeros((la, lb))
        for k in range(1, lb):
            for j in range(la):
                S[j, k] = lg * S[j, k - 1] + Kpp[j, k - 1]
                Sm[j, k] = lg * Sm[j, k - 1] + dKpp_m[j, k - 1]
                Sg[j, k] = lg * Sg[j, k - 1] + dKpp_g[j, k - 1]
                U[j, k] = lg * U[j, k - 1] + S[j, k - 1]
        # row scans: D_a^T @ X and dD_a^T @ X
        Kp = np.zeros((la, lb))
        dKp_m = np.zeros((la, lb))
        term2 = np.zeros((la, lb))
        term3 = np.zeros((la, lb))
        term1 = np.zeros((la, lb))
        for j in range(1, la):
            for k in range(lb):
                Kp[j, k] = lg * Kp[j - 1, k] + S[j - 1, k]
                dKp_m[j, k] = lg * dKp_m[j - 1, k] + Sm[j - 1, k]
                term2[j, k] = lg * term2[j - 1, k] + Sg[j - 1, k]
                term3[j, k] = lg * term3[j - 1, k] + U[j - 1, k]
                term1[j, k] = lg * term1[j - 1, k] + Kp[j - 1, k]
        dKp_g = term1 + term2 + term3
    return total, dtot_m, dtot_g


@njit(cache=True, parallel=True)
def _ssk_cross_core(XQ, lq, XT, lt, lm, lg, n):  # pragma: no cover
    """Raw SSK values for all query x reference pairs (padded int matrices)."""
    nq = XQ.shape[0]
    nt = XT.shape[0]
    out = np.empty((nq, nt))
    for i in prange(nq):
        a = XQ[i, : lq[i]]
        for j in range(nt):
            out[i, j] = _ssk_core(a, XT[j, : lt[j]], lm, lg, n)
    return out


@njit(cache=True, parallel=True)
def _ssk_self_core(X, ln, lm, lg, n):  # pragma: no cover
    m = X.shape[0]
    out = np.empty(m)
    for i in prange(m):
        out[i] = _ssk_core(X[i, : ln[i]], X[i, : ln[i]], lm, lg, n)
    return out


def _check_pair(a: Tokens, b: Tokens, params: KernelParams) -> None:
    if len(a) == 0 or len(b) == 0:
        raise ValueError("SSK is undefined for empty strings")
    params.validate()


def _encode_pair(a: Tokens, b: Tokens) -> tuple[np.ndarray, np.ndarray]:
    vocab: dict[str, int] = {}
    for tok in itertools.chain(a, b):
        if tok not in vocab:
            vocab[tok] = len(vocab)
    xa = np.array([vocab[t] for t in a], dtype=np.int32)
    xb = np.array([vocab[t] for t in b], dtype=np.int32)
    return xa, xb


def encode_strings(strings: Sequence[Tokens]) -> tuple[np.ndarray, np.ndarray]:
    """Pad token strings into one int matrix + length vector (shared vocab)."""
    vocab: dict[str, int] = {}
    for s in strings:
        for tok in s:
            if tok not in vocab:
                vocab[tok] = len(vocab)
    maxlen = max((len(s) for s in strings), default=1)
    X = np.zeros((len(strings), max(maxlen, 1)), dtype=np.int32)
    ln = np.zeros(len(strings), dtype=np.int64)
    for i, s in enumerate(strings):
        ln[i] = len(s)
        for j, tok in enumerate(s):
            X[i, j] = vocab[tok]
    return X, ln


# ---------------------------------------------------------------------------
# public kernel operations
# ---------------------------------------------------------------------------


def ssk(a: Tokens, b: Tokens, params: KernelParams) -> float:
    """Unnormalized SSK via the matrix dynamic program."""
    a, b = as_tokens(a), as_tokens(b)
    _check_pair(a, b, params)
    xa, xb = _encode_pair(a, b)
    return float(_ssk_core(xa, xb, params.match_decay, params.gap_decay, params.max_order))


def ssk_grad(a: Tokens, b: Tokens, params: KernelParams) -> tuple[float, float, float]:
    """SSK value and partial derivatives wrt (match_decay, gap_decay)."""
    a, b = as_tokens(a), as_tokens(b)
    _check_pair(a, b, params)
    xa, xb = _encode_pair(a, b)
    v, dm, dg = _ssk_core_grad(xa, xb, params.match_decay, params.gap_decay, params.max_order)
    return float(v), float(dm), float(dg)


def subsequence_contribution(u: Tokens, s: Tokens, params: KernelParams) -> float:
    """Total weight of subsequence ``u`` inside ``s``.

    Each occurrence at indices i_1 < ... < i_k contributes
    ``match_decay**k * gap_decay**(i_k - i_1 - (k - 1))``.
    """
    u, s = as_tokens(u), as_tokens(s)
    k = len(u)
    total = 0.0
    for idx in itertools.combinations(range(len(s)), k):
        if all(s[i] == t for i, t in zip(idx, u)):
            gaps = idx[-1] - idx[0] - (k - 1)
            total += params.match_decay**k * params.gap_decay**gaps
    return total


def ssk_bruteforce(a: Tokens, b: Tokens, params: KernelParams) -> float:
    """Oracle SSK by explicit enumeration of all subsequences up to max_order.

    Exponential in max_order; only usable at test scale.
    """
    a, b = as_tokens(a), as_tokens(b)
    _check_pair(a, b, params)

    def feature_map(s: Tokens) -> dict[Tokens, float]:
        feats: dict[Tokens, float] = {}
        for k in range(1, params.max_order + 1):
            for idx in itertools.combinations(range(len(s)), k):
                u = tuple(s[i] for i in idx)
                gaps = idx[-1] - idx[0] - (k - 1)
                w = params.match_decay**k * params.gap_decay**gaps
                feats[u] = feats.get(u, 0.0) + w
        return feats

    fa = feature_map(a)
    fb = feature_map(b)
    return sum(w * fb[u] for u, w in fa.items() if u in fb)


def ssk_normalized(a: Tokens, b: Tokens, params: KernelParams) -> float:
    """Normalized SSK, k(a,b)/sqrt(k(a,a) k(b,b)); exactly 1 for a == b."""
    a, b = as_tokens(a), as_tokens(b)
    _check_pair(a, b, params)
    if a == b:
        return 1.0
    kab = ssk(a, b, params)
    if kab == 0.0:
        return 0.0
    kaa = ssk(a, a, params)
    kbb = ssk(b, b, params)
    return kab / math.sqrt(kaa * kbb)


def ssk_normalized_grad(a: Tokens, b: Tokens, params: KernelParams) -> tuple[float, float, float]:
    """Normalized SSK with gradients via the quotient rule."""
    a, b = as_tokens(a), as_tokens(b)
    _check_pair(a, b, params)
    if a == b:
        return 1.0, 0.0, 0.0
    kab, mab, gab = ssk_grad(a, b, params)
    kaa, maa, gaa = ssk_grad(a, a, params)
    kbb, mbb, gbb = ssk_grad(b, b, params)
    denom = math.sqrt(kaa * kbb)
    val = kab / denom
    dm = (mab - 0.5 * kab * (maa / kaa + mbb / kbb)) / denom
    dg = (gab - 0.5 * kab * (gaa / kaa + gbb / kbb)) / denom
    return val, dm, dg


def split_parts(s: Tokens, m: int) -> list[Tokens]:
    """Partition into m contiguous near-equal parts, remainder to the front."""
    s = as_tokens(s)
    if m > len(s):
        raise ValueError(f"cannot split a length-{len(s)} string into {m} parts")
    base, rem = divmod(len(s), m)
    parts = []
    pos = 0
    for i in range(m):
        size = base + (1 if i < rem else 0)
        parts.append(s[pos : pos + size])
        pos += size
    return parts


def ssk_split(a: Tokens, b: Tokens, params: KernelParams) -> float:
    """Sum of normalized SSKs over m aligned contiguous parts (m = params.splits)."""
    a, b = as_tokens(a), as_tokens(b)
    _check_pair(a, b, params)
    if params.splits == 1:
        return ssk_normalized(a, b, params)
    pa = split_parts(a, params.splits)
    pb = split_parts(b, params.splits)
    return sum(ssk_normalized(x, y, params) for x, y in zip(pa, pb))


def ssk_split_grad(a: Tokens, b: Tokens, params: KernelParams) -> tuple[float, float, float]:
    a, b = as_tokens(a), as_tokens(b)
    _check_pair(a, b, params)
    if params.splits == 1:
        return ssk_normalized_grad(a, b, params)
    pa = split_parts(a, params.splits)
    pb = split_parts(b, params.splits)
    v = dm = dg = 0.0
    for x, y in zip(pa, pb):
        pv, pm, pg = ssk_normalized_grad(x, y, params)
        v += pv
        dm += pm
        dg += pg
    return v, dm, dg


def ngram_features(s: Tokens, max_n: int) -> dict[Tokens, int]:
    """Counts of all contiguous n-grams for n = 1..max_n."""
    s = as_tokens(s)
    counts: dict[Tokens, int] = {}
    for n in range(1, max_n + 1):
        for i in range(len(s) - n + 1):
            g = s[i : i + n]
            counts[g] = counts.get(g, 0) + 1
    return counts


def ngram_feature_kernel(a: Tokens, b: Tokens, max_n: int, lengthscale: float) -> float:
    """Squared-exponential kernel on bag-of-ngrams count vectors."""
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if not (lengthscale > 0):
        raise ValueError("lengthscale must be positive")
    fa = ngram_features(a, max_n)
    fb = ngram_features(b, max_n)
    d2 = 0.0
    for g in fa.keys() | fb.keys():
        diff = fa.get(g, 0) - fb.get(g, 0)
        d2 += diff * diff
    return math.exp(-d2 / (2.0 * lengthscale * lengthscale))


def onehot_linear_kernel(a: Tokens, b: Tokens) -> float:
    """Positional agreement count (linear kernel on one-hot encodings)."""
    a, b = as_tokens(a), as_tokens(b)
    if len(a) != len(b):
        raise ValueError(f"onehot kernel needs equal lengths, got {len(a)} and {len(b)}")
    return float(sum(x == y for x, y in zip(a, b)))


def _pair_value(a: Tokens, b: Tokens, params: KernelParams, kernel_kind: str, **kw) -> float:
    if kernel_kind == "ssk":
        return ssk_split(a, b, params)
    if kernel_kind == "ngram":
        return ngram_feature_kernel(a, b, kw.get("max_n", params.max_order), kw.get("lengthscale", 1.0))
    if kernel_kind == "onehot":
        return onehot_linear_kernel(a, b)
    raise ValueError(f"unknown kernel kind {kernel_kind!r}")


def gram(
    strings: Sequence[Tokens],
    params: KernelParams,
    kernel_kind: str = "ssk",
    **kw,
) -> GramMatrix:
    """Symmetric matrix of pairwise kernel values (upper triangle mirrored)."""
    strings = [as_tokens(s) for s in strings]
    t = len(strings)
    K = np.empty((t, t))
    for i in range(t):
        for j in range(i, t):
            try:
                K[i, j] = _pair_value(strings[i], strings[j], params, kernel_kind, **kw)
            except ValueError as exc:
                raise ValueError(f"kernel failed on pair ({i}, {j}): {exc}") from exc
            K[j, i] = K[i, j]
    return GramMatrix(values=K, row_strings=list(strings))


def cross_gram(
    queries: Sequence[Tokens],
    refs: Sequence[Tokens],
    params: KernelParams,
    ref_self: np.ndarray | None = None,
) -> np.ndarray:
    """Normalized (split) SSK values for every query against every reference.

    Bulk path used by acquisition optimization; for m splits each string is
    partitioned once and the per-part kernels are batched through numba.
    ``ref_self`` caches the raw per-part self kernels of ``refs`` across calls.
    """
    params.validate()
    queries = [as_tokens(q) for q in queries]
    refs = [as_tokens(r) for r in refs]
    if any(len(s) == 0 for s in itertools.chain(queries, refs)):
        raise ValueError("SSK is undefined for empty strings")
    m = params.splits
    qparts = [split_parts(q, m) for q in queries]
    rparts = [split_parts(r, m) for r in refs]
    out = np.zeros((len(queries), len(refs)))
    lm, lg, n = params.match_decay, params.gap_decay, params.max_order
    for p in range(m):
        qp = [parts[p] for parts in qparts]
        rp = [parts[p] for parts in rparts]
        XA, la = encode_strings(qp + rp)
        XQ, lq = XA[: len(qp)], la[: len(qp)]
        XT, lt = XA[len(qp) :], la[len(qp) :]
        raw = _ssk_cross_core(XQ, lq, XT, lt, lm, lg, n)
        qself = _ssk_self_core(XQ, lq, lm, lg, n)
        if ref_self is not None:
            tself = ref_self[p]
        else:
            tself = _ssk_self_core(XT, lt, lm, lg, n)
        part = raw / np.sqrt(np.outer(qself, tself))
        # keep exact unit values for identical parts
        for i, x in enumerate(qp):
            for j, y in enumerate(rp):
                if x == y:
                    part[i, j] = 1.0
        out += part
    return out


@njit(cache=True, parallel=True)
def _ssk_pairs_grad_core(X, ln, I, J, lm, lg, n):  # pragma: no cover
    m = I.shape[0]
    vals = np.empty(m)
    dms = np.empty(m)
    dgs = np.empty(m)
    for p in prange(m):
        i = I[p]
        j = J[p]
        v, dm, dg = _ssk_core_grad(X[i, : ln[i]], X[j, : ln[j]], lm, lg, n)
        vals[p] = v
        dms[p] = dm
        dgs[p] = dg
    return vals, dms, dgs


def gram_with_grads(
    strings: Sequence[Tokens], params: KernelParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized (split) SSK Gram matrix plus elementwise decay gradients.

    Diagonal entries are exactly ``splits`` with zero gradient; identical
    off-diagonal strings likewise (the normalized kernel is constant there).
    """
    params.validate()
    strings = [as_tokens(s) for s in strings]
    if any(len(s) == 0 for s in strings):
        raise ValueError("SSK is undefined for empty strings")
    t = len(strings)
    m = params.splits
    lm, lg, n = params.match_decay, params.gap_decay, params.max_order
    K = np.zeros((t, t))
    dKm = np.zeros((t, t))
    dKg = np.zeros((t, t))
    iu, ju = np.triu_indices(t, k=1)
    allparts = [split_parts(s, m) for s in strings]
    for p in range(m):
        parts = [ap[p] for ap in allparts]
        X, ln = encode_strings(parts)
        sidx = np.arange(t, dtype=np.int64)
        sv, sm, sg = _ssk_pairs_grad_core(X, ln, sidx, sidx, lm, lg, n)
        if len(iu):
            pv, pm, pg = _ssk_pairs_grad_core(
                X, ln, iu.astype(np.int64), ju.astype(np.int64), lm, lg, n
            )
            denom = np.sqrt(sv[iu] * sv[ju])
            rel = sm[iu] / sv[iu] + sm[ju] / sv[ju]
            relg = sg[iu] / sv[iu] + sg[ju] / sv[ju]
            nv = pv / denom
            nm = (pm - 0.5 * pv * rel) / denom
            ng = (pg - 0.5 * pv * relg) / denom
            same = np.array([parts[i] == parts[j] for i, j in zip(iu, ju)])
            nv[same] = 1.0
            nm[same] = 0.0
            ng[same] = 0.0
            K[iu, ju] += nv
            dKm[iu, ju] += nm
            dKg[iu, ju] += ng
        K[np.diag_indices(t)] += 1.0
    K[ju, iu] = K[iu, ju]
    dKm[ju, iu] = dKm[iu, ju]
    dKg[ju, iu] = dKg[iu, ju]
    return K, dKm, dKg


def self_kernel_cache(refs: Sequence[Tokens], params: KernelParams) -> list[np.ndarray]:
    """Raw per-part self kernels of ``refs``, for reuse in cross_gram."""
    refs = [as_tokens(r) for r in refs]
    cache = []
    for p in range(params.splits):
        rp = [split_parts(r, params.splits)[p] for r in refs]
        X, ln = encode_strings(rp)
        cache.append(_ssk_self_core(X, ln, params.match_decay, params.gap_decay, params.max_order))
    return cache
