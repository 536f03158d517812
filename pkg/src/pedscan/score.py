"""Per-SNP score tests over the precomputed null-model context.

Each SNP costs three pooled quantities assembled from per-block pieces:
the quadratic form Q = sum a' U a, the linear form R = sum a' q, and the
cross term W = sum N' U a, giving

    S = R' [Q - W' (sum N' U N)^-1 W]^-1 R

which under the null follows chi-square with one degree of freedom per
included trait. Nothing is refitted per SNP; a full genome scan touches
the null model exactly once. Encodings with values in {-1, 0, +1} take a
compiled index-set fast path when available.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import chdtri, gammaincc, gammaln

from ._kernels import BACKEND, ChunkKernel
from .errors import ValidationError
from .genotypes import GenotypeMatrix
from .nullmodel import ScoreContext
from .pedigree import Cohort

log = logging.getLogger(__name__)

MODELS = ("additive", "dominant", "recessive")
SCAN_CHUNK = 512  # fixed regardless of thread count so results never depend on it
DEGENERATE_RTOL = 1e-10
CHI2_1_MEDIAN = 0.4549364231195724
_LN10 = np.log(10.0)


def encode_genotypes(values, model: str) -> np.ndarray:
    """Map 0..2 minor-allele counts (or additive dosages) onto the signed
    encoding; missing values encode to 0 so untyped individuals drop out of
    every sum. additive: x - 1; dominant: {0,1} -> -1, 2 -> +1; recessive:
    0 -> -1, {1,2} -> +1."""
    v = np.asarray(values, dtype=float)
    out = np.zeros(v.shape)
    ok = np.isfinite(v)
    if model == "additive":
        out[ok] = v[ok] - 1.0
        return out
    if model not in MODELS:
        raise ValidationError(f"unknown genotype model {model!r}")
    if np.any(v[ok] != np.rint(v[ok])):
        raise ValidationError(f"{model} model needs hard calls, but fractional "
                              "dosages are present")
    if model == "dominant":
        out[ok] = np.where(v[ok] == 2.0, 1.0, -1.0)
    else:
        out[ok] = np.where(v[ok] == 0.0, -1.0, 1.0)
    return out


@dataclass
class SnpEncoding:
    """One SNP's encoded column aligned to the cohort index."""

    model: str
    values: np.ndarray  # encoded, 0 where missing
    missing: np.ndarray  # bool per individual
    raw: np.ndarray  # 0..2 scale, NaN where missing
    minor_counts: np.ndarray | None = None  # per trait, set by maf_filter


def encode_snp(raw_column, model: str) -> SnpEncoding:
    raw = np.asarray(raw_column, dtype=float)
    return SnpEncoding(model=model, values=encode_genotypes(raw, model),
                       missing=~np.isfinite(raw), raw=raw)


def maf_filter(enc: SnpEncoding, observed, threshold: int = 3) -> np.ndarray:
    """Per-trait inclusion mask: trait t stays in iff the minor allele count
    among individuals typed at the SNP and observed for trait t reaches the
    threshold. ``observed`` is an (n, T) bool matrix (or a Cohort, in which
    case plain trait observation is used)."""
    if hasattr(observed, "trait_matrix"):
        observed = np.isfinite(observed.trait_matrix())
    observed = np.asarray(observed, dtype=bool)
    typed_raw = np.where(enc.missing, 0.0, np.nan_to_num(enc.raw))
    counts = typed_raw @ observed
    enc.minor_counts = counts
    return counts >= threshold


def chi2_pvalue(stat, df):
    """Upper-tail chi-square probability via the regularized incomplete
    gamma function."""
    return gammaincc(np.asarray(df, dtype=float) / 2.0,
                     np.asarray(stat, dtype=float) / 2.0)


def _tail_neglog10(stat, df):
    # asymptotic expansion of the upper tail once the p-value underflows:
    # ln Q(a, x) ~ (a-1) ln x - x - lgamma(a) + ln(1 + (a-1)/x + ...)
    x = np.asarray(stat, dtype=float) / 2.0
    a = np.asarray(df, dtype=float) / 2.0
    series = np.ones_like(x)
    term = np.ones_like(x)
    for k in range(1, 24):
        term = term * (a - k) / x
        series = series + term
    lnp = (a - 1.0) * np.log(x) - x - gammaln(a) + np.log(np.maximum(series, 1e-300))
    return -lnp / _LN10


def neg_log10_pvalue(stat, df):
    """-log10 of the chi-square upper tail, exact through the floating
    range and switching to an asymptotic series once p underflows."""
    stat = np.atleast_1d(np.asarray(stat, dtype=float))
    df = np.broadcast_to(np.asarray(df, dtype=float), stat.shape)
    p = chi2_pvalue(stat, df)
    out = np.empty_like(p)
    small = p < 1e-290
    out[~small] = -np.log10(np.maximum(p[~small], 5e-324))
    if small.any():
        out[small] = _tail_neglog10(stat[small], df[small])
    return out if out.size > 1 else float(out[0])


def score_statistic(ctx: ScoreContext, enc: SnpEncoding, trait_mask=None):
    """Reference per-SNP score statistic.

    Builds the (rows x kept-traits) SNP design explicitly per block: column
    t carries the individual's encoded value on that individual's trait-t
    rows. Returns (S, df, status) with status "ok" or "degenerate"; a SNP
    whose encoding is identically zero over the analysis rows gives S = 0.
    """
    T = ctx.n_traits
    kept = np.flatnonzero(np.ones(T, dtype=bool) if trait_mask is None else trait_mask)
    if kept.size == 0:
        raise ValidationError("score statistic needs at least one included trait")
    p = ctx.pooled_inv.shape[0]
    Q = np.zeros((kept.size, kept.size))
    R = np.zeros(kept.size)
    W = np.zeros((p, kept.size))
    for i in range(len(ctx.labels)):
        alpha = enc.values[ctx.rows_person[i]]
        A = np.zeros((alpha.size, kept.size))
        for c, t in enumerate(kept):
            rows = ctx.rows_trait[i] == t
            A[rows, c] = alpha[rows]
        Q += A.T @ (ctx.U[i] @ A)
        R += A.T @ ctx.q[i]
        W += ctx.UN[i].T @ A
    # U is positive definite, so a vanishing Q diagonal means the encoding
    # is identically zero over the analysis rows: no signal, S = 0
    qscale = float(np.max(np.diag(Q)))
    if qscale <= 0.0:
        return 0.0, int(kept.size), "ok"
    mid = Q - W.T @ ctx.pooled_inv @ W
    mid = 0.5 * (mid + mid.T)
    eig = np.linalg.eigvalsh(mid)
    # the projection can only shrink Q, so Q's diagonal sets the scale a
    # non-degenerate eigenvalue must live on (catches the 1x1 case too)
    if eig[0] < DEGENERATE_RTOL * qscale:
        return np.nan, int(kept.size), "degenerate"
    S = float(R @ np.linalg.solve(mid, R))
    return max(S, 0.0), int(kept.size), "ok"


@dataclass
class ScanResult:
    """One record per SNP in genotype order plus scan-level tallies."""

    snp_ids: list[str]
    chromosomes: list[str]
    positions: np.ndarray
    model: str
    maf: np.ndarray
    stat: np.ndarray
    df: np.ndarray
    p: np.ndarray
    neg_log10_p: np.ndarray
    status: np.ndarray
    trait_mask: np.ndarray
    n_traits: int
    lambda_gc: float | None = None
    filter_counts: dict = field(default_factory=dict)

    @property
    def n_snps(self) -> int:
        return len(self.snp_ids)

    @property
    def tested(self) -> np.ndarray:
        return self.status == "ok"


def genomic_lambda(pvalues=None, *, stats=None, df=None) -> float | None:
    """Genomic-control inflation factor.

    Univariate: the median of the chi-square(1) quantile transform of the
    p-values over its theoretical value 0.4549364. Multivariate scans pass
    the statistics and degrees of freedom instead and the median of S/df is
    used (a documented convention; the quantile rule only applies at df 1).
    Returns None (with a log note) below 100 usable values.
    """
    if pvalues is not None:
        pv = np.asarray(pvalues, dtype=float)
        pv = pv[np.isfinite(pv)]
        if pv.size < 100:
            log.info("genomic lambda omitted: only %d p-values", pv.size)
            return None
        x = chdtri(1, np.clip(pv, 1e-300, 1.0))
    else:
        st = np.asarray(stats, dtype=float)
        d = np.broadcast_to(np.asarray(df, dtype=float), st.shape)
        ok = np.isfinite(st) & (d >= 1)
        if ok.sum() < 100:
            log.info("genomic lambda omitted: only %d statistics", int(ok.sum()))
            return None
        x = st[ok] / d[ok]
    return float(np.median(x) / CHI2_1_MEDIAN)


def _chunk_values(gm: GenotypeMatrix, start: int, stop: int, smap: np.ndarray,
                  n_ind: int) -> np.ndarray:
    """Raw 0..2 values for SNPs [start, stop), re-indexed to cohort order
    with NaN for missing calls and ungenotyped individuals."""
    calls = gm.calls[start:stop]
    vals = calls.astype(float)
    vals[calls < 0] = np.nan
    if gm.dosages is not None:
        for k in range(start, stop):
            if gm.snps[k].is_dosage:
                vals[k - start] = gm.dosages[k]
    out = np.full((stop - start, n_ind), np.nan)
    have = smap >= 0
    out[:, np.flatnonzero(have)] = vals[:, smap[have]]
    return out


def scan(gm: GenotypeMatrix, ctx: ScoreContext, cohort: Cohort, *,
         model: str = "additive", maf_count: int = 3, threads: int | None = None,
         impute: bool = False, chunk_size: int = SCAN_CHUNK) -> ScanResult:
    """Score-test every SNP against the fitted null.

    Work is split into fixed-size SNP chunks handed to a thread pool; each
    chunk writes disjoint result slots, so output is independent of thread
    count and ordering. Encodings that are integer-valued take the
    index-set kernel when the compiled backend is present.
    """
    if model not in MODELS:
        raise ValidationError(f"unknown genotype model {model!r}")
    if maf_count < 1:
        raise ValidationError("minor-allele count threshold must be >= 1")
    if model != "additive":
        if any(s.is_dosage for s in gm.snps):
            raise ValidationError(f"{model} model needs hard calls, but the "
                                  "genotypes carry dosage SNPs")
        if impute:
            raise ValidationError("frequency imputation is only defined for "
                                  "the additive model")

    smap = gm.sample_map(cohort)
    n_ind, T = cohort.n_individuals, ctx.n_traits
    observed = np.zeros((n_ind, T), dtype=bool)
    for i in range(len(ctx.labels)):
        observed[ctx.rows_person[i], ctx.rows_trait[i]] = True
    obs_f = observed.astype(float)
    any_obs = observed.any(axis=1).astype(float)

    maf = np.array([s.maf for s in gm.snps], dtype=float)
    n = gm.n_snps
    stat = np.full(n, np.nan)
    p = np.full(n, np.nan)
    nl10 = np.full(n, np.nan)
    df = np.zeros(n, dtype=np.int64)
    status = np.full(n, "ok", dtype=object)
    trait_mask = np.zeros((n, T), dtype=bool)

    integral = model != "additive" or (gm.dosages is None and not impute)
    int_path = integral and BACKEND == "cython"
    kern = ChunkKernel(ctx.U, ctx.UN, ctx.q) if T == 1 else None
    rows_person_cat = np.concatenate(ctx.rows_person) if T == 1 else None
    pooled_inv = ctx.pooled_inv

    def process(ci: int) -> None:
        start = ci * chunk_size
        stop = min(start + chunk_size, n)
        vals = _chunk_values(gm, start, stop, smap, n_ind)
        typed = np.isfinite(vals)
        raw0 = np.where(typed, vals, 0.0)
        counts = raw0 @ obs_f
        tm = counts >= maf_count
        total = raw0 @ any_obs
        sl = slice(start, stop)
        trait_mask[sl] = tm
        untested = ~tm.any(axis=1)
        status[sl][untested] = np.where(total[untested] == 0.0, "mono", "low_maf")

        if impute:
            pk = maf[start:stop]
            fill = np.isfinite(pk)[:, None] & ~typed
            vals = np.where(fill, (2.0 * np.nan_to_num(pk))[:, None], vals)
        enc = encode_genotypes(vals, model)

        if T == 1:
            rows_vals = enc[:, rows_person_cat]
            if int_path:
                Q, R, W = kern.int_chunk(rows_vals.astype(np.int8))
            else:
                Q, R, W = kern.float_chunk(np.ascontiguousarray(rows_vals))
            WPW = np.einsum("sp,pq,sq->s", W, pooled_inv, W)
            D = Q - WPW
            for j in np.flatnonzero(~untested):
                gi = start + j
                if Q[j] <= 0.0:  # zero encoding: no signal
                    stat[gi], df[gi] = 0.0, 1
                elif D[j] < DEGENERATE_RTOL * Q[j]:
                    status[gi] = "degenerate"
                else:
                    stat[gi] = max(R[j] * R[j] / D[j], 0.0)
                    df[gi] = 1
        else:
            nb = len(ctx.labels)
            m_chunk = stop - start
            Qc = np.zeros((m_chunk, T, T))
            Rc = np.zeros((m_chunk, T))
            Wc = np.zeros((m_chunk, pooled_inv.shape[0], T))
            for i in range(nb):
                alpha = enc[:, ctx.rows_person[i]]
                A_t = [alpha * (ctx.rows_trait[i] == t) for t in range(T)]
                G_t = [A_t[t] @ ctx.U[i] for t in range(T)]
                for t in range(T):
                    Rc[:, t] += A_t[t] @ ctx.q[i]
                    Wc[:, :, t] += A_t[t] @ ctx.UN[i]
                    for s_ in range(t, T):
                        v = np.einsum("sm,sm->s", G_t[t], A_t[s_])
                        Qc[:, s_, t] += v
                        if s_ != t:
                            Qc[:, t, s_] += v
            for j in np.flatnonzero(~untested):
                gi = start + j
                kept = np.flatnonzero(tm[j])
                Qk = Qc[j][np.ix_(kept, kept)]
                Rk = Rc[j, kept]
                Wk = Wc[j][:, kept]
                qscale = float(np.max(np.diag(Qk)))
                if qscale <= 0.0:  # zero encoding: no signal
                    stat[gi], df[gi] = 0.0, kept.size
                    continue
                mid = Qk - Wk.T @ pooled_inv @ Wk
                mid = 0.5 * (mid + mid.T)
                eig = np.linalg.eigvalsh(mid)
                if eig[0] < DEGENERATE_RTOL * qscale:
                    status[gi] = "degenerate"
                else:
                    stat[gi] = max(float(Rk @ np.linalg.solve(mid, Rk)), 0.0)
                    df[gi] = kept.size

    n_chunks = (n + chunk_size - 1) // chunk_size
    n_threads = resolve_threads(threads)
    if n_threads <= 1 or n_chunks <= 1:
        for ci in range(n_chunks):
            process(ci)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as ex:
            list(ex.map(process, range(n_chunks)))

    ok = status == "ok"
    tested = ok & (df >= 1)
    p[tested] = chi2_pvalue(stat[tested], df[tested])
    if tested.any():
        nl10[tested] = np.atleast_1d(neg_log10_pvalue(stat[tested], df[tested]))

    result = ScanResult(
        snp_ids=[s.id for s in gm.snps], chromosomes=[s.chromosome for s in gm.snps],
        positions=np.array([s.position for s in gm.snps]), model=model, maf=maf,
        stat=stat, df=df, p=p, neg_log10_p=nl10, status=np.asarray(status),
        trait_mask=trait_mask, n_traits=T)
    reasons, counts = np.unique(result.status, return_counts=True)
    result.filter_counts = {str(r): int(c) for r, c in zip(reasons, counts) if r != "ok"}
    result.lambda_gc = genomic_lambda(stats=stat[tested], df=df[tested]) \
        if tested.any() else None
    log.info("scanned %d SNPs (%d tested, backend %s, %d threads)",
             n, int(tested.sum()), BACKEND, n_threads)
    return result


def resolve_threads(threads: int | None) -> int:
    """Explicit argument, then the PEDSCAN_THREADS environment variable,
    then the machine's core count."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("PEDSCAN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
