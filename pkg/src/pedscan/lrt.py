"""Likelihood-ratio refinement of the strongest scan signals.

The genome scan never refits anything; here the top-ranked SNPs get the
full treatment: the SNP column joins the mean design, every variance
parameter is re-estimated (warm-started from the null optimum), and the
doubled loglikelihood gap is referred to chi-square. This also yields the
effect size, its standard error, and the share of trait variance the SNP
accounts for.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ComputationError, ValidationError
from .genotypes import GenotypeMatrix
from .nullmodel import NullFit, fit_design
from .pedigree import Cohort
from .score import ScanResult, chi2_pvalue, encode_genotypes

log = logging.getLogger(__name__)

DEFAULT_TOP_K = 50
_NEG_TOL = -1e-6  # tiny negative LRT values are roundoff, anything worse is not


@dataclass
class TopHit:
    """One refined SNP: likelihood-ratio result next to the scan result."""

    snp_id: str
    chromosome: str
    position: int
    model: str
    maf: float
    df: int
    score_stat: float
    score_p: float
    lrt_stat: float = np.nan
    lrt_p: float = np.nan
    beta: np.ndarray = field(default_factory=lambda: np.array([]))
    beta_se: np.ndarray = field(default_factory=lambda: np.array([]))
    trait_names: list[str] = field(default_factory=list)
    var_explained: float = np.nan
    converged: bool = False
    status: str = "ok"


def _encoded_cohort_column(gm: GenotypeMatrix, k: int, smap: np.ndarray,
                           n_ind: int, model: str, impute: bool) -> np.ndarray:
    vals = np.full(n_ind, np.nan)
    have = smap >= 0
    vals[np.flatnonzero(have)] = gm.values_for(k)[smap[have]]
    if impute and np.isfinite(gm.snps[k].maf):
        vals[~np.isfinite(vals)] = 2.0 * gm.snps[k].maf
    return encode_genotypes(vals, model)


def refine_top(result: ScanResult, gm: GenotypeMatrix, fit: NullFit,
               cohort: Cohort, k: int = DEFAULT_TOP_K, *,
               impute: bool = False) -> list[TopHit]:
    """Refit the k smallest score p-values under the alternative model.

    Each refit appends the SNP's encoded column(s) to the mean design (one
    column per included trait in the multivariate case, zero off that
    trait's rows) and re-runs the variance-component optimizer warm-started
    at the null solution. A refit that fails to converge keeps the score
    p-value and is flagged rather than dropped.
    """
    if k < 1:
        raise ValidationError("top-hit count must be >= 1")
    design = fit.design
    T = design.n_traits
    smap = gm.sample_map(cohort)
    n_ind = cohort.n_individuals

    tested = np.flatnonzero(result.tested & (result.df >= 1))
    order = tested[np.argsort(result.p[tested], kind="stable")]
    picks = order[:k]

    hits: list[TopHit] = []
    for idx in picks:
        kept = np.flatnonzero(result.trait_mask[idx]) if T > 1 else np.array([0])
        names = [f"snp[{design.trait_names[t]}]" for t in kept] if T > 1 else ["snp"]
        enc = _encoded_cohort_column(gm, int(idx), smap, n_ind, result.model, impute)
        extra = []
        for i in range(len(design.labels)):
            alpha = enc[design.rows_person[i]]
            cols = np.zeros((alpha.size, kept.size))
            for c, t in enumerate(kept):
                rows = design.rows_trait[i] == t
                cols[rows, c] = alpha[rows]
            extra.append(cols)
        hit = TopHit(
            snp_id=result.snp_ids[idx], chromosome=result.chromosomes[idx],
            position=int(result.positions[idx]), model=result.model,
            maf=float(result.maf[idx]), df=int(result.df[idx]),
            score_stat=float(result.stat[idx]), score_p=float(result.p[idx]),
            trait_names=[design.trait_names[t] for t in kept])
        if all(np.all(e == 0.0) for e in extra):
            # nothing to estimate: encoded column vanishes on the analysis set
            hit.lrt_stat, hit.lrt_p = 0.0, 1.0
            hit.beta = np.zeros(kept.size)
            hit.beta_se = np.full(kept.size, np.nan)
            hit.var_explained = 0.0
            hit.converged = True
            hit.status = "degenerate"
            hits.append(hit)
            continue
        alt_design = design.with_columns(extra, names)
        try:
            alt = fit_design(alt_design, t_eta=fit.t_eta, lam0=fit.lam)
        except (ComputationError, np.linalg.LinAlgError) as exc:
            hit.status = "refit_failed"
            log.warning("alternative refit failed for %s: %s", hit.snp_id, exc)
            hits.append(hit)
            continue
        lrt = 2.0 * (alt.loglik - fit.loglik)
        if lrt < _NEG_TOL or not alt.converged:
            hit.status = "not_converged"
            hits.append(hit)
            continue
        hit.lrt_stat = max(lrt, 0.0)
        hit.lrt_p = float(chi2_pvalue(hit.lrt_stat, hit.df))
        hit.beta = alt.beta[-kept.size:].copy()
        hit.beta_se = alt.beta_se[-kept.size:].copy()
        hit.converged = True
        hit.var_explained = variance_explained(hit, fit, enc, kept)
        hits.append(hit)
    log.info("refined %d of %d requested top hits (%d converged)",
             len(hits), k, sum(h.converged for h in hits))
    return hits


def variance_explained(hit: TopHit, fit: NullFit, encoded: np.ndarray,
                       kept: np.ndarray) -> float:
    """Fraction of trait variance attributed to the SNP.

    Per trait: beta^2 * var(encoded column over that trait's analysis rows)
    divided by the same quantity plus the summed fitted variance components
    for the trait; averaged over included traits. A convention, since the
    decomposition is not unique under relatedness.
    """
    design = fit.design
    fractions = []
    for c, t in enumerate(kept):
        col = []
        for i in range(len(design.labels)):
            rows = design.rows_trait[i] == t
            col.append(encoded[design.rows_person[i]][rows])
        col = np.concatenate(col) if col else np.array([])
        v_enc = float(np.var(col)) if col.size > 1 else 0.0
        explained = hit.beta[c] ** 2 * v_enc
        resid = sum(g[t, t] for g in fit.gamma.values())
        denom = explained + resid
        fractions.append(explained / denom if denom > 0 else 0.0)
    return float(np.clip(np.mean(fractions), 0.0, 1.0)) if fractions else 0.0
