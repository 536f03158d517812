"""Genome-wide kinship estimated from dense SNP data.

Two classical estimators over a thinned, evenly spaced SNP subset: a
genetic relationship matrix (GRM) that averages standardized genotype
products, and a method-of-moments (MoM) estimator built from the observed
fraction of alleles shared identical by state. Missing genotypes are
handled per pair: every pairwise sum is renormalized by the count of SNPs
where both individuals are typed. Estimation runs over within-pedigree
pairs by default, or one all-pairs block on request.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import ValidationError
from .genotypes import GenotypeMatrix
from .kinship import KinshipSet
from .pedigree import Cohort

log = logging.getLogger(__name__)

_CHUNK = 2048  # SNPs per accumulation pass; bounds the float work array


def _float_rows(gm: GenotypeMatrix, snp_ids: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Genotype values for a SNP x sample window, NaN where untyped."""
    rows = gm.calls[np.ix_(snp_ids, cols)].astype(float)
    rows[rows < 0] = np.nan
    if gm.dosages is not None:
        flagged = [i for i, k in enumerate(snp_ids) if gm.snps[k].is_dosage]
        if flagged:
            rows[flagged] = gm.dosages[np.ix_(np.asarray(snp_ids)[flagged], cols)]
    return rows


def allele_frequencies(gm: GenotypeMatrix, cohort: Cohort) -> np.ndarray:
    """Per-SNP minor allele frequency; orients stored calls to the minor allele.

    The estimate uses typed founders. When no founder is typed, or the
    minor allele never appears among typed founders, the frequency is
    recomputed over all typed individuals and the SNP loses its
    founder-based flag. SNPs with nobody typed are marked unusable. Calls
    (and dosages) are flipped in place whenever the stored allele turns out
    to be the major one, so downstream counts always follow the minor
    allele and the returned frequencies sit in [0, 0.5].
    """
    smap = gm.sample_map(cohort)
    founder = cohort.founder_flags()
    valid = smap >= 0
    col_founder = np.zeros(gm.n_samples, dtype=bool)
    col_founder[smap[valid]] = founder[valid]

    all_cols = np.arange(gm.n_samples)
    maf = np.full(gm.n_snps, np.nan)
    n_mono = n_fallback = n_untyped = 0
    for start in range(0, gm.n_snps, _CHUNK):
        ids = np.arange(start, min(start + _CHUNK, gm.n_snps))
        X = _float_rows(gm, ids, all_cols)
        typed = np.isfinite(X)
        ca1 = np.nansum(X, axis=1)
        na = typed.sum(axis=1)
        cf1 = np.nansum(np.where(typed[:, col_founder], X[:, col_founder], 0.0), axis=1)
        nf = typed[:, col_founder].sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            p_f = cf1 / (2.0 * nf)
            p_a = ca1 / (2.0 * na)
        minor_count_f = np.where(p_f <= 0.5, cf1, 2 * nf - cf1)
        fallback = (nf == 0) | (minor_count_f == 0)
        p1 = np.where(fallback, p_a, p_f)
        untyped = na == 0
        n_untyped += int(untyped.sum())
        n_fallback += int((fallback & ~untyped).sum())

        for i, k in enumerate(ids):
            s = gm.snps[k]
            if untyped[i]:
                s.usable = False
                s.maf = np.nan
                continue
            if p1[i] > 0.5:
                gm.flip_snp(k)
                p1[i] = 1.0 - p1[i]
            s.maf = maf[k] = p1[i]
            s.founder_based_freq = not bool(fallback[i])
            if p1[i] == 0.0:
                n_mono += 1
    if n_untyped:
        log.warning("%d SNPs have no typed individuals; flagged unusable", n_untyped)
    if n_fallback:
        log.info("%d SNPs used the all-individuals frequency fallback", n_fallback)
    if n_mono:
        log.info("%d SNPs are monomorphic among typed individuals", n_mono)
    return maf


def select_kinship_snps(gm: GenotypeMatrix, fraction: float = 0.2) -> np.ndarray:
    """Evenly spaced SNP indices covering roughly the requested fraction."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"SNP fraction must be in (0, 1], got {fraction}")
    stride = max(1, round(1.0 / fraction))
    return np.arange(0, gm.n_snps, stride)


def _column_groups(gm: GenotypeMatrix, scope: str) -> list[tuple[str, np.ndarray]]:
    if scope == "all-pairs":
        return [("all", np.arange(gm.n_samples))]
    if scope != "blocks":
        raise ValidationError(f"unknown kinship scope {scope!r}")
    order: list[str] = []
    groups: dict[str, list[int]] = {}
    for col, (ped_id, _) in enumerate(gm.sample_keys):
        if ped_id not in groups:
            groups[ped_id] = []
            order.append(ped_id)
        groups[ped_id].append(col)
    return [(label, np.asarray(groups[label])) for label in order]


def _estimate(gm: GenotypeMatrix, freqs, scope: str, snp_subset, clamp: bool,
              method: str) -> KinshipSet:
    if snp_subset is None:
        snp_subset = np.arange(gm.n_snps)
    snp_subset = np.asarray(snp_subset, dtype=np.int64)
    if freqs is not None:
        p = np.asarray(freqs, dtype=float)[snp_subset]
    else:
        p = np.array([gm.snps[k].maf for k in snp_subset])
    if snp_subset.size and not np.isfinite(p).any():
        raise ValidationError("no allele frequencies available; "
                              "run allele_frequencies first")
    ok = np.array([gm.snps[k].usable for k in snp_subset]) & np.isfinite(p)
    if method == "grm":
        # standardization divides by 2p(1-p); monomorphic SNPs cannot enter
        keep = ok & (p > 0.0) & (p < 1.0)
        n_mono = int((ok & ~keep).sum())
        if n_mono:
            log.info("excluding %d monomorphic SNPs from the GRM sums", n_mono)
    else:
        keep = ok
    snp_subset, p = snp_subset[keep], p[keep]
    if snp_subset.size == 0:
        raise ValidationError("no usable SNPs left for kinship estimation")

    ks = KinshipSet(scope=scope, provenance=method)
    n_undefined = 0
    for label, cols in _column_groups(gm, scope):
        nb = cols.size
        num = np.zeros((nb, nb))
        S = np.zeros((nb, nb))
        H = np.zeros((nb, nb))
        for start in range(0, snp_subset.size, _CHUNK):
            ids = snp_subset[start:start + _CHUNK]
            pk = p[start:start + _CHUNK]
            X = _float_rows(gm, ids, cols)
            G = np.isfinite(X).astype(float)
            if method == "grm":
                Z = np.where(G > 0, (X - 2.0 * pk[:, None])
                             / np.sqrt(2.0 * pk * (1.0 - pk))[:, None], 0.0)
                num += Z.T @ Z
            else:
                C = np.where(G > 0, X - 1.0, 0.0)
                num += C.T @ C
                hk = pk ** 2 + (1.0 - pk) ** 2
                H += (G * hk[:, None]).T @ G
            S += G.T @ G
        with np.errstate(invalid="ignore", divide="ignore"):
            if method == "grm":
                phi = num / (2.0 * S)
            else:
                # e_ij = 1/4 sum [x x' + (2-x)(2-x')] = 1/2 sum (x-1)(x'-1) + S/2
                e = 0.5 * num + 0.5 * S
                phi = (e - H) / (S - H)
        bad = ~np.isfinite(phi)
        n_undefined += int(bad.sum())
        phi[bad] = 0.0
        if clamp:
            np.clip(phi, 0.0, None, out=phi)
        phi = 0.5 * (phi + phi.T)
        ks.add_block(label, [gm.sample_keys[c] for c in cols], phi)
    if n_undefined:
        log.warning("%d pairs had no overlapping typed SNPs; estimates set to 0",
                    n_undefined)
    return ks.validate()


def grm_kinship(gm: GenotypeMatrix, freqs=None, *, scope: str = "blocks",
                snp_subset=None, clamp: bool = False) -> KinshipSet:
    """GRM kinship: Phi_ij = (1 / 2 S_ij) sum_k (x_ik - 2 p_k)(x_jk - 2 p_k)
    / (2 p_k (1 - p_k)), with S_ij the count of SNPs typed in both i and j."""
    return _estimate(gm, freqs, scope, snp_subset, clamp, "grm")


def mom_kinship(gm: GenotypeMatrix, freqs=None, *, scope: str = "blocks",
                snp_subset=None, clamp: bool = False) -> KinshipSet:
    """Method-of-moments kinship from the IBS sharing fraction:

        e_ij  = 1/4 sum_k [x_ik x_jk + (2 - x_ik)(2 - x_jk)]
        Phi_ij = (e_ij - sum_k h_k) / (S_ij - sum_k h_k),  h_k = p_k^2 + (1-p_k)^2

    with all sums restricted to SNPs typed in both individuals. Negative
    estimates are legitimate for this estimator and kept unless ``clamp``.
    """
    return _estimate(gm, freqs, scope, snp_subset, clamp, "mom")
