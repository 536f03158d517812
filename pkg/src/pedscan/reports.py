"""Result tables, plot data, and the fitted-model text report.

Every artifact is tab-delimited with a header row and a trailing newline,
and is written atomically (temp file in the same directory, then rename)
so a failed run never leaves a truncated table behind.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np
import pandas as pd

from .errors import ValidationError
from .lrt import TopHit
from .nullmodel import NullFit
from .score import ScanResult

RESULTS_COLUMNS = ["snp_id", "chr", "position", "model", "maf", "df",
                   "score_stat", "p", "neg_log10_p", "status"]
MANHATTAN_COLUMNS = ["chr", "position", "neg_log10_p"]
QQ_COLUMNS = ["expected_neg_log10_p", "observed_neg_log10_p"]
_NA = "NA"


def _atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".pedscan-", dir=d)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(frame: pd.DataFrame, path: str) -> None:
    _atomic_write_text(path, frame.to_csv(sep="\t", index=False, na_rep=_NA,
                                          lineterminator="\n"))


def results_frame(result: ScanResult) -> pd.DataFrame:
    """One row per SNP that survived the allele-count filter, in genotype
    order. Monomorphic/low-count SNPs are counted, not listed; degenerate
    SNPs keep their row (they were attempted) with empty statistics."""
    keep = ~np.isin(result.status, ("mono", "low_maf"))
    idx = np.flatnonzero(keep)
    tested = result.status[idx] == "ok"
    df_col = pd.array(result.df[idx], dtype="Int64")
    df_col[~tested] = pd.NA
    frame = pd.DataFrame({
        "snp_id": [result.snp_ids[i] for i in idx],
        "chr": [result.chromosomes[i] for i in idx],
        "position": result.positions[idx],
        "model": result.model,
        "maf": np.round(result.maf[idx], 6),
        "df": df_col,
        "score_stat": np.where(tested, result.stat[idx], np.nan),
        "p": np.where(tested, result.p[idx], np.nan),
        "neg_log10_p": np.where(tested, result.neg_log10_p[idx], np.nan),
        "status": result.status[idx],
    })
    return frame


def write_results(result: ScanResult, path: str) -> None:
    write_table(results_frame(result), path)


def top_hits_frame(hits: list[TopHit], trait_names: list[str]) -> pd.DataFrame:
    """Scan columns plus the refinement outcome. Multivariate effect sizes
    get one beta/se column pair per trait; traits a hit excluded stay NA."""
    multi = len(trait_names) > 1
    rows = []
    for h in hits:
        row = {"snp_id": h.snp_id, "chr": h.chromosome, "position": h.position,
               "model": h.model, "maf": round(h.maf, 6), "df": h.df,
               "score_stat": h.score_stat, "p": h.score_p,
               "lrt_stat": h.lrt_stat if h.converged else np.nan,
               "lrt_p": h.lrt_p if h.converged else np.nan}
        if multi:
            for t, name in enumerate(trait_names):
                b, s = np.nan, np.nan
                if h.converged and name in h.trait_names:
                    c = h.trait_names.index(name)
                    b, s = h.beta[c], h.beta_se[c]
                row[f"beta_{name}"] = b
                row[f"se_{name}"] = s
        else:
            row["beta"] = h.beta[0] if h.converged and h.beta.size else np.nan
            row["se"] = h.beta_se[0] if h.converged and h.beta_se.size else np.nan
        row["var_explained"] = h.var_explained
        row["converged"] = h.converged
        row["status"] = h.status
        rows.append(row)
    return pd.DataFrame(rows)


def write_top_hits(hits: list[TopHit], trait_names: list[str], path: str) -> None:
    write_table(top_hits_frame(hits, trait_names), path)


def manhattan_frame(result: ScanResult) -> pd.DataFrame:
    idx = np.flatnonzero(result.tested)
    return pd.DataFrame({
        "chr": [result.chromosomes[i] for i in idx],
        "position": result.positions[idx],
        "neg_log10_p": result.neg_log10_p[idx],
    })


def write_manhattan(result: ScanResult, path: str) -> None:
    write_table(manhattan_frame(result), path)


def qq_frame(result: ScanResult) -> pd.DataFrame:
    """Observed -log10 p quantiles against the uniform expectation
    -log10((i - 0.5) / n), both columns sorted ascending."""
    obs = np.sort(result.neg_log10_p[result.tested])
    n = obs.size
    expected = -np.log10((np.arange(n, 0, -1) - 0.5) / n)
    return pd.DataFrame({QQ_COLUMNS[0]: expected, QQ_COLUMNS[1]: obs})


def write_qq(result: ScanResult, path: str) -> None:
    write_table(qq_frame(result), path)


def null_model_report(fit: NullFit, *, lambda_gc: float | None = None) -> str:
    """Human-readable summary of the fitted null model."""
    d = fit.design
    lines = ["null model fit", "=" * 14, ""]
    lines.append(f"traits:        {', '.join(d.trait_names)}")
    dropped = d.n_dropped if isinstance(d.n_dropped, dict) else {}
    total_dropped = sum(dropped.values())
    drop_note = "" if total_dropped == 0 else (
        " (dropped " + ", ".join(f"{v} {k.replace('_', ' ')}"
                                 for k, v in dropped.items() if v) + ")")
    lines.append(f"individuals:   {sum(len(r) for r in d.rows_person)} "
                 f"analysis rows in {len(d.labels)} blocks{drop_note}")
    dist = f"multivariate t (eta = {fit.t_eta:g})" if fit.t_eta else "gaussian"
    lines.append(f"distribution:  {dist}")
    lines.append(f"loglikelihood: {fit.loglik:.6f}")
    lines.append(f"iterations:    {fit.n_iter} "
                 f"({'converged' if fit.converged else 'NOT converged'})")
    if fit.boundary:
        lines.append(f"boundary:      {', '.join(fit.boundary)}")
    if not fit.identifiable:
        lines.append("warning:       variance components not separately "
                     "identifiable (ill-conditioned information)")
    lines.append("")
    lines.append("fixed effects (estimate +/- se):")
    for name, b, se in zip(d.column_names, fit.beta, fit.beta_se):
        lines.append(f"  {name:<24s} {b: .6f} +/- {se:.6f}")
    lines.append("")
    lines.append("variance components (estimate +/- se):")
    theta_se = np.sqrt(np.maximum(np.diag(fit.theta_cov), 0.0))
    for name, (comp, s, t), se in zip(fit.variance_names, d.theta_index, theta_se):
        lines.append(f"  {name:<24s} {fit.gamma[comp][s, t]: .6f} +/- {se:.6f}")
    if fit.h2 is not None:
        lines.append("")
        lines.append("narrow-sense heritability (estimate +/- se):")
        for t, name in enumerate(d.trait_names):
            lines.append(f"  {name:<24s} {fit.h2[t]: .6f} +/- {fit.h2_se[t]:.6f}")
    if lambda_gc is not None:
        lines.append("")
        lines.append(f"genomic control lambda: {lambda_gc:.4f}")
    lines.append("")
    return "\n".join(lines)


def write_null_report(fit: NullFit, path: str, *,
                      lambda_gc: float | None = None) -> None:
    _atomic_write_text(path, null_model_report(fit, lambda_gc=lambda_gc))


def validate_artifact(path: str, columns: list[str]) -> None:
    """Header and trailing-newline schema check for a written table."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.endswith(b"\n"):
        raise ValidationError(f"{path}: missing trailing newline")
    header = data.split(b"\n", 1)[0].decode().split("\t")
    if header != list(columns):
        raise ValidationError(f"{path}: header {header} does not match "
                              f"expected columns {list(columns)}")
