"""Artifact schemas, atomic writes, and the null-model text report."""

import os

import numpy as np
import pandas as pd
import pytest

import pedscan.reports as reports
from pedscan.errors import ValidationError
from pedscan.kinship import theoretical_kinship_set
from pedscan.lrt import TopHit, refine_top
from pedscan.nullmodel import fit_null, precompute_score_context
from pedscan.reports import (MANHATTAN_COLUMNS, QQ_COLUMNS, RESULTS_COLUMNS,
                             manhattan_frame, null_model_report, qq_frame,
                             results_frame, top_hits_frame, validate_artifact,
                             write_manhattan, write_null_report, write_qq,
                             write_results, write_top_hits)
from pedscan.score import ScanResult, scan
from pedscan.simulate import (SimSpec, assign_traits, gene_drop,
                              nuclear_families, simulate_trait)


@pytest.fixture(scope="module")
def pipeline():
    cohort = nuclear_families(30, n_children=2)
    spec = SimSpec(n_snps=60, var_a=0.4, var_e=0.6, seed=31,
                   genotype_missing_rate=0.02)
    gm = gene_drop(cohort, spec)
    ks = theoretical_kinship_set(cohort)
    assign_traits(cohort, simulate_trait(cohort, ks, spec))
    from pedscan.empirical import allele_frequencies

    allele_frequencies(gm, cohort)
    fit = fit_null(cohort, ks)
    result = scan(gm, precompute_score_context(fit), cohort)
    hits = refine_top(result, gm, fit, cohort, k=5)
    return fit, result, hits


def synthetic_result():
    """Covers every status a SNP can end up with."""
    status = np.array(["ok", "mono", "low_maf", "degenerate", "ok"])
    return ScanResult(
        snp_ids=[f"rs{i}" for i in range(5)],
        chromosomes=["1"] * 5,
        positions=np.arange(100, 105),
        model="additive",
        maf=np.array([0.3, 0.0, 0.01, 0.2, 0.4]),
        stat=np.array([5.2, np.nan, np.nan, np.nan, 0.7]),
        df=np.array([1, 0, 0, 1, 1]),
        p=np.array([0.02, np.nan, np.nan, np.nan, 0.4]),
        neg_log10_p=np.array([1.7, np.nan, np.nan, np.nan, 0.39]),
        status=status,
        trait_mask=np.ones((5, 1), dtype=bool),
        n_traits=1,
        lambda_gc=None,
        filter_counts={"mono": 1, "low_maf": 1, "degenerate": 1},
    )


class TestResultsTable:
    def test_filtered_snps_are_dropped_but_degenerate_kept(self):
        frame = results_frame(synthetic_result())
        assert list(frame["snp_id"]) == ["rs0", "rs3", "rs4"]
        assert list(frame["status"]) == ["ok", "degenerate", "ok"]
        deg = frame[frame["status"] == "degenerate"].iloc[0]
        assert pd.isna(deg["df"]) and pd.isna(deg["p"])
        ok = frame[frame["snp_id"] == "rs0"].iloc[0]
        assert ok["df"] == 1 and ok["score_stat"] == 5.2

    def test_row_count_matches_filter_tally(self, pipeline):
        _, result, _ = pipeline
        frame = results_frame(result)
        filtered = sum(result.filter_counts.get(k, 0)
                       for k in ("mono", "low_maf"))
        assert len(frame) == result.n_snps - filtered

    def test_written_file_passes_schema_check(self, pipeline, tmp_path):
        _, result, _ = pipeline
        path = tmp_path / "results.tsv"
        write_results(result, str(path))
        validate_artifact(str(path), RESULTS_COLUMNS)
        text = path.read_text()
        assert text.endswith("\n") and not text.endswith("\n\n")
        header = text.split("\n", 1)[0].split("\t")
        assert header == RESULTS_COLUMNS

    def test_na_rendering(self, tmp_path):
        path = tmp_path / "results.tsv"
        write_results(synthetic_result(), str(path))
        deg_line = [l for l in path.read_text().splitlines() if l.startswith("rs3")][0]
        fields = dict(zip(RESULTS_COLUMNS, deg_line.split("\t")))
        assert fields["df"] == "NA" and fields["p"] == "NA"
        assert fields["status"] == "degenerate"


class TestTopHits:
    def test_univariate_columns(self, pipeline, tmp_path):
        _, _, hits = pipeline
        frame = top_hits_frame(hits, ["trait"])
        assert {"beta", "se", "lrt_stat", "lrt_p", "var_explained",
                "converged", "status"} <= set(frame.columns)
        assert len(frame) == 5
        path = tmp_path / "top.tsv"
        write_top_hits(hits, ["trait"], str(path))
        validate_artifact(str(path), list(frame.columns))

    def test_multivariate_beta_columns(self):
        hit = TopHit(snp_id="rs1", chromosome="1", position=1, model="additive",
                     maf=0.2, df=1, score_stat=4.0, score_p=0.05,
                     lrt_stat=4.1, lrt_p=0.04, beta=np.array([0.5]),
                     beta_se=np.array([0.1]), trait_names=["y2"],
                     var_explained=0.01, converged=True)
        frame = top_hits_frame([hit], ["y1", "y2"])
        row = frame.iloc[0]
        assert pd.isna(row["beta_y1"]) and pd.isna(row["se_y1"])
        assert row["beta_y2"] == 0.5 and row["se_y2"] == 0.1

    def test_unconverged_hit_blanks_refinement(self):
        hit = TopHit(snp_id="rs1", chromosome="1", position=1, model="additive",
                     maf=0.2, df=1, score_stat=4.0, score_p=0.05,
                     lrt_stat=3.9, lrt_p=0.05, status="not_converged")
        row = top_hits_frame([hit], ["trait"]).iloc[0]
        assert pd.isna(row["lrt_stat"]) and pd.isna(row["beta"])
        assert row["p"] == 0.05 and row["status"] == "not_converged"


class TestPlotData:
    def test_manhattan_covers_tested_snps(self, pipeline, tmp_path):
        _, result, _ = pipeline
        frame = manhattan_frame(result)
        assert list(frame.columns) == MANHATTAN_COLUMNS
        assert len(frame) == int(result.tested.sum())
        assert np.isfinite(frame["neg_log10_p"]).all()
        path = tmp_path / "m.tsv"
        write_manhattan(result, str(path))
        validate_artifact(str(path), MANHATTAN_COLUMNS)

    def test_qq_is_sorted_and_paired(self, pipeline, tmp_path):
        _, result, _ = pipeline
        frame = qq_frame(result)
        assert list(frame.columns) == QQ_COLUMNS
        e = frame[QQ_COLUMNS[0]].to_numpy()
        o = frame[QQ_COLUMNS[1]].to_numpy()
        assert len(frame) == int(result.tested.sum())
        assert np.all(np.diff(e) >= 0) and np.all(np.diff(o) >= 0)
        n = len(frame)
        assert e[-1] == pytest.approx(-np.log10(0.5 / n))
        path = tmp_path / "qq.tsv"
        write_qq(result, str(path))
        validate_artifact(str(path), QQ_COLUMNS)


class TestNullReport:
    def test_content(self, pipeline, tmp_path):
        fit, result, _ = pipeline
        text = null_model_report(fit, lambda_gc=1.02)
        assert "traits:        trait" in text
        assert "additive" in text and "environmental" in text
        assert "narrow-sense heritability" in text
        assert "genomic control lambda: 1.0200" in text
        assert f"{fit.loglik:.6f}" in text
        path = tmp_path / "null.txt"
        write_null_report(fit, str(path), lambda_gc=1.02)
        assert path.read_text().endswith("\n")

    def test_lambda_omitted_when_unknown(self, pipeline):
        fit, _, _ = pipeline
        assert "lambda" not in null_model_report(fit)


class TestAtomicity:
    def test_failed_write_leaves_original_intact(self, pipeline, tmp_path,
                                                 monkeypatch):
        _, result, _ = pipeline
        path = tmp_path / "results.tsv"
        path.write_text("precious\n")

        def boom(src, dst):
            raise OSError("disk full")

        monkeypatch.setattr(reports.os, "replace", boom)
        with pytest.raises(OSError):
            write_results(result, str(path))
        assert path.read_text() == "precious\n"
        leftovers = [f for f in os.listdir(tmp_path) if f.startswith(".pedscan-")]
        assert leftovers == []

    def test_validate_artifact_failures(self, tmp_path):
        p = tmp_path / "bad.tsv"
        p.write_bytes(b"wrong\theader\nrow\t1\n")
        with pytest.raises(ValidationError):
            validate_artifact(str(p), ["snp_id", "p"])
        p.write_bytes(b"snp_id\tp\nrow\t1")
        with pytest.raises(ValidationError):
            validate_artifact(str(p), ["snp_id", "p"])
