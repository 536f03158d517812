"""Command-line behavior: precedence, artifacts, determinism, error contract."""

import filecmp
import os

import numpy as np
import pytest

from pedscan import reports
from pedscan.cli import main


def write_ped(path, n_fam=20, n_kids=2):
    lines = []
    for f in range(1, n_fam + 1):
        fid = f"fam{f}"
        lines.append(f"{fid} father 0 0 M {fid}")
        lines.append(f"{fid} mother 0 0 F {fid}")
        for c in range(1, n_kids + 1):
            sex = "M" if c % 2 else "F"
            lines.append(f"{fid} child{c} father mother {sex} {fid}")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Pedigree plus simulated genotypes/phenotypes shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    ped = root / "families.ped"
    write_ped(ped)
    sim = root / "sim"
    code = main(["simulate", "--ped", str(ped), "--n-snps", "120",
                 "--var-a", "0.4", "--var-e", "0.6", "--seed", "3",
                 "--out", str(sim)])
    assert code == 0
    return {"root": root, "ped": str(ped),
            "pheno": str(sim / "phenotypes.tsv"),
            "geno": str(sim / "genotypes.dosage")}


def scan_args(ws, out, *extra):
    return ["scan", "--ped", ws["ped"], "--pheno", ws["pheno"],
            "--geno", ws["geno"], "--out", str(out), *extra]


def read_rows(path):
    with open(path) as fh:
        return fh.read().rstrip("\n").split("\n")[1:]


class TestScanPipeline:
    def test_end_to_end_artifacts(self, workspace, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(scan_args(workspace, out)) == 0
        for name in ("null_model.txt", "results.tsv", "top_hits.tsv",
                     "manhattan.tsv", "qq.tsv"):
            assert (out / name).exists(), name
        reports.validate_artifact(str(out / "results.tsv"),
                                  reports.RESULTS_COLUMNS)
        reports.validate_artifact(str(out / "manhattan.tsv"),
                                  reports.MANHATTAN_COLUMNS)
        reports.validate_artifact(str(out / "qq.tsv"), reports.QQ_COLUMNS)
        err = capsys.readouterr().err
        assert "pedscan: scanned 120 SNPs" in err
        assert "null model" in (out / "null_model.txt").read_text()

    def test_default_top_k(self, workspace, tmp_path):
        out = tmp_path / "out"
        assert main(scan_args(workspace, out)) == 0
        assert len(read_rows(out / "top_hits.tsv")) == 50

    def test_plink_round_trip_through_cli(self, workspace, tmp_path):
        sim = tmp_path / "sim"
        code = main(["simulate", "--ped", workspace["ped"], "--n-snps", "60",
                     "--var-a", "0.4", "--seed", "4", "--format", "plink",
                     "--out", str(sim)])
        assert code == 0
        assert (sim / "genotypes.bed").exists()
        out = tmp_path / "out"
        code = main(["scan", "--ped", workspace["ped"],
                     "--pheno", str(sim / "phenotypes.tsv"),
                     "--geno", str(sim / "genotypes.bed"), "--out", str(out)])
        assert code == 0
        assert len(read_rows(out / "results.tsv")) > 0

    def test_threads_env_matches_explicit(self, workspace, tmp_path, monkeypatch):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(scan_args(workspace, out1, "--threads", "1")) == 0
        monkeypatch.setenv("PEDSCAN_THREADS", "3")
        assert main(scan_args(workspace, out2)) == 0
        assert filecmp.cmp(out1 / "results.tsv", out2 / "results.tsv",
                           shallow=False)


class TestConfigPrecedence:
    def test_config_supplies_defaults_cli_wins(self, workspace, tmp_path):
        cfg = tmp_path / "run.conf"
        cfg.write_text("top-k = 7\nmaf-count = 4  # comment\nseed = 11\n")
        out1 = tmp_path / "o1"
        assert main(scan_args(workspace, out1, "--config", str(cfg))) == 0
        assert len(read_rows(out1 / "top_hits.tsv")) == 7
        out2 = tmp_path / "o2"
        assert main(scan_args(workspace, out2, "--config", str(cfg),
                              "--top-k", "3")) == 0
        assert len(read_rows(out2 / "top_hits.tsv")) == 3

    def test_unknown_config_key(self, workspace, tmp_path, capsys):
        cfg = tmp_path / "run.conf"
        cfg.write_text("tpo-k = 7\n")
        out = tmp_path / "out"
        code = main(scan_args(workspace, out, "--config", str(cfg)))
        assert code == 6
        err = capsys.readouterr().err.strip().splitlines()[-1]
        assert err.startswith("error=CONFIG") and "tpo-k" in err

    def test_malformed_config_line(self, workspace, tmp_path, capsys):
        cfg = tmp_path / "run.conf"
        cfg.write_text("top-k 7\n")
        assert main(scan_args(workspace, tmp_path / "o", "--config",
                              str(cfg))) == 6

    def test_other_subcommand_keys_ignored(self, workspace, tmp_path):
        # simulate-only keys in the file must not break a scan run
        cfg = tmp_path / "run.conf"
        cfg.write_text("n-snps = 99\nvar-a = 0.5\ntop-k = 2\n")
        out = tmp_path / "out"
        assert main(scan_args(workspace, out, "--config", str(cfg))) == 0
        assert len(read_rows(out / "top_hits.tsv")) == 2


class TestDeterminism:
    def test_same_seed_same_bytes(self, workspace, tmp_path):
        outs = []
        for name in ("a", "b"):
            sim = tmp_path / f"sim_{name}"
            assert main(["simulate", "--ped", workspace["ped"], "--n-snps",
                         "80", "--var-a", "0.3", "--seed", "17",
                         "--out", str(sim)]) == 0
            out = tmp_path / f"out_{name}"
            assert main(["scan", "--ped", workspace["ped"],
                         "--pheno", str(sim / "phenotypes.tsv"),
                         "--geno", str(sim / "genotypes.dosage"),
                         "--out", str(out)]) == 0
            outs.append(out)
        for name in ("results.tsv", "top_hits.tsv", "manhattan.tsv",
                     "qq.tsv", "null_model.txt"):
            assert filecmp.cmp(outs[0] / name, outs[1] / name,
                               shallow=False), name
        assert filecmp.cmp(tmp_path / "sim_a" / "genotypes.dosage",
                           tmp_path / "sim_b" / "genotypes.dosage",
                           shallow=False)


class TestOtherSubcommands:
    def test_kinship_theoretical_default(self, workspace, tmp_path):
        out = tmp_path / "out"
        code = main(["kinship", "--ped", workspace["ped"], "--out", str(out)])
        assert code == 0
        text = (out / "kinship.tsv").read_text()
        assert "theoretical" in text and "fam1" in text

    def test_kinship_mom_needs_geno(self, workspace, tmp_path, capsys):
        code = main(["kinship", "--ped", workspace["ped"], "--kinship", "mom",
                     "--out", str(tmp_path / "o")])
        assert code == 6
        assert "error=CONFIG" in capsys.readouterr().err

    def test_kinship_mom_with_geno(self, workspace, tmp_path):
        out = tmp_path / "out"
        code = main(["kinship", "--ped", workspace["ped"], "--geno",
                     workspace["geno"], "--kinship", "mom", "--out", str(out)])
        assert code == 0
        assert "mom" in (out / "kinship.tsv").read_text()

    def test_null_fit_gaussian_and_t(self, workspace, tmp_path):
        out_g = tmp_path / "g"
        assert main(["null-fit", "--ped", workspace["ped"], "--pheno",
                     workspace["pheno"], "--out", str(out_g)]) == 0
        text = (out_g / "null_model.txt").read_text()
        assert "distribution:  gaussian" in text
        out_t = tmp_path / "t"
        assert main(["null-fit", "--ped", workspace["ped"], "--pheno",
                     workspace["pheno"], "--t-dist", "--out", str(out_t)]) == 0
        t_text = (out_t / "null_model.txt").read_text()
        assert "multivariate t" in t_text

    def test_simulate_covar_without_pheno(self, workspace, tmp_path, capsys):
        code = main(["simulate", "--ped", workspace["ped"], "--covar", "age",
                     "--n-snps", "5", "--out", str(tmp_path / "o")])
        assert code == 6
        assert "error=CONFIG" in capsys.readouterr().err


class TestErrorContract:
    def test_missing_phenotype_file(self, workspace, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["scan", "--ped", workspace["ped"],
                     "--pheno", str(tmp_path / "nope.tsv"),
                     "--geno", workspace["geno"], "--out", str(out)])
        assert code == 2
        lines = [l for l in capsys.readouterr().err.splitlines()
                 if l.startswith("error=")]
        assert len(lines) == 1 and lines[0].startswith("error=IO")
        assert not (out / "results.tsv").exists()

    def test_malformed_pedigree_file(self, workspace, tmp_path, capsys):
        bad = tmp_path / "bad.ped"
        bad.write_text("fam1 a 0\n")
        code = main(["scan", "--ped", str(bad), "--pheno", workspace["pheno"],
                     "--geno", workspace["geno"], "--out", str(tmp_path / "o")])
        assert code == 3
        assert "error=PARSE" in capsys.readouterr().err

    def test_dominance_with_snp_kinship(self, workspace, tmp_path, capsys):
        code = main(scan_args(workspace, tmp_path / "o",
                              "--components", "additive,dominance"))
        assert code == 6
        assert "error=CONFIG" in capsys.readouterr().err

    def test_dominance_with_theoretical_kinship(self, workspace, tmp_path):
        out = tmp_path / "out"
        code = main(scan_args(workspace, out, "--components",
                              "additive,dominance", "--kinship", "theoretical"))
        assert code == 0
        assert "dominance" in (out / "null_model.txt").read_text()
