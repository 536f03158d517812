"""Command-line front end: scan, kinship, simulate, null-fit.

Option values resolve as command line > config file > built-in defaults.
The config file is plain ``key = value`` text using the long option names
(``maf-count = 3``). Failures print a single ``error=<CODE> message`` line
to stderr and exit with the code's status; artifact files are written
atomically so an aborted run leaves nothing half-finished.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import reports
from .empirical import allele_frequencies, grm_kinship, mom_kinship, select_kinship_snps
from .errors import ConfigError, PedscanError
from .genotypes import read_genotypes, write_dosage, write_plink
from .kinship import theoretical_kinship_set, write_kinship
from .lrt import refine_top
from .nullmodel import MeanModel, VarianceModel, fit_null, precompute_score_context
from .pedigree import (Cohort, parse_cohort, parse_pedigree_file,
                       parse_phenotype_file, write_phenotype_file)
from .score import scan
from .simulate import SimSpec, assign_traits, gene_drop, simulate_trait

log = logging.getLogger("pedscan")

_COMPONENT_CHOICES = ("additive", "dominance", "household")


def _split_list(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [t for t in text.replace(",", " ").split() if t]


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot interpret {text!r} as a boolean")


def _parse_floats(text):
    if isinstance(text, np.ndarray):
        return text
    return np.array([float(t) for t in _split_list(text)])


# converters applied to config-file strings, keyed by option dest
_CONVERT = {
    "trait": _split_list, "covar": _split_list, "constrain_equal": _split_list,
    "components": _split_list, "kinship_frac": float, "maf_count": int,
    "top_k": int, "threads": int, "seed": int, "t_dist": _parse_bool,
    "impute": _parse_bool, "clamp": _parse_bool, "n_snps": int, "eta": float,
    "var_a": float, "var_d": float, "var_h": float, "var_e": float,
    "beta": _parse_floats, "causal_snp": int, "causal_effect": float,
    "trait_missing": float, "geno_missing": float, "freq_lo": float,
    "freq_hi": float,
}

_COMMON_DEFAULTS = {
    "pheno": None, "geno": None, "trait": None, "covar": [],
    "constrain_equal": [], "components": ["additive"], "model": "additive",
    "kinship_scope": "blocks", "kinship_frac": 0.20, "maf_count": 3,
    "top_k": 50, "t_dist": False, "impute": False, "clamp": False,
    "threads": None, "seed": 0, "out": "pedscan-out", "format": "dosage",
    "n_snps": 1000, "var_a": 0.0, "var_d": 0.0, "var_h": 0.0, "var_e": 1.0,
    "beta": None, "causal_snp": None, "causal_effect": 0.0, "eta": 4.0,
    "trait_missing": 0.0, "geno_missing": 0.0, "freq_lo": 0.1, "freq_hi": 0.5,
}

# the scan pipeline estimates kinship from the SNPs themselves by default;
# the pedigree-only subcommands default to the theoretical coefficients
_KINSHIP_DEFAULT = {"scan": "grm", "kinship": "theoretical",
                    "null-fit": "theoretical"}


def _read_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            for ln, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}: line {ln}: expected key = value")
                key, _, val = line.partition("=")
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return values


_ALL_CONFIG_KEYS = set(_COMMON_DEFAULTS) | {"kinship", "ped"}


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill every None option from the config file, then from defaults.

    Config keys belonging to a different subcommand are ignored so one
    file can serve a whole workflow; unknown keys are errors.
    """
    cfg = _read_config(args.config) if args.config else {}
    for key in cfg:
        if key not in _ALL_CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key.replace('_', '-')!r}")
    for dest, value in list(vars(args).items()):
        if value is not None or dest in ("config", "command"):
            continue
        if dest in cfg:
            conv = _CONVERT.get(dest, str)
            try:
                setattr(args, dest, conv(cfg[dest]))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"config key {dest.replace('_', '-')}: {exc}")
        elif dest == "kinship":
            setattr(args, dest, _KINSHIP_DEFAULT.get(args.command, "theoretical"))
        elif dest in _COMMON_DEFAULTS:
            setattr(args, dest, _COMMON_DEFAULTS[dest])
    return args


def _add_option(sub, *names, **kw):
    kw.setdefault("default", None)
    sub.add_argument(*names, **kw)


def _add_input_options(sub, *, geno: bool) -> None:
    _add_option(sub, "--ped", required=True, help="pedigree structure file")
    _add_option(sub, "--pheno", help="phenotype/covariate file")
    if geno:
        _add_option(sub, "--geno", help="genotypes (.bed triplet prefix or dosage text)")
    _add_option(sub, "--trait", type=_split_list,
                help="trait name(s); default: every trait in the phenotype header")
    _add_option(sub, "--covar", type=_split_list, help="covariate name(s)")
    _add_option(sub, "--constrain-equal", type=_split_list,
                help="covariates whose effect is shared across traits")
    _add_option(sub, "--components", type=_split_list,
                help="variance components beyond environmental "
                     f"(from {', '.join(_COMPONENT_CHOICES)}; default additive)")


def _add_kinship_options(sub) -> None:
    _add_option(sub, "--kinship", choices=("theoretical", "grm", "mom"),
                help="kinship source (scan defaults to grm, others to theoretical)")
    _add_option(sub, "--kinship-scope", choices=("blocks", "all-pairs"),
                help="estimate within pedigrees or across everyone")
    _add_option(sub, "--kinship-frac", type=float,
                help="fraction of SNPs used for kinship estimation")
    _add_option(sub, "--clamp", action="store_const", const=True,
                help="clamp negative kinship estimates to zero")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pedscan",
        description="variance-component association scans on pedigrees")
    parser.add_argument("--verbose", "-v", action="store_true",
                        help="log progress details to stderr")
    subs = parser.add_subparsers(dest="command", required=True)

    sc = subs.add_parser("scan", help="full pipeline: null fit, score scan, "
                                      "LRT refinement, reports")
    _add_input_options(sc, geno=True)
    _add_kinship_options(sc)
    _add_option(sc, "--model", choices=("additive", "dominant", "recessive"))
    _add_option(sc, "--maf-count", type=int,
                help="minimum minor-allele count per trait (default 3)")
    _add_option(sc, "--top-k", type=int, help="SNPs refined by LRT (default 50)")
    _add_option(sc, "--t-dist", action="store_const", const=True,
                help="heavy-tailed multivariate-t model")
    _add_option(sc, "--impute", action="store_const", const=True,
                help="replace missing genotypes by twice the founder frequency")
    _add_option(sc, "--threads", type=int)
    _add_option(sc, "--seed", type=int)
    _add_option(sc, "--out", help="output directory")

    kn = subs.add_parser("kinship", help="compute kinship matrices only")
    _add_input_options(kn, geno=True)
    _add_kinship_options(kn)
    _add_option(kn, "--threads", type=int)
    _add_option(kn, "--out", help="output directory")

    nf = subs.add_parser("null-fit", help="fit the variance-component null "
                                          "model and report it")
    _add_input_options(nf, geno=True)
    _add_kinship_options(nf)
    _add_option(nf, "--t-dist", action="store_const", const=True)
    _add_option(nf, "--out", help="output directory")

    sm = subs.add_parser("simulate", help="gene-drop genotypes and simulate traits")
    _add_option(sm, "--ped", required=True, help="pedigree structure file")
    _add_option(sm, "--pheno", help="phenotype file supplying covariates")
    _add_option(sm, "--trait", type=_split_list, help="simulated trait name(s)")
    _add_option(sm, "--covar", type=_split_list, help="covariates entering the mean")
    _add_option(sm, "--n-snps", type=int)
    _add_option(sm, "--freq-lo", type=float, help="lower bound of drawn frequencies")
    _add_option(sm, "--freq-hi", type=float, help="upper bound of drawn frequencies")
    _add_option(sm, "--var-a", type=float, help="additive variance")
    _add_option(sm, "--var-d", type=float, help="dominance variance")
    _add_option(sm, "--var-h", type=float, help="household variance")
    _add_option(sm, "--var-e", type=float, help="environmental variance")
    _add_option(sm, "--beta", type=_parse_floats,
                help="mean coefficients for [intercept | covariates]")
    _add_option(sm, "--causal-snp", type=int, help="0-based causal SNP index")
    _add_option(sm, "--causal-effect", type=float)
    _add_option(sm, "--t-dist", action="store_const", const=True)
    _add_option(sm, "--eta", type=float, help="t degrees of freedom")
    _add_option(sm, "--trait-missing", type=float)
    _add_option(sm, "--geno-missing", type=float)
    _add_option(sm, "--format", choices=("dosage", "plink"))
    _add_option(sm, "--seed", type=int)
    _add_option(sm, "--out", help="output directory")

    for sub in (sc, kn, nf, sm):
        _add_option(sub, "--config", help="key = value option file")
    return parser


class _Progress:
    def __init__(self):
        self.t0 = time.perf_counter()

    def __call__(self, stage: str) -> None:
        print(f"pedscan: {stage} [{time.perf_counter() - self.t0:.1f}s]",
              file=sys.stderr, flush=True)


def _load_cohort(args):
    return parse_cohort(args.ped, args.pheno, trait_names=args.trait or None,
                        covariate_names=args.covar or None)


def _kinship_for(args, cohort, gm, freqs):
    comps = args.components
    bad = [c for c in comps if c not in _COMPONENT_CHOICES]
    if bad:
        raise ConfigError(f"unknown variance component(s): {', '.join(bad)}")
    if args.kinship == "theoretical":
        return theoretical_kinship_set(cohort, dominance="dominance" in comps,
                                       household="household" in comps)
    if "dominance" in comps or "household" in comps:
        raise ConfigError("dominance/household components need theoretical "
                          "kinship (SNP-based estimation gives additive only)")
    if gm is None:
        raise ConfigError(f"{args.kinship} kinship needs --geno")
    subset = select_kinship_snps(gm, args.kinship_frac)
    estimator = grm_kinship if args.kinship == "grm" else mom_kinship
    return estimator(gm, freqs, scope=args.kinship_scope, snp_subset=subset,
                     clamp=args.clamp)


def _fit_null_model(args, cohort, kinship):
    mean = MeanModel(traits=args.trait, covariates=args.covar,
                     constraints=args.constrain_equal)
    var = VarianceModel(components=tuple(args.components))
    return fit_null(cohort, kinship, mean, var, t_dist=args.t_dist)


def cmd_scan(args) -> int:
    progress = _Progress()
    cohort = _load_cohort(args)
    if args.geno is None:
        raise ConfigError("scan needs --geno")
    gm = read_genotypes(args.geno)
    progress(f"read {cohort.n_individuals} individuals, {gm.n_snps} SNPs")

    freqs = allele_frequencies(gm, cohort)
    progress("computed allele frequencies")

    kinship = _kinship_for(args, cohort, gm, freqs)
    progress(f"kinship ready ({args.kinship})")

    fit = _fit_null_model(args, cohort, kinship)
    progress(f"null model fitted (loglik {fit.loglik:.4f}, "
             f"{fit.n_iter} iterations)")

    ctx = precompute_score_context(fit)
    result = scan(gm, ctx, cohort, model=args.model, maf_count=args.maf_count,
                  threads=args.threads, impute=args.impute)
    lam = "n/a" if result.lambda_gc is None else f"{result.lambda_gc:.4f}"
    progress(f"scanned {result.n_snps} SNPs (lambda {lam})")

    hits = refine_top(result, gm, fit, cohort, k=args.top_k, impute=args.impute)
    progress(f"refined {len(hits)} top hits")

    os.makedirs(args.out, exist_ok=True)
    paths = {name: os.path.join(args.out, name) for name in
             ("null_model.txt", "results.tsv", "top_hits.tsv",
              "manhattan.tsv", "qq.tsv")}
    reports.write_null_report(fit, paths["null_model.txt"],
                              lambda_gc=result.lambda_gc)
    reports.write_results(result, paths["results.tsv"])
    reports.write_top_hits(hits, fit.design.trait_names, paths["top_hits.tsv"])
    reports.write_manhattan(result, paths["manhattan.tsv"])
    reports.write_qq(result, paths["qq.tsv"])
    reports.validate_artifact(paths["results.tsv"], reports.RESULTS_COLUMNS)
    reports.validate_artifact(paths["manhattan.tsv"], reports.MANHATTAN_COLUMNS)
    reports.validate_artifact(paths["qq.tsv"], reports.QQ_COLUMNS)
    progress(f"artifacts written to {args.out}")
    return 0


def cmd_kinship(args) -> int:
    progress = _Progress()
    cohort = _load_cohort(args)
    gm = freqs = None
    if args.kinship != "theoretical":
        if args.geno is None:
            raise ConfigError(f"{args.kinship} kinship needs --geno")
        gm = read_genotypes(args.geno)
        freqs = allele_frequencies(gm, cohort)
    kinship = _kinship_for(args, cohort, gm, freqs)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "kinship.tsv")
    write_kinship(kinship, path)
    progress(f"kinship ({args.kinship}) written to {path}")
    return 0


def cmd_null_fit(args) -> int:
    progress = _Progress()
    cohort = _load_cohort(args)
    gm = freqs = None
    if args.kinship != "theoretical":
        if args.geno is None:
            raise ConfigError(f"{args.kinship} kinship needs --geno")
        gm = read_genotypes(args.geno)
        freqs = allele_frequencies(gm, cohort)
    kinship = _kinship_for(args, cohort, gm, freqs)
    fit = _fit_null_model(args, cohort, kinship)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "null_model.txt")
    reports.write_null_report(fit, path)
    progress(f"null model written to {path} (loglik {fit.loglik:.4f})")
    return 0


def _simulation_cohort(args):
    """Pedigree structure plus covariates; traits are about to be invented,
    so they are declared rather than read."""
    pedigrees = parse_pedigree_file(args.ped)
    trait_names = list(args.trait) if args.trait else ["trait"]
    covar_names = list(args.covar) if args.covar else []
    table, c_idx = {}, []
    if args.pheno is not None:
        columns, table = parse_phenotype_file(args.pheno)
        for name in covar_names:
            if name not in columns:
                raise ConfigError(f"covariate {name!r} not present in the "
                                  "phenotype header")
        c_idx = [columns.index(n) for n in covar_names]
    elif covar_names:
        raise ConfigError("--covar given without --pheno")
    for ped in pedigrees:
        for m in ped.members:
            m.traits = np.full(len(trait_names), np.nan)
            row = table.get((ped.id, m.id))
            m.covariates = (row[c_idx] if row is not None
                            else np.full(len(covar_names), np.nan))
    return Cohort(pedigrees, trait_names, covar_names)


def cmd_simulate(args) -> int:
    progress = _Progress()
    cohort = _simulation_cohort(args)
    spec = SimSpec(
        n_snps=args.n_snps, freq_range=(args.freq_lo, args.freq_hi),
        beta=args.beta, var_a=args.var_a, var_d=args.var_d, var_h=args.var_h,
        var_e=args.var_e, causal_snp=args.causal_snp,
        causal_effect=args.causal_effect,
        dist="t" if args.t_dist else "gaussian", eta=args.eta,
        trait_missing_rate=args.trait_missing,
        genotype_missing_rate=args.geno_missing, seed=args.seed).validated()
    gm = gene_drop(cohort, spec)
    progress(f"gene-dropped {gm.n_snps} SNPs")
    kinship = theoretical_kinship_set(
        cohort, dominance=np.any(np.asarray(spec.var_d) > 0),
        household=bool(np.any(np.asarray(spec.var_h) > 0)))
    values = simulate_trait(cohort, kinship, spec,
                            genotypes=gm if spec.causal_snp is not None else None)
    assign_traits(cohort, values)
    progress("simulated trait values")
    os.makedirs(args.out, exist_ok=True)
    if args.format == "plink":
        geno_path = os.path.join(args.out, "genotypes")
        write_plink(gm, geno_path)
        geno_path += ".bed"
    else:
        geno_path = os.path.join(args.out, "genotypes.dosage")
        write_dosage(gm, geno_path)
    pheno_path = os.path.join(args.out, "phenotypes.tsv")
    write_phenotype_file(cohort, pheno_path)
    progress(f"wrote {geno_path} and {pheno_path}")
    return 0


_COMMANDS = {"scan": cmd_scan, "kinship": cmd_kinship,
             "null-fit": cmd_null_fit, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="pedscan %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args = _resolve(args)
        return _COMMANDS[args.command](args)
    except PedscanError as exc:
        msg = " ".join(str(exc).split())
        print(f"error={exc.code} {msg}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"error=IO {' '.join(str(exc).split())}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
