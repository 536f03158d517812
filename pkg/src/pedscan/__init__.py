"""Exact variance-component association scans on general pedigrees.

The workflow: parse a cohort, get kinship coefficients (pedigree-theoretical
or SNP-estimated), fit the polygenic null model once, then score-test every
SNP against the frozen null and refine the best hits by full likelihood
ratio. Simulation utilities (gene dropping, trait draws) close the loop for
calibration and testing.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .empirical import (allele_frequencies, grm_kinship, mom_kinship,
                        select_kinship_snps)
from .errors import (ComputationError, ConfigError, FileFormatError,
                     InputError, PedscanError, ValidationError)
from .genotypes import (GenotypeMatrix, SnpMeta, read_dosage, read_genotypes,
                        read_plink, write_dosage, write_plink)
from .kinship import (KinshipSet, dominance_delta7, household_matrix,
                      read_kinship, theoretical_kinship, theoretical_kinship_set,
                      write_kinship)
from .lrt import TopHit, refine_top, variance_explained
from .nullmodel import (MeanModel, NullFit, ScoreContext, VarianceModel,
                        build_design, fit_design, fit_null, heritability,
                        loglikelihood, precompute_score_context, t_weights)
from .pedigree import (Cohort, Individual, Pedigree, parse_cohort,
                       parse_pedigree_file, parse_phenotype_file,
                       write_pedigree_file, write_phenotype_file)
from .score import (ScanResult, SnpEncoding, chi2_pvalue, encode_genotypes,
                    encode_snp, genomic_lambda, maf_filter, neg_log10_pvalue,
                    scan, score_statistic)
from .simulate import (SimSpec, assign_traits, gene_drop, ibd_sharing,
                       nuclear_families, simulate_trait,
                       three_generation_families)

__version__ = "0.1.0"

__all__ = [
    "Cohort", "ComputationError", "ConfigError", "FileFormatError",
    "GenotypeMatrix", "Individual", "InputError", "KERNEL_BACKEND",
    "KinshipSet", "MeanModel", "NullFit", "Pedigree", "PedscanError",
    "ScanResult", "ScoreContext", "SimSpec", "SnpEncoding", "SnpMeta",
    "TopHit", "ValidationError", "VarianceModel", "allele_frequencies",
    "assign_traits", "build_design", "chi2_pvalue", "dominance_delta7",
    "encode_genotypes", "encode_snp", "fit_design", "fit_null", "gene_drop",
    "genomic_lambda", "grm_kinship", "heritability", "household_matrix",
    "ibd_sharing", "loglikelihood", "maf_filter", "mom_kinship",
    "neg_log10_pvalue", "nuclear_families", "parse_cohort",
    "parse_pedigree_file", "parse_phenotype_file", "precompute_score_context",
    "read_dosage", "read_genotypes", "read_kinship", "read_plink",
    "refine_top", "scan", "score_statistic", "select_kinship_snps",
    "simulate_trait", "t_weights", "theoretical_kinship",
    "theoretical_kinship_set", "three_generation_families",
    "variance_explained", "write_dosage", "write_kinship",
    "write_pedigree_file", "write_phenotype_file", "write_plink",
]
