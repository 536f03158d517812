"""Gene dropping and trait simulation against distributional truth.

Checks here are Monte Carlo: founder genotypes against the binomial law,
transmission against Mendelian bounds, IBD sharing against the classical
sib-pair distribution, and trait draws against the covariance matrix they
were sampled from. Tolerances are set several standard errors wide for the
replicate counts used.
"""

import numpy as np
import pytest
from scipy import stats

from pedscan.errors import ValidationError
from pedscan.kinship import theoretical_kinship_set
from pedscan.simulate import (SimSpec, assign_traits, gene_drop, ibd_sharing,
                              nuclear_families, simulate_trait,
                              three_generation_families)

from conftest import founders_cohort


class TestGeneDrop:
    def test_founder_genotypes_follow_hwe(self):
        cohort = founders_cohort(400)
        gm = gene_drop(cohort, SimSpec(freqs=np.full(5, 0.3), seed=1))
        counts = np.bincount((gm.calls.ravel() + 0).astype(int), minlength=3)
        p = 0.3
        expected = len(gm.calls.ravel()) * np.array(
            [(1 - p) ** 2, 2 * p * (1 - p), p ** 2])
        gof = stats.chisquare(counts, expected)
        assert gof.pvalue > 0.01

    def test_transmission_respects_mendel(self):
        cohort = nuclear_families(60, n_children=2)
        gm = gene_drop(cohort, SimSpec(n_snps=80, seed=3))
        calls = gm.calls.astype(int)
        smap = {key: c for c, key in enumerate(gm.sample_keys)}
        for f in range(60):
            fid = f"fam{f + 1}"
            dad = calls[:, smap[(fid, "father")]]
            mom = calls[:, smap[(fid, "mother")]]
            for kid_id in ("child1", "child2"):
                kid = calls[:, smap[(fid, kid_id)]]
                lower = (dad == 2).astype(int) + (mom == 2).astype(int)
                upper = 2 - (dad == 0).astype(int) - (mom == 0).astype(int)
                assert np.all(kid >= lower) and np.all(kid <= upper)

    def test_genotype_missing_rate(self):
        cohort = founders_cohort(300)
        spec = SimSpec(n_snps=40, genotype_missing_rate=0.2, seed=2)
        gm = gene_drop(cohort, spec)
        frac = (gm.calls < 0).mean()
        assert frac == pytest.approx(0.2, abs=0.02)

    def test_same_seed_is_deterministic(self):
        cohort = nuclear_families(10)
        a = gene_drop(cohort, SimSpec(n_snps=30, seed=9))
        b = gene_drop(cohort, SimSpec(n_snps=30, seed=9))
        np.testing.assert_array_equal(a.calls, b.calls)
        c = gene_drop(cohort, SimSpec(n_snps=30, seed=10))
        assert (a.calls != c.calls).any()

    def test_frequency_validation(self):
        cohort = founders_cohort(4)
        with pytest.raises(ValidationError):
            gene_drop(cohort, SimSpec(n_snps=0))
        with pytest.raises(ValidationError):
            gene_drop(cohort, SimSpec(freqs=np.array([0.0, 0.3])))
        with pytest.raises(ValidationError):
            gene_drop(cohort, SimSpec(freqs=np.array([1.0])))


class TestIbdSharing:
    def test_sib_pair_distribution(self):
        cohort = nuclear_families(1, n_children=2)
        probs = ibd_sharing(cohort, [(("fam1", "child1"), ("fam1", "child2"))],
                            40000, seed=4)
        np.testing.assert_allclose(probs[0], [0.25, 0.5, 0.25], atol=0.01)

    def test_parent_child_shares_exactly_one(self):
        cohort = nuclear_families(1, n_children=1)
        probs = ibd_sharing(cohort, [(("fam1", "father"), ("fam1", "child1"))],
                            2000, seed=4)
        np.testing.assert_allclose(probs[0], [0.0, 1.0, 0.0], atol=0)

    def test_first_cousins(self):
        cohort = three_generation_families(1)
        probs = ibd_sharing(cohort, [(("kin1", "c1"), ("kin1", "c3"))],
                            40000, seed=4)
        np.testing.assert_allclose(probs[0], [0.75, 0.25, 0.0], atol=0.01)


class TestTraitDraws:
    def test_no_genetic_variance_gives_iid_normal(self):
        cohort = founders_cohort(2000)
        ks = theoretical_kinship_set(cohort)
        spec = SimSpec(beta=np.array([2.0]), var_a=0.0, var_e=1.0, seed=6)
        y = simulate_trait(cohort, ks, spec).ravel()
        assert y.mean() == pytest.approx(2.0, abs=0.08)
        assert y.var() == pytest.approx(1.0, abs=0.1)
        assert stats.kurtosis(y) == pytest.approx(0.0, abs=0.3)

    def test_sib_correlation_matches_heritability(self):
        cohort = nuclear_families(3000, n_children=2)
        ks = theoretical_kinship_set(cohort)
        spec = SimSpec(var_a=0.5, var_e=0.5, seed=7)
        y = simulate_trait(cohort, ks, spec).reshape(3000, 4)
        # members are (father, mother, child1, child2); sib covariance is
        # 2 * 0.25 * var_a = 0.25 of a unit total variance
        r = np.corrcoef(y[:, 2], y[:, 3])[0, 1]
        assert r == pytest.approx(0.25, abs=0.03)
        r_spouse = np.corrcoef(y[:, 0], y[:, 1])[0, 1]
        assert r_spouse == pytest.approx(0.0, abs=0.03)

    def test_t_mode_is_heavy_tailed(self):
        cohort = nuclear_families(2000, n_children=0)
        ks = theoretical_kinship_set(cohort)
        y_t = simulate_trait(cohort, ks, SimSpec(dist="t", eta=5.0, seed=8))
        assert stats.kurtosis(y_t.ravel()) > 1.0
        y_g = simulate_trait(cohort, ks, SimSpec(seed=8))
        assert abs(stats.kurtosis(y_g.ravel())) < 0.5

    def test_block_covariance_matches_model(self):
        cohort = nuclear_families(1, n_children=3, household=True)
        ks = theoretical_kinship_set(cohort, dominance=True, household=True)
        sa, sd, sh, se = 0.6, 0.3, 0.4, 0.5
        draws = np.stack([
            simulate_trait(cohort, ks, SimSpec(var_a=sa, var_d=sd, var_h=sh,
                                               var_e=se, seed=s)).ravel()
            for s in range(10000)])
        label = ks.labels[0]
        omega = (2.0 * sa * ks.phi[label] + sd * ks.delta7[label]
                 + sh * ks.household[label] + se * np.eye(5))
        emp = np.cov(draws, rowvar=False)
        rel = np.linalg.norm(emp - omega) / np.linalg.norm(omega)
        assert rel < 0.05

    def test_causal_snp_shifts_mean(self):
        cohort = founders_cohort(3000)
        ks = theoretical_kinship_set(cohort)
        gm = gene_drop(cohort, SimSpec(freqs=np.array([0.5]), seed=11))
        spec = SimSpec(freqs=np.array([0.5]), causal_snp=0, causal_effect=2.0,
                       var_e=0.25, seed=11)
        y = simulate_trait(cohort, ks, spec, genotypes=gm).ravel()
        a = gm.calls[0].astype(float) - 1.0
        slope = np.polyfit(a, y, 1)[0]
        assert slope == pytest.approx(2.0, abs=0.1)

    def test_causal_snp_requires_genotypes(self):
        cohort = founders_cohort(5)
        ks = theoretical_kinship_set(cohort)
        with pytest.raises(ValidationError):
            simulate_trait(cohort, ks, SimSpec(causal_snp=0, causal_effect=1.0))

    def test_trait_missing_rate(self):
        cohort = founders_cohort(2000)
        ks = theoretical_kinship_set(cohort)
        y = simulate_trait(cohort, ks, SimSpec(trait_missing_rate=0.3, seed=12))
        assert np.isnan(y).mean() == pytest.approx(0.3, abs=0.04)

    def test_same_seed_is_deterministic(self):
        cohort = nuclear_families(5)
        ks = theoretical_kinship_set(cohort)
        y1 = simulate_trait(cohort, ks, SimSpec(var_a=0.5, seed=13))
        y2 = simulate_trait(cohort, ks, SimSpec(var_a=0.5, seed=13))
        np.testing.assert_array_equal(y1, y2)


class TestMultivariate:
    def test_cross_trait_covariance(self):
        cohort = founders_cohort(4000, trait_names=("y1", "y2"))
        ks = theoretical_kinship_set(cohort)
        ge = np.array([[1.0, 0.6], [0.6, 1.0]])
        y = simulate_trait(cohort, ks, SimSpec(var_e=ge, seed=14))
        emp = np.cov(y, rowvar=False)
        np.testing.assert_allclose(emp, ge, atol=0.08)

    def test_component_shape_validation(self):
        cohort = founders_cohort(4, trait_names=("y1", "y2"))
        ks = theoretical_kinship_set(cohort)
        with pytest.raises(ValidationError):
            simulate_trait(cohort, ks, SimSpec(var_e=0.5))  # scalar, T = 2
        bad = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ValidationError):
            simulate_trait(cohort, ks, SimSpec(var_e=bad))
        not_psd = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ValidationError):
            simulate_trait(cohort, ks, SimSpec(var_e=not_psd))


class TestSpecAndAssignment:
    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            SimSpec(dist="cauchy").validated()
        with pytest.raises(ValidationError):
            SimSpec(dist="t", eta=2.0).validated()
        with pytest.raises(ValidationError):
            SimSpec(trait_missing_rate=1.0).validated()
        with pytest.raises(ValidationError):
            SimSpec(var_a=-0.5).validated()

    def test_assign_traits_round_trip(self):
        cohort = founders_cohort(3)
        vals = np.array([[1.0], [np.nan], [3.0]])
        assign_traits(cohort, vals)
        got = cohort.trait_matrix()
        np.testing.assert_array_equal(np.isnan(got), np.isnan(vals))
        assert got[0, 0] == 1.0 and got[2, 0] == 3.0

    def test_assign_traits_shape_check(self):
        cohort = founders_cohort(3)
        with pytest.raises(ValidationError):
            assign_traits(cohort, np.zeros((2, 1)))
