"""Kinship coefficient tests against hand-derived and Monte Carlo oracles.

The frozen scalar expectations below are textbook identity-coefficient
values, re-derived by hand from the recursion Phi(i,j) = (Phi(f,j) +
Phi(m,j)) / 2 and Delta7(i,j) = Phi(ff')Phi(mm') + Phi(fm')Phi(mf').
"""

import numpy as np
import pytest

from pedscan.errors import ValidationError
from pedscan.kinship import (dominance_delta7, household_matrix, read_kinship,
                             theoretical_kinship, theoretical_kinship_set,
                             write_kinship)
from pedscan.pedigree import Pedigree
from pedscan.simulate import ibd_sharing, three_generation_families

from conftest import founders_cohort, make_individual, sib_pair_pedigree


def _three_gen_pedigree():
    # gf,gm -> p1; p1 x p2 -> s1,s2 ; s1 x spouse -> c1  (plus cousin branch)
    return three_generation_families(1).pedigrees[0]


class TestTheoreticalKinship:
    def test_founder_self_kinship(self):
        phi = theoretical_kinship(sib_pair_pedigree())
        assert phi[0, 0] == 0.5
        assert phi[1, 1] == 0.5
        assert phi[0, 1] == 0.0

    def test_parent_child_quarter(self):
        ped = sib_pair_pedigree()
        phi = theoretical_kinship(ped)
        dad, kid = ped.position("dad"), ped.position("kid0")
        assert phi[dad, kid] == 0.25

    def test_full_sibs_quarter(self):
        ped = sib_pair_pedigree()
        phi = theoretical_kinship(ped)
        assert phi[ped.position("kid0"), ped.position("kid1")] == 0.25

    def test_half_sibs_eighth(self):
        members = [make_individual("dad", sex="M"),
                   make_individual("mom1", sex="F"),
                   make_individual("mom2", sex="F"),
                   make_individual("k1", father="dad", mother="mom1"),
                   make_individual("k2", father="dad", mother="mom2")]
        phi = theoretical_kinship(Pedigree("h", members))
        assert phi[3, 4] == 0.125

    def test_first_cousins_sixteenth(self):
        ped = _three_gen_pedigree()
        phi = theoretical_kinship(ped)
        c1 = ped.position("c1")
        c3 = ped.position("c3")  # child of the other sib branch
        assert phi[c1, c3] == 0.0625

    def test_grandparent_eighth_and_avuncular_eighth(self):
        ped = _three_gen_pedigree()
        phi = theoretical_kinship(ped)
        assert phi[ped.position("gf"), ped.position("c1")] == 0.125
        assert phi[ped.position("p2"), ped.position("c1")] == 0.125

    def test_inbred_self_kinship(self):
        # child of full sibs: Phi(self) = (1 + Phi(parents)) / 2 = 0.625
        members = [make_individual("gf", sex="M"), make_individual("gm", sex="F"),
                   make_individual("s1", father="gf", mother="gm", sex="M"),
                   make_individual("s2", father="gf", mother="gm", sex="F"),
                   make_individual("kid", father="s1", mother="s2")]
        phi = theoretical_kinship(Pedigree("inb", members))
        assert abs(phi[4, 4] - 0.625) < 1e-12

    def test_unrelated_founder_blocks(self):
        phi = theoretical_kinship(sib_pair_pedigree(n_sibs=1))
        expected = np.array([[0.5, 0.0, 0.25],
                             [0.0, 0.5, 0.25],
                             [0.25, 0.25, 0.5]])
        np.testing.assert_array_equal(phi, expected)


class TestDominance:
    def test_full_sibs_quarter(self):
        ped = sib_pair_pedigree()
        d7 = dominance_delta7(ped)
        i, j = ped.position("kid0"), ped.position("kid1")
        # Phi(dad,dad)Phi(mom,mom) + Phi(dad,mom)Phi(mom,dad) = 1/4 + 0
        assert d7[i, j] == 0.25

    def test_parent_child_zero(self):
        ped = sib_pair_pedigree()
        d7 = dominance_delta7(ped)
        assert d7[ped.position("dad"), ped.position("kid0")] == 0.0

    def test_self_is_one(self):
        ped = sib_pair_pedigree()
        assert np.all(np.diag(dominance_delta7(ped)) == 1.0)

    def test_first_cousins_zero(self):
        ped = _three_gen_pedigree()
        d7 = dominance_delta7(ped)
        assert d7[ped.position("c1"), ped.position("c3")] == 0.0

    def test_inbred_pedigree_rejected(self):
        members = [make_individual("gf", sex="M"), make_individual("gm", sex="F"),
                   make_individual("s1", father="gf", mother="gm", sex="M"),
                   make_individual("s2", father="gf", mother="gm", sex="F"),
                   make_individual("kid", father="s1", mother="s2")]
        with pytest.raises(ValidationError):
            dominance_delta7(Pedigree("inb", members))


class TestHousehold:
    def test_groups_members_sharing_label(self):
        ped = sib_pair_pedigree()
        for m in ped.members:
            m.household = "h1" if m.id != "kid1" else "h2"
        H = household_matrix(ped)
        assert H[0, 1] == 1.0 and H[0, 2] == 1.0
        assert H[0, 3] == 0.0 and H[3, 3] == 1.0

    def test_no_labels_gives_none(self):
        assert household_matrix(sib_pair_pedigree()) is None


class TestKinshipSet:
    def test_blocks_and_validation(self):
        cohort = three_generation_families(3, household=True)
        ks = theoretical_kinship_set(cohort, dominance=True, household=True)
        assert len(ks.phi) == 3
        ks.validate()

    def test_household_without_labels_rejected(self):
        cohort = three_generation_families(1)
        with pytest.raises(ValidationError):
            theoretical_kinship_set(cohort, household=True)

    def test_roundtrip_file(self, tmp_path):
        cohort = three_generation_families(2, household=True)
        ks = theoretical_kinship_set(cohort, dominance=True, household=True)
        path = tmp_path / "kin.tsv"
        write_kinship(ks, path)
        back = read_kinship(path)
        for label in ks.phi:
            np.testing.assert_allclose(back.phi[label], ks.phi[label],
                                       rtol=0, atol=1e-12)
            np.testing.assert_allclose(back.delta7[label], ks.delta7[label],
                                       rtol=0, atol=1e-12)
        assert back.provenance == ks.provenance


class TestGeneDropOracle:
    """The recursion must agree with direct Mendelian segregation."""

    PAIR_EXPECTATIONS = [
        # (pair, IBD sharing probabilities (P0, P1, P2))
        (("c1", "c2"), (0.25, 0.5, 0.25)),   # full sibs
        (("p1", "c1"), (0.0, 1.0, 0.0)),     # parent-child
        (("gf", "c1"), (0.5, 0.5, 0.0)),     # grandparent
        (("p2", "c1"), (0.5, 0.5, 0.0)),     # avuncular
        (("c1", "c3"), (0.75, 0.25, 0.0)),   # first cousins
    ]

    def test_ibd_sharing_matches_recursion(self):
        cohort = three_generation_families(1)
        ped = cohort.pedigrees[0]
        phi = theoretical_kinship(ped)
        d7 = dominance_delta7(ped)
        pairs = [(ped.position(a), ped.position(b))
                 for (a, b), _ in self.PAIR_EXPECTATIONS]
        probs = ibd_sharing(cohort, pairs, n_replicates=60000, seed=5)
        for row, ((a, b), expected) in zip(probs, self.PAIR_EXPECTATIONS):
            np.testing.assert_allclose(row, expected, atol=0.012)
            i, j = ped.position(a), ped.position(b)
            phi_mc = row[1] / 4 + row[2] / 2
            assert abs(phi_mc - phi[i, j]) < 0.012
            assert abs(row[2] - d7[i, j]) < 0.012
