"""Gene-dropping genotype simulation and variance-component trait simulation.

Genotypes: founder alleles are drawn from Hardy-Weinberg proportions at each
SNP independently (linkage equilibrium), then dropped down the pedigree with
each child allele chosen uniformly from the parent's two. Traits: one draw
per kinship block from the Gaussian (or multivariate-t) with mean from the
covariate design plus an optional causal SNP term, and covariance assembled
from the same additive/dominance/household/environment structure the null
model fits.

All randomness derives from one root seed through counter-keyed streams
(per SNP chunk, per kinship block), so outputs are bit-identical across
runs and thread counts, and independent of generation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ComputationError, ValidationError
from .genotypes import MISSING, GenotypeMatrix, SnpMeta
from .kinship import KinshipSet
from .pedigree import Cohort, Individual, Pedigree

GENE_DROP_CHUNK = 512  # fixed regardless of thread count; part of the seed contract

# spawn-key namespaces under the root seed
_NS_FREQS = 0
_NS_DROP = 1
_NS_TRAIT = 3


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass
class SimSpec:
    """Everything a simulation run needs besides the cohort itself.

    Variance components are scalars for univariate traits or T x T PSD
    matrices for multivariate ones. ``beta`` holds mean coefficients for
    the design [intercept | covariates], one column per trait.
    """

    n_snps: int = 0
    freqs: np.ndarray | None = None  # explicit per-SNP minor allele freqs
    freq_range: tuple[float, float] = (0.1, 0.5)
    beta: np.ndarray | None = None
    var_a: float | np.ndarray = 0.0
    var_d: float | np.ndarray = 0.0
    var_h: float | np.ndarray = 0.0
    var_e: float | np.ndarray = 1.0
    causal_snp: int | None = None
    causal_effect: float | np.ndarray = 0.0
    causal_model: str = "additive"
    dist: str = "gaussian"
    eta: float = 4.0
    trait_missing_rate: float = 0.0
    genotype_missing_rate: float = 0.0
    seed: int = 0

    def validated(self) -> "SimSpec":
        if self.dist not in ("gaussian", "t"):
            raise ValidationError(f"unknown trait distribution {self.dist!r}")
        if self.dist == "t" and not self.eta > 2:
            raise ValidationError("t-distribution needs eta > 2 for a finite covariance")
        for name in ("trait_missing_rate", "genotype_missing_rate"):
            r = getattr(self, name)
            if not 0.0 <= r < 1.0:
                raise ValidationError(f"{name} must be in [0, 1), got {r}")
        for name in ("var_a", "var_d", "var_h", "var_e"):
            v = getattr(self, name)
            if np.isscalar(v) and v < 0:
                raise ValidationError(f"{name} must be nonnegative, got {v}")
        return self

    def resolved_freqs(self) -> np.ndarray:
        if self.freqs is not None:
            p = np.asarray(self.freqs, dtype=float)
        else:
            lo, hi = self.freq_range
            p = _stream(self.seed, _NS_FREQS).uniform(lo, hi, self.n_snps)
        if p.size == 0:
            raise ValidationError("no SNPs requested for gene dropping")
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ValidationError("allele frequencies must lie strictly in (0, 1)")
        return p


def _parent_index(cohort: Cohort) -> list[tuple[int, int] | None]:
    """Per global index: (father, mother) global indices, or None for founders.
    Cohort order is parents-first within each pedigree, so a single forward
    pass can drop alleles."""
    out: list[tuple[int, int] | None] = []
    for ped in cohort.pedigrees:
        for m in ped.members:
            if m.is_founder:
                out.append(None)
            else:
                out.append((cohort.index[(ped.id, m.father)],
                            cohort.index[(ped.id, m.mother)]))
    return out


def _drop_alleles(parents, rng, founder_rows: np.ndarray) -> np.ndarray:
    """Drop founder allele rows (n, 2, m) down the pedigree in place."""
    al = founder_rows
    m = al.shape[2]
    cols = np.arange(m)
    for gi, par in enumerate(parents):
        if par is None:
            continue
        f, g = par
        pick = rng.integers(0, 2, size=(2, m))
        al[gi, 0] = al[f][pick[0], cols]
        al[gi, 1] = al[g][pick[1], cols]
    return al


def gene_drop(cohort: Cohort, spec: SimSpec) -> GenotypeMatrix:
    """Simulate genotypes for every cohort member.

    Returns minor-allele counts; allele frequency metadata is left for
    ``allele_frequencies`` so simulated data flows through the same path as
    read data. Deterministic given ``spec.seed``.
    """
    spec.validated()
    p = spec.resolved_freqs()
    n, m_total = cohort.n_individuals, p.size
    parents = _parent_index(cohort)
    calls = np.empty((m_total, n), dtype=np.int8)
    for c, start in enumerate(range(0, m_total, GENE_DROP_CHUNK)):
        m = min(GENE_DROP_CHUNK, m_total - start)
        rng = _stream(spec.seed, _NS_DROP, c)
        pk = p[start:start + m]
        al = np.empty((n, 2, m), dtype=np.int8)
        for gi, par in enumerate(parents):
            if par is None:
                al[gi] = rng.random((2, m)) < pk
        _drop_alleles(parents, rng, al)

        chunk = al.sum(axis=1, dtype=np.int8).T
        if spec.genotype_missing_rate > 0:
            miss = rng.random((m, n)) < spec.genotype_missing_rate
            chunk = np.where(miss, MISSING, chunk)
        calls[start:start + m] = chunk

    snps = [SnpMeta(id=f"snp{k + 1:06d}", chromosome="1", position=k + 1,
                    allele1="A", allele2="B") for k in range(m_total)]
    return GenotypeMatrix(snps=snps, sample_keys=list(cohort.keys), calls=calls)


def ibd_sharing(cohort: Cohort, pairs, n_replicates: int, seed: int = 0) -> np.ndarray:
    """Empirical allele-sharing distribution for chosen pairs.

    Drops uniquely labeled founder alleles ``n_replicates`` times and counts
    how often each pair shares 0, 1, or 2 alleles identical by descent.
    Returns (len(pairs), 3) probabilities. This is the Monte Carlo oracle
    for kinship and dominance coefficients: E[shared]/4 + P(share 2)/4
    estimates... concretely Phi = P1/4 + P2/2 and Delta7 = P2 for
    non-inbred pairs.
    """
    parents = _parent_index(cohort)
    n = cohort.n_individuals
    idx_pairs = []
    for a, b in pairs:
        ia = cohort.index[a] if isinstance(a, tuple) else int(a)
        ib = cohort.index[b] if isinstance(b, tuple) else int(b)
        idx_pairs.append((ia, ib))

    counts = np.zeros((len(idx_pairs), 3))
    done = 0
    chunk_idx = 0
    while done < n_replicates:
        m = min(4096, n_replicates - done)
        rng = _stream(seed, _NS_DROP, chunk_idx)
        chunk_idx += 1
        al = np.empty((n, 2, m), dtype=np.int32)
        founder_labels = np.arange(2 * n, dtype=np.int32).reshape(n, 2)
        for gi, par in enumerate(parents):
            if par is None:
                al[gi] = founder_labels[gi][:, None]
        _drop_alleles(parents, rng, al)
        for k, (ia, ib) in enumerate(idx_pairs):
            a1, a2 = al[ia, 0], al[ia, 1]
            b1, b2 = al[ib, 0], al[ib, 1]
            both = ((a1 == b1) & (a2 == b2)) | ((a1 == b2) & (a2 == b1))
            one = ~both & ((a1 == b1) | (a1 == b2) | (a2 == b1) | (a2 == b2))
            counts[k, 2] += both.sum()
            counts[k, 1] += one.sum()
            counts[k, 0] += m - both.sum() - one.sum()
        done += m
    return counts / n_replicates


def _gamma(value, n_traits: int, name: str) -> np.ndarray:
    """Variance component as a validated T x T PSD matrix."""
    g = np.atleast_2d(np.asarray(value, dtype=float))
    if g.shape == (1, 1) and n_traits > 1:
        if g[0, 0] == 0.0:  # an absent component broadcasts harmlessly
            return np.zeros((n_traits, n_traits))
        raise ValidationError(f"{name} must be a {n_traits} x {n_traits} matrix "
                              "for a multivariate trait")
    if g.shape != (n_traits, n_traits):
        raise ValidationError(f"{name} has shape {g.shape}, expected "
                              f"({n_traits}, {n_traits})")
    if not np.allclose(g, g.T, atol=1e-10):
        raise ValidationError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(g).min() < -1e-10:
        raise ValidationError(f"{name} is not positive semidefinite")
    return g


def simulate_trait(cohort: Cohort, kinship: KinshipSet, spec: SimSpec,
                   genotypes: GenotypeMatrix | None = None) -> np.ndarray:
    """Draw trait values for every cohort member; returns (n, T), NaN where
    missingness struck.

    Mean per individual is [1 | covariates] @ beta plus, when a causal SNP
    is named, its encoded genotype times ``causal_effect``. Covariance per
    kinship block is 2 Phi x Gamma_a + Delta7 x Gamma_d + H x Gamma_h +
    I x Gamma_e (Kronecker products, person-major row order). In t-mode the
    block draw is multivariate-t with ``eta`` degrees of freedom and that
    matrix as its scale.
    """
    spec.validated()
    T = cohort.n_traits
    gam = {name: _gamma(getattr(spec, name), T, name)
           for name in ("var_a", "var_d", "var_h", "var_e")}

    n = cohort.n_individuals
    mean = np.zeros((n, T))
    if spec.beta is not None:
        beta = np.asarray(spec.beta, dtype=float)
        if beta.ndim == 1:
            beta = np.repeat(beta[:, None], T, axis=1)
        design = np.column_stack([np.ones(n), cohort.covariate_matrix()])
        if beta.shape != (design.shape[1], T):
            raise ValidationError(
                f"beta has shape {beta.shape}, expected ({design.shape[1]}, {T}) "
                "for [intercept | covariates]")
        if not np.isfinite(design).all():
            raise ValidationError("cannot simulate a covariate mean term with "
                                  "missing covariate values")
        mean += design @ beta
    if spec.causal_snp is not None:
        if genotypes is None:
            raise ValidationError("causal_snp given but no genotypes supplied")
        from .score import encode_genotypes

        smap = genotypes.sample_map(cohort)
        vals = np.full(n, np.nan)
        has = smap >= 0
        vals[has] = genotypes.values_for(spec.causal_snp)[smap[has]]
        a = encode_genotypes(vals, spec.causal_model)
        effect = np.broadcast_to(np.asarray(spec.causal_effect, dtype=float), (T,))
        mean += a[:, None] * effect

    covered = np.zeros(n, dtype=bool)
    out = np.full((n, T), np.nan)
    for b, label in enumerate(kinship.labels):
        keys = kinship.block_keys[label]
        rows = []
        for key in keys:
            if key not in cohort.index:
                raise ValidationError(f"kinship block {label!r} names {key[1]!r} "
                                      f"which is not in the cohort")
            rows.append(cohort.index[key])
        rows = np.asarray(rows)
        covered[rows] = True
        ni = rows.size

        omega = np.kron(2.0 * kinship.phi[label], gam["var_a"])
        for name, table in (("var_d", kinship.delta7), ("var_h", kinship.household)):
            if np.any(gam[name]):
                if table is None or label not in table:
                    kind = "dominance" if name == "var_d" else "household"
                    raise ValidationError(f"{kind} variance requested but kinship "
                                          f"block {label!r} has no {kind} matrix")
                omega += np.kron(table[label], gam[name])
        omega += np.kron(np.eye(ni), gam["var_e"])
        try:
            chol = np.linalg.cholesky(omega)
        except np.linalg.LinAlgError:
            raise ComputationError(f"simulated covariance for block {label!r} "
                                   "is not positive definite") from None

        rng = _stream(spec.seed, _NS_TRAIT, b)
        z = rng.standard_normal(ni * T)
        y = chol @ z
        if spec.dist == "t":
            u = rng.chisquare(spec.eta)
            y *= np.sqrt(spec.eta / u)
        y = y.reshape(ni, T)
        if spec.trait_missing_rate > 0:
            y[rng.random((ni, T)) < spec.trait_missing_rate] = np.nan
        out[rows] = mean[rows] + y

    if not covered.all():
        missing = cohort.keys[int(np.flatnonzero(~covered)[0])]
        raise ValidationError(f"no kinship block covers individual {missing[1]!r} "
                              f"in pedigree {missing[0]!r}")
    return out


def assign_traits(cohort: Cohort, values: np.ndarray) -> None:
    """Write simulated trait values back onto cohort members."""
    values = np.atleast_2d(values)
    if values.shape == (1, cohort.n_individuals) and cohort.n_traits == 1:
        values = values.T
    if values.shape != (cohort.n_individuals, cohort.n_traits):
        raise ValidationError(f"trait array shape {values.shape} does not match "
                              f"cohort ({cohort.n_individuals}, {cohort.n_traits})")
    i = 0
    for ped in cohort.pedigrees:
        for m in ped.members:
            m.traits = values[i].copy()
            i += 1


# ---------------------------------------------------------------------------
# pedigree generators for simulation studies and tests
# ---------------------------------------------------------------------------

def _member(ind_id, father=None, mother=None, sex=None, household=None,
            n_traits=1, n_covars=0) -> Individual:
    return Individual(id=ind_id, father=father, mother=mother, sex=sex,
                      household=household,
                      traits=np.full(n_traits, np.nan),
                      covariates=np.full(n_covars, np.nan))


def nuclear_families(n_families: int, n_children: int = 2, *,
                     trait_names=("trait",), covariate_names=(),
                     household: bool = False, prefix: str = "fam") -> Cohort:
    """Cohort of identical nuclear families (two founders, k children)."""
    T, C = len(trait_names), len(covariate_names)
    peds = []
    for f in range(n_families):
        fid = f"{prefix}{f + 1}"
        house = fid if household else None
        members = [
            _member("father", sex="M", household=house, n_traits=T, n_covars=C),
            _member("mother", sex="F", household=house, n_traits=T, n_covars=C),
        ]
        for c in range(n_children):
            members.append(_member(f"child{c + 1}", father="father", mother="mother",
                                   sex="M" if c % 2 == 0 else "F", household=house,
                                   n_traits=T, n_covars=C))
        peds.append(Pedigree(fid, members))
    return Cohort(peds, list(trait_names), list(covariate_names))


def three_generation_families(n_families: int, *, trait_names=("trait",),
                              covariate_names=(), household: bool = False,
                              prefix: str = "kin") -> Cohort:
    """Nine-member three-generation pedigrees rich in relationship classes:
    full sibs, parent-child, grandparent, avuncular, and first cousins."""
    T, C = len(trait_names), len(covariate_names)
    peds = []
    for f in range(n_families):
        fid = f"{prefix}{f + 1}"

        def mk(ind_id, father=None, mother=None, sex=None, house=None):
            return _member(ind_id, father, mother, sex,
                           house if household else None, T, C)

        members = [
            mk("gf", sex="M", house=f"{fid}.g"),
            mk("gm", sex="F", house=f"{fid}.g"),
            mk("p1", "gf", "gm", "M", f"{fid}.a"),
            mk("p2", "gf", "gm", "F", f"{fid}.b"),
            mk("s1", sex="F", house=f"{fid}.a"),
            mk("s2", sex="M", house=f"{fid}.b"),
            mk("c1", "p1", "s1", "M", f"{fid}.a"),
            mk("c2", "p1", "s1", "F", f"{fid}.a"),
            mk("c3", "s2", "p2", "M", f"{fid}.b"),
        ]
        peds.append(Pedigree(fid, members))
    return Cohort(peds, list(trait_names), list(covariate_names))
