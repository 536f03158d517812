"""Variance-component null model: designs, ML fitting, score-test context.

The trait covariance for one pedigree block is a sum of Kronecker products
of fixed relationship matrices with per-component T x T coefficient
matrices,

    Omega_i = 2 Phi_i (x) Gamma_a  +  Delta7_i (x) Gamma_d
            + H_i (x) Gamma_h      +  I (x) Gamma_e,

with univariate traits the T = 1 case where every Gamma collapses to a
scalar variance. Rows for missing person-trait combinations are deleted
from the stacked person-major, trait-minor layout. The fit maximizes the
exact loglikelihood (natural constant included, so likelihood-ratio
differences are self-consistent), profiling mean coefficients out by
generalized least squares at every variance iterate and walking the
variance parameters with a quasi-Newton iteration whose first step is
Fisher scoring. Positive semidefiniteness is enforced by optimizing
Cholesky-like factors L_c with Gamma_c = L_c L_c'; a factor diagonal
shrinking to zero is reported as a boundary solution.

Heavy-tailed mode replaces the Gaussian block density with a multivariate
t of eta degrees of freedom and Omega_i as scale matrix; eta is profiled
over a fixed grid, and the classic per-block weights carry through to the
score engine.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaln

from .errors import ComputationError, ValidationError
from .kinship import KinshipSet
from .pedigree import Cohort

log = logging.getLogger(__name__)

COMPONENT_ORDER = ("additive", "dominance", "household", "environmental")
ETA_GRID = (2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
BOUNDARY_TOL = 1e-5


@dataclass
class MeanModel:
    """Fixed-effect specification: which traits, which covariates, and which
    covariate effects are constrained equal across traits."""

    traits: list[str] | None = None
    covariates: list[str] = field(default_factory=list)
    constraints: list[str] = field(default_factory=list)


@dataclass
class VarianceModel:
    """Active genetic/shared components; an environmental term is always on."""

    components: tuple[str, ...] = ("additive",)

    def active(self) -> tuple[str, ...]:
        seen = []
        for c in self.components:
            if c == "environmental":
                continue
            if c not in COMPONENT_ORDER:
                raise ValidationError(f"unknown variance component {c!r}")
            if c not in seen:
                seen.append(c)
        ordered = [c for c in COMPONENT_ORDER if c in seen]
        return tuple(ordered) + ("environmental",)


def _vech_pairs(n_traits: int) -> list[tuple[int, int]]:
    return [(s, t) for t in range(n_traits) for s in range(t, n_traits)]


def _lower_from_vech(v: np.ndarray, n_traits: int) -> np.ndarray:
    L = np.zeros((n_traits, n_traits))
    for k, (s, t) in enumerate(_vech_pairs(n_traits)):
        L[s, t] = v[k]
    return L


def _chol_jacobian(L: np.ndarray) -> np.ndarray:
    """d vech(L L') / d vech(L); for T = 1 this is the scalar 2 L."""
    pairs = _vech_pairs(L.shape[0])
    J = np.zeros((len(pairs), len(pairs)))
    for r, (s, t) in enumerate(pairs):
        for c, (a, b) in enumerate(pairs):
            v = 0.0
            if a == s:
                v += L[t, b]
            if a == t:
                v += L[s, b]
            J[r, c] = v
    return J


@dataclass
class DesignBlocks:
    """Per-block designs plus the constant covariance basis matrices.

    Omega_i(theta) = sum_k theta_k B[i][k] where theta stacks the lower
    triangles of the per-component coefficient matrices in
    ``theta_index`` order. ``rows_person`` holds the global cohort index
    behind each stacked row, ``rows_trait`` the trait component.
    """

    labels: list[str]
    trait_names: list[str]
    column_names: list[str]
    components: tuple[str, ...]
    theta_index: list[tuple[str, int, int]]
    y: list[np.ndarray]
    N: list[np.ndarray]
    B: list[list[np.ndarray]]
    rows_person: list[np.ndarray]
    rows_trait: list[np.ndarray]
    n_dropped: dict = field(default_factory=dict)

    @property
    def n_traits(self) -> int:
        return len(self.trait_names)

    @property
    def n_columns(self) -> int:
        return len(self.column_names)

    @property
    def n_rows(self) -> int:
        return sum(len(v) for v in self.y)

    def with_columns(self, extra_cols: list[np.ndarray], names: list[str]) -> "DesignBlocks":
        """New design with per-block columns appended (used for candidate-SNP
        refits); covariance structure is shared, not copied."""
        N_new = [np.column_stack([self.N[i], extra_cols[i]]) for i in range(len(self.N))]
        return DesignBlocks(self.labels, self.trait_names,
                            self.column_names + list(names), self.components,
                            self.theta_index, self.y, N_new, self.B,
                            self.rows_person, self.rows_trait, self.n_dropped)


def _component_matrix(kinship: KinshipSet, label: str, comp: str, n: int) -> np.ndarray:
    if comp == "additive":
        return 2.0 * kinship.phi[label]
    if comp == "environmental":
        return np.eye(n)
    table = kinship.delta7 if comp == "dominance" else kinship.household
    if table is None or label not in table:
        kind = "dominance" if comp == "dominance" else "household"
        raise ValidationError(f"{comp} component requested but kinship block "
                              f"{label!r} carries no {kind} matrix")
    return table[label]


def build_design(cohort: Cohort, kinship: KinshipSet,
                 mean_model: MeanModel | None = None,
                 variance_model: VarianceModel | None = None) -> DesignBlocks:
    """Assemble per-block trait vectors, design matrices, and covariance
    basis matrices for the analysis subset of the cohort.

    Individuals are dropped (with logged counts) when any declared
    covariate is missing, when no selected trait is observed, or when no
    kinship block covers them. Multivariate rows follow person-major,
    trait-minor order with missing components deleted.
    """
    mm = mean_model or MeanModel()
    vm = variance_model or VarianceModel()
    components = vm.active()

    trait_names = mm.traits if mm.traits is not None else list(cohort.trait_names)
    for name in trait_names:
        if name not in cohort.trait_names:
            raise ValidationError(f"trait {name!r} not found in the cohort")
    for name in mm.covariates:
        if name not in cohort.covariate_names:
            raise ValidationError(f"covariate {name!r} not found in the cohort")
    T = len(trait_names)
    t_idx = [cohort.trait_names.index(n) for n in trait_names]
    c_idx = [cohort.covariate_names.index(n) for n in mm.covariates]

    predictors = ["intercept"] + list(mm.covariates)
    for name in mm.constraints:
        if name not in predictors:
            raise ValidationError(f"constraint names unknown covariate {name!r}")
    shared = set(mm.constraints) if T > 1 else set()
    if mm.constraints and T == 1:
        log.debug("equality constraints are a no-op for a univariate trait")

    columns: list[tuple[str, int, int | None]] = []
    for j, pred in enumerate(predictors):
        if T == 1:
            columns.append((pred, j, None))
        elif pred in shared:
            columns.append((f"{pred}(shared)", j, None))
        else:
            for t, tn in enumerate(trait_names):
                columns.append((f"{pred}[{tn}]", j, t))
    col_names = [c[0] for c in columns]

    traits_all = cohort.trait_matrix()[:, t_idx]
    covars_all = cohort.covariate_matrix()[:, c_idx] if c_idx else \
        np.empty((cohort.n_individuals, 0))

    pairs = _vech_pairs(T)
    theta_index = [(comp, s, t) for comp in components for (s, t) in pairs]

    design = DesignBlocks([], trait_names, col_names, components, theta_index,
                          [], [], [], [], [])
    in_block = np.zeros(cohort.n_individuals, dtype=bool)
    n_cov_drop = n_trait_drop = 0

    for label in kinship.labels:
        keys = kinship.block_keys[label]
        persons = []
        for key in keys:
            if key not in cohort.index:
                raise ValidationError(f"kinship block {label!r} names {key[1]!r} "
                                      f"in pedigree {key[0]!r}, unknown to the cohort")
            persons.append(cohort.index[key])
        persons = np.asarray(persons)
        in_block[persons] = True

        cov_ok = np.isfinite(covars_all[persons]).all(axis=1)
        obs = np.isfinite(traits_all[persons])  # (n_block, T)
        any_trait = obs.any(axis=1)
        n_cov_drop += int((~cov_ok & any_trait).sum())
        n_trait_drop += int((~any_trait).sum())
        keep = cov_ok & any_trait
        if not keep.any():
            continue
        kept_local = np.flatnonzero(keep)
        kept_global = persons[kept_local]
        nk = kept_local.size

        # stacked rows: person-major, trait-minor, observed components only
        obs_k = obs[kept_local]
        row_person_local = np.repeat(np.arange(nk), T)[obs_k.ravel()]
        row_trait = np.tile(np.arange(T), nk)[obs_k.ravel()]
        full_rows = (np.repeat(np.arange(nk), T) * T + np.tile(np.arange(T), nk))[obs_k.ravel()]

        y_rows = traits_all[kept_global[row_person_local], row_trait]
        P = np.column_stack([np.ones(nk), covars_all[kept_global]])
        N = np.zeros((row_person_local.size, len(columns)))
        for ci, (_, j, tcol) in enumerate(columns):
            mask = np.ones(row_person_local.size, dtype=bool) if tcol is None \
                else row_trait == tcol
            N[mask, ci] = P[row_person_local[mask], j]

        basis = []
        for comp in components:
            K = _component_matrix(kinship, label, comp, len(keys))
            K = K[np.ix_(kept_local, kept_local)]
            if T == 1:
                basis.append(np.ascontiguousarray(K))
                continue
            for (s, t) in pairs:
                E = np.zeros((T, T))
                E[s, t] = E[t, s] = 1.0
                basis.append(np.kron(K, E)[np.ix_(full_rows, full_rows)])

        design.labels.append(label)
        design.y.append(y_rows)
        design.N.append(N)
        design.B.append(basis)
        design.rows_person.append(kept_global[row_person_local])
        design.rows_trait.append(row_trait)

    n_unblocked = int((~in_block).sum())
    design.n_dropped = {"missing_covariates": n_cov_drop,
                        "no_observed_trait": n_trait_drop,
                        "outside_kinship": n_unblocked}
    if not design.labels:
        raise ValidationError("no analyzable individuals remain after "
                              "covariate/trait/kinship filtering")
    if n_cov_drop or n_trait_drop or n_unblocked:
        log.info("analysis set: %d rows in %d blocks (dropped: %d missing "
                 "covariates, %d without observed traits, %d outside kinship blocks)",
                 design.n_rows, len(design.labels), n_cov_drop, n_trait_drop,
                 n_unblocked)

    gram = sum(N.T @ N for N in design.N)
    eig, vec = np.linalg.eigh(gram)
    if eig[0] <= 1e-10 * max(eig[-1], 1.0):
        worst = int(np.argmax(np.abs(vec[:, 0])))
        raise ValidationError(f"design is rank deficient; column "
                              f"{col_names[worst]!r} is collinear with the rest")
    return design


# ---------------------------------------------------------------------------
# likelihood machinery
# ---------------------------------------------------------------------------

def t_weights(eta: float, m, s):
    """Per-block weights in heavy-tailed mode: (eta+m)/(eta+s) scales score
    contributions, (eta+m)/(eta+m+2) scales information contributions. Both
    tend to 1 as eta grows, recovering the Gaussian test."""
    m = np.asarray(m, dtype=float)
    s = np.asarray(s, dtype=float)
    return (eta + m) / (eta + s), (eta + m) / (eta + m + 2.0)


def _theta_of(lam: np.ndarray, components, T: int):
    nv = len(_vech_pairs(T))
    gammas, theta = {}, []
    for k, comp in enumerate(components):
        L = _lower_from_vech(lam[k * nv:(k + 1) * nv], T)
        G = L @ L.T
        gammas[comp] = G
        theta.extend(G[s, t] for (s, t) in _vech_pairs(T))
    return np.asarray(theta), gammas


def _lam_jacobian(lam: np.ndarray, components, T: int) -> np.ndarray:
    nv = len(_vech_pairs(T))
    blocks = []
    for k in range(len(components)):
        L = _lower_from_vech(lam[k * nv:(k + 1) * nv], T)
        blocks.append(_chol_jacobian(L))
    out = np.zeros((len(components) * nv, len(components) * nv))
    for k, b in enumerate(blocks):
        out[k * nv:(k + 1) * nv, k * nv:(k + 1) * nv] = b
    return out


def _evaluate(design: DesignBlocks, theta: np.ndarray, eta: float | None,
              need_grad: bool, beta: np.ndarray | None = None):
    """Loglikelihood (and optionally gradient/Fisher information in theta
    coordinates) at one variance iterate, with the mean coefficients
    profiled out unless ``beta`` is supplied. Returns None when some block
    covariance is not positive definite."""
    nb = len(design.labels)
    chos, logdets, OiN, Oiy = [], [], [], []
    for i in range(nb):
        omega = np.einsum("k,kij->ij", theta, np.asarray(design.B[i]))
        try:
            c = cho_factor(omega, lower=True)
        except LinAlgError:
            return None
        d = np.diag(c[0])
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            return None
        chos.append(c)
        logdets.append(2.0 * np.log(d).sum())
        OiN.append(cho_solve(c, design.N[i]))
        Oiy.append(cho_solve(c, design.y[i]))

    m = np.array([len(v) for v in design.y], dtype=float)
    NtOiN = [design.N[i].T @ OiN[i] for i in range(nb)]
    NtOiy = [design.N[i].T @ Oiy[i] for i in range(nb)]

    def s_of(b):
        return np.array([(design.y[i] - design.N[i] @ b) @
                         (Oiy[i] - OiN[i] @ b) for i in range(nb)])

    if beta is not None:
        b = np.asarray(beta, dtype=float)
        s = s_of(b)
        w = np.ones(nb) if eta is None else (eta + m) / (eta + s)
    elif eta is None:
        pooled = sum(NtOiN)
        b = np.linalg.solve(pooled, sum(NtOiy))
        s = s_of(b)
        w = np.ones(nb)
    else:
        # heavy-tailed mean profile: iteratively reweighted GLS, with the
        # score weight per block updated from the current residual form
        b = np.linalg.solve(sum(NtOiN), sum(NtOiy))
        for _ in range(100):
            s = s_of(b)
            w = (eta + m) / (eta + s)
            b_new = np.linalg.solve(
                sum(w[i] * NtOiN[i] for i in range(nb)),
                sum(w[i] * NtOiy[i] for i in range(nb)))
            if np.max(np.abs(b_new - b)) < 1e-12 * (1.0 + np.max(np.abs(b))):
                b = b_new
                break
            b = b_new
        s = s_of(b)
        w = (eta + m) / (eta + s)

    if eta is None:
        loglik = float(np.sum(-0.5 * np.asarray(logdets) - 0.5 * s
                              - 0.5 * m * np.log(2.0 * np.pi)))
        v = np.ones(nb)
    else:
        loglik = float(np.sum(gammaln((eta + m) / 2.0) - gammaln(eta / 2.0)
                              - 0.5 * m * np.log(eta * np.pi)
                              - 0.5 * np.asarray(logdets)
                              - 0.5 * (eta + m) * np.log1p(s / eta)))
        v = (eta + m) / (eta + m + 2.0)
    if not np.isfinite(loglik):
        return None

    st = SimpleNamespace(loglik=loglik, beta=b, s=s, m=m, w=w, v=v, chos=chos,
                         OiN=OiN, NtOiN=NtOiN, resid=None, q=None, U=None,
                         grad=None, fisher=None)
    st.resid = [design.y[i] - design.N[i] @ b for i in range(nb)]
    st.q = [Oiy[i] - OiN[i] @ b for i in range(nb)]
    if not need_grad:
        return st

    nt = len(theta)
    grad = np.zeros(nt)
    fisher = np.zeros((nt, nt))
    st.U = []
    for i in range(nb):
        U = cho_solve(chos[i], np.eye(int(m[i])))
        st.U.append(U)
        q = st.q[i]
        UB = [U @ design.B[i][k] for k in range(nt)]
        for k in range(nt):
            grad[k] += -0.5 * np.trace(UB[k]) + 0.5 * st.w[i] * (q @ design.B[i][k] @ q)
            for l in range(k, nt):
                fisher[k, l] += 0.5 * st.v[i] * np.einsum("ij,ji->", UB[k], UB[l])
    fisher = fisher + np.triu(fisher, 1).T
    st.grad, st.fisher = grad, fisher
    return st


def loglikelihood(design: DesignBlocks, gammas: dict, beta=None, *,
                  t_eta: float | None = None) -> float:
    """Exact model loglikelihood at explicit variance matrices (scalars fine
    for T = 1), profiling the mean coefficients unless ``beta`` is given."""
    theta = []
    T = design.n_traits
    for comp in design.components:
        if comp not in gammas:
            raise ValidationError(f"missing variance matrix for component {comp!r}")
        G = np.atleast_2d(np.asarray(gammas[comp], dtype=float))
        if G.shape != (T, T):
            raise ValidationError(f"variance matrix for {comp!r} has shape "
                                  f"{G.shape}, expected ({T}, {T})")
        theta.extend(G[s, t] for (s, t) in _vech_pairs(T))
    st = _evaluate(design, np.asarray(theta), t_eta, need_grad=False, beta=beta)
    if st is None:
        raise ComputationError("covariance not positive definite at the "
                               "requested variance parameters")
    return st.loglik


@dataclass
class NullFit:
    """Fitted null model plus everything the score engine reuses."""

    design: DesignBlocks
    beta: np.ndarray
    beta_se: np.ndarray
    gamma: dict[str, np.ndarray]
    gamma_se: dict[str, np.ndarray]
    theta_cov: np.ndarray
    loglik: float
    n_iter: int
    converged: bool
    boundary: list[str]
    identifiable: bool
    t_eta: float | None
    lam: np.ndarray
    s: np.ndarray
    m: np.ndarray
    U: list[np.ndarray]
    OiN: list[np.ndarray]
    resid: list[np.ndarray]
    q: list[np.ndarray]
    pooled_v: np.ndarray
    pooled_v_inv: np.ndarray
    h2: np.ndarray | None = None
    h2_se: np.ndarray | None = None

    @property
    def variance_names(self):
        return [f"{comp}[{s},{t}]" if self.design.n_traits > 1 else comp
                for (comp, s, t) in self.design.theta_index]


def _initial_lam(design: DesignBlocks) -> np.ndarray:
    y_all = np.concatenate(design.y)
    N_all = np.vstack(design.N)
    bhat, *_ = np.linalg.lstsq(N_all, y_all, rcond=None)
    var0 = float(np.var(y_all - N_all @ bhat))
    if var0 <= 0:
        raise ComputationError("trait has zero residual variance; nothing to fit")
    T = design.n_traits
    nv = len(_vech_pairs(T))
    share = np.sqrt(var0 / len(design.components))
    lam = np.zeros(len(design.components) * nv)
    for k in range(len(design.components)):
        for j, (si, ti) in enumerate(_vech_pairs(T)):
            if si == ti:
                lam[k * nv + j] = share
    return lam


def fit_design(design: DesignBlocks, *, t_eta: float | None = None,
               lam0: np.ndarray | None = None, tol: float = 1e-8,
               max_iter: int = 200) -> NullFit:
    """Maximize the loglikelihood over variance factors (mean profiled).

    Quasi-Newton in the factor parameters: the first step preconditions
    with the expected information (Fisher scoring), later steps maintain a
    BFGS approximation, with backtracking line search and a Fisher reset
    whenever the approximation stops producing ascent. Non-positive-definite
    trial covariances are treated as infeasible steps.
    """
    components, T = design.components, design.n_traits
    lam = _initial_lam(design) if lam0 is None else np.asarray(lam0, dtype=float).copy()

    theta, _ = _theta_of(lam, components, T)
    st = _evaluate(design, theta, t_eta, need_grad=True)
    if st is None:
        raise ComputationError("initial variance parameters give a "
                               "non-positive-definite covariance")

    n_lam = lam.size
    H = None  # inverse-Hessian approx for the minimization of -loglik
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = _lam_jacobian(lam, components, T)
        g_lam = J.T @ st.grad
        F_lam = J.T @ st.fisher @ J + 1e-10 * np.eye(n_lam)
        if np.max(np.abs(g_lam)) < 1e-9 * (1.0 + abs(st.loglik)):
            converged = True
            break

        def fisher_dir():
            try:
                return np.linalg.solve(F_lam, g_lam)
            except LinAlgError:
                return g_lam / max(np.max(np.abs(F_lam)), 1.0)

        d = fisher_dir() if H is None else H @ g_lam
        if g_lam @ d <= 0:  # approximation lost ascent; rebuild from Fisher
            H = None
            d = fisher_dir()

        gd = g_lam @ d
        alpha, st_new = 1.0, None
        for _ in range(40):
            trial_theta, _ = _theta_of(lam + alpha * d, components, T)
            cand = _evaluate(design, trial_theta, t_eta, need_grad=False)
            if cand is not None and cand.loglik >= st.loglik + 1e-4 * alpha * gd:
                st_new = cand
                break
            alpha *= 0.5
        if st_new is None:
            break  # no ascent along either direction; accept current iterate

        lam_new = lam + alpha * d
        st_full = _evaluate(design, _theta_of(lam_new, components, T)[0],
                            t_eta, need_grad=True)
        if st_full is None:
            break
        J_new = _lam_jacobian(lam_new, components, T)
        g_new = J_new.T @ st_full.grad

        sv = lam_new - lam
        yv = g_lam - g_new  # gradient change of -loglik
        sy = sv @ yv
        if sy > 1e-12:
            if H is None:
                H = sy / (yv @ yv) * np.eye(n_lam)
            rho = 1.0 / sy
            V = np.eye(n_lam) - rho * np.outer(sv, yv)
            H = V @ H @ V.T + rho * np.outer(sv, sv)

        done = abs(st_full.loglik - st.loglik) < tol * (abs(st.loglik) + 1.0)
        lam, st = lam_new, st_full
        if done:
            converged = True
            break
    if not converged:
        log.warning("variance fit stopped after %d iterations without meeting "
                    "the relative-change tolerance; returning best iterate", it)

    theta, gammas = _theta_of(lam, components, T)
    nv = len(_vech_pairs(T))
    boundary = []
    for k, comp in enumerate(components):
        L = _lower_from_vech(lam[k * nv:(k + 1) * nv], T)
        if np.min(np.abs(np.diag(L))) < BOUNDARY_TOL:
            boundary.append(comp)

    cond = np.linalg.cond(st.fisher)
    identifiable = bool(np.isfinite(cond) and cond < 1e10)
    theta_cov = np.linalg.pinv(st.fisher)
    theta_se = np.sqrt(np.clip(np.diag(theta_cov), 0.0, None))
    gamma_se = {}
    for k, comp in enumerate(components):
        se = np.zeros((T, T))
        for j, (s_, t_) in enumerate(_vech_pairs(T)):
            se[s_, t_] = se[t_, s_] = theta_se[k * nv + j]
        gamma_se[comp] = se

    nb = len(design.labels)
    pooled_v = sum(st.v[i] * st.NtOiN[i] for i in range(nb))
    pooled_v_inv = np.linalg.inv(pooled_v)
    beta_se = np.sqrt(np.diag(pooled_v_inv))

    fit = NullFit(design=design, beta=st.beta, beta_se=beta_se, gamma=gammas,
                  gamma_se=gamma_se, theta_cov=theta_cov, loglik=st.loglik,
                  n_iter=it, converged=converged, boundary=boundary,
                  identifiable=identifiable, t_eta=t_eta, lam=lam,
                  s=st.s, m=st.m, U=st.U, OiN=st.OiN, resid=st.resid, q=st.q,
                  pooled_v=pooled_v, pooled_v_inv=pooled_v_inv)
    if "additive" in components:
        fit.h2, fit.h2_se = heritability(fit)
    return fit


def fit_null(cohort: Cohort, kinship: KinshipSet,
             mean_model: MeanModel | None = None,
             variance_model: VarianceModel | None = None, *,
             t_dist: bool = False, eta_grid=ETA_GRID,
             tol: float = 1e-8, max_iter: int = 200) -> NullFit:
    """Build the design and fit the null model; in heavy-tailed mode the
    degrees of freedom are profiled over ``eta_grid`` and the best fit wins."""
    design = build_design(cohort, kinship, mean_model, variance_model)
    if not t_dist:
        return fit_design(design, tol=tol, max_iter=max_iter)
    best = None
    for eta in eta_grid:
        fit = fit_design(design, t_eta=float(eta), tol=tol, max_iter=max_iter)
        if best is None or fit.loglik > best.loglik:
            best = fit
    log.info("profiled t degrees of freedom over %s; selected eta = %g",
             tuple(eta_grid), best.t_eta)
    return best


def heritability(fit: NullFit) -> tuple[np.ndarray, np.ndarray]:
    """Per-trait narrow-sense heritability with delta-method standard error.

    h2_t = Gamma_additive[t,t] / sum over components of Gamma_c[t,t]; under
    the doubled-kinship parameterization the additive relationship matrix
    has unit diagonal for non-inbred samples, so this ratio is the additive
    fraction of total trait variance.
    """
    if "additive" not in fit.design.components:
        raise ValidationError("heritability needs an active additive component")
    T = fit.design.n_traits
    comps = fit.design.components
    idx = {ct: k for k, ct in enumerate(fit.design.theta_index)}
    h2 = np.zeros(T)
    se = np.zeros(T)
    for t in range(T):
        va = fit.gamma["additive"][t, t]
        tot = sum(fit.gamma[c][t, t] for c in comps)
        h2[t] = va / tot
        g = np.zeros(len(fit.design.theta_index))
        for c in comps:
            k = idx[(c, t, t)]
            g[k] = (tot - va) / tot ** 2 if c == "additive" else -va / tot ** 2
        se[t] = np.sqrt(max(g @ fit.theta_cov @ g, 0.0))
    return h2, se


@dataclass
class ScoreContext:
    """Precomputed per-block pieces the per-SNP score test consumes.

    ``U`` is the inverse block covariance scaled by the information weight,
    ``UN`` the solved design likewise scaled, ``q`` the solved residual
    scaled by the score weight, and ``pooled_inv`` the inverse of the
    information-weighted pooled design Gram matrix. In Gaussian mode all
    weights are 1 and these are exactly the stored inverse-covariance
    blocks.
    """

    labels: list[str]
    n_traits: int
    rows_person: list[np.ndarray]
    rows_trait: list[np.ndarray]
    U: list[np.ndarray]
    UN: list[np.ndarray]
    q: list[np.ndarray]
    pooled_inv: np.ndarray


def precompute_score_context(fit: NullFit) -> ScoreContext:
    if fit.t_eta is None:
        w = v = np.ones(len(fit.design.labels))
    else:
        w, v = t_weights(fit.t_eta, fit.m, fit.s)
    U = [v[i] * fit.U[i] for i in range(len(fit.U))]
    UN = [v[i] * fit.OiN[i] for i in range(len(fit.OiN))]
    q = [w[i] * fit.q[i] for i in range(len(fit.q))]
    return ScoreContext(labels=list(fit.design.labels),
                        n_traits=fit.design.n_traits,
                        rows_person=fit.design.rows_person,
                        rows_trait=fit.design.rows_trait,
                        U=U, UN=UN, q=q, pooled_inv=fit.pooled_v_inv)
