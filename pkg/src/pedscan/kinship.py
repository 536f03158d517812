"""Theoretical relationship matrices from explicit pedigree structure.

Computes the kinship matrix Phi by the classic recursion over a
parents-first ordering, the dominance coefficient matrix Delta7 for
non-inbred pedigrees, and the 0/1 household-sharing matrix. A KinshipSet
bundles these per-pedigree blocks (or one all-pairs block for estimated
kinships) together with their provenance, and round-trips through a plain
text export format.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FileFormatError, InputError, ValidationError
from .pedigree import Cohort, Pedigree


@dataclass
class KinshipSet:
    """Relationship matrices, block-per-pedigree or one all-pairs block.

    ``blocks`` maps block label -> list of (pedigree_id, individual_id)
    keys, in the row order of the matrices. ``phi`` is required; ``delta7``
    and ``household`` are optional per-block overlays.
    """

    scope: str  # "blocks" or "all-pairs"
    provenance: str  # "theoretical", "grm", or "mom"
    labels: list[str] = field(default_factory=list)
    block_keys: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    phi: dict[str, np.ndarray] = field(default_factory=dict)
    delta7: dict[str, np.ndarray] | None = None
    household: dict[str, np.ndarray] | None = None

    def add_block(self, label: str, keys, phi, delta7=None, household=None):
        self.labels.append(label)
        self.block_keys[label] = list(keys)
        self.phi[label] = phi
        if delta7 is not None:
            if self.delta7 is None:
                self.delta7 = {}
            self.delta7[label] = delta7
        if household is not None:
            if self.household is None:
                self.household = {}
            self.household[label] = household

    def validate(self):
        for label in self.labels:
            p = self.phi[label]
            n = len(self.block_keys[label])
            if p.shape != (n, n):
                raise ValidationError(f"kinship block {label!r} has shape {p.shape}, "
                                      f"expected ({n}, {n})")
            if not np.allclose(p, p.T, atol=1e-12):
                raise ValidationError(f"kinship block {label!r} is not symmetric")
            if self.provenance == "theoretical":
                d = np.diag(p)
                if np.any(d < 0.5 - 1e-12) or np.any(d > 1.0 + 1e-12):
                    raise ValidationError(f"theoretical kinship diagonal outside [0.5, 1] "
                                          f"in block {label!r}")
                if self.delta7 is not None and label in self.delta7:
                    d7 = self.delta7[label]
                    if np.any(d7 < -1e-12) or np.any(d7 > 1 + 1e-12):
                        raise ValidationError(f"delta7 outside [0, 1] in block {label!r}")
            if self.household is not None and label in self.household:
                h = self.household[label]
                bad = ~np.isin(h, (0.0, 1.0))
                if bad.any() or np.any(np.diag(h) != 1.0):
                    raise ValidationError(f"household block {label!r} is not a 0/1 matrix "
                                          "with unit diagonal")
        return self


def theoretical_kinship(ped: Pedigree) -> np.ndarray:
    """Kinship coefficients Phi for one pedigree.

    Members must be parents-first (guaranteed by parsing). Founders are
    assumed unrelated and non-inbred: Phi_ii = 1/2, founder-founder
    off-diagonal 0. For a non-founder i with parents f, m:

        Phi_ii = 1/2 (1 + Phi_fm)
        Phi_ij = 1/2 (Phi_fj + Phi_mj)   for every earlier member j
    """
    n = len(ped)
    phi = np.zeros((n, n))
    pos = {m.id: i for i, m in enumerate(ped.members)}
    for i, m in enumerate(ped.members):
        if m.is_founder:
            phi[i, i] = 0.5
            continue
        f, g = pos[m.father], pos[m.mother]
        phi[i, i] = 0.5 * (1.0 + phi[f, g])
        for j in range(i):
            phi[i, j] = phi[j, i] = 0.5 * (phi[f, j] + phi[g, j])
    return phi


def dominance_delta7(ped: Pedigree, phi: np.ndarray | None = None) -> np.ndarray:
    """Dominance identity coefficients for a non-inbred pedigree.

    For individuals i, j with parents (f_i, m_i), (f_j, m_j):

        Delta7(i, j) = Phi(f_i, f_j) Phi(m_i, m_j) + Phi(f_i, m_j) Phi(m_i, f_j)

    and Delta7(i, i) = 1. Pairs involving a founder get 0 off-diagonal.
    Raises ValidationError when any member is inbred (self-kinship > 1/2);
    generalized identity coefficients for inbred pairs are out of scope.
    """
    if phi is None:
        phi = theoretical_kinship(ped)
    n = len(ped)
    pos = {m.id: i for i, m in enumerate(ped.members)}
    inbred = np.flatnonzero(np.abs(np.diag(phi) - 0.5) > 1e-12)
    if inbred.size:
        raise ValidationError(
            f"dominance coefficients need a non-inbred pedigree, but individual "
            f"{ped.members[inbred[0]].id!r} in pedigree {ped.id!r} is inbred")
    d7 = np.eye(n)
    parents = [(None, None) if m.is_founder else (pos[m.father], pos[m.mother])
               for m in ped.members]
    for i in range(n):
        fi, mi = parents[i]
        if fi is None:
            continue
        for j in range(i):
            fj, mj = parents[j]
            if fj is None:
                continue
            d7[i, j] = d7[j, i] = phi[fi, fj] * phi[mi, mj] + phi[fi, mj] * phi[mi, fj]
    return d7


def household_matrix(ped: Pedigree) -> np.ndarray | None:
    """0/1 same-household indicator with unit diagonal, or None if the
    pedigree carries no household labels."""
    groups = ped.households()
    if not groups:
        return None
    n = len(ped)
    h = np.eye(n)
    for members in groups.values():
        idx = np.asarray(members)
        h[np.ix_(idx, idx)] = 1.0
    return h


def theoretical_kinship_set(cohort: Cohort, *, dominance: bool = False,
                            household: bool = False) -> KinshipSet:
    """Per-pedigree Phi blocks (plus optional Delta7 / household overlays)."""
    ks = KinshipSet(scope="blocks", provenance="theoretical")
    any_household = False
    for ped in cohort.pedigrees:
        phi = theoretical_kinship(ped)
        d7 = dominance_delta7(ped, phi) if dominance else None
        h = household_matrix(ped) if household else None
        if h is not None:
            any_household = True
        elif household:
            h = np.eye(len(ped))
        keys = [(ped.id, m.id) for m in ped.members]
        ks.add_block(ped.id, keys, phi, delta7=d7, household=h)
    if household and not any_household:
        raise ValidationError("household component requested but no individual "
                              "carries a household label")
    return ks.validate()


# ---------------------------------------------------------------------------
# text export / import
# ---------------------------------------------------------------------------

def write_kinship(ks: KinshipSet, path) -> None:
    """Export a KinshipSet as text: per block, the (pedigree, individual)
    header pairs followed by lower-triangular matrix rows."""
    parts = ["phi"]
    if ks.delta7:
        parts.append("delta7")
    if ks.household:
        parts.append("household")
    with open(path, "w") as fh:
        fh.write("#pedscan kinship v1\n")
        fh.write(f"#provenance {ks.provenance}\n")
        fh.write(f"#scope {ks.scope}\n")
        fh.write(f"#matrices {','.join(parts)}\n")
        for label in ks.labels:
            keys = ks.block_keys[label]
            fh.write(f"BLOCK {label} {len(keys)}\n")
            for ped_id, ind_id in keys:
                fh.write(f"{ped_id} {ind_id}\n")
            for name in parts:
                mat = getattr(ks, name)[label]
                fh.write(name.upper() + "\n")
                for i in range(len(keys)):
                    fh.write(" ".join(repr(float(v)) for v in mat[i, :i + 1]) + "\n")


def read_kinship(path) -> KinshipSet:
    """Inverse of write_kinship; validates shapes and symmetry."""
    try:
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise InputError(f"cannot read kinship file {path}: {exc}") from exc

    meta = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        if " " in body:
            k, v = body.split(" ", 1)
            meta[k] = v.strip()
        i += 1
    if meta.get("pedscan", "").split() and "kinship" not in lines[0]:
        raise FileFormatError("not a pedscan kinship file", path=path, line=1)
    parts = meta.get("matrices", "phi").split(",")
    ks = KinshipSet(scope=meta.get("scope", "blocks"),
                    provenance=meta.get("provenance", "theoretical"))

    def read_lower(start: int, n: int) -> tuple[np.ndarray, int]:
        mat = np.zeros((n, n))
        for r in range(n):
            row = lines[start + r].split()
            if len(row) != r + 1:
                raise FileFormatError(f"expected {r + 1} matrix entries, got {len(row)}",
                                      path=path, line=start + r + 1)
            vals = [float(v) for v in row]
            mat[r, :r + 1] = vals
            mat[:r + 1, r] = vals
        return mat, start + n

    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        if head[0] != "BLOCK" or len(head) != 3:
            raise FileFormatError("expected 'BLOCK <label> <n>'", path=path, line=i + 1)
        label, n = head[1], int(head[2])
        i += 1
        keys = []
        for _ in range(n):
            ped_id, ind_id = lines[i].split()
            keys.append((ped_id, ind_id))
            i += 1
        mats = {}
        for name in parts:
            if lines[i].strip().lower() != name:
                raise FileFormatError(f"expected section {name.upper()}", path=path, line=i + 1)
            i += 1
            mats[name], i = read_lower(i, n)
        ks.add_block(label, keys, mats["phi"], delta7=mats.get("delta7"),
                     household=mats.get("household"))
    return ks.validate()
