"""Pedigree, phenotype, and covariate parsing into an immutable Cohort.

The cohort is the relational backbone of every analysis: pedigrees hold
individuals in parents-before-children order, and a dense global index maps
(pedigree id, individual id) pairs onto 0..n-1 so genotype columns, kinship
blocks, and design rows can all be aligned by integer position.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import FileFormatError, InputError, ValidationError

log = logging.getLogger(__name__)

MISSING_PARENT_TOKENS = {"0", "", "NA", "na", "."}
DEFAULT_MISSING_TOKEN = "NA"


@dataclass
class Individual:
    """One pedigree member with optional parents, sex, and phenotype rows.

    ``traits`` and ``covariates`` are float arrays aligned with the cohort's
    ``trait_names`` / ``covariate_names``; missing values are NaN.
    """

    id: str
    father: str | None = None
    mother: str | None = None
    sex: str | None = None  # "M", "F", or None for unknown
    household: str | None = None
    traits: np.ndarray = field(default_factory=lambda: np.empty(0))
    covariates: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def is_founder(self) -> bool:
        return self.father is None


@dataclass
class Pedigree:
    """Members of one pedigree in topological (parents first) order."""

    id: str
    members: list[Individual]

    def __post_init__(self):
        self._pos = {m.id: i for i, m in enumerate(self.members)}
        if len(self._pos) != len(self.members):
            dup = [m.id for m in self.members if [x.id for x in self.members].count(m.id) > 1]
            raise ValidationError(f"duplicate individual id {dup[0]!r} in pedigree {self.id!r}")

    def __len__(self) -> int:
        return len(self.members)

    def position(self, individual_id: str) -> int:
        return self._pos[individual_id]

    def households(self) -> dict[str, list[int]]:
        """Member positions grouped by non-empty household label."""
        groups: dict[str, list[int]] = {}
        for i, m in enumerate(self.members):
            if m.household:
                groups.setdefault(m.household, []).append(i)
        return groups


class Cohort:
    """All pedigrees plus the dense global individual index.

    Immutable once constructed; shared concurrent reads are safe.
    """

    def __init__(self, pedigrees: list[Pedigree], trait_names: list[str],
                 covariate_names: list[str]):
        if not trait_names:
            raise ValidationError("cohort needs at least one trait column")
        self.pedigrees = pedigrees
        self.trait_names = list(trait_names)
        self.covariate_names = list(covariate_names)
        self.index: dict[tuple[str, str], int] = {}
        self.keys: list[tuple[str, str]] = []
        for ped in pedigrees:
            for m in ped.members:
                key = (ped.id, m.id)
                if key in self.index:
                    raise ValidationError(f"duplicate individual {m.id!r} in pedigree {ped.id!r}")
                self.index[key] = len(self.keys)
                self.keys.append(key)

    @property
    def n_individuals(self) -> int:
        return len(self.keys)

    @property
    def n_traits(self) -> int:
        return len(self.trait_names)

    def individual(self, global_index: int) -> Individual:
        ped_id, ind_id = self.keys[global_index]
        ped = next(p for p in self.pedigrees if p.id == ped_id)
        return ped.members[ped.position(ind_id)]

    def trait_matrix(self) -> np.ndarray:
        """(n_individuals, n_traits) float matrix, NaN for missing."""
        out = np.full((self.n_individuals, self.n_traits), np.nan)
        i = 0
        for ped in self.pedigrees:
            for m in ped.members:
                out[i] = m.traits
                i += 1
        return out

    def covariate_matrix(self) -> np.ndarray:
        out = np.full((self.n_individuals, len(self.covariate_names)), np.nan)
        i = 0
        for ped in self.pedigrees:
            for m in ped.members:
                out[i] = m.covariates
                i += 1
        return out

    def founder_flags(self) -> np.ndarray:
        flags = np.zeros(self.n_individuals, dtype=bool)
        i = 0
        for ped in self.pedigrees:
            for m in ped.members:
                flags[i] = m.is_founder
                i += 1
        return flags


def topological_sort(ped: Pedigree) -> Pedigree:
    """Reorder members so every parent precedes its children.

    Stable: members with no ordering constraint keep their input order.
    Raises ValidationError on a cycle.
    """
    n = len(ped.members)
    pos = {m.id: i for i, m in enumerate(ped.members)}
    children: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for i, m in enumerate(ped.members):
        for parent in (m.father, m.mother):
            if parent is not None:
                children[pos[parent]].append(i)
                indeg[i] += 1
    # Kahn's algorithm with an index-ordered frontier for stability.
    import heapq

    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for c in children[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) < n:
        stuck = next(ped.members[i].id for i in range(n) if indeg[i] > 0)
        raise ValidationError(
            f"pedigree {ped.id!r} contains a cycle involving individual {stuck!r}")
    return Pedigree(ped.id, [ped.members[i] for i in order])


def _validate_pedigree(ped: Pedigree) -> None:
    ids = {m.id for m in ped.members}
    for m in ped.members:
        if (m.father is None) != (m.mother is None):
            raise ValidationError(
                f"individual {m.id!r} in pedigree {ped.id!r} has exactly one known parent; "
                "both or neither are required")
        for parent, role, bad_sex in ((m.father, "father", "F"), (m.mother, "mother", "M")):
            if parent is None:
                continue
            if parent not in ids:
                raise ValidationError(
                    f"{role} {parent!r} of individual {m.id!r} not found in pedigree {ped.id!r}")
            sex = ped.members[ped.position(parent)].sex
            if sex == bad_sex:
                raise ValidationError(
                    f"{role} {parent!r} of individual {m.id!r} has sex {sex!r}")
            if sex is None:
                log.warning("pedigree %s: %s %s of %s has unknown sex",
                            ped.id, role, parent, m.id)


def _split_line(line: str) -> list[str]:
    if "," in line:
        return [f.strip() for f in line.split(",")]
    return line.split()


def parse_pedigree_file(path) -> list[Pedigree]:
    """Read the pedigree structure file.

    Columns: pedigree_id individual_id father_id mother_id sex [household].
    Comma- or whitespace-delimited; parent "0"/"NA"/empty means founder.
    """
    rows: list[tuple[str, list[str]]] = []
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                fields = _split_line(line)
                if len(fields) < 5:
                    raise FileFormatError(
                        f"expected at least 5 columns, got {len(fields)}",
                        path=path, line=lineno)
                rows.append((str(lineno), fields))
    except OSError as exc:
        raise InputError(f"cannot read pedigree file {path}: {exc}") from exc

    by_ped: dict[str, list[Individual]] = {}
    seen: set[tuple[str, str]] = set()
    for lineno, f in rows:
        ped_id, ind_id, father, mother, sex = f[:5]
        household = f[5] if len(f) > 5 and f[5] not in MISSING_PARENT_TOKENS else None
        key = (ped_id, ind_id)
        if key in seen:
            raise FileFormatError(f"duplicate individual {ind_id!r} in pedigree {ped_id!r}",
                                  path=path, line=int(lineno))
        seen.add(key)
        sex_norm = {"M": "M", "m": "M", "1": "M", "F": "F", "f": "F", "2": "F"}.get(sex)
        by_ped.setdefault(ped_id, []).append(Individual(
            id=ind_id,
            father=None if father in MISSING_PARENT_TOKENS else father,
            mother=None if mother in MISSING_PARENT_TOKENS else mother,
            sex=sex_norm,
            household=household,
        ))

    pedigrees = []
    for ped_id, members in by_ped.items():
        ped = Pedigree(ped_id, members)
        _validate_pedigree(ped)
        pedigrees.append(topological_sort(ped))
    return pedigrees


def _parse_value(token: str, missing_token: str):
    if token == missing_token or token == "":
        return np.nan
    try:
        return float(token)
    except ValueError:
        return None


def parse_phenotype_file(path, missing_token: str = DEFAULT_MISSING_TOKEN):
    """Read the phenotype/covariate table.

    Header row: pedigree_id individual_id <column names...>; one row per
    individual. Returns (column_names, {(ped, ind): value array}).
    """
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise InputError(f"cannot read phenotype file {path}: {exc}") from exc

    header = None
    table: dict[tuple[str, str], np.ndarray] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = _split_line(line)
        if header is None:
            if len(fields) < 3:
                raise FileFormatError("header must list pedigree_id, individual_id, "
                                      "and at least one trait column", path=path, line=lineno)
            header = fields[2:]
            continue
        if len(fields) != len(header) + 2:
            raise FileFormatError(
                f"expected {len(header) + 2} columns, got {len(fields)}",
                path=path, line=lineno)
        values = np.empty(len(header))
        for j, token in enumerate(fields[2:]):
            v = _parse_value(token, missing_token)
            if v is None:
                raise FileFormatError(f"non-numeric value {token!r} in column "
                                      f"{header[j]!r}", path=path, line=lineno)
            values[j] = v
        key = (fields[0], fields[1])
        if key in table:
            raise FileFormatError(f"duplicate phenotype row for {key}", path=path, line=lineno)
        table[key] = values
    if header is None:
        raise FileFormatError("phenotype file is empty", path=path)
    return header, table


def parse_cohort(pedigree_file, phenotype_file=None, *, trait_names=None,
                 covariate_names=None, missing_token: str = DEFAULT_MISSING_TOKEN) -> Cohort:
    """Assemble a validated Cohort from the text inputs.

    ``trait_names``/``covariate_names`` select phenotype columns; by default
    every phenotype column is a trait. Individuals absent from the phenotype
    file keep all traits missing (they still contribute to kinship);
    phenotype rows for unknown individuals are an error.
    """
    pedigrees = parse_pedigree_file(pedigree_file)

    if phenotype_file is not None:
        columns, table = parse_phenotype_file(phenotype_file, missing_token)
    else:
        columns, table = [], {}

    if trait_names is None:
        trait_names = [c for c in columns if covariate_names is None or c not in covariate_names]
        if phenotype_file is not None and not trait_names:
            raise ValidationError("no trait columns left after covariate selection")
        if phenotype_file is None:
            trait_names = ["trait"]
    covariate_names = list(covariate_names or [])
    for name in list(trait_names) + covariate_names:
        if phenotype_file is not None and name not in columns:
            raise ValidationError(f"column {name!r} not present in phenotype header")

    known = {(p.id, m.id) for p in pedigrees for m in p.members}
    for key in table:
        if key not in known:
            raise ValidationError(
                f"phenotype row for {key[1]!r} in pedigree {key[0]!r} has no pedigree entry")

    t_idx = [columns.index(n) for n in trait_names] if phenotype_file else []
    c_idx = [columns.index(n) for n in covariate_names] if phenotype_file else []
    for ped in pedigrees:
        for m in ped.members:
            row = table.get((ped.id, m.id))
            if row is None:
                m.traits = np.full(len(trait_names), np.nan)
                m.covariates = np.full(len(covariate_names), np.nan)
            else:
                m.traits = row[t_idx] if t_idx else np.full(len(trait_names), np.nan)
                m.covariates = row[c_idx] if c_idx else np.empty(0)

    return Cohort(pedigrees, list(trait_names), covariate_names)


def write_pedigree_file(cohort: Cohort, path) -> None:
    with open(path, "w") as fh:
        for ped in cohort.pedigrees:
            for m in ped.members:
                sex = m.sex or "NA"
                house = m.household or "NA"
                fh.write(f"{ped.id} {m.id} {m.father or '0'} {m.mother or '0'} {sex} {house}\n")


def write_phenotype_file(cohort: Cohort, path, missing_token: str = DEFAULT_MISSING_TOKEN) -> None:
    names = cohort.trait_names + cohort.covariate_names
    with open(path, "w") as fh:
        fh.write("pedigree_id individual_id " + " ".join(names) + "\n")
        for ped in cohort.pedigrees:
            for m in ped.members:
                vals = np.concatenate([m.traits, m.covariates]) if len(m.covariates) else m.traits
                toks = [missing_token if np.isnan(v) else repr(float(v)) for v in vals]
                fh.write(f"{ped.id} {m.id} " + " ".join(toks) + "\n")
