"""SNP-major genotype storage and the on-disk formats feeding it.

Hard calls live in an int8 matrix of minor-allele counts (missing = -1);
imputed SNPs carry a fractional dosage overlay in [0, 2]. Readers exist for
the standard 2-bit packed binary triplet (.bed with its .bim/.fam
companions, SNP-major layout only) and for a simple text dosage table.
Calls are oriented to the minor allele once frequencies are known, so the
matrix mutates during `allele_frequencies` in `empirical` and is treated as
immutable everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FileFormatError, InputError, ValidationError
from .pedigree import Cohort

MISSING = np.int8(-1)

BED_MAGIC = b"\x6c\x1b"
BED_SNP_MAJOR = b"\x01"

# 2-bit code -> minor allele count of allele1 before orientation:
# 00 -> hom allele1 (2), 10 -> het (1), 11 -> hom allele2 (0), 01 -> missing.
_CODE_TO_COUNT = np.array([2, -1, 1, 0], dtype=np.int8)


@dataclass
class SnpMeta:
    id: str
    chromosome: str
    position: int
    allele1: str
    allele2: str
    maf: float = np.nan
    founder_based_freq: bool = True
    usable: bool = True
    is_dosage: bool = False


@dataclass
class GenotypeMatrix:
    """SNP-major calls plus per-SNP metadata and the sample key list."""

    snps: list[SnpMeta]
    sample_keys: list[tuple[str, str]]
    calls: np.ndarray  # int8 (n_snps, n_samples), -1 missing
    dosages: np.ndarray | None = None  # float64 overlay, NaN missing
    _frozen: bool = field(default=False, repr=False)

    @property
    def n_snps(self) -> int:
        return len(self.snps)

    @property
    def n_samples(self) -> int:
        return len(self.sample_keys)

    def __post_init__(self):
        if self.calls.shape != (self.n_snps, self.n_samples):
            raise ValidationError(
                f"genotype matrix shape {self.calls.shape} does not match "
                f"{self.n_snps} SNPs x {self.n_samples} samples")
        if self.dosages is not None and self.dosages.shape != self.calls.shape:
            raise ValidationError("dosage overlay shape mismatch")
        if self.dosages is not None:
            flagged = np.array([s.is_dosage for s in self.snps])
            extra = np.flatnonzero(~flagged & np.isfinite(self.dosages).any(axis=1))
            if extra.size:
                raise ValidationError(
                    f"dosage values present for non-dosage SNP {self.snps[extra[0]].id!r}")

    def sample_map(self, cohort: Cohort) -> np.ndarray:
        """cohort global index -> genotype column (-1 when ungenotyped).

        Genotyped individuals missing from the cohort are rejected.
        """
        out = np.full(cohort.n_individuals, -1, dtype=np.int64)
        for col, key in enumerate(self.sample_keys):
            gi = cohort.index.get(key)
            if gi is None:
                raise ValidationError(
                    f"genotyped individual {key[1]!r} in pedigree {key[0]!r} "
                    "does not appear in the pedigree file")
            out[gi] = col
        return out

    def values_for(self, snp_index: int) -> np.ndarray:
        """Float genotype row: dosages when flagged, else hard calls with
        NaN for missing."""
        if self.snps[snp_index].is_dosage and self.dosages is not None:
            return self.dosages[snp_index].copy()
        row = self.calls[snp_index].astype(float)
        row[self.calls[snp_index] == MISSING] = np.nan
        return row

    def flip_snp(self, snp_index: int) -> None:
        """Swap allele labels so counts follow the other allele."""
        s = self.snps[snp_index]
        s.allele1, s.allele2 = s.allele2, s.allele1
        row = self.calls[snp_index]
        mask = row != MISSING
        row[mask] = 2 - row[mask]
        if self.dosages is not None and s.is_dosage:
            self.dosages[snp_index] = 2.0 - self.dosages[snp_index]


# ---------------------------------------------------------------------------
# PLINK-style binary triplet
# ---------------------------------------------------------------------------

def _unpack_lut() -> np.ndarray:
    lut = np.empty((256, 4), dtype=np.int8)
    for byte in range(256):
        for j in range(4):
            lut[byte, j] = _CODE_TO_COUNT[(byte >> (2 * j)) & 0b11]
    return lut


_LUT = _unpack_lut()


def read_plink(prefix) -> GenotypeMatrix:
    """Read <prefix>.bed/.bim/.fam (SNP-major 2-bit packing only)."""
    prefix = Path(str(prefix).removesuffix(".bed"))
    bed, bim, fam = (prefix.with_suffix(s) for s in (".bed", ".bim", ".fam"))
    for p in (bed, bim, fam):
        if not p.exists():
            raise InputError(f"missing genotype file {p}")

    snps: list[SnpMeta] = []
    with open(bim) as fh:
        for lineno, line in enumerate(fh, start=1):
            f = line.split()
            if len(f) < 6:
                raise FileFormatError("expected 6 columns (chr id cm pos a1 a2)",
                                      path=bim, line=lineno)
            snps.append(SnpMeta(id=f[1], chromosome=f[0], position=int(f[3]),
                                allele1=f[4], allele2=f[5]))

    sample_keys: list[tuple[str, str]] = []
    with open(fam) as fh:
        for lineno, line in enumerate(fh, start=1):
            f = line.split()
            if len(f) < 2:
                raise FileFormatError("expected at least 2 columns (fid iid)",
                                      path=fam, line=lineno)
            sample_keys.append((f[0], f[1]))

    raw = np.fromfile(bed, dtype=np.uint8)
    if raw.size < 3 or bytes(raw[:2]) != BED_MAGIC:
        raise FileFormatError("bad magic bytes; not a binary genotype file", path=bed)
    if bytes(raw[2:3]) != BED_SNP_MAJOR:
        raise FileFormatError("unsupported layout (only SNP-major packing is read)",
                              path=bed)
    n_snps, n_samples = len(snps), len(sample_keys)
    bytes_per_snp = (n_samples + 3) // 4
    body = raw[3:]
    if body.size != n_snps * bytes_per_snp:
        raise FileFormatError(
            f"file holds {body.size} genotype bytes but {n_snps} SNPs x "
            f"{n_samples} samples needs {n_snps * bytes_per_snp}", path=bed)
    calls = _LUT[body.reshape(n_snps, bytes_per_snp)].reshape(n_snps, -1)[:, :n_samples]
    return GenotypeMatrix(snps=snps, sample_keys=sample_keys, calls=np.ascontiguousarray(calls))


def write_plink(gm: GenotypeMatrix, prefix) -> None:
    """Write the 2-bit packed triplet (hard calls only)."""
    prefix = Path(prefix)
    n_samples = gm.n_samples
    bytes_per_snp = (n_samples + 3) // 4
    # count -> 2-bit code (inverse of _CODE_TO_COUNT)
    code = np.array([0b11, 0b10, 0b00], dtype=np.uint8)
    padded = np.zeros((gm.n_snps, bytes_per_snp * 4), dtype=np.uint8)
    calls = gm.calls
    vals = np.where(calls == MISSING, np.uint8(0b01), code[np.maximum(calls, 0)])
    padded[:, :n_samples] = vals
    padded[:, n_samples:] = 0b01  # pad slots are "missing"; never read back
    shifted = padded.reshape(gm.n_snps, bytes_per_snp, 4) << np.array([0, 2, 4, 6], dtype=np.uint8)
    packed = shifted[..., 0] | shifted[..., 1] | shifted[..., 2] | shifted[..., 3]
    with open(prefix.with_suffix(".bed"), "wb") as fh:
        fh.write(BED_MAGIC + BED_SNP_MAJOR)
        packed.astype(np.uint8).tofile(fh)
    with open(prefix.with_suffix(".bim"), "w") as fh:
        for s in gm.snps:
            fh.write(f"{s.chromosome}\t{s.id}\t0\t{s.position}\t{s.allele1}\t{s.allele2}\n")
    with open(prefix.with_suffix(".fam"), "w") as fh:
        for ped_id, ind_id in gm.sample_keys:
            fh.write(f"{ped_id}\t{ind_id}\t0\t0\t0\t-9\n")


# ---------------------------------------------------------------------------
# text dosage format
# ---------------------------------------------------------------------------

def read_dosage(path, missing_token: str = "NA") -> GenotypeMatrix:
    """Read the text dosage table.

    Header: snp_id chr pos allele1 allele2 <ped:ind> <ped:ind> ...
    Body: one row per SNP with dosages in [0, 2] or the missing token.
    """
    try:
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise InputError(f"cannot read dosage file {path}: {exc}") from exc
    if not lines:
        raise FileFormatError("dosage file is empty", path=path)
    head = lines[0].split()
    if len(head) < 6 or head[:5] != ["snp_id", "chr", "pos", "allele1", "allele2"]:
        raise FileFormatError("header must start with 'snp_id chr pos allele1 allele2'",
                              path=path, line=1)
    sample_keys = []
    for tok in head[5:]:
        if ":" not in tok:
            raise FileFormatError(f"sample column {tok!r} is not 'pedigree:individual'",
                                  path=path, line=1)
        ped_id, ind_id = tok.split(":", 1)
        sample_keys.append((ped_id, ind_id))

    n_samples = len(sample_keys)
    snps, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        f = line.split()
        if len(f) != 5 + n_samples:
            raise FileFormatError(f"expected {5 + n_samples} columns, got {len(f)}",
                                  path=path, line=lineno)
        snps.append(SnpMeta(id=f[0], chromosome=f[1], position=int(f[2]),
                            allele1=f[3], allele2=f[4], is_dosage=True))
        row = np.empty(n_samples)
        for j, tok in enumerate(f[5:]):
            if tok == missing_token:
                row[j] = np.nan
                continue
            v = float(tok)
            if not 0.0 <= v <= 2.0:
                raise FileFormatError(
                    f"dosage {v} out of [0, 2] for SNP {f[0]!r}, sample "
                    f"{':'.join(sample_keys[j])!r}", path=path, line=lineno)
            row[j] = v
        rows.append(row)

    dosages = np.asarray(rows) if rows else np.empty((0, n_samples))
    calls = np.where(np.isnan(dosages), MISSING, np.rint(dosages)).astype(np.int8)
    # rows of hard calls are plain genotypes; only genuinely fractional
    # rows keep the dosage overlay (and its model restrictions)
    fractional = np.nan_to_num(np.abs(dosages - np.rint(dosages))).max(axis=1) > 0 \
        if dosages.size else np.zeros(len(snps), dtype=bool)
    for k, s in enumerate(snps):
        s.is_dosage = bool(fractional[k])
    if fractional.any():
        dosages[~fractional] = np.nan
    else:
        dosages = None
    return GenotypeMatrix(snps=snps, sample_keys=sample_keys, calls=calls, dosages=dosages)


def write_dosage(gm: GenotypeMatrix, path, missing_token: str = "NA") -> None:
    with open(path, "w") as fh:
        cols = " ".join(f"{p}:{i}" for p, i in gm.sample_keys)
        fh.write(f"snp_id chr pos allele1 allele2 {cols}\n")
        for k, s in enumerate(gm.snps):
            row = gm.values_for(k)
            toks = [missing_token if np.isnan(v) else f"{v:g}" for v in row]
            fh.write(f"{s.id} {s.chromosome} {s.position} {s.allele1} {s.allele2} "
                     + " ".join(toks) + "\n")


def read_genotypes(path, fmt: str | None = None) -> GenotypeMatrix:
    """Dispatch on format: 'plink' (binary triplet) or 'dosage' (text)."""
    if fmt is None:
        fmt = "plink" if str(path).endswith(".bed") else "dosage"
    if fmt == "plink":
        return read_plink(path)
    if fmt == "dosage":
        return read_dosage(path)
    raise ValidationError(f"unknown genotype format {fmt!r}")
