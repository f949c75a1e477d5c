"""MS/MS spectrum ingestion, per-compound merging, and fixed-width binning.

Spectra arrive as MGF text. Binning maps peaks onto 0.1 Da bins covering
m/z up to 1500 (15,000 bins, half-open boundaries), sums intensities per
bin, and max-normalizes the result into [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

N_BINS = 15_000
BIN_WIDTH = 0.1


class MgfError(ValueError):
    """Malformed MGF input; message carries the offending line number."""


@dataclass(frozen=True)
class Peak:
    mz: float
    intensity: float


@dataclass
class Spectrum:
    id: str
    precursor_mz: float
    peaks: list[Peak] = field(default_factory=list)
    compound_id: str = ""


@dataclass
class BinnedSpectrum:
    bins: np.ndarray
    source_id: str


def parse_mgf(text: str) -> list[Spectrum]:
    """Parse MGF text into spectra.

    Records are delimited by ``BEGIN IONS`` / ``END IONS``. ``TITLE=``
    supplies the spectrum id, ``PEPMASS=`` the precursor m/z (required;
    a trailing intensity after whitespace is ignored), and the optional
    ``COMPOUND=`` a compound id. Body lines are ``mz<ws>intensity``.
    Lines starting with ``#`` and blank lines are skipped.
    """
    spectra: list[Spectrum] = []
    in_block = False
    block_start = 0
    title = ""
    compound = ""
    precursor: float | None = None
    peaks: list[Peak] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "BEGIN IONS":
            if in_block:
                raise MgfError(f"line {lineno}: nested BEGIN IONS")
            in_block = True
            block_start = lineno
            title, compound, precursor, peaks = "", "", None, []
            continue
        if line == "END IONS":
            if not in_block:
                raise MgfError(f"line {lineno}: END IONS outside a block")
            if precursor is None:
                raise MgfError(f"line {block_start}: block missing PEPMASS")
            spectra.append(
                Spectrum(id=title, precursor_mz=precursor, peaks=peaks, compound_id=compound)
            )
            in_block = False
            continue
        if not in_block:
            raise MgfError(f"line {lineno}: content outside BEGIN IONS block")
        if line.startswith("TITLE="):
            title = line[len("TITLE=") :].strip()
            continue
        if line.startswith("COMPOUND="):
            compound = line[len("COMPOUND=") :].strip()
            continue
        if line.startswith("PEPMASS="):
            first = line[len("PEPMASS=") :].split()
            try:
                precursor = float(first[0])
            except (IndexError, ValueError):
                raise MgfError(f"line {lineno}: bad PEPMASS value") from None
            if precursor <= 0:
                raise MgfError(f"line {lineno}: precursor m/z must be positive")
            continue
        if "=" in line and line.split("=", 1)[0].isupper():
            # other MGF headers (CHARGE=, SCANS=, ...) carry nothing we use
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MgfError(f"line {lineno}: expected 'mz intensity', got {raw!r}")
        try:
            mz, intensity = float(parts[0]), float(parts[1])
        except ValueError:
            raise MgfError(f"line {lineno}: non-numeric peak line {raw!r}") from None
        if mz <= 0:
            raise MgfError(f"line {lineno}: peak m/z must be positive")
        if intensity < 0:
            raise MgfError(f"line {lineno}: peak intensity must be non-negative")
        peaks.append(Peak(mz=mz, intensity=intensity))

    if in_block:
        raise MgfError(f"line {block_start}: unterminated block")
    return spectra


def merge_spectra(group: Sequence[Spectrum], merged_id: str | None = None) -> Spectrum:
    """Concatenate the peak lists of replicate spectra of one compound.

    Peaks are concatenated in input order with no deduplication or
    intensity summing; the precursor m/z comes from the first spectrum.
    """
    if not group:
        raise ValueError("cannot merge an empty spectrum group")
    compound_ids = {s.compound_id for s in group}
    if len(compound_ids) != 1:
        raise ValueError(f"cannot merge spectra of different compounds: {sorted(compound_ids)}")
    peaks: list[Peak] = []
    for s in group:
        peaks.extend(s.peaks)
    return Spectrum(
        id=merged_id if merged_id is not None else group[0].id,
        precursor_mz=group[0].precursor_mz,
        peaks=peaks,
        compound_id=group[0].compound_id,
    )


def bin_spectrum(s: Spectrum) -> BinnedSpectrum:
    """Bin peaks into 15,000 0.1 Da bins and max-normalize to [0, 1].

    Bin boundaries are half-open, index = floor(mz * 10); peaks with
    index >= 15,000 (m/z of 1500.0 and above) are dropped. An input with
    no surviving peaks yields the all-zero vector.
    """
    bins = np.zeros(N_BINS, dtype=np.float64)
    for p in s.peaks:
        idx = int(np.floor(p.mz * 10.0))
        if 0 <= idx < N_BINS:
            bins[idx] += p.intensity
    top = bins.max()
    if top > 0.0:
        bins /= top
    return BinnedSpectrum(bins=bins, source_id=s.id)


def downsample_adjacent(v: np.ndarray) -> np.ndarray:
    """Sum adjacent pairs: out[i] = v[2i] + v[2i+1]."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size % 2 != 0:
        raise ValueError(f"downsample needs an even-length vector, got shape {v.shape}")
    return v.reshape(-1, 2).sum(axis=1)


def group_by_compound(spectra: Iterable[Spectrum]) -> dict[str, list[Spectrum]]:
    """Group spectra by compound_id; spectra without one group under their id."""
    groups: dict[str, list[Spectrum]] = {}
    for s in spectra:
        groups.setdefault(s.compound_id or s.id, []).append(s)
    return groups
