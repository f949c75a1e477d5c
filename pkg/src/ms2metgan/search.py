"""Database search: candidate filtering, latent caching, scoring, ranking.

Candidates are pulled from the corpus by precursor mass, scored by a
discriminator over concatenated spectrum and structure latents, and ranked
pessimistically: a tie with the true compound counts against it, so reported
top-k accuracy never benefits from score collisions.

Cache file layout (little-endian throughout): magic "LMSM", u32 version,
u32 dim, u64 entry count; per entry a u16 id length, the UTF-8 id, and
dim 32-bit reals. Entries are written in sorted id order, which makes two
writes of equal state byte-identical.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .decoygen import CompoundCorpus
from .molecules import PROTON_MASS

__all__ = [
    "CacheError",
    "CacheMagicError",
    "CacheTruncatedError",
    "CacheVersionError",
    "LatentCache",
    "MASS_WINDOW",
    "SearchResult",
    "cache_read",
    "cache_write",
    "filter_candidates",
    "rank_true",
    "score_candidates",
    "search_spectrum",
    "write_results",
]

MASS_WINDOW = 0.02

CACHE_MAGIC = b"LMSM"
CACHE_VERSION = 1


class CacheError(ValueError):
    """Malformed latent-cache file or inconsistent cache state."""


class CacheMagicError(CacheError):
    """File does not start with the cache magic."""


class CacheVersionError(CacheError):
    """Cache version is not supported."""


class CacheTruncatedError(CacheError):
    """File ends before the declared content."""


@dataclass
class LatentCache:
    """Compound id to 32-bit latent vector map with a fixed dimension."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise CacheError(f"cache dimension must be positive, got {self.dim}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, compound_id: str) -> bool:
        return compound_id in self.entries

    def add(self, compound_id: str, vector) -> None:
        vec = np.asarray(vector, dtype="<f4").reshape(-1)
        if vec.shape != (self.dim,):
            raise CacheError(
                f"latent for {compound_id!r} has length {vec.size}, cache dim "
                f"is {self.dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise CacheError(f"latent for {compound_id!r} has non-finite values")
        self.entries[compound_id] = vec

    def get(self, compound_id: str) -> np.ndarray:
        return self.entries[compound_id]

    def merge(self, other: "LatentCache") -> None:
        if other.dim != self.dim:
            raise CacheError(
                f"cannot merge caches of dims {other.dim} and {self.dim}"
            )
        for compound_id, vec in other.entries.items():
            self.add(compound_id, vec)


def cache_write(cache: LatentCache, path: str | Path) -> None:
    """Serialize the cache deterministically (entries in sorted id order)."""
    parts = [
        CACHE_MAGIC,
        struct.pack("<I", CACHE_VERSION),
        struct.pack("<I", cache.dim),
        struct.pack("<Q", len(cache.entries)),
    ]
    for compound_id in sorted(cache.entries):
        vec = np.asarray(cache.entries[compound_id], dtype="<f4")
        if vec.shape != (cache.dim,):
            raise CacheError(f"entry {compound_id!r} has wrong length")
        if not np.all(np.isfinite(vec)):
            raise CacheError(f"entry {compound_id!r} has non-finite values")
        encoded = compound_id.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CacheError(f"compound id too long: {compound_id[:32]!r}...")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(vec.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CacheTruncatedError(
                f"{self.path}: needed {n} bytes at offset {self.pos}, have "
                f"{len(self.blob) - self.pos}"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out


def cache_read(path: str | Path) -> LatentCache:
    reader = _Reader(Path(path).read_bytes(), str(path))
    magic = reader.take(4)
    if magic != CACHE_MAGIC:
        raise CacheMagicError(f"{path}: bad magic {magic!r}")
    (version,) = struct.unpack("<I", reader.take(4))
    if version != CACHE_VERSION:
        raise CacheVersionError(f"{path}: unsupported version {version}")
    (dim,) = struct.unpack("<I", reader.take(4))
    (count,) = struct.unpack("<Q", reader.take(8))
    cache = LatentCache(dim=dim)
    for _ in range(count):
        (id_len,) = struct.unpack("<H", reader.take(2))
        compound_id = reader.take(id_len).decode("utf-8")
        if compound_id in cache.entries:
            raise CacheError(f"{path}: duplicate entry {compound_id!r}")
        vec = np.frombuffer(reader.take(4 * dim), dtype="<f4").copy()
        cache.entries[compound_id] = vec
    if reader.pos != len(reader.blob):
        raise CacheError(
            f"{path}: {len(reader.blob) - reader.pos} trailing bytes"
        )
    return cache


# ---------------------------------------------------------------------------
# candidate filtering and ranking


def filter_candidates(precursor_mz: float, corpus: CompoundCorpus) -> list[str]:
    """Ids whose neutral mass falls within the window around precursor - proton."""
    if precursor_mz <= 0:
        raise ValueError(f"precursor m/z must be positive, got {precursor_mz}")
    target = precursor_mz - PROTON_MASS
    hits = [
        entry.id for entry in corpus.records.values()
        if abs(entry.mass - target) <= MASS_WINDOW
    ]
    return sorted(hits)


def score_candidates(
    spec_latent,
    candidate_ids: Sequence[str],
    discriminator: Callable[[np.ndarray], float],
    cache: LatentCache | Mapping[str, np.ndarray] | None = None,
    encoder: Callable[[str], np.ndarray] | None = None,
) -> list[tuple[str, float]]:
    """Discriminator score per candidate, input order preserved."""
    spec_latent = np.asarray(spec_latent, dtype=np.float64).reshape(-1)
    entries = cache.entries if isinstance(cache, LatentCache) else (cache or {})
    out = []
    for compound_id in candidate_ids:
        if compound_id in entries:
            struct_latent = np.asarray(entries[compound_id], dtype=np.float64)
        elif encoder is not None:
            struct_latent = np.asarray(encoder(compound_id), dtype=np.float64)
        else:
            raise KeyError(f"no cached latent for candidate {compound_id!r}")
        pair = np.concatenate([spec_latent, struct_latent.reshape(-1)])
        out.append((compound_id, float(discriminator(pair))))
    return out


def rank_true(scored: Sequence[tuple[str, float]], true_id: str) -> int:
    """1-based rank of the true compound; ties count against it."""
    by_id = dict(scored)
    if len(by_id) != len(scored):
        raise ValueError("duplicate candidate ids in scored list")
    if true_id not in by_id:
        raise ValueError(f"true compound {true_id!r} not among candidates")
    true_score = by_id[true_id]
    return 1 + sum(
        1 for cid, s in scored if cid != true_id and s >= true_score
    )


@dataclass(frozen=True)
class SearchResult:
    """Ranked candidates for one spectrum."""

    spectrum_id: str
    ranked: tuple[tuple[str, float], ...]
    true_rank: int | None = None

    def __post_init__(self) -> None:
        scores = [s for _, s in self.ranked]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("ranked candidates must be sorted by descending score")


def search_spectrum(
    spectrum_id: str,
    spec_latent,
    candidate_ids: Sequence[str],
    discriminator: Callable[[np.ndarray], float],
    cache: LatentCache | Mapping[str, np.ndarray] | None = None,
    encoder: Callable[[str], np.ndarray] | None = None,
    true_id: str | None = None,
) -> SearchResult:
    """Score, order (descending score, id tie-break), and optionally rank."""
    scored = score_candidates(spec_latent, candidate_ids, discriminator,
                              cache=cache, encoder=encoder)
    ranked = tuple(sorted(scored, key=lambda item: (-item[1], item[0])))
    rank = None
    if true_id is not None:
        rank = rank_true(scored, true_id)
    return SearchResult(spectrum_id=spectrum_id, ranked=ranked, true_rank=rank)


def write_results(results: Sequence[SearchResult], path: str | Path) -> None:
    """Emit `spectrum_id<TAB>rank<TAB>candidate_id<TAB>score` per candidate."""
    lines = []
    for result in results:
        for position, (compound_id, score) in enumerate(result.ranked, start=1):
            lines.append(
                f"{result.spectrum_id}\t{position}\t{compound_id}\t{score!r}"
            )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")
