"""Training and test decoys drawn from a local compound corpus.

A decoy is a structural isomer of the true compound: same formula, different
connectivity, fingerprint similarity at most 0.75. Selection is fully
deterministic: candidates are ordered by ascending similarity with
lexicographic id tie-breaks, so the least-similar isomer is picked first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .molecules import (
    CorpusRecord,
    Fingerprint,
    Formula,
    MolGraph,
    formula_of,
    monoisotopic_mass,
    parse_smiles,
    path_fingerprint,
    tanimoto,
)

__all__ = [
    "CompoundCorpus",
    "CompoundEntry",
    "DecoyAssignment",
    "SIMILARITY_CEILING",
    "build_corpus",
    "build_test_decoy_set",
    "read_assignments",
    "select_training_decoy",
    "verify_assignment",
    "write_assignments",
]

SIMILARITY_CEILING = 0.75
DEFAULT_TEST_DECOY_CAP = 10


@dataclass(frozen=True)
class CompoundEntry:
    """One corpus compound with its precomputed chemistry."""

    id: str
    smiles: str
    name: str
    mol: MolGraph
    formula: Formula
    mass: float
    fingerprint: Fingerprint


@dataclass(frozen=True)
class CompoundCorpus:
    """Immutable compound collection with a formula index."""

    records: dict[str, CompoundEntry]
    formula_index: dict[Formula, tuple[str, ...]] = field(repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, compound_id: str) -> bool:
        return compound_id in self.records

    def entry(self, compound_id: str) -> CompoundEntry:
        try:
            return self.records[compound_id]
        except KeyError:
            raise KeyError(f"unknown compound id {compound_id!r}") from None

    def isomers_of(self, compound_id: str) -> tuple[str, ...]:
        """Ids sharing the compound's formula, the compound itself excluded."""
        entry = self.entry(compound_id)
        return tuple(
            i for i in self.formula_index.get(entry.formula, ()) if i != compound_id
        )


def build_corpus(records: Iterable[CorpusRecord]) -> CompoundCorpus:
    """Parse corpus records and index them by formula."""
    entries: dict[str, CompoundEntry] = {}
    index: dict[Formula, list[str]] = {}
    for rec in records:
        if rec.id in entries:
            raise ValueError(f"duplicate compound id {rec.id!r}")
        mol = parse_smiles(rec.smiles, mol_id=rec.id)
        formula = formula_of(mol)
        entries[rec.id] = CompoundEntry(
            id=rec.id,
            smiles=rec.smiles,
            name=rec.name,
            mol=mol,
            formula=formula,
            mass=monoisotopic_mass(formula),
            fingerprint=path_fingerprint(mol),
        )
        index.setdefault(formula, []).append(rec.id)
    frozen = {f: tuple(sorted(ids)) for f, ids in index.items()}
    return CompoundCorpus(records=entries, formula_index=frozen)


@dataclass(frozen=True)
class DecoyAssignment:
    """Decoys attached to one spectrum's true compound."""

    spectrum_id: str
    true_compound_id: str
    decoy_ids: tuple[str, ...]


def _qualifying_decoys(true_id: str, corpus: CompoundCorpus) -> list[tuple[float, str]]:
    """(similarity, id) pairs under the ceiling, ascending, ties by id."""
    true_fp = corpus.entry(true_id).fingerprint
    scored = []
    for cand_id in corpus.isomers_of(true_id):
        sim = tanimoto(true_fp, corpus.entry(cand_id).fingerprint)
        if sim <= SIMILARITY_CEILING:
            scored.append((sim, cand_id))
    scored.sort()
    return scored


def select_training_decoy(true_id: str, corpus: CompoundCorpus) -> str | None:
    """Least-similar qualifying isomer, or None when nothing qualifies."""
    scored = _qualifying_decoys(true_id, corpus)
    return scored[0][1] if scored else None


def build_test_decoy_set(
    true_id: str,
    corpus: CompoundCorpus,
    cap: int = DEFAULT_TEST_DECOY_CAP,
    spectrum_id: str = "",
) -> DecoyAssignment:
    """Up to `cap` qualifying isomers, least similar first."""
    if cap < 0:
        raise ValueError("decoy cap must be non-negative")
    scored = _qualifying_decoys(true_id, corpus)
    return DecoyAssignment(
        spectrum_id=spectrum_id or true_id,
        true_compound_id=true_id,
        decoy_ids=tuple(cand_id for _, cand_id in scored[:cap]),
    )


def verify_assignment(assignment: DecoyAssignment, corpus: CompoundCorpus) -> None:
    """Re-check formula equality and the similarity ceiling for every decoy."""
    true_entry = corpus.entry(assignment.true_compound_id)
    for decoy_id in assignment.decoy_ids:
        decoy = corpus.entry(decoy_id)
        if decoy.formula != true_entry.formula:
            raise ValueError(
                f"decoy {decoy_id!r} formula {decoy.formula.hill()} differs from "
                f"{true_entry.formula.hill()}"
            )
        sim = tanimoto(true_entry.fingerprint, decoy.fingerprint)
        if sim > SIMILARITY_CEILING:
            raise ValueError(
                f"decoy {decoy_id!r} similarity {sim:.4f} exceeds "
                f"{SIMILARITY_CEILING}"
            )


def write_assignments(assignments: Sequence[DecoyAssignment],
                      path: str | Path) -> None:
    """Emit `spectrum_id<TAB>true_id<TAB>decoy,decoy,...` lines."""
    lines = [
        "\t".join((a.spectrum_id, a.true_compound_id, ",".join(a.decoy_ids)))
        for a in assignments
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def read_assignments(path: str | Path) -> list[DecoyAssignment]:
    out = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
        spectrum_id, true_id, decoys = parts
        out.append(DecoyAssignment(
            spectrum_id=spectrum_id,
            true_compound_id=true_id,
            decoy_ids=tuple(decoys.split(",")) if decoys else (),
        ))
    return out
