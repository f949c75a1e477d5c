"""Molecular graphs from a SMILES subset, plus formulas, masses,
graph features, and hashed path fingerprints.

The parser covers the organic subset (B, C, N, O, P, S, F, Cl, Br, I),
aromatic lowercase atoms, bracket atoms with isotope / H count / charge,
bond symbols ``- = # :``, branches, and ring closures including ``%nn``.
Stereo markers (``/ \\ @``) are accepted and ignored. Aromaticity comes
from lowercase input only; aromatic ring bonds get order 1.5.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PROTON_MASS = 1.00727646688

ELEMENTS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
_AROMATIC_SYMBOLS = {"b", "c", "n", "o", "p", "s"}
_VALENCES = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}
# monoisotopic masses, 7 decimals
ATOMIC_MASS = {
    "H": 1.0078250,
    "B": 11.0093054,
    "C": 12.0000000,
    "N": 14.0030740,
    "O": 15.9949146,
    "F": 18.9984032,
    "P": 30.9737615,
    "S": 31.9720710,
    "Cl": 34.9688527,
    "Br": 78.9183371,
    "I": 126.9044730,
}

BOND_ORDERS = (1.0, 1.5, 2.0, 3.0)
NODE_FEATURE_DIM = 4 + len(ELEMENTS)
EDGE_FEATURE_DIM = len(BOND_ORDERS)
# columns reconstructed by the structure decoder: degree, H count, aromatic
NODE_TARGET_DIM = 3


class SmilesError(ValueError):
    """Unparseable SMILES; message carries the character position."""


@dataclass
class Atom:
    element: str
    charge: int = 0
    aromatic: bool = False
    hcount: int = 0
    isotope: int | None = None


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: float


@dataclass
class MolGraph:
    atoms: list[Atom]
    bonds: list[Bond]
    id: str = ""

    def neighbors(self) -> list[list[tuple[int, float]]]:
        adj: list[list[tuple[int, float]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        return adj


@dataclass(frozen=True)
class Formula:
    counts: tuple[tuple[str, int], ...]

    @classmethod
    def from_counts(cls, counts: dict[str, int]) -> Formula:
        return cls(tuple(sorted((e, c) for e, c in counts.items() if c > 0)))

    def as_dict(self) -> dict[str, int]:
        return dict(self.counts)

    def hill(self) -> str:
        """Hill notation: C then H then alphabetical; no C puts all alphabetical."""
        counts = self.as_dict()
        parts: list[str] = []
        if "C" in counts:
            order = ["C"] + (["H"] if "H" in counts else [])
            order += sorted(e for e in counts if e not in ("C", "H"))
        else:
            order = sorted(counts)
        for e in order:
            c = counts[e]
            parts.append(e if c == 1 else f"{e}{c}")
        return "".join(parts)


@dataclass(frozen=True)
class Fingerprint:
    bits: frozenset[int]
    width: int = 2048


@dataclass
class GraphFeatures:
    node_features: np.ndarray
    edge_features: np.ndarray
    spatial: np.ndarray


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    smiles: str
    name: str


# ---------------------------------------------------------------------------
# SMILES parsing


_BOND_CHARS = {"-": 1.0, "=": 2.0, "#": 3.0, ":": 1.5, "/": 1.0, "\\": 1.0}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[Atom] = []
        self.atom_pos: list[int] = []
        self.explicit_organic: list[bool] = []
        self.bonds: dict[tuple[int, int], float] = {}
        self.prev: int | None = None
        self.pending_bond: float | None = None
        self.stack: list[int] = []
        self.rings: dict[int, tuple[int, float | None, int]] = {}

    def fail(self, msg: str, pos: int | None = None) -> None:
        where = self.pos if pos is None else pos
        raise SmilesError(f"position {where}: {msg} in {self.text!r}")

    def add_atom(self, atom: Atom, bracket: bool, pos: int | None = None) -> None:
        idx = len(self.atoms)
        self.atoms.append(atom)
        self.atom_pos.append(self.pos if pos is None else pos)
        self.explicit_organic.append(not bracket)
        if self.prev is not None:
            self.add_bond(self.prev, idx, self.pending_bond)
        elif self.pending_bond is not None:
            self.fail("bond symbol before the first atom")
        self.pending_bond = None
        self.prev = idx

    def add_bond(self, a: int, b: int, order: float | None) -> None:
        if a == b:
            self.fail("ring bond closing on its own atom")
        if order is None:
            aromatic_pair = self.atoms[a].aromatic and self.atoms[b].aromatic
            order = 1.5 if aromatic_pair else 1.0
        key = (min(a, b), max(a, b))
        if key in self.bonds:
            self.fail(f"duplicate bond between atoms {a} and {b}")
        self.bonds[key] = order

    def ring_closure(self, number: int) -> None:
        if self.prev is None:
            self.fail("ring closure before any atom")
        if number in self.rings:
            other, other_bond, _ = self.rings.pop(number)
            bond = self.pending_bond
            if bond is not None and other_bond is not None and bond != other_bond:
                self.fail(f"conflicting bond orders on ring closure {number}")
            self.add_bond(other, self.prev, bond if bond is not None else other_bond)
        else:
            self.rings[number] = (self.prev, self.pending_bond, self.pos)
        self.pending_bond = None

    def parse_bracket(self) -> None:
        start = self.pos
        self.pos += 1  # consume [
        text = self.text
        isotope = None
        digits = ""
        while self.pos < len(text) and text[self.pos].isdigit():
            digits += text[self.pos]
            self.pos += 1
        if digits:
            isotope = int(digits)
        symbol = None
        for cand in ("Cl", "Br"):
            if text.startswith(cand, self.pos):
                symbol = cand
                break
        if symbol is None and self.pos < len(text):
            ch = text[self.pos]
            if ch in _AROMATIC_SYMBOLS or (ch.isalpha() and ch.upper() in _VALENCES and ch.isupper()):
                symbol = ch
        if symbol is None:
            self.fail("unknown element in bracket atom", start)
        self.pos += len(symbol)
        aromatic = symbol.islower()
        element = symbol.capitalize() if len(symbol) == 1 else symbol
        while self.pos < len(text) and text[self.pos] == "@":
            self.pos += 1  # chirality ignored
        hcount = 0
        if self.pos < len(text) and text[self.pos] == "H":
            self.pos += 1
            digits = ""
            while self.pos < len(text) and text[self.pos].isdigit():
                digits += text[self.pos]
                self.pos += 1
            hcount = int(digits) if digits else 1
        charge = 0
        if self.pos < len(text) and text[self.pos] in "+-":
            sign = 1 if text[self.pos] == "+" else -1
            symbol_char = text[self.pos]
            self.pos += 1
            digits = ""
            while self.pos < len(text) and text[self.pos].isdigit():
                digits += text[self.pos]
                self.pos += 1
            if digits:
                charge = sign * int(digits)
            else:
                charge = sign
                while self.pos < len(text) and text[self.pos] == symbol_char:
                    charge += sign
                    self.pos += 1
        if self.pos >= len(text) or text[self.pos] != "]":
            self.fail("unterminated bracket atom", start)
        self.add_atom(
            Atom(element=element, charge=charge, aromatic=aromatic, hcount=hcount, isotope=isotope),
            bracket=True,
            pos=start,
        )
        self.pos += 1

    def run(self) -> tuple[list[Atom], dict[tuple[int, int], float]]:
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch in _BOND_CHARS:
                if self.pending_bond is not None:
                    self.fail("two bond symbols in a row")
                self.pending_bond = _BOND_CHARS[ch]
                self.pos += 1
            elif ch == "(":
                if self.prev is None:
                    self.fail("branch before any atom")
                self.stack.append(self.prev)
                self.pos += 1
            elif ch == ")":
                if not self.stack:
                    self.fail("unbalanced ')'")
                if self.pending_bond is not None:
                    self.fail("dangling bond before ')'")
                self.prev = self.stack.pop()
                self.pos += 1
            elif ch == "[":
                self.parse_bracket()
            elif ch == "%":
                digits = text[self.pos + 1 : self.pos + 3]
                if len(digits) != 2 or not digits.isdigit():
                    self.fail("'%' ring closure needs two digits")
                self.ring_closure(int(digits))
                self.pos += 3
            elif ch.isdigit():
                self.ring_closure(int(ch))
                self.pos += 1
            elif ch == "C" and text.startswith("Cl", self.pos):
                self.add_atom(Atom(element="Cl"), bracket=False)
                self.pos += 2
            elif ch == "B" and text.startswith("Br", self.pos):
                self.add_atom(Atom(element="Br"), bracket=False)
                self.pos += 2
            elif ch in _VALENCES:
                self.add_atom(Atom(element=ch), bracket=False)
                self.pos += 1
            elif ch in _AROMATIC_SYMBOLS:
                self.add_atom(Atom(element=ch.upper(), aromatic=True), bracket=False)
                self.pos += 1
            else:
                self.fail(f"unsupported character {ch!r}")
        if self.stack:
            self.fail("unbalanced '('")
        if self.pending_bond is not None:
            self.fail("dangling bond at end of input")
        if self.rings:
            number, (_, _, pos) = next(iter(self.rings.items()))
            self.fail(f"unmatched ring closure {number}", pos)
        if not self.atoms:
            self.fail("no atoms")
        return self.atoms, self.bonds


def _aromatic_pi(element: str, degree: int) -> int:
    """Extra valence load an aromatic atom owes to the delocalized ring.

    Carbon and boron always lend a pi bond. Nitrogen and phosphorus lend
    one only when two-connected (pyridine type); three-connected aromatic
    N is pyrrole type and donates a lone pair instead. Oxygen and sulfur
    always donate lone pairs. This reproduces benzene CH, pyridine,
    N-methylpyrrole, furan, and thiophene without kekulization.
    """
    symbol = element.lower()
    if symbol in ("c", "b"):
        return 1
    if symbol in ("n", "p"):
        return 1 if degree == 2 else 0
    return 0


def _assign_implicit_h(parser: _Parser) -> None:
    """Fill implicit H on non-bracket organic-subset atoms."""
    loads = [0.0] * len(parser.atoms)
    degrees = [0] * len(parser.atoms)
    for (a, b), order in parser.bonds.items():
        loads[a] += order
        loads[b] += order
        degrees[a] += 1
        degrees[b] += 1
    for idx, atom in enumerate(parser.atoms):
        if not parser.explicit_organic[idx]:
            continue
        if atom.aromatic:
            load = degrees[idx] + _aromatic_pi(atom.element, degrees[idx])
        else:
            load = int(np.ceil(loads[idx] - 1e-9))
        for valence in _VALENCES[atom.element]:
            if valence >= load:
                atom.hcount = valence - load
                break
        else:
            raise SmilesError(
                f"position {parser.atom_pos[idx]}: valence violation on "
                f"{atom.element} (load {load}) in {parser.text!r}"
            )


def parse_smiles(s: str, mol_id: str = "") -> MolGraph:
    """Parse a SMILES string from the supported subset into a MolGraph."""
    parser = _Parser(s)
    atoms, bond_map = parser.run()
    _assign_implicit_h(parser)
    bonds = [Bond(a=a, b=b, order=order) for (a, b), order in bond_map.items()]
    graph = MolGraph(atoms=atoms, bonds=bonds, id=mol_id)
    # the subset has no '.'; enforce the single-component invariant anyway
    seen = {0}
    frontier = [0]
    adj = graph.neighbors()
    while frontier:
        cur = frontier.pop()
        for nxt, _ in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if len(seen) != len(atoms):
        raise SmilesError(f"disconnected structure in {s!r}")
    return graph


# ---------------------------------------------------------------------------
# formulas and masses


def formula_of(m: MolGraph) -> Formula:
    counts: dict[str, int] = {}
    h = 0
    for atom in m.atoms:
        counts[atom.element] = counts.get(atom.element, 0) + 1
        h += atom.hcount
    if h:
        counts["H"] = counts.get("H", 0) + h
    return Formula.from_counts(counts)


def monoisotopic_mass(f: Formula) -> float:
    counts = f.as_dict()
    if not counts:
        raise ValueError("empty formula has no mass")
    total = 0.0
    for element, count in f.counts:
        if element not in ATOMIC_MASS:
            raise ValueError(f"element {element!r} missing from the mass table")
        total += count * ATOMIC_MASS[element]
    return total


# ---------------------------------------------------------------------------
# graph features


def graph_features(m: MolGraph, distance_cap: int) -> GraphFeatures:
    """Node, edge, and capped shortest-path features for the encoder.

    Node vector layout: [degree, H count, aromatic, charge] then an
    element one-hot. The leading NODE_TARGET_DIM columns double as the
    decoder's reconstruction target.
    """
    if distance_cap < 1:
        raise ValueError("distance_cap must be >= 1")
    n = len(m.atoms)
    adj = m.neighbors()
    node = np.zeros((n, NODE_FEATURE_DIM), dtype=np.float64)
    for i, atom in enumerate(m.atoms):
        node[i, 0] = len(adj[i])
        node[i, 1] = atom.hcount
        node[i, 2] = 1.0 if atom.aromatic else 0.0
        node[i, 3] = atom.charge
        node[i, 4 + ELEMENTS.index(atom.element)] = 1.0
    edge = np.zeros((len(m.bonds), EDGE_FEATURE_DIM), dtype=np.float64)
    for j, bond in enumerate(m.bonds):
        edge[j, BOND_ORDERS.index(bond.order)] = 1.0
    spatial = np.zeros((n, n), dtype=np.int64)
    for start in range(n):
        dist = {start: 0}
        frontier = [start]
        while frontier:
            nxt_frontier: list[int] = []
            for cur in frontier:
                for nb, _ in adj[cur]:
                    if nb not in dist:
                        dist[nb] = dist[cur] + 1
                        nxt_frontier.append(nb)
            frontier = nxt_frontier
        for j, d in dist.items():
            spatial[start, j] = min(d, distance_cap)
    return GraphFeatures(node_features=node, edge_features=edge, spatial=spatial)


# ---------------------------------------------------------------------------
# fingerprints


_FP_WIDTH = 2048
_MAX_PATH_BONDS = 7
_BOND_CHAR = {1.0: "-", 1.5: ":", 2.0: "=", 3.0: "#"}


def _fnv1a64(s: str) -> int:
    h = 0xCBF29CE484222325
    for byte in s.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _atom_symbol(atom: Atom) -> str:
    return atom.element.lower() if atom.aromatic else atom.element


def path_fingerprint(m: MolGraph) -> Fingerprint:
    """Hash all simple bond paths of length 0..7 into 2048 bits.

    Each path renders as alternating atom symbols and bond characters;
    the lexicographically smaller direction is hashed (FNV-1a 64) so the
    fingerprint is independent of atom input order.
    """
    adj = m.neighbors()
    symbols = [_atom_symbol(a) for a in m.atoms]
    strings: set[str] = set(symbols)

    def extend(last: int, bonds_used: int, forward: str, backward: str, visited: set[int]) -> None:
        if bonds_used >= _MAX_PATH_BONDS:
            return
        for nb, order in adj[last]:
            if nb in visited:
                continue
            # build both directions token-wise; string reversal would
            # scramble two-letter symbols like Cl
            fwd = forward + _BOND_CHAR[order] + symbols[nb]
            bwd = symbols[nb] + _BOND_CHAR[order] + backward
            strings.add(min(fwd, bwd))
            visited.add(nb)
            extend(nb, bonds_used + 1, fwd, bwd, visited)
            visited.remove(nb)

    for start in range(len(m.atoms)):
        extend(start, 0, symbols[start], symbols[start], {start})
    bits = frozenset(_fnv1a64(s) % _FP_WIDTH for s in strings)
    return Fingerprint(bits=bits, width=_FP_WIDTH)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.width != b.width:
        raise ValueError("fingerprint widths differ")
    if not a.bits and not b.bits:
        return 1.0
    union = len(a.bits | b.bits)
    return len(a.bits & b.bits) / union


# ---------------------------------------------------------------------------
# corpus files


def parse_corpus(text: str) -> list[CorpusRecord]:
    """Parse `id<TAB>smiles<TAB>name` lines; `#` comments and blanks skipped."""
    records: list[CorpusRecord] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"corpus line {lineno}: expected 3 tab-separated fields")
        rec = CorpusRecord(id=parts[0], smiles=parts[1], name=parts[2])
        if rec.id in seen:
            raise ValueError(f"corpus line {lineno}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records
