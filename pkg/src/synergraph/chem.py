"""SMILES subset parsing and molecular graph utilities.

Supported grammar: organic-subset atoms (B C N O P S F Cl Br I), aromatic
``b c n o p s``, bracket atoms ``[Sym@H2+]`` with charge and explicit H, bonds
``- = # :``, branches, ring closures (``1``..``9`` and ``%nn``), and ``.``
component separators.  Stereo marks ``/ \\ @`` are dropped with a warning.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np


class SmilesError(ValueError):
    """Base class for parse failures; ``offset`` is the byte position."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnsupportedToken(SmilesError):
    pass


class UnbalancedRingClosure(SmilesError):
    pass


class UnbalancedParenthesis(SmilesError):
    pass


class SmilesSyntaxError(SmilesError):
    pass


class FeatureDimTooSmall(ValueError):
    pass


ATOMIC_MASS = {
    "H": 1.008, "Li": 6.94, "B": 10.81, "C": 12.011, "N": 14.007, "O": 15.999,
    "F": 18.998, "Na": 22.990, "Mg": 24.305, "Al": 26.982, "Si": 28.085,
    "P": 30.974, "S": 32.06, "Cl": 35.45, "K": 39.098, "Ca": 40.078,
    "Ti": 47.867, "Cr": 51.996, "Mn": 54.938, "Fe": 55.845, "Co": 58.933,
    "Ni": 58.693, "Cu": 63.546, "Zn": 65.38, "Ga": 69.723, "As": 74.922,
    "Se": 78.971, "Br": 79.904, "Sr": 87.62, "Ag": 107.868, "Sn": 118.710,
    "Sb": 121.760, "I": 126.904, "Ba": 137.327, "Gd": 157.25, "Pt": 195.084,
    "Au": 196.967, "Hg": 200.592, "Bi": 208.980,
}

ORGANIC = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC = ("b", "c", "n", "o", "p", "s")
VALENCES = {"B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
            "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,)}

SINGLE, DOUBLE, TRIPLE, AROMATIC_BOND = "single", "double", "triple", "aromatic"
BOND_SYMBOLS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC_BOND}
BOND_ORDER = {SINGLE: 1.0, DOUBLE: 2.0, TRIPLE: 3.0, AROMATIC_BOND: 1.5}
BOND_KINDS = (SINGLE, DOUBLE, TRIPLE, AROMATIC_BOND)

ELEMENT_CLASSES = ("C", "N", "O", "S", "F", "Cl", "Br", "I", "P", "B")
MAX_DEGREE_SLOT = 5


@dataclass(frozen=True)
class AtomRecord:
    element: str
    aromatic: bool = False
    charge: int = 0
    in_ring: bool = False
    h_count: int = 0
    bracket: bool = False


@dataclass(frozen=True)
class BondRecord:
    a: int
    b: int
    order: str = SINGLE


@dataclass
class MolecularGraph:
    atoms: list = field(default_factory=list)
    bonds: list = field(default_factory=list)
    source_smiles: str = ""

    @property
    def n_atoms(self):
        return len(self.atoms)

    def neighbors(self):
        nbrs = [[] for _ in self.atoms]
        for bd in self.bonds:
            nbrs[bd.a].append((bd.b, bd.order))
            nbrs[bd.b].append((bd.a, bd.order))
        return nbrs

    def degrees(self):
        deg = [0] * len(self.atoms)
        for bd in self.bonds:
            deg[bd.a] += 1
            deg[bd.b] += 1
        return deg

    def to_networkx(self):
        g = nx.Graph()
        g.add_nodes_from(range(len(self.atoms)))
        g.add_edges_from((bd.a, bd.b, {"order": bd.order}) for bd in self.bonds)
        return g

    def edge_arrays(self):
        """Directed edge lists (both directions) and their bond kinds."""
        src, dst, kinds = [], [], []
        for bd in self.bonds:
            k = BOND_KINDS.index(bd.order)
            src += [bd.a, bd.b]
            dst += [bd.b, bd.a]
            kinds += [k, k]
        return (np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64),
                np.asarray(kinds, dtype=np.int64))

    def same_structure(self, other):
        def bond_key(bd):
            return (min(bd.a, bd.b), max(bd.a, bd.b), bd.order)
        return (self.atoms == other.atoms
                and sorted(map(bond_key, self.bonds)) == sorted(map(bond_key, other.bonds)))


@dataclass(frozen=True)
class StructuralDescriptors:
    heavy_atom_count: int
    ring_count: int
    aromatic_ring_count: int
    heteroatom_fraction: float
    molecular_weight: float

    def as_dict(self):
        return {
            "heavy_atom_count": self.heavy_atom_count,
            "ring_count": self.ring_count,
            "aromatic_ring_count": self.aromatic_ring_count,
            "heteroatom_fraction": self.heteroatom_fraction,
            "molecular_weight": self.molecular_weight,
        }


# parsing

def _parse_bracket(text, start):
    end = text.find("]", start)
    if end < 0:
        raise UnsupportedToken("unterminated bracket atom", start)
    body = text[start + 1:end]
    pos = 0
    if body[:1].isdigit():
        raise UnsupportedToken("isotope labels are not supported", start + 1)
    sym = None
    for cand in sorted(ATOMIC_MASS, key=len, reverse=True):
        if body.startswith(cand, pos):
            sym, aromatic = cand, False
            break
    if sym is None:
        for cand in ("se", "as") + AROMATIC:
            if body.startswith(cand, pos):
                sym, aromatic = cand.capitalize(), True
                break
    if sym is None:
        raise UnsupportedToken(f"unknown element in [{body}]", start + 1)
    pos += len(sym)
    stereo = False
    while pos < len(body) and body[pos] == "@":
        stereo = True
        pos += 1
    h = 0
    if pos < len(body) and body[pos] == "H":
        pos += 1
        h = 1
        digits = ""
        while pos < len(body) and body[pos].isdigit():
            digits += body[pos]
            pos += 1
        if digits:
            h = int(digits)
    charge = 0
    if pos < len(body) and body[pos] in "+-":
        sign = 1 if body[pos] == "+" else -1
        pos += 1
        count = 1
        digits = ""
        while pos < len(body) and body[pos].isdigit():
            digits += body[pos]
            pos += 1
        if digits:
            count = int(digits)
        else:
            while pos < len(body) and body[pos] == body[pos - 1]:
                count += 1
                pos += 1
        charge = sign * count
    if pos != len(body):
        raise UnsupportedToken(f"unsupported bracket syntax [{body}]", start + 1 + pos)
    atom = AtomRecord(element=sym, aromatic=aromatic, charge=charge, h_count=h, bracket=True)
    return atom, end + 1, stereo


def parse_smiles(text: str) -> MolecularGraph:
    """Parse ``text`` into a :class:`MolecularGraph` with implicit hydrogens assigned.

    Errors carry the byte offset (UTF-8) of the offending token.
    """
    try:
        return _parse(text)
    except SmilesError as exc:
        byte_off = len(text[:exc.offset].encode("utf-8"))
        msg = str(exc).rsplit(" at offset ", 1)[0]
        raise type(exc)(msg, byte_off) from None


def _parse(text):
    if not text:
        raise SmilesSyntaxError("empty SMILES", 0)
    atoms: list[AtomRecord] = []
    bonds: dict[tuple[int, int], str] = {}
    branch_stack: list[tuple[int, int]] = []
    rings: dict[int, tuple[int, str | None, int]] = {}
    prev = None
    pending = None
    pending_at = 0
    stereo_seen = False
    i = 0

    def connect(a, b, order, offset):
        if a == b:
            raise SmilesSyntaxError("bond from an atom to itself", offset)
        key = (min(a, b), max(a, b))
        if key in bonds:
            raise SmilesSyntaxError("duplicate bond between the same atoms", offset)
        if order is None:
            order = AROMATIC_BOND if atoms[a].aromatic and atoms[b].aromatic else SINGLE
        elif order == AROMATIC_BOND and not (atoms[a].aromatic and atoms[b].aromatic):
            raise SmilesSyntaxError("aromatic bond between non-aromatic atoms", offset)
        bonds[key] = order

    while i < len(text):
        ch = text[i]
        atom = None
        start = i
        if ch == "[":
            atom, i, st = _parse_bracket(text, i)
            stereo_seen |= st
        elif text.startswith(("Cl", "Br"), i):
            atom = AtomRecord(element=text[i:i + 2])
            i += 2
        elif ch in "BCNOPSFI":
            atom = AtomRecord(element=ch)
            i += 1
        elif ch in AROMATIC:
            atom = AtomRecord(element=ch.upper(), aromatic=True)
            i += 1
        if atom is not None:
            atoms.append(atom)
            idx = len(atoms) - 1
            if prev is not None:
                connect(prev, idx, pending, start)
            elif pending is not None:
                raise SmilesSyntaxError("bond without a preceding atom", pending_at)
            prev, pending = idx, None
            continue

        if ch in BOND_SYMBOLS or ch in "/\\":
            if pending is not None:
                raise SmilesSyntaxError("two consecutive bond symbols", i)
            if ch in "/\\":
                stereo_seen = True
                pending = SINGLE
            else:
                pending = BOND_SYMBOLS[ch]
            pending_at = i
            i += 1
        elif ch == "(":
            if prev is None:
                raise UnbalancedParenthesis("branch opened before any atom", i)
            if pending is not None:
                raise SmilesSyntaxError("bond symbol before branch", pending_at)
            branch_stack.append((prev, i))
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise UnbalancedParenthesis("unmatched ')'", i)
            if pending is not None:
                raise SmilesSyntaxError("dangling bond at branch end", pending_at)
            prev, _ = branch_stack.pop()
            i += 1
        elif ch.isdigit() or ch == "%":
            if ch == "%":
                num_text = text[i + 1:i + 3]
                if len(num_text) != 2 or not num_text.isdigit():
                    raise UnsupportedToken("'%' must be followed by two digits", i)
                num, width = int(num_text), 3
            else:
                num, width = int(ch), 1
            if prev is None:
                raise UnbalancedRingClosure("ring bond before any atom", i)
            if num in rings:
                other, order, _ = rings.pop(num)
                if order is not None and pending is not None and order != pending:
                    raise SmilesSyntaxError("conflicting ring-closure bond orders", i)
                connect(other, prev, pending if pending is not None else order, i)
            else:
                rings[num] = (prev, pending, i)
            pending = None
            i += width
        elif ch == ".":
            if pending is not None:
                raise SmilesSyntaxError("dangling bond before '.'", pending_at)
            prev = None
            i += 1
        else:
            raise UnsupportedToken(f"unsupported character {ch!r}", i)

    if pending is not None:
        raise SmilesSyntaxError("dangling bond at end of input", pending_at)
    if branch_stack:
        raise UnbalancedParenthesis("unclosed '('", branch_stack[-1][1])
    if rings:
        first = min(pos for _, _, pos in rings.values())
        raise UnbalancedRingClosure("ring closure opened but never closed", first)
    if stereo_seen:
        warnings.warn(f"stereo markers ignored in {text!r}", stacklevel=2)

    bond_list = [BondRecord(a, b, order) for (a, b), order in bonds.items()]
    g = MolecularGraph(atoms=atoms, bonds=bond_list, source_smiles=text)
    return _finalize(g)


def _finalize(g: MolecularGraph) -> MolecularGraph:
    """Mark ring atoms, demote aromatic bridges to single, assign implicit H."""
    nxg = g.to_networkx()
    bridges = {frozenset(e) for e in nx.bridges(nxg)}
    ring_atoms = set()
    bonds = []
    for bd in g.bonds:
        in_ring = frozenset((bd.a, bd.b)) not in bridges
        if in_ring:
            ring_atoms.update((bd.a, bd.b))
        order = bd.order
        if order == AROMATIC_BOND and not in_ring:
            order = SINGLE
        bonds.append(BondRecord(bd.a, bd.b, order))
    g = MolecularGraph(atoms=g.atoms, bonds=bonds, source_smiles=g.source_smiles)
    nbrs = g.neighbors()
    atoms = []
    for i, at in enumerate(g.atoms):
        h = at.h_count if at.bracket else _implicit_h(at, nbrs[i])
        atoms.append(AtomRecord(at.element, at.aromatic, at.charge, i in ring_atoms, h, at.bracket))
    g.atoms = atoms
    return g


def _implicit_h(atom, nbrs):
    valences = VALENCES.get(atom.element)
    if valences is None:
        return 0
    n_arom = sum(1 for _, o in nbrs if o == AROMATIC_BOND)
    other = sum(BOND_ORDER[o] for _, o in nbrs if o != AROMATIC_BOND)
    used = n_arom + other
    if atom.aromatic:
        if atom.element in ("O", "S"):
            return max(0, int(valences[0] - used))
        # one pi bond is shared around the ring
        used += 1
    for v in valences:
        if v >= used:
            return int(v - used)
    return 0


# derived graphs and properties

def subgraph(g: MolecularGraph, keep) -> MolecularGraph:
    keep = sorted(keep)
    remap = {old: new for new, old in enumerate(keep)}
    atoms = [g.atoms[i] for i in keep]
    bonds = [BondRecord(remap[b.a], remap[b.b], b.order) for b in g.bonds
             if b.a in remap and b.b in remap]
    sub = MolecularGraph(atoms=[AtomRecord(a.element, a.aromatic, a.charge, False, a.h_count, a.bracket)
                                for a in atoms], bonds=bonds, source_smiles=g.source_smiles)
    return _finalize(sub)


def murcko_scaffold(g: MolecularGraph) -> MolecularGraph:
    """Ring systems plus linkers; side chains (non-ring leaf chains) are pruned."""
    alive = set(range(g.n_atoms))
    nbrs = [set(n for n, _ in row) for row in g.neighbors()]
    changed = True
    while changed:
        changed = False
        for i in sorted(alive):
            if g.atoms[i].in_ring:
                continue
            if len(nbrs[i] & alive) <= 1:
                alive.discard(i)
                changed = True
    if not any(g.atoms[i].in_ring for i in alive):
        return MolecularGraph(source_smiles=g.source_smiles)
    return subgraph(g, alive)


def molecular_weight(g: MolecularGraph) -> float:
    total = 0.0
    for at in g.atoms:
        total += ATOMIC_MASS[at.element] + at.h_count * ATOMIC_MASS["H"]
    return total


def connected_components(g: MolecularGraph):
    return [sorted(c) for c in nx.connected_components(g.to_networkx())]


def ring_count(g: MolecularGraph) -> int:
    if not g.atoms:
        return 0
    n_comp = nx.number_connected_components(g.to_networkx())
    return len(g.bonds) - len(g.atoms) + n_comp


def smallest_rings(g: MolecularGraph):
    if not g.bonds:
        return []
    return [sorted(c) for c in nx.minimum_cycle_basis(g.to_networkx())]


def _ring_is_aromatic(g, ring, nbrs, system):
    if all(g.atoms[i].aromatic for i in ring):
        return True
    if len(ring) not in (5, 6):
        return False
    pi = 0
    for i in ring:
        at = g.atoms[i]
        doubles = [(j, o) for j, o in nbrs[i] if o == DOUBLE]
        if any(j in system for j, _ in doubles):
            pi += 1
        elif doubles:
            return False  # exocyclic double bond breaks the cycle
        elif at.element in ("N", "O", "S") or at.aromatic:
            pi += 2
        else:
            return False
    return (pi - 2) % 4 == 0


def aromatic_ring_count(g: MolecularGraph) -> int:
    rings = smallest_rings(g)
    if not rings:
        return 0
    nbrs = g.neighbors()
    systems = []
    for r in rings:
        merged = set(r)
        rest = []
        for s in systems:
            if s & merged:
                merged |= s
            else:
                rest.append(s)
        systems = rest + [merged]
    count = 0
    for r in rings:
        system = next(s for s in systems if set(r) <= s)
        if _ring_is_aromatic(g, r, nbrs, system):
            count += 1
    return count


def structural_descriptors(g: MolecularGraph) -> StructuralDescriptors:
    heavy = [a for a in g.atoms if a.element != "H"]
    if not heavy:
        return StructuralDescriptors(0, 0, 0, 0.0, molecular_weight(g))
    hetero = sum(1 for a in heavy if a.element != "C")
    return StructuralDescriptors(
        heavy_atom_count=len(heavy),
        ring_count=ring_count(g),
        aromatic_ring_count=aromatic_ring_count(g),
        heteroatom_fraction=hetero / len(heavy),
        molecular_weight=molecular_weight(g),
    )


def min_feature_dim():
    return len(ELEMENT_CLASSES) + 1 + MAX_DEGREE_SLOT + 1 + 1 + 1 + 1


def atom_features(g: MolecularGraph, feature_dim: int) -> np.ndarray:
    """Per-atom rows: element one-hot | degree one-hot | aromatic | charge | H count | zero pad."""
    width = min_feature_dim()
    if feature_dim < width:
        raise FeatureDimTooSmall(f"feature_dim {feature_dim} < minimum {width}")
    n_el = len(ELEMENT_CLASSES) + 1
    out = np.zeros((g.n_atoms, feature_dim))
    for i, (at, deg) in enumerate(zip(g.atoms, g.degrees())):
        el = ELEMENT_CLASSES.index(at.element) if at.element in ELEMENT_CLASSES else n_el - 1
        out[i, el] = 1.0
        out[i, n_el + min(deg, MAX_DEGREE_SLOT)] = 1.0
        base = n_el + MAX_DEGREE_SLOT + 1
        out[i, base] = float(at.aromatic)
        out[i, base + 1] = float(at.charge)
        out[i, base + 2] = float(at.h_count)
    return out


# canonical key for scaffold grouping

def _atom_token(at):
    sym = at.element.lower() if at.aromatic else at.element
    return f"[{sym}H{at.h_count}{at.charge:+d}]"


_BOND_CHAR = {SINGLE: "-", DOUBLE: "=", TRIPLE: "#", AROMATIC_BOND: ":"}


def _refine(labels, nbrs):
    n_classes = len(set(labels))
    while True:
        sigs = [(labels[v], tuple(sorted((o, labels[u]) for u, o in nbrs[v]))) for v in range(len(labels))]
        order = {s: r for r, s in enumerate(sorted(set(sigs)))}
        new = [order[s] for s in sigs]
        k = len(order)
        labels = new
        if k == n_classes:
            return labels
        n_classes = k


def _dfs_string(g, nbrs, rank):
    n = g.n_atoms
    visited = [False] * n
    parts = []
    start_order = sorted(range(n), key=lambda v: rank[v])
    ring_ids = {}
    next_ring = [0]

    # first pass collects ring closures (back edges) in DFS order
    closures = {v: [] for v in range(n)}
    seen = [False] * n
    tree_edges = set()

    def pre(v, parent):
        seen[v] = True
        for u, o in sorted(nbrs[v], key=lambda e: rank[e[0]]):
            if u == parent:
                continue
            if seen[u]:
                key = frozenset((u, v))
                if key not in tree_edges and key not in ring_ids:
                    ring_ids[key] = next_ring[0]
                    next_ring[0] += 1
                    closures[u].append((key, o))
                    closures[v].append((key, o))
            else:
                tree_edges.add(frozenset((u, v)))
                pre(u, v)

    def emit(v, parent):
        visited[v] = True
        parts.append(_atom_token(g.atoms[v]))
        for key, o in sorted(closures[v], key=lambda c: ring_ids[c[0]]):
            parts.append(f"{_BOND_CHAR[o]}{ring_ids[key]};")
        children = [(u, o) for u, o in sorted(nbrs[v], key=lambda e: rank[e[0]])
                    if frozenset((u, v)) in tree_edges and u != parent and not visited[u]]
        for k, (u, o) in enumerate(children):
            last = k == len(children) - 1
            if not last:
                parts.append("(")
            parts.append(_BOND_CHAR[o])
            emit(u, v)
            if not last:
                parts.append(")")

    for s in start_order:
        if not seen[s]:
            pre(s, -1)
    for s in start_order:
        if not visited[s]:
            if parts:
                parts.append(".")
            emit(s, -1)
    return "".join(parts)


def canonical_key(g: MolecularGraph, max_leaves=20000) -> str:
    """Isomorphism-invariant string; the empty graph maps to ``""``."""
    if g.n_atoms == 0:
        return ""
    nbrs = g.neighbors()
    deg = g.degrees()
    inv = [(_atom_token(a), deg[i], a.in_ring) for i, a in enumerate(g.atoms)]
    order = {s: r for r, s in enumerate(sorted(set(inv)))}
    labels = _refine([order[s] for s in inv], nbrs)
    best = [None]
    leaves = [0]

    def search(lab):
        if leaves[0] >= max_leaves:
            return
        counts = {}
        for x in lab:
            counts[x] = counts.get(x, 0) + 1
        tied = [c for c, k in counts.items() if k > 1]
        if not tied:
            leaves[0] += 1
            s = _dfs_string(g, nbrs, lab)
            if best[0] is None or s < best[0]:
                best[0] = s
            return
        cell = min(tied)
        for v in [v for v in range(len(lab)) if lab[v] == cell]:
            ind = [2 * x + (0 if (x != cell or u == v) else 1) for u, x in enumerate(lab)]
            search(_refine(ind, nbrs))

    search(labels)
    return best[0]


def scaffold_key(smiles_or_graph) -> str:
    g = parse_smiles(smiles_or_graph) if isinstance(smiles_or_graph, str) else smiles_or_graph
    return canonical_key(murcko_scaffold(g))
