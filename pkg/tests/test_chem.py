import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synergraph import chem


def test_single_atom():
    g = chem.parse_smiles("C")
    assert g.n_atoms == 1 and not g.bonds
    assert g.atoms[0].element == "C" and g.atoms[0].h_count == 4


def test_ethanol_bonds():
    g = chem.parse_smiles("CCO")
    assert [a.element for a in g.atoms] == ["C", "C", "O"]
    assert [(b.a, b.b, b.order) for b in g.bonds] == [(0, 1, "single"), (1, 2, "single")]


def test_temozolomide_composition():
    g = chem.parse_smiles("CN1C(=O)N2C=NC(=C2N=N1)C(=O)N")
    counts = {}
    for a in g.atoms:
        counts[a.element] = counts.get(a.element, 0) + 1
    assert counts == {"C": 6, "N": 6, "O": 2}


@pytest.mark.parametrize("smiles,expected", [
    ("C1CC", chem.UnbalancedRingClosure),
    ("CC(C", chem.UnbalancedParenthesis),
    ("CC)C", chem.UnbalancedParenthesis),
    ("CXC", chem.UnsupportedToken),
    ("[C", chem.UnsupportedToken),
    ("", chem.SmilesSyntaxError),
])
def test_malformed(smiles, expected):
    with pytest.raises(expected):
        chem.parse_smiles(smiles)


def test_bracket_charge_and_hydrogens():
    g = chem.parse_smiles("C[N+](=O)[O-]")
    assert [a.charge for a in g.atoms] == [0, 1, 0, -1]
    assert chem.parse_smiles("[NH4+]").atoms[0].h_count == 4


def test_two_digit_ring_closure():
    a = chem.parse_smiles("C%12CCCCC%12")
    b = chem.parse_smiles("C1CCCCC1")
    assert a.same_structure(b)


def test_stereo_marks_ignored_with_warning():
    with pytest.warns(UserWarning):
        g = chem.parse_smiles("F/C=C/F")
    assert g.same_structure(chem.parse_smiles("FC=CF"))


def test_scaffolds():
    assert chem.murcko_scaffold(chem.parse_smiles("CCO")).n_atoms == 0
    benz = chem.parse_smiles("c1ccccc1")
    assert chem.murcko_scaffold(benz).same_structure(benz)
    s = chem.murcko_scaffold(chem.parse_smiles("c1ccccc1CC(=O)O"))
    assert s.n_atoms == 6 and all(a.aromatic for a in s.atoms)
    assert chem.scaffold_key("CCO") == ""


def test_scaffold_key_ignores_atom_order():
    assert chem.scaffold_key("c1ccccc1CCC1CC1") == chem.scaffold_key("C1CC1CCc1ccccc1")
    assert chem.scaffold_key("c1ccccc1") != chem.scaffold_key("C1CCCCC1")


def test_molecular_weight():
    assert chem.molecular_weight(chem.MolecularGraph()) == 0.0
    assert chem.molecular_weight(chem.parse_smiles("C")) == pytest.approx(16.043, abs=0.01)
    assert chem.molecular_weight(chem.parse_smiles("CCO")) == pytest.approx(46.069, abs=0.01)


def test_atom_features():
    f = chem.atom_features(chem.parse_smiles("C"), 24)
    n_el = len(chem.ELEMENT_CLASSES) + 1
    assert f.shape == (1, 24)
    assert f[0, :n_el].sum() == 1 and f[0, chem.ELEMENT_CLASSES.index("C")] == 1
    f = chem.atom_features(chem.parse_smiles("CCO"), 24)
    deg = f[:, n_el:n_el + chem.MAX_DEGREE_SLOT + 1]
    assert list(deg.argmax(axis=1)) == [1, 2, 1]
    with pytest.raises(chem.FeatureDimTooSmall):
        chem.atom_features(chem.parse_smiles("C"), chem.min_feature_dim() - 1)


def test_descriptors():
    d = chem.structural_descriptors(chem.parse_smiles("CCO"))
    assert (d.heavy_atom_count, d.ring_count, d.aromatic_ring_count) == (3, 0, 0)
    assert d.heteroatom_fraction == pytest.approx(1 / 3)
    d = chem.structural_descriptors(chem.parse_smiles("c1ccccc1"))
    assert (d.heavy_atom_count, d.ring_count, d.aromatic_ring_count, d.heteroatom_fraction) == (6, 1, 1, 0.0)
    d = chem.structural_descriptors(chem.MolecularGraph())
    assert d.as_dict() == {"heavy_atom_count": 0, "ring_count": 0, "aromatic_ring_count": 0,
                           "heteroatom_fraction": 0.0, "molecular_weight": 0.0}


def test_kekule_and_aromatic_benzene_agree():
    a = chem.structural_descriptors(chem.parse_smiles("C1=CC=CC=C1"))
    assert a.aromatic_ring_count == 1


# grammar fuzzing

ATOMS = ["C", "N", "O", "S", "c", "Cl", "F", "[NH3+]", "[O-]", "P", "Br"]


@st.composite
def smiles_strings(draw):
    """Random strings from the supported grammar: chains, branches and paired ring digits."""
    n = draw(st.integers(1, 12))
    parts, open_rings = [], []
    for i in range(n):
        if i and draw(st.booleans()) and draw(st.booleans()):
            parts.append(draw(st.sampled_from(["-", "="])))
        parts.append(draw(st.sampled_from(ATOMS[:5] + ["C", "C"])))
        if i and draw(st.integers(0, 4)) == 0:
            parts.append("(" + draw(st.sampled_from(ATOMS)) + ")")
        if draw(st.integers(0, 5)) == 0 and len(open_rings) < 3:
            d = len(open_rings) + 1
            open_rings.append(d)
            parts.append(str(d))
        elif open_rings and draw(st.integers(0, 2)) == 0:
            parts.append(str(open_rings.pop()))
    while open_rings:
        parts.append("C" + str(open_rings.pop()))
    return "".join(parts)


def _check_invariants(g):
    seen = set()
    for b in g.bonds:
        assert 0 <= b.a < g.n_atoms and 0 <= b.b < g.n_atoms and b.a != b.b
        key = (min(b.a, b.b), max(b.a, b.b))
        assert key not in seen
        seen.add(key)
        if b.order == chem.AROMATIC_BOND:
            assert g.atoms[b.a].aromatic and g.atoms[b.b].aromatic


@settings(max_examples=150, deadline=None)
@given(smiles_strings())
def test_grammar_fuzz(smiles):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            g = chem.parse_smiles(smiles)
        except chem.SmilesSyntaxError:
            return  # e.g. a ring digit reused on the atom that opened it
    _check_invariants(g)
    d = chem.structural_descriptors(g)
    assert min(d.heavy_atom_count, d.ring_count, d.aromatic_ring_count) >= 0
    assert d.molecular_weight > 0
    assert g.same_structure(chem.parse_smiles(smiles))
    s = chem.murcko_scaffold(g)
    assert chem.murcko_scaffold(s).same_structure(s)


@settings(max_examples=50, deadline=None)
@given(smiles_strings(), smiles_strings())
def test_weight_additive_over_components(a, b):
    try:
        ga, gb, gab = chem.parse_smiles(a), chem.parse_smiles(b), chem.parse_smiles(a + "." + b)
    except chem.SmilesSyntaxError:
        return
    assert chem.molecular_weight(gab) == pytest.approx(chem.molecular_weight(ga) + chem.molecular_weight(gb))


def test_edge_arrays_are_symmetric():
    src, dst, kinds = chem.parse_smiles("CC=O").edge_arrays()
    assert np.array_equal(src, [0, 1, 1, 2]) and np.array_equal(dst, [1, 0, 2, 1])
    assert list(kinds) == [0, 0, 1, 1]
