"""Deterministic synthetic corpus: drugs, cell lines, triplets, targets, knowledge."""
from __future__ import annotations

import csv
import json
from pathlib import Path


from . import chem
from .dataset import CellLineProfile, Dataset, DrugRecord, SynergySample, TargetEmbedding, filter_and_label
from .diffcore import rng_stream

# (id, SMILES, targets, pharmacological class or None when the knowledge base has no entry)
DRUGS = [
    ("Temozolomide", "CN1C(=O)N2C=NC(=C2N=N1)C(=O)N", ["MGMT"], "an imidazotetrazine alkylating agent"),
    ("Vismodegib", "CS(=O)(=O)C1=CC(=C(C=C1)C(=O)NC2=CC(=C(C=C2)Cl)C3=CC=CC=N3)Cl", ["SMO"],
     "a hedgehog pathway inhibitor that binds smoothened"),
    ("Fingolimod", "CCCCCCCCC1=CC=C(C=C1)CCC(CO)(CO)N", ["S1PR1"], "a sphingosine 1-phosphate receptor modulator"),
    ("Decitabine", "C1C(C(OC1N2C=NC(=NC2=O)N)CO)O", ["DNMT1"], "a hypomethylating nucleoside analogue"),
    ("Nilutamide", "CC1(C(=O)NC(=O)N1C2=CC(=C(C=C2)[N+](=O)[O-])C(F)(F)F)C", ["AR"],
     "a nonsteroidal androgen receptor antagonist"),
    ("Fluorouracil", "C1=C(C(=O)NC(=O)N1)F", ["TYMS"], "a pyrimidine antimetabolite"),
    ("Gemcitabine", "C1=CN(C(=O)N=C1N)C2C(C(C(O2)CO)O)(F)F", ["RRM1", "POLA1"], "a deoxycytidine analogue"),
    ("Cytarabine", "C1=CN(C(=O)N=C1N)C2C(C(C(O2)CO)O)O", ["POLA1"], "an arabinoside antimetabolite"),
    ("Azacitidine", "C1=NC(=O)N(C(=N1)N)C2C(C(C(O2)CO)O)O", ["DNMT1"], "a hypomethylating cytidine analogue"),
    ("Methotrexate", "CN(CC1=CN=C2C(=N1)C(=NC(=N2)N)N)C3=CC=C(C=C3)C(=O)NC(CCC(=O)O)C(=O)O", ["DHFR"],
     "a folate antagonist"),
    ("Erlotinib", "COCCOC1=C(C=C2C(=C1)C(=NC=N2)NC3=CC=CC(=C3)C#C)OCCOC", ["EGFR"],
     "an epidermal growth factor receptor kinase inhibitor"),
    ("Gefitinib", "COC1=C(C=C2C(=C1)N=CN=C2NC3=CC(=C(C=C3)F)Cl)OCCCN4CCOCC4", ["EGFR"],
     "an epidermal growth factor receptor kinase inhibitor"),
    ("Sorafenib", "CNC(=O)C1=NC=CC(=C1)OC2=CC=C(C=C2)NC(=O)NC3=CC(=C(C=C3)Cl)C(F)(F)F", ["BRAF", "KDR"],
     "a multikinase inhibitor"),
    ("Imatinib", "CC1=C(C=C(C=C1)NC(=O)C2=CC=C(C=C2)CN3CCN(CC3)C)NC4=NC=CC(=N4)C5=CN=CC=C5", ["ABL1", "KIT"],
     "a BCR-ABL tyrosine kinase inhibitor"),
    ("Tamoxifen", "CCC(=C(C1=CC=CC=C1)C2=CC=C(C=C2)OCCN(C)C)C3=CC=CC=C3", ["ESR1"],
     "a selective estrogen receptor modulator"),
    ("Bicalutamide", "CC(CS(=O)(=O)C1=CC=C(C=C1)F)(C(=O)NC2=CC(=C(C=C2)C#N)C(F)(F)F)O", ["AR"],
     "a nonsteroidal antiandrogen"),
    ("Flutamide", "CC(C)C(=O)NC1=CC(=C(C=C1)[N+](=O)[O-])C(F)(F)F", ["AR"], "a nonsteroidal antiandrogen"),
    ("Vorinostat", "C1=CC=C(C=C1)NC(=O)CCCCCCC(=O)NO", ["HDAC1"], "a histone deacetylase inhibitor"),
    ("Chlorambucil", "C1=CC(=CC=C1CCCC(=O)O)N(CCCl)CCCl", [], "a nitrogen mustard alkylating agent"),
    ("Melphalan", "C1=CC(=CC=C1CC(C(=O)O)N)N(CCCl)CCCl", [], "a phenylalanine mustard alkylating agent"),
    ("Mitotane", "ClC(Cl)C(c1ccccc1Cl)c1ccc(Cl)cc1", [], "an adrenolytic agent"),
    ("Cyclophosphamide", "C1CNP(=O)(OC1)N(CCCl)CCCl", [], "an oxazaphosphorine prodrug alkylating agent"),
    ("Thiotepa", "C1CN1P(=S)(N2CC2)N3CC3", [], None),
    ("Metformin", "CN(C)C(=N)N=C(N)N", ["PRKAA1"], "a biguanide"),
    ("Hydroxyurea", "C(=O)(N)NO", ["RRM1"], "a ribonucleotide reductase inhibitor"),
    ("Carmustine", "C(CCl)NC(=O)N(CCCl)N=O", [], "a nitrosourea alkylating agent"),
    ("Busulfan", "CS(=O)(=O)OCCCCOS(=O)(=O)C", [], None),
]

CELLS = [
    ("A549", "A549 is a human lung adenocarcinoma epithelial cell line."),
    ("NCI-H226", "NCI-H226 is a human lung squamous cell carcinoma line."),
    ("MCF7", "MCF7 is an estrogen receptor positive breast adenocarcinoma line."),
    ("HT29", "HT29 is a human colorectal adenocarcinoma line."),
]

FILES = ("triplets.csv", "expression.csv", "drugs.csv", "targets.csv", "cell_descriptions.csv", "knowledge.jsonl")


def _r(x, digits=4):
    return repr(round(float(x), digits))


def target_ids():
    return sorted({t for _, _, ts, _ in DRUGS for t in ts})


def generate(seed=0, n_genes=908, n_triplets=200, target_dim=16):
    """Build the corpus in memory as rows ready for writing."""
    rng = rng_stream(seed, "fixture")
    genes = [f"G{i:04d}" for i in range(n_genes)]
    cell_latent = rng.normal(size=len(CELLS))
    expr = rng.normal(size=(len(CELLS), n_genes))
    expr[:, 0] = cell_latent  # first gene carries the cell effect
    tids = target_ids()
    tvec = rng.normal(size=(len(tids), target_dim))
    drug_latent = rng.normal(size=len(DRUGS))
    names = [d[0] for d in DRUGS]
    triplets = []
    for _ in range(n_triplets):
        a, b = rng.choice(len(DRUGS), size=2, replace=False)
        c = int(rng.integers(len(CELLS)))
        score = 14.0 * (drug_latent[a] + drug_latent[b]) * (1.0 + 0.5 * cell_latent[c]) + rng.normal(scale=3.0)
        triplets.append((names[a], names[b], CELLS[c][0], "bliss", round(float(score), 2)))
    knowledge = {n: f"{n} is {cls}." for n, _, _, cls in DRUGS if cls is not None}
    return {
        "genes": genes, "expression": expr, "targets": dict(zip(tids, tvec)),
        "triplets": triplets, "knowledge": knowledge,
    }


def write_fixtures(out_dir, seed=0, n_genes=908, n_triplets=200, target_dim=16):
    """Write the six corpus files; identical arguments give byte-identical files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate(seed, n_genes, n_triplets, target_dim)
    with open(out / "expression.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_line_id"] + data["genes"])
        for (cid, _), row in zip(CELLS, data["expression"]):
            w.writerow([cid] + [_r(v) for v in row])
    with open(out / "targets.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target_id"] + [f"f{i}" for i in range(target_dim)])
        for tid, vec in data["targets"].items():
            w.writerow([tid] + [_r(v) for v in vec])
    with open(out / "drugs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["drug_id", "smiles", "target_ids"])
        for did, smi, ts, _ in DRUGS:
            w.writerow([did, smi, ";".join(ts)])
    with open(out / "triplets.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["drug_a_id", "drug_b_id", "cell_line_id", "scheme", "score"])
        for a, b, c, s, v in data["triplets"]:
            w.writerow([a, b, c, s, repr(v)])
    with open(out / "cell_descriptions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_line_id", "description"])
        w.writerows(CELLS)
    with open(out / "knowledge.jsonl", "w") as fh:
        for did in sorted(data["knowledge"]):
            fh.write(json.dumps({"drug_id": did, "description": data["knowledge"][did]}) + "\n")
    return [out / f for f in FILES]


def in_memory(seed=0, n_genes=8, n_triplets=200, target_dim=4):
    """The same corpus as ``write_fixtures`` built directly as a Dataset (unfiltered)."""
    data = generate(seed, n_genes, n_triplets, target_dim)
    profiles = {cid: CellLineProfile(cid, data["expression"][i].round(4), desc)
                for i, (cid, desc) in enumerate(CELLS)}
    targets = {t: TargetEmbedding(t, v.round(4)) for t, v in data["targets"].items()}
    drugs = {did: DrugRecord(did, smi, list(ts), data["knowledge"].get(did), chem.parse_smiles(smi))
             for did, smi, ts, _ in DRUGS}
    samples = [SynergySample(a, b, c, s, v) for a, b, c, s, v in data["triplets"]]
    return Dataset(samples, profiles, drugs, targets, data["genes"]), data["knowledge"]


def grad_fixture(seed=0):
    """Four labelled samples over a small gene panel, used by gradient checks."""
    ds, knowledge = in_memory(seed, n_genes=8, n_triplets=60, target_dim=4)
    labelled = filter_and_label(ds.samples, 10.0)
    picks, seen = [], set()
    for s in labelled:
        if s.label in seen and len(picks) < 2:
            continue
        picks.append(s)
        seen.add(s.label)
        if len(picks) == 4:
            break
    ds.samples = picks
    return ds, knowledge
