"""Ingestion, filtering, labelling and out-of-distribution splitting of synergy triplets."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import chem
from .diffcore import rng_stream

log = logging.getLogger(__name__)

SCHEMES = ("loewe", "bliss", "hsa", "zip")
SYNERGISTIC, ANTAGONISTIC = 1, 0
LABEL_NAMES = {SYNERGISTIC: "synergistic", ANTAGONISTIC: "antagonistic"}

TRIPLET_COLUMNS = ["drug_a_id", "drug_b_id", "cell_line_id", "scheme", "score"]
DRUG_COLUMNS = ["drug_id", "smiles", "target_ids"]


class SchemaError(ValueError):
    pass


class DanglingReference(KeyError):
    def __str__(self):
        return str(self.args[0])


class EmptyPartition(ValueError):
    pass


class NoOodSamples(ValueError):
    pass


@dataclass(frozen=True)
class SynergySample:
    drug_a_id: str
    drug_b_id: str
    cell_line_id: str
    scheme: str
    score: float
    label: int | None = None


@dataclass
class CellLineProfile:
    cell_line_id: str
    expression: np.ndarray
    description: str = ""


@dataclass
class DrugRecord:
    drug_id: str
    smiles: str
    target_ids: list = field(default_factory=list)
    knowledge_text: str | None = None
    graph: chem.MolecularGraph | None = None


@dataclass
class TargetEmbedding:
    target_id: str
    vector: np.ndarray


@dataclass
class SplitPartition:
    criterion: str
    threshold: float
    id_drugs: frozenset
    ood_drugs: frozenset
    train: list = field(default_factory=list)
    valid: list = field(default_factory=list)
    test: list = field(default_factory=list)


@dataclass
class Dataset:
    samples: list
    profiles: dict
    drugs: dict
    targets: dict
    gene_names: list = field(default_factory=list)

    @property
    def n_genes(self):
        return len(self.gene_names)

    @property
    def target_dim(self):
        if not self.targets:
            return 0
        return len(next(iter(self.targets.values())).vector)


# ingestion

def _read_csv(path):
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaError(f"{path}: missing header row")
    return rows[0], rows[1:]


def _require_header(path, header, expected):
    if [h.strip() for h in header] != expected:
        raise SchemaError(f"{path}: expected columns {expected}, got {header}")


def _float(path, line, text):
    try:
        val = float(text)
    except ValueError as exc:
        raise SchemaError(f"{path}:{line}: not a number: {text!r}") from exc
    if not math.isfinite(val):
        raise SchemaError(f"{path}:{line}: non-finite value {text!r}")
    return val


def read_expression(path):
    header, rows = _read_csv(path)
    if not header or header[0].strip() != "cell_line_id":
        raise SchemaError(f"{path}: first column must be cell_line_id")
    genes = [h.strip() for h in header[1:]]
    profiles = {}
    for n, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise SchemaError(f"{path}:{n}: expected {len(header)} columns, got {len(row)}")
        cid = row[0].strip()
        if cid in profiles:
            raise SchemaError(f"{path}:{n}: duplicate cell line {cid!r}")
        vec = np.array([_float(path, n, v) for v in row[1:]])
        profiles[cid] = CellLineProfile(cid, vec)
    return profiles, genes


def read_targets(path):
    header, rows = _read_csv(path)
    if not header or header[0].strip() != "target_id":
        raise SchemaError(f"{path}: first column must be target_id")
    out = {}
    for n, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise SchemaError(f"{path}:{n}: expected {len(header)} columns, got {len(row)}")
        out[row[0].strip()] = TargetEmbedding(row[0].strip(), np.array([_float(path, n, v) for v in row[1:]]))
    return out


def read_drugs(path, targets=None):
    header, rows = _read_csv(path)
    _require_header(path, header, DRUG_COLUMNS)
    drugs = {}
    for n, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise SchemaError(f"{path}:{n}: expected 3 columns, got {len(row)}")
        did, smiles, tids = (c.strip() for c in row)
        try:
            graph = chem.parse_smiles(smiles)
        except chem.SmilesError as exc:
            msg = str(exc).rsplit(" at offset ", 1)[0]
            raise type(exc)(f"{path}:{n} ({did}): {msg}", exc.offset) from None
        ids = [t for t in tids.split(";") if t]
        if targets is not None:
            unknown = [t for t in ids if t not in targets]
            if unknown:
                log.warning("%s:%d: dropping unknown targets %s for %s", path, n, unknown, did)
                ids = [t for t in ids if t in targets]
        drugs[did] = DrugRecord(did, smiles, ids, graph=graph)
    return drugs


def read_triplets(path):
    header, rows = _read_csv(path)
    _require_header(path, header, TRIPLET_COLUMNS)
    samples = []
    for n, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise SchemaError(f"{path}:{n}: expected 5 columns, got {len(row)}")
        a, b, c, scheme, score = (x.strip() for x in row)
        scheme = scheme.lower()
        if scheme not in SCHEMES:
            raise SchemaError(f"{path}:{n}: unknown scoring scheme {scheme!r}")
        samples.append(SynergySample(a, b, c, scheme, _float(path, n, score)))
    return samples


def read_cell_descriptions(path):
    header, rows = _read_csv(path)
    _require_header(path, header, ["cell_line_id", "description"])
    return {r[0].strip(): r[1] for r in rows if r}


def ingest(triplet_file, expression_file, drug_file, target_file, description_file=None):
    """Load and cross-check the four input tables (plus optional cell descriptions)."""
    profiles, genes = read_expression(expression_file)
    targets = read_targets(target_file)
    drugs = read_drugs(drug_file, targets)
    samples = read_triplets(triplet_file)
    for n, s in enumerate(samples, start=2):
        if s.cell_line_id not in profiles:
            raise DanglingReference(f"{triplet_file}:{n}: unknown cell line {s.cell_line_id!r}")
        for d in (s.drug_a_id, s.drug_b_id):
            if d not in drugs:
                raise DanglingReference(f"{triplet_file}:{n}: unknown drug {d!r}")
    if description_file is not None and Path(description_file).exists():
        for cid, desc in read_cell_descriptions(description_file).items():
            if cid in profiles:
                profiles[cid].description = desc
    return Dataset(samples, profiles, drugs, targets, genes)


# filtering and splitting

def label_for(score, tau):
    if score >= tau:
        return SYNERGISTIC
    if score <= -tau:
        return ANTAGONISTIC
    return None


def filter_and_label(samples, tau=10.0):
    """Keep samples with |score| >= tau (inclusive) and attach the sign label."""
    if tau <= 0:
        raise ValueError("threshold must be positive")
    out = []
    for s in samples:
        lab = label_for(s.score, tau)
        if lab is not None:
            out.append(replace(s, label=lab))
    return out


def scaffold_groups(drugs):
    groups = {}
    for did in sorted(drugs):
        rec = drugs[did]
        g = rec.graph if rec.graph is not None else chem.parse_smiles(rec.smiles)
        groups.setdefault(chem.scaffold_key(g), []).append(did)
    return groups


def ood_split(drugs, criterion, theta):
    """Partition drugs into in-distribution / out-of-distribution sets."""
    if not math.isfinite(theta):
        raise ValueError("threshold must be finite")
    id_drugs = set()
    if criterion == "scaffold":
        for members in scaffold_groups(drugs).values():
            if len(members) > theta:
                id_drugs.update(members)
    elif criterion == "size":
        for did, rec in drugs.items():
            g = rec.graph if rec.graph is not None else chem.parse_smiles(rec.smiles)
            if chem.molecular_weight(g) > theta:
                id_drugs.add(did)
    else:
        raise ValueError(f"unknown split criterion {criterion!r}")
    ood = set(drugs) - id_drugs
    if not id_drugs or not ood:
        side = "in-distribution" if not id_drugs else "out-of-distribution"
        raise EmptyPartition(f"{criterion} threshold {theta} leaves the {side} side empty")
    return SplitPartition(criterion, theta, frozenset(id_drugs), frozenset(ood))


def assemble_splits(samples, partition, ratio=(4, 1, 1), seed=42):
    """Fill train/valid/test index lists.

    Train holds samples whose drugs are both in-distribution; every sample
    touching an out-of-distribution drug is shuffled with the ``shuffle``
    sub-stream of ``seed`` and divided between valid and test in
    ``ratio[1]:ratio[2]`` (valid gets the floor).
    """
    if not partition.id_drugs or not partition.ood_drugs:
        raise EmptyPartition("partition has an empty side")
    known = partition.id_drugs | partition.ood_drugs
    train, rest = [], []
    for i, s in enumerate(samples):
        a, b = s.drug_a_id, s.drug_b_id
        if a not in known or b not in known:
            continue
        if a in partition.id_drugs and b in partition.id_drugs:
            train.append(i)
        else:
            rest.append(i)
    if not rest:
        raise NoOodSamples("no sample involves an out-of-distribution drug")
    rng = rng_stream(seed, "shuffle")
    order = list(np.asarray(rest)[rng.permutation(len(rest))])
    r_valid, r_test = ratio[1], ratio[2]
    n_valid = (len(rest) * r_valid) // (r_valid + r_test)
    valid = sorted(int(i) for i in order[:n_valid])
    test = sorted(int(i) for i in order[n_valid:])
    return replace(partition, train=train, valid=valid, test=test)


def check_partition(samples, partition):
    """Raise AssertionError if any split breaks the in/out-of-distribution protocol."""
    assert not (partition.id_drugs & partition.ood_drugs)
    for i in partition.train:
        s = samples[i]
        assert s.drug_a_id in partition.id_drugs and s.drug_b_id in partition.id_drugs, i
    for i in list(partition.valid) + list(partition.test):
        s = samples[i]
        assert s.drug_a_id in partition.ood_drugs or s.drug_b_id in partition.ood_drugs, i


REPORT_COLUMNS = ["dataset", "criterion", "theta", "n_id", "n_ood", "n_train", "n_valid", "n_test"]


def _fmt_theta(theta):
    theta = float(theta)
    return str(int(theta)) if theta.is_integer() else f"{theta:g}"


def split_report_row(partition, dataset="fixture"):
    return {
        "dataset": dataset,
        "criterion": partition.criterion,
        "theta": _fmt_theta(partition.threshold),
        "n_id": len(partition.id_drugs),
        "n_ood": len(partition.ood_drugs),
        "n_train": len(partition.train),
        "n_valid": len(partition.valid),
        "n_test": len(partition.test),
    }


def split_report(partitions, dataset="fixture", fmt="text"):
    """Render one or more partitions in the dataset statistics table layout."""
    if isinstance(partitions, SplitPartition) or not isinstance(partitions, (list, tuple)):
        partitions = [partitions]
    rows = [split_report_row(p, dataset) for p in partitions]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    headers = ["Dataset", "Criterion", "theta", "D_ID", "D_OOD", "D_train", "D_valid", "D_test"]
    table = [headers] + [[str(r[c]) for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in table]
    return "\n".join(lines) + "\n"
