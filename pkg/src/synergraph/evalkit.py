"""Classification/regression metrics, routing-structure correlations and SMILES attention."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .diffcore import Tensor, no_grad


class LengthMismatch(ValueError):
    pass


class SingleClassAUC(ValueError):
    pass


class ZeroVariance(ValueError):
    pass


@dataclass
class MetricReport:
    acc: float
    auc: float | None
    mae: float
    rmse: float
    n: int
    parse_failure_count: int = 0

    def __post_init__(self):
        if self.mae < 0 or self.rmse < self.mae - 1e-12:
            raise ValueError("metric report violates 0 <= MAE <= RMSE")

    def as_rows(self):
        auc = "undefined" if self.auc is None else repr(self.auc)
        return [("n", str(self.n)), ("acc", repr(self.acc)), ("auc", auc), ("mae", repr(self.mae)),
                ("rmse", repr(self.rmse)), ("parse_failures", str(self.parse_failure_count))]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerows(self.as_rows())
        return buf.getvalue()

    def to_text(self):
        rows = self.as_rows()
        width = max(len(k) for k, _ in rows)
        lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
        if self.parse_failure_count:
            lines.append("note: unparsable answers count as |target score| absolute error")
        return "\n".join(lines) + "\n"


def _check(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise LengthMismatch("empty input")
    return a, b


def accuracy(probs, labels, threshold=0.5):
    probs, labels = _check(probs, labels)
    return float(np.mean((probs >= threshold).astype(int) == labels.astype(int)))


def auc(scores, labels):
    """Probability a random positive outranks a random negative (ties count half)."""
    scores, labels = _check(scores, labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassAUC("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def mae(pred, target):
    pred, target = _check(pred, target)
    return float(np.mean(np.abs(pred - target)))


def rmse(pred, target):
    pred, target = _check(pred, target)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def spearman(xs, ys):
    """Pearson correlation of average ranks."""
    xs, ys = _check(xs, ys)
    rx, ry = rankdata(xs), rankdata(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    den = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    if den == 0.0:
        raise ZeroVariance("constant input; rank correlation undefined")
    return float(np.clip(np.dot(rx, ry) / den, -1.0, 1.0))


def compute_metrics(probs, labels, pred_scores, true_scores, parsed=None):
    """Metric report; entries with ``parsed`` False get |true score| absolute error."""
    probs, labels = _check(probs, labels)
    pred_scores, true_scores = _check(pred_scores, true_scores)
    _check(probs, pred_scores)
    failures = 0
    if parsed is not None:
        parsed = np.asarray(parsed, dtype=bool)
        failures = int((~parsed).sum())
        pred_scores = np.where(parsed, pred_scores, 0.0)
    try:
        a = auc(probs, labels)
    except SingleClassAUC:
        a = None
    return MetricReport(accuracy(probs, labels), a, mae(pred_scores, true_scores),
                        rmse(pred_scores, true_scores), int(len(labels)), failures)


# routing structure analysis

def read_routing_csv(text):
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append((int(r["sample_id"]), r["drug_id"], int(r["layer"]), r["kind"], float(r["alpha"])))
    return rows


def routing_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "drug_id", "layer", "kind", "alpha"])
    for sid, drug, layer, kind, a in rows:
        w.writerow([sid, drug, layer, kind, repr(a)])
    return buf.getvalue()


def _occurrence_weights(rows):
    """Average alpha over layers for each (sample, drug occurrence, kind)."""
    acc = {}
    for sid, drug, _layer, kind, a in rows:
        acc.setdefault((sid, drug), {}).setdefault(kind, []).append(a)
    return {k: {kind: float(np.mean(v)) for kind, v in d.items()} for k, d in acc.items()}


@dataclass
class CorrelationReport:
    kinds: list
    descriptors: list
    rho: dict            # (kind, descriptor) -> float or None when undefined
    preference: dict     # descriptor -> {group label -> {kind -> centered mean}}

    def matrix(self):
        return np.array([[np.nan if self.rho[(k, d)] is None else self.rho[(k, d)]
                          for d in self.descriptors] for k in self.kinds])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind"] + list(self.descriptors))
        for k in self.kinds:
            w.writerow([k] + ["undefined" if self.rho[(k, d)] is None else repr(self.rho[(k, d)])
                              for d in self.descriptors])
        return buf.getvalue()


def _groups(values, n_bins):
    """Equal-count bins over the distinct values of a descriptor."""
    uniq = np.unique(values)
    if len(uniq) <= n_bins:
        return {v: str(int(v) if float(v).is_integer() else v) for v in uniq}
    edges = np.quantile(uniq, np.linspace(0, 1, n_bins + 1))
    out = {}
    for v in uniq:
        b = min(int(np.searchsorted(edges, v, side="right")) - 1, n_bins - 1)
        out[v] = f"{edges[b]:g}-{edges[b + 1]:g}"
    return out


def routing_structure_analysis(rows, descriptor_table, n_bins=4):
    """Spearman correlation of every operator weight with every structural descriptor.

    ``rows`` is the routing export (sample_id, drug_id, layer, kind, alpha);
    ``descriptor_table`` maps drug_id to a descriptor mapping.  Also returns a
    within-group preference table: the mean weight of each kind in each
    descriptor group minus that group's mean over kinds.
    """
    occ = _occurrence_weights(rows)
    keys = sorted(occ)
    kinds = sorted({k for d in occ.values() for k in d})
    first = descriptor_table[keys[0][1]]
    first = first.as_dict() if hasattr(first, "as_dict") else first
    descs = list(first)
    table = {}
    for _, drug in keys:
        d = descriptor_table[drug]
        table[drug] = d.as_dict() if hasattr(d, "as_dict") else d
    rho, pref = {}, {}
    for name in descs:
        xs = np.array([float(table[drug][name]) for _, drug in keys])
        for kind in kinds:
            ys = np.array([occ[key][kind] for key in keys])
            try:
                rho[(kind, name)] = spearman(ys, xs)
            except ZeroVariance:
                rho[(kind, name)] = None
        labels = _groups(xs, n_bins)
        groups = {}
        for key, x in zip(keys, xs):
            groups.setdefault(labels[x], []).append(key)
        pref[name] = {}
        for g, members in groups.items():
            means = {kind: float(np.mean([occ[m][kind] for m in members])) for kind in kinds}
            centre = float(np.mean(list(means.values())))
            pref[name][g] = {kind: means[kind] - centre for kind in kinds}
    return CorrelationReport(kinds, descs, rho, pref)


# SMILES attention

@dataclass
class SmilesAttention:
    smiles: str
    scores: np.ndarray      # per character, sums to 1
    raw_total: float        # attention mass on SMILES positions before renormalizing
    window: tuple           # (start, end) character span of the top fragment
    fragment: str
    fraction: float

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["char_index", "char", "score"])
        for i, (ch, s) in enumerate(zip(self.smiles, self.scores)):
            w.writerow([i, ch, repr(float(s))])
        return buf.getvalue()


def project_smiles_attention(weights, smiles, window=5):
    """Renormalize per-position attention over a SMILES span and find its top window.

    ``weights`` holds one attention value per SMILES byte (ASCII, so bytes
    and characters coincide).
    """
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != len(smiles):
        raise LengthMismatch("attention span and SMILES length differ")
    total = float(weights.sum())
    scores = weights / total if total > 0 else np.full(len(weights), 1.0 / len(weights))
    w = max(1, min(window, len(smiles)))
    sums = np.convolve(scores, np.ones(w), mode="valid")
    start = int(np.argmax(sums))
    frac = float(sums[start] / scores.sum())
    return SmilesAttention(smiles, scores, total, (start, start + w), smiles[start:start + w], frac)


def smiles_attention(model, sample, which="SMILES_1", window=5, question="P1"):
    """Final-layer attention (mean over heads) from the last prompt position onto a SMILES span."""
    prompt = model.prompt("task", sample, question)
    n_rows = model.cfg.n_prefix
    with no_grad():
        out = model.forward([sample])
        rows = {k: v.data for k, v in model.slot_rows(out, 0).items()}
        seq = model.lm.embed(prompt.segments, {k: Tensor(v) for k, v in rows.items()})
        _, _, attn = model.lm.hidden([seq], return_attn=True)
    last = seq.shape[0] - 1
    a = attn[-1][0, :, last, :].mean(axis=0)
    lo, hi = prompt.position_of(which, n_rows)
    smiles = model.data.drugs[sample.drug_a_id if which == "SMILES_1" else sample.drug_b_id].smiles
    return project_smiles_attention(a[lo:hi], smiles, window)


def top_attended_targets(target_rows):
    """Highest-logit target per (sample, drug) from ``SynergyModel.target_scores`` rows."""
    best = {}
    for sid, drug, tid, logit in target_rows:
        key = (sid, drug)
        if key not in best or logit > best[key][1]:
            best[key] = (tid, logit)
    return {k: v[0] for k, v in sorted(best.items())}
