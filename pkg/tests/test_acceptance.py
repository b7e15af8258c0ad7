"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
(and directly when this file is run as a script).
"""
import csv
import time
from pathlib import Path

import numpy as np
import pytest

from synergraph import chem, cli, dataset, evalkit, fixtures, verify
from synergraph.diffcore import ParamStore, Tensor, no_grad
from synergraph.encoder import decorrelation_loss
from synergraph.graphs import GraphBatch
from synergraph.model import ModelConfig, SynergyModel
from synergraph.pairnas import OPERATOR_KINDS, RoutingLayer, separation_loss
from synergraph.predictor import KnowledgeBase, greedy_decode
from synergraph.training import AdamW, TrainConfig, lr_at, run_stage

from conftest import ACCEPTANCE_LINES

DATA = Path(__file__).parent / "data"


class Criterion:
    """Context manager that records one pass/fail line per acceptance criterion."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.details = []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        secs = time.perf_counter() - self.t0
        status = "PASS" if exc_type is None else "FAIL"
        extra = "; ".join(self.details)
        if exc_type is not None and exc is not None:
            extra = (extra + "; " if extra else "") + f"{exc_type.__name__}: {exc}".splitlines()[0]
        line = f"criterion {self.number}: {status}  {self.title} ({secs:.1f}s) {extra}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False


def reinit(store, rng):
    for _, p in store.items():
        scale = max(float(np.std(p.data)), 0.1)
        p.data = rng.normal(scale=scale, size=p.shape)


# 1

def test_c01_gradient_integrity():
    with Criterion(1, "finite-difference check of every loss, eps=1e-4, tol 1e-3, < 60 s") as c:
        t0 = time.perf_counter()
        results = verify.run_suite(seed=0, eps=1e-4)
        secs = time.perf_counter() - t0
        worst = max(r.max_error for r in results)
        c.note(f"max rel error {worst:.2e} over {sum(r.checked for r in results)} coordinates")
        assert {r.name for r in results} == {"L_inst", "L_task_lm", "L_task_direct", "L_decorr", "L_sep", "L_total"}
        assert all(r.checked > 0 for r in results)
        assert worst < 1e-3
        assert secs < 60


# 2

def test_c02_routing_simplex_and_one_hot():
    with Criterion(2, "routing weights on the simplex over 1000 states; one-hot routing exact") as c:
        t0 = time.perf_counter()
        model, samples = verify.build(0)
        rng = np.random.default_rng(2)
        worst_sum, min_entry = 0.0, 1.0
        with no_grad():
            for _ in range(1000):
                reinit(model.store, rng)
                out = model.forward(samples)
                for a in out.alphas:
                    a = a.data
                    assert a.shape[1] == len(OPERATOR_KINDS)
                    worst_sum = max(worst_sum, float(np.abs(a.sum(axis=1) - 1.0).max()))
                    min_entry = min(min_entry, float(a.min()))
        c.note(f"max |sum-1| {worst_sum:.1e}, min entry {min_entry:.1e}")
        assert min_entry > 0 and worst_sum <= 1e-9

        # one-hot mixtures against each operator alone on the fixture drugs
        graphs = [chem.parse_smiles(smi) for _, smi, _, _ in fixtures.DRUGS[:6]]
        batch = GraphBatch.from_graphs(graphs, 24)
        x = Tensor(rng.normal(size=batch.x.shape))
        layer = RoutingLayer(ParamStore(), "r", 3, 0, 24, 8, 4)
        with no_grad():
            for i, op in enumerate(layer.ops):
                alpha = np.zeros((batch.n_graphs, layer.m))
                alpha[:, i] = 1.0
                assert np.array_equal(layer.mixed(x, batch, alpha).data, op(x, batch).data), op.kind
        assert time.perf_counter() - t0 < 30


# 3

def test_c03_loss_landmarks():
    with Criterion(3, "separation and decorrelation landmarks within 1e-12"):
        eye = np.eye(6)
        assert abs(separation_loss([eye]).item()) <= 1e-12
        same = np.tile(np.array([[0.3, -1.2, 0.5, 2.0]]), (6, 1))
        assert abs(separation_loss([same]).item() - 1.0) <= 1e-12
        rng = np.random.default_rng(3)
        z = rng.normal(size=(8, 2, 5))
        z[:, 1] = 0.0
        assert abs(decorrelation_loss(z).item()) <= 1e-12
        assert decorrelation_loss(rng.normal(size=(8, 1, 5))).item() == 0.0


# 4

def _minimize(store, loss_fn, steps=200, lr=1e-2):
    cfg = TrainConfig(weight_decay=0.0, total_steps=steps, warmup_steps=0)
    opt = AdamW(store, cfg)
    first = None
    for _ in range(steps):
        store.zero_grad()
        loss = loss_fn()
        first = loss.item() if first is None else first
        loss.backward()
        opt.step(lr)
    with no_grad():
        return first, loss_fn().item()


def test_c04_regularizer_optimization():
    with Criterion(4, "200 AdamW steps halve L_sep and L_decorr, < 60 s each") as c:
        rng = np.random.default_rng(4)
        store = ParamStore()
        base = rng.normal(size=8)
        descs = [store.add(f"layer{l}", base + 0.05 * rng.normal(size=(6, 8))) for l in range(3)]
        t0 = time.perf_counter()
        s0, s1 = _minimize(store, lambda: separation_loss(descs))
        t_sep = time.perf_counter() - t0
        c.note(f"L_sep {s0:.3f} -> {s1:.3f}")

        store = ParamStore()
        x = rng.normal(size=(32, 6))
        shared = rng.normal(size=(6, 5))
        w = [store.add(f"w{k}", shared + 0.1 * rng.normal(size=(6, 5))) for k in range(3)]

        def decorr():
            from synergraph.diffcore import matmul, stack
            return decorrelation_loss(stack([matmul(Tensor(x), wk) for wk in w], axis=1))

        t0 = time.perf_counter()
        d0, d1 = _minimize(store, decorr)
        t_dec = time.perf_counter() - t0
        c.note(f"L_decorr {d0:.3f} -> {d1:.3f}")
        assert s1 <= 0.5 * s0 and t_sep < 60
        assert d1 <= 0.5 * d0 and t_dec < 60


# 5

def test_c05_split_protocol(tmp_path, monkeypatch):
    with Criterion(5, "in/out-of-distribution split protocol, theta = 305 Da") as c:
        fixtures.write_fixtures(tmp_path, seed=0, n_genes=16)
        ds = dataset.ingest(*(tmp_path / f for f in fixtures.FILES[:5]))
        lab = dataset.filter_and_label(ds.samples, 10.0)
        part = dataset.assemble_splits(lab, dataset.ood_split(ds.drugs, "size", 305.0), seed=42)
        assert not part.id_drugs & part.ood_drugs
        assert part.id_drugs | part.ood_drugs == set(ds.drugs)
        for d in part.id_drugs:
            assert chem.molecular_weight(ds.drugs[d].graph or chem.parse_smiles(ds.drugs[d].smiles)) > 305
        for i in part.train:
            assert lab[i].drug_a_id in part.id_drugs and lab[i].drug_b_id in part.id_drugs
        for i in part.valid + part.test:
            assert lab[i].drug_a_id in part.ood_drugs or lab[i].drug_b_id in part.ood_drugs
        assert part.train and part.valid and part.test
        c.note(f"train/valid/test {len(part.train)}/{len(part.valid)}/{len(part.test)}")

        # constructed weights: strictly above theta is in-distribution
        weights = {"light": 100.0, "heavy": 400.0, "edge": 305.0}
        drugs = {k: dataset.DrugRecord(k, "C", graph=chem.parse_smiles("C")) for k in weights}
        by_graph = {id(rec.graph): weights[k] for k, rec in drugs.items()}
        monkeypatch.setattr(dataset.chem, "molecular_weight", lambda g: by_graph[id(g)])
        p = dataset.ood_split(drugs, "size", 305.0)
        assert p.id_drugs == {"heavy"} and p.ood_drugs == {"light", "edge"}


# 6

def test_c06_parser_fixtures():
    with Criterion(6, "parser counts match the hand-enumerated oracle file") as c:
        with open(DATA / "molecule_counts.csv") as fh:
            oracle = {r["smiles"]: r for r in csv.DictReader(fh)}
        shipped = {name: smi for name, smi, _, _ in fixtures.DRUGS}
        wanted = [oracle_row["smiles"] for oracle_row in oracle.values()]
        for name in ("Temozolomide", "Vismodegib", "Fingolimod", "Decitabine", "Nilutamide"):
            assert shipped[name] in oracle, name
        for smi in wanted:
            d = chem.structural_descriptors(chem.parse_smiles(smi))
            r = oracle[smi]
            assert (d.heavy_atom_count, d.ring_count) == (int(r["heavy_atoms"]), int(r["rings"])), r["name"]
        c.note(f"{len(wanted)} molecules")


# 7

@pytest.mark.slow
def test_c07_overfit_direct_head():
    with Criterion(7, "32-sample direct-head overfit: < 10% loss, ACC 1.0, MAE < 1.0, < 5 min") as c:
        t0 = time.perf_counter()
        ds, knowledge = fixtures.in_memory(0, n_genes=64, n_triplets=200, target_dim=16)
        samples = dataset.filter_and_label(ds.samples, 10.0)[:32]
        model = SynergyModel(ModelConfig(), ds.n_genes, seed=0).bind(ds, KnowledgeBase(knowledge))
        cfg = TrainConfig(task_steps=1000, batch_size=32, lr_warmup_start=1e-5, lr_peak=1e-3,
                          lr_final=1e-4, warmup_steps=50)
        res, _ = run_stage("task", model, samples, cfg)
        first, last = res.log[0]["loss"], res.log[-1]["loss"]
        probs, scores = model.predict_direct(samples)
        labels = np.array([s.label for s in samples])
        acc = evalkit.accuracy(probs, labels)
        err = evalkit.mae(scores, np.array([s.score for s in samples]))
        secs = time.perf_counter() - t0
        c.note(f"loss ratio {last / first:.4f}, ACC {acc:.3f}, MAE {err:.3f}")
        assert last < 0.1 * first
        assert acc == 1.0 and err < 1.0
        assert secs < 300


# 8

@pytest.mark.slow
def test_c08_lm_memorization():
    with Criterion(8, "tiny LM memorizes 10 instruction examples: NLL < 0.1, verbatim decoding, < 10 min") as c:
        t0 = time.perf_counter()
        ds, knowledge = fixtures.in_memory(0, n_genes=8, n_triplets=200, target_dim=16)
        pairs, corpus = set(), []
        for s in ds.samples:
            key = frozenset((s.drug_a_id, s.drug_b_id))
            if s.drug_a_id in knowledge and s.drug_b_id in knowledge and key not in pairs:
                pairs.add(key)
                corpus.append(s)
            if len(corpus) == 10:
                break
        model = SynergyModel(ModelConfig(), ds.n_genes, seed=0).bind(ds, KnowledgeBase(knowledge))
        cfg = TrainConfig(instruction_steps=2000, task_steps=0, batch_size=10, lr_warmup_start=3e-5,
                          lr_peak=3e-3, lr_final=3e-4, warmup_steps=20)
        opt, steps, nll = None, 0, float("inf")
        while steps < 2000:
            res, opt = run_stage("instruction", model, corpus, cfg, opt, start_step=steps, steps=25)
            steps += 25
            with no_grad():
                nll = model.instruction_loss(corpus).item()
            if nll < 0.1:
                break
        exact = 0
        for s in corpus:
            p = model.prompt("instruction", s)
            exact += greedy_decode(p, model.lm, max_len=len(p.target) + 8) == p.target
        secs = time.perf_counter() - t0
        c.note(f"NLL {nll:.4f} after {steps} steps, {exact}/10 verbatim")
        assert nll < 0.1 and exact == 10 and secs < 600


# 9

def test_c09_schedule_anchors():
    with Criterion(9, "learning-rate anchors 1e-6 / 1e-4 / 1e-5 within 1e-15"):
        cfg = TrainConfig(task_steps=200, warmup_steps=20)
        assert abs(lr_at(0, cfg) - 1e-6) <= 1e-15
        assert abs(lr_at(20, cfg) - 1e-4) <= 1e-15
        assert abs(lr_at(200, cfg) - 1e-5) <= 1e-15
        slope = (1e-4 - 1e-6) / 20
        for d in (1e-3, 1e-6):
            assert abs(lr_at(20 - d, cfg) - 1e-4) <= slope * d + 1e-15
            assert abs(lr_at(20 + d, cfg) - 1e-4) <= 1e-15 + 1e-9 * d


# 10

def brute_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def brute_ranks(v):
    return np.array([np.sum(v < x) + (np.sum(v == x) + 1) / 2.0 for x in v])


def brute_pearson(a, b):
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = np.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    return num / den


def test_c10_metric_oracles():
    with Criterion(10, "metrics match brute-force oracles on 1000 instances within 1e-12") as c:
        rng = np.random.default_rng(10)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(2, 51))
            y = rng.integers(0, 2, size=n)
            y[0], y[1] = 0, 1
            # coarse values create ties on purpose
            s = rng.integers(-5, 6, size=n) / 2.0 if rng.random() < 0.5 else rng.normal(size=n)
            p = rng.random(n)
            t = rng.normal(scale=20, size=n)
            q = t + rng.normal(scale=5, size=n)
            diffs = [
                evalkit.auc(s, y) - brute_auc(s, y),
                evalkit.accuracy(p, y) - np.mean([(pi >= 0.5) == yi for pi, yi in zip(p, y)]),
                evalkit.mae(q, t) - sum(abs(a - b) for a, b in zip(q, t)) / n,
                evalkit.rmse(q, t) - np.sqrt(sum((a - b) ** 2 for a, b in zip(q, t)) / n),
            ]
            if np.ptp(s) > 0:
                diffs.append(evalkit.spearman(s, t) - brute_pearson(brute_ranks(s), brute_ranks(t)))
                assert evalkit.spearman(np.exp(s / 3.0), 2 * t + 1) == pytest.approx(evalkit.spearman(s, t), abs=1e-12)
            assert evalkit.auc(np.exp(s / 3.0) * 5 - 1, y) == pytest.approx(evalkit.auc(s, y), abs=1e-12)
            worst = max(worst, max(abs(d) for d in diffs))
        c.note(f"max deviation {worst:.1e}")
        assert worst <= 1e-12


# 11

def _pipeline(root):
    data, run = root / "data", root / "run"
    assert cli.main(["gen-fixtures", "--seed", "11", "--out-dir", str(data), "--n-genes", "128"]) == 0
    assert cli.main(["split", "--data-dir", str(data), "--criterion", "size", "--theta", "305",
                     "--out-dir", str(run)]) == 0
    assert cli.main(["train", "--data-dir", str(data), "--split", str(run / "split.json"), "--seed", "11",
                     "--task-steps", "200", "--out-dir", str(run)]) == 0
    assert cli.main(["eval", "--data-dir", str(data), "--split", str(run / "split.json"),
                     "--run-dir", str(run), "--out-dir", str(run)]) == 0
    return run


def test_c11_determinism(tmp_path):
    with Criterion(11, "two seeded pipeline runs give byte-identical checkpoint, log and metrics") as c:
        a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
        names = ["model.ckpt", "loss_log.csv", "metrics_test_direct.csv", "metrics_test_direct.txt"]
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        c.note(f"{len(names)} files compared")


# 12

def test_c12_routing_analysis_monotone():
    with Criterion(12, "monotone routing fixture gives rho(GATmol, heavy atoms) = 1") as c:
        table = {name: chem.structural_descriptors(chem.parse_smiles(smi)) for name, smi, _, _ in fixtures.DRUGS}
        top = max(d.heavy_atom_count for d in table.values())
        rows = []
        for sid, (name, d) in enumerate(table.items()):
            gat = d.heavy_atom_count / top
            for layer in range(3):
                for kind in OPERATOR_KINDS:
                    a = gat if kind == "GATmol" else (1.0 - gat) / (len(OPERATOR_KINDS) - 1)
                    rows.append((sid, name, layer, kind, a))
        rep = evalkit.routing_structure_analysis(rows, table)
        rho = rep.rho[("GATmol", "heavy_atom_count")]
        c.note(f"rho = {rho!r}")
        assert rho is not None and abs(rho - 1.0) <= 1e-12


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
