"""End-to-end synergy model: context, encoder, pair routing, projectors and heads."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import chem
from .context import ContextProjector, EmbeddingProjector, contextualize_batch
from .diffcore import ParamStore, Tensor, concat, index, log_softmax, mean, no_grad, rng_stream, square, take_rows
from .encoder import DrugEncoder, EncoderConfig, decorrelation_loss, pack_targets
from .graphs import GraphBatch
from .pairnas import OPERATOR_KINDS, PairAttention, RoutedStack
from .predictor import (
    DirectHead, LMConfig, MissingKnowledge, ParseFailure, TinyLM, build_prompt, greedy_decode,
    masked_nll, parse_response,
)

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    feature_dim: int = 24
    d_ec: int = 16
    ctx_hidden: int = 32
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    pair_d_attn: int = 16
    pair_heads: int = 2
    pair_d_ff: int = 32
    route_hidden: int = 32
    d_op: int = 16
    n_layers: int = 3
    kinds: tuple = OPERATOR_KINDS
    d_x: int = 32
    n_prefix: int = 4
    proj_hidden: int = 32
    lm: LMConfig = field(default_factory=LMConfig)
    head_hidden: int = 64
    symmetric: bool = True
    score_scale: float = 10.0

    def __post_init__(self):
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        if isinstance(self.lm, dict):
            self.lm = LMConfig(**self.lm)
        self.kinds = tuple(self.kinds)
        if self.feature_dim < chem.min_feature_dim():
            raise chem.FeatureDimTooSmall(f"feature_dim must be at least {chem.min_feature_dim()}")

    def to_dict(self):
        d = asdict(self)
        d["kinds"] = list(self.kinds)
        d["encoder"]["views"] = list(self.encoder.views)
        return d


@dataclass
class BatchOutputs:
    samples: list
    e_c: Tensor          # per-sample structural context
    E_c: Tensor          # n x rows x width
    E_d1: Tensor
    E_d2: Tensor
    x_d1: Tensor
    x_d2: Tensor
    slots: Tensor        # 2n x K_max x D_k
    alphas: list         # per layer, 2n x m
    target_logits: Tensor
    target_mask: np.ndarray
    occurrence_drugs: list


class SynergyModel:
    def __init__(self, cfg: ModelConfig, n_genes, seed=0):
        self.cfg = cfg
        self.n_genes = n_genes
        self.seed = seed
        init = int(rng_stream(seed, "init").integers(2**31 - 1))
        self.init_seed = init
        s = self.store = ParamStore()
        ec = cfg.encoder
        d_in = cfg.feature_dim + cfg.d_ec
        w = cfg.lm.width
        self.ctx = ContextProjector(s, "context.phi_ctx", init, n_genes, cfg.ctx_hidden, cfg.d_ec)
        self.cell_proj = EmbeddingProjector(s, "context.phi_proj_c", init, n_genes, cfg.proj_hidden, cfg.n_prefix, w)
        self.encoder = DrugEncoder(s, "encoder", init, d_in, ec)
        self.pair = PairAttention(s, "pairnas.pair", init, ec.D_irr, ec.D_k, ec.K_max,
                                  cfg.pair_d_attn, cfg.pair_heads, cfg.pair_d_ff)
        self.routed = RoutedStack(s, "pairnas.routed", init, d_in, cfg.route_hidden, ec.embed_width,
                                  cfg.d_op, cfg.n_layers, cfg.kinds, cfg.d_x)
        self.drug_proj = EmbeddingProjector(s, "predictor.phi_proj_d", init, cfg.d_x, cfg.proj_hidden, cfg.n_prefix, w)
        head_in = 3 * cfg.n_prefix * w + 2 * cfg.d_x
        self.head = DirectHead(s, "predictor.direct", init, head_in, cfg.head_hidden, cfg.symmetric)
        self.lm = TinyLM(s, "predictor.lm", init, cfg.lm)
        self.data = None
        self._features = {}
        self._prompts = {}

    # data binding

    def bind(self, dataset, kb=None):
        """Attach a dataset (and optional knowledge base) used to resolve sample ids."""
        if dataset.n_genes != self.n_genes:
            raise ValueError(f"model expects {self.n_genes} genes, dataset has {dataset.n_genes}")
        if dataset.target_dim and dataset.target_dim != self.cfg.encoder.D_t:
            raise ValueError(f"model expects target width {self.cfg.encoder.D_t}, dataset has {dataset.target_dim}")
        self.data = dataset
        self.kb = kb
        self._features.clear()
        self._prompts.clear()
        return self

    def _graph(self, drug_id):
        rec = self.data.drugs[drug_id]
        if rec.graph is None:
            rec.graph = chem.parse_smiles(rec.smiles)
        return rec.graph

    def _feat(self, drug_id):
        if drug_id not in self._features:
            self._features[drug_id] = chem.atom_features(self._graph(drug_id), self.cfg.feature_dim)
        return self._features[drug_id]

    def _targets(self, drug_id):
        return [self.data.targets[t].vector for t in self.data.drugs[drug_id].target_ids
                if t in self.data.targets]

    def prompt(self, stage, sample, question="P1"):
        key = (stage, sample, question)
        if key not in self._prompts:
            cell = self.data.profiles[sample.cell_line_id]
            self._prompts[key] = build_prompt(stage, sample, self.data.drugs, cell, self.kb, question)
        return self._prompts[key]

    # forward

    def forward(self, samples):
        n = len(samples)
        cells = sorted({s.cell_line_id for s in samples})
        cidx = {c: i for i, c in enumerate(cells)}
        expr = np.stack([self.data.profiles[c].expression for c in cells])
        e_c_u = self.ctx(expr)
        E_c_u = self.cell_proj(expr)
        sample_cell = np.array([cidx[s.cell_line_id] for s in samples], dtype=np.int64)

        occ = [s.drug_a_id for s in samples] + [s.drug_b_id for s in samples]
        occ_cell = np.concatenate([sample_cell, sample_cell])
        batch = GraphBatch.from_graphs([self._graph(d) for d in occ], self.cfg.feature_dim,
                                       [self._feat(d) for d in occ])
        x0 = contextualize_batch(batch.x, occ_cell[batch.node_graph], e_c_u)
        ec = self.cfg.encoder
        targets, mask = pack_targets([self._targets(d) for d in occ], ec.K_max, ec.D_t)
        e, _, slots, tlogits = self.encoder(x0, batch, targets, mask)
        h1, h2 = self.pair(e[:n], e[n:])
        x_d, alphas = self.routed(x0, batch, concat([h1, h2], axis=0))
        E_d = self.drug_proj(x_d)
        E_c = take_rows(E_c_u.reshape(len(cells), -1), sample_cell).reshape(n, self.cfg.n_prefix, -1)
        return BatchOutputs(samples, take_rows(e_c_u, sample_cell), E_c, E_d[:n], E_d[n:],
                            x_d[:n], x_d[n:], slots, alphas, tlogits, mask, occ)

    def slot_rows(self, out, i):
        return {"SLOT_EC": out.E_c[i], "SLOT_ED1": out.E_d1[i], "SLOT_ED2": out.E_d2[i]}

    # losses

    def direct_outputs(self, out):
        return self.head(out.E_c, out.E_d1, out.E_d2, out.x_d1, out.x_d2)

    def direct_losses(self, out):
        logits, score = self.direct_outputs(out)
        labels = np.array([s.label for s in out.samples], dtype=np.int64)
        targets = np.array([s.score for s in out.samples]) / self.cfg.score_scale
        lp = log_softmax(logits, axis=-1)
        ce = -mean(index(lp, (np.arange(len(labels)), labels)))
        mse = mean(square(score - targets))
        return ce, mse

    def lm_task_loss(self, out, question="P1"):
        items = []
        for i, s in enumerate(out.samples):
            p = self.prompt("task", s, question)
            items.append((p.segments, self.slot_rows(out, i), p.target_ids))
        return masked_nll(self.lm, items)

    def instruction_items(self, samples):
        items = []
        for s in samples:
            try:
                p = self.prompt("instruction", s)
            except MissingKnowledge:
                log.warning("skipping %s/%s: no drug descriptions", s.drug_a_id, s.drug_b_id)
                continue
            items.append((p.segments, None, p.target_ids))
        return items

    def instruction_loss(self, samples):
        items = self.instruction_items(samples)
        if not items:
            return None
        return masked_nll(self.lm, items)

    def decorrelation(self, out):
        return decorrelation_loss(out.slots)

    def separation(self):
        return self.routed.separation_loss()

    # inference

    def predict_direct(self, samples, batch_size=64):
        probs, scores = [], []
        with no_grad():
            for i in range(0, len(samples), batch_size):
                out = self.forward(samples[i:i + batch_size])
                logits, score = self.direct_outputs(out)
                lg = logits.data
                p = np.exp(lg[:, 1] - np.logaddexp(lg[:, 0], lg[:, 1]))
                probs.append(p)
                scores.append(score.data * self.cfg.score_scale)
        return np.concatenate(probs), np.concatenate(scores)

    def predict_lm(self, samples, question="P1", max_len=96):
        """Greedy answers parsed into (prob-like label score, score, parsed flag)."""
        probs, scores, ok, texts = [], [], [], []
        with no_grad():
            for s in samples:
                out = self.forward([s])
                rows = {k: v.data for k, v in self.slot_rows(out, 0).items()}
                text = greedy_decode(self.prompt("task", s, question), self.lm, max_len, rows)
                texts.append(text)
                try:
                    r = parse_response(text)
                except ParseFailure:
                    probs.append(0.0)
                    scores.append(np.nan)
                    ok.append(False)
                    continue
                probs.append(1.0 if r.label == "synergistic" else 0.0)
                scores.append(r.score)
                ok.append(True)
        return np.array(probs), np.array(scores), np.array(ok), texts

    def routing_table(self, samples, batch_size=64):
        """Rows (sample index, drug_id, layer, kind, alpha) for every drug occurrence."""
        rows = []
        with no_grad():
            for start in range(0, len(samples), batch_size):
                chunk = samples[start:start + batch_size]
                out = self.forward(chunk)
                n = len(chunk)
                for layer, a in enumerate(out.alphas):
                    for j, drug in enumerate(out.occurrence_drugs):
                        sid = start + (j % n)
                        for k, kind in enumerate(self.cfg.kinds):
                            rows.append((sid, drug, layer, kind, float(a.data[j, k])))
        return rows

    def target_scores(self, samples):
        """Per-sample attention logits of each drug's annotated targets."""
        rows = []
        with no_grad():
            out = self.forward(samples)
            n = len(samples)
            for j, drug in enumerate(out.occurrence_drugs):
                tids = self.data.drugs[drug].target_ids[:self.cfg.encoder.K_max]
                for k, tid in enumerate(tids):
                    rows.append((j % n, drug, tid, float(out.target_logits.data[j, k])))
        return rows
