"""Target-adaptive disentangled drug encoding.

A bank of heterogeneous message-passing views produces a graph vector that
is split into a target-irrelevant part and a target-relevant part.  The
relevant part is conditioned on every annotated protein target and the
results are stacked into fixed-width slots.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import (
    Linear, Module, Tensor, concat, matmul, mul, reshape, segment_sum, softmax, sqrt, tanh,
    transpose,
)
from .diffcore import sum as tsum
from .pairnas import make_operator


class NoTargets(ValueError):
    pass


@dataclass
class EncoderConfig:
    views: tuple = ("GCNmol", "GINmol", "GATmol")
    view_dim: int = 32
    D: int = 32
    D_irr: int = 16
    D_rel: int = 16
    K_max: int = 3
    D_t: int = 16
    d_attn: int = 16
    pool: str = "sum"

    def __post_init__(self):
        self.views = tuple(self.views)
        if self.D_irr + self.D_rel != self.D:
            raise ValueError("D_irr + D_rel must equal D")
        if not self.views:
            raise ValueError("at least one view is required")
        if self.K_max < 1:
            raise ValueError("K_max must be at least 1")
        if self.pool not in ("sum", "mean"):
            raise ValueError(f"unknown pooling {self.pool!r}")

    @property
    def M(self):
        return len(self.views)

    @property
    def D_k(self):
        return self.D_rel

    @property
    def embed_width(self):
        return self.D_irr + self.K_max * self.D_k


class GraphEncoder(Module):
    """Multi-view fusion, node pooling and the disentanglement head."""

    def __init__(self, store, prefix, seed, d_in, cfg: EncoderConfig):
        super().__init__(store, prefix, seed)
        self.cfg = cfg
        self.views = [make_operator(k, store, f"{prefix}.view{i}.{k}", seed, d_in, cfg.view_dim)
                      for i, k in enumerate(cfg.views)]
        self.fuse = Linear(store, f"{prefix}.fuse", seed, cfg.M * cfg.view_dim, cfg.D)
        self.pool = Linear(store, f"{prefix}.pool", seed, cfg.D, cfg.D)
        self.w_irr = Linear(store, f"{prefix}.w_irr", seed, cfg.D, cfg.D_irr, bias=False)
        self.w_rel = Linear(store, f"{prefix}.w_rel", seed, cfg.D, cfg.D_rel, bias=False)

    def encode_graph(self, x, batch):
        if batch.n_nodes == 0:
            raise ValueError("empty node feature matrix")
        outs = [v(x, batch) for v in self.views]
        fused = self.fuse(concat(outs, axis=1) if len(outs) > 1 else outs[0])
        s = segment_sum(fused, batch.node_graph, batch.n_graphs)
        if self.cfg.pool == "mean":
            counts = np.bincount(batch.node_graph, minlength=batch.n_graphs).astype(np.float64)
            s = mul(s, (1.0 / counts)[:, None])
        return self.pool(tanh(s))

    def disentangle(self, z):
        return self.w_irr(z), self.w_rel(z)


class TargetAttention(Module):
    """Per-target cross-attention with a single key, plus learned padding.

    For target k the query is W_Q z_rel and the key/value come from t_k.
    A softmax over one key is identically 1, so the slot equals
    W_O(W_V t_k + z_rel) + b; the pre-softmax logits are still returned
    for ranking targets.  Unused slots hold a learned null vector.
    """

    def __init__(self, store, prefix, seed, cfg: EncoderConfig):
        super().__init__(store, prefix, seed)
        self.cfg = cfg
        self.w_q = Linear(store, f"{prefix}.q", seed, cfg.D_rel, cfg.d_attn, bias=False)
        self.w_k = Linear(store, f"{prefix}.k", seed, cfg.D_t, cfg.d_attn, bias=False)
        self.w_v = Linear(store, f"{prefix}.v", seed, cfg.D_t, cfg.D_rel, bias=False)
        self.w_o = Linear(store, f"{prefix}.o", seed, cfg.D_rel, cfg.D_k)
        self.null = self.param("null_slot", (cfg.D_k,), init="normal", scale=0.1)

    def __call__(self, z_rel, targets, mask):
        """``targets`` is (n, K_max, D_t), ``mask`` is (n, K_max) with 1 for real targets."""
        n, kmax = mask.shape
        t = Tensor(targets)
        q = self.w_q(z_rel)                                     # n x a
        k = self.w_k(t)                                         # n x K x a
        logits = tsum(mul(reshape(q, (n, 1, -1)), k), axis=-1) * (1.0 / np.sqrt(self.cfg.d_attn))
        w = softmax(reshape(logits, (n, kmax, 1)), axis=-1)    # single key per slot
        v = self.w_v(t)                                         # n x K x D_rel
        slots = self.w_o(mul(w, v) + reshape(z_rel, (n, 1, -1)))
        m = np.asarray(mask, dtype=np.float64)[:, :, None]
        slots = mul(slots, m) + mul(reshape(self.null, (1, 1, -1)), 1.0 - m)
        return slots, logits


def target_attend(z_rel, targets, attn: TargetAttention):
    """Slots for one drug with ``K`` target vectors (1 <= K <= K_max)."""
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, attn.cfg.D_t)
    k = targets.shape[0]
    if k == 0:
        raise NoTargets("drug has no annotated targets")
    if k > attn.cfg.K_max:
        raise ValueError(f"{k} targets exceed K_max = {attn.cfg.K_max}")
    z_rel = z_rel if isinstance(z_rel, Tensor) else Tensor(z_rel)
    tpad = np.zeros((1, attn.cfg.K_max, attn.cfg.D_t))
    tpad[0, :k] = targets
    mask = np.zeros((1, attn.cfg.K_max))
    mask[0, :k] = 1.0
    slots, _ = attn(reshape(z_rel, (1, -1)), tpad, mask)
    return [slots[0, j] for j in range(k)]


def pack_targets(target_lists, k_max, d_t):
    """Stack per-drug target vectors into (n, K_max, D_t) plus a 0/1 mask; extras are dropped."""
    n = len(target_lists)
    out = np.zeros((n, k_max, d_t))
    mask = np.zeros((n, k_max))
    for i, vecs in enumerate(target_lists):
        for j, v in enumerate(vecs[:k_max]):
            out[i, j] = v
            mask[i, j] = 1.0
    return out, mask


def assemble_embedding(z_irr, slots, k_max=None, null=None):
    """[z_irr | slot_1 | ... | slot_K_max]; missing slots are filled with ``null``."""
    slots = list(slots)
    k_max = len(slots) if k_max is None else k_max
    if len(slots) > k_max:
        raise ValueError("more slots than K_max")
    if len(slots) < k_max:
        if null is None:
            raise ValueError("padding requires the null slot vector")
        slots += [null] * (k_max - len(slots))
    widths = {s.shape[-1] for s in slots}
    if len(widths) > 1:
        raise ValueError("target-adaptive slots differ in width")
    return concat([z_irr] + slots, axis=-1)


def decorrelation_loss(z):
    """Cross-correlation penalty between distinct target slots.

    ``z`` is (B, K, D_k).  Every feature is standardized across the batch
    (dimensions with zero variance are only centered), then for each
    ordered pair k != k' C = (1/D_k) Z_k Z_k'^T with Z in D_k x B, and the
    loss is the mean of ||C||_F^2 over the K(K-1) pairs.
    """
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.ndim != 3:
        raise ValueError("expected a (batch, slots, width) tensor")
    b, k, d = z.shape
    if k < 2:
        return Tensor(0.0)
    if b < 2:
        raise ValueError("decorrelation needs a batch of at least two")
    centered = z - tsum(z, axis=0, keepdims=True) * (1.0 / b)
    var = tsum(mul(centered, centered), axis=0, keepdims=True) * (1.0 / b)
    flat = var.data < 1e-20
    std = sqrt(var + flat.astype(np.float64))
    zs = centered / std
    zt = transpose(zs, (1, 2, 0))                       # K x D x B
    zb = transpose(zs, (1, 0, 2))                       # K x B x D
    c = matmul(reshape(zt, (k, 1, d, b)), reshape(zb, (1, k, b, d))) * (1.0 / d)
    off = (1.0 - np.eye(k))[:, :, None, None]
    return tsum(mul(mul(c, c), off)) * (1.0 / (k * (k - 1)))


class DrugEncoder(Module):
    """Graph encoding, disentanglement and target slots for a batch of drugs."""

    def __init__(self, store, prefix, seed, d_in, cfg: EncoderConfig):
        super().__init__(store, prefix, seed)
        self.cfg = cfg
        self.graph = GraphEncoder(store, f"{prefix}.graph", seed, d_in, cfg)
        self.targets = TargetAttention(store, f"{prefix}.target", seed, cfg)

    def __call__(self, x, batch, targets, mask):
        z = self.graph.encode_graph(x, batch)
        z_irr, z_rel = self.graph.disentangle(z)
        slots, logits = self.targets(z_rel, targets, mask)
        n = z_irr.shape[0]
        e = concat([z_irr, reshape(slots, (n, -1))], axis=1)
        return e, z_irr, slots, logits
