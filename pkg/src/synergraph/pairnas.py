"""Pair-conditioned routing over bond-aware message-passing operators.

Each drug of a pair first attends to its partner's embedding.  The result
selects, per layer, a softmax mixture over six message-passing kinds whose
latent descriptor vectors are kept apart by a squared-cosine penalty.
"""
from __future__ import annotations

import numpy as np

from . import chem
from .diffcore import (
    Linear, Module, Tensor, concat, leaky_relu, matmul, mul, relu, reshape, rng_stream,
    segment_softmax, segment_sum, softmax, sqrt, take_rows, transpose,
)
from .diffcore import sum as tsum

OPERATOR_KINDS = ("GCNmol", "GINmol", "GATmol", "SAGEmol", "Graphmol", "MLPmol")
N_BOND_KINDS = len(chem.BOND_KINDS)


class DegenerateDescriptor(ValueError):
    pass


# message-passing operators

class MessageOp(Module):
    """Base class: ``op(x, batch) -> node features`` of width ``d_out``."""

    kind = ""
    uses_bonds = True

    def __init__(self, store, prefix, seed, d_in, d_out):
        super().__init__(store, prefix, seed)
        self.d_in, self.d_out = d_in, d_out
        if self.uses_bonds:
            self.bond_emb = self.param("bond_emb", (N_BOND_KINDS, d_in), init="normal", scale=0.1)

    def messages(self, x, batch):
        """ReLU(x_j + e_ij) for every directed edge j -> i."""
        e = take_rows(self.bond_emb, batch.bond_kind)
        return relu(take_rows(x, batch.src) + e)

    def __call__(self, x, batch):
        raise NotImplementedError


class GCNOp(MessageOp):
    """Symmetric degree-normalized sum with an implicit self loop.

    h_i = W (x_i / d_i + sum_j ReLU(x_j + e_ij) / sqrt(d_i d_j)) + b, d = in-degree + 1.
    """

    kind = "GCNmol"

    def __init__(self, store, prefix, seed, d_in, d_out):
        super().__init__(store, prefix, seed, d_in, d_out)
        self.lin = Linear(store, f"{prefix}.lin", seed, d_in, d_out)

    def __call__(self, x, batch):
        deg = batch.in_degree + 1.0
        norm = 1.0 / np.sqrt(deg[batch.src] * deg[batch.dst])
        msg = mul(self.messages(x, batch), norm[:, None])
        agg = segment_sum(msg, batch.dst, batch.n_nodes) + mul(x, (1.0 / deg)[:, None])
        return self.lin(agg)


class GINOp(MessageOp):
    """h_i = MLP((1 + eps) x_i + sum_j ReLU(x_j + e_ij)), eps learnable from 0."""

    kind = "GINmol"

    def __init__(self, store, prefix, seed, d_in, d_out):
        super().__init__(store, prefix, seed, d_in, d_out)
        self.eps = self.param("eps", (1,), init="zeros")
        self.lin1 = Linear(store, f"{prefix}.mlp1", seed, d_in, d_out)
        self.lin2 = Linear(store, f"{prefix}.mlp2", seed, d_out, d_out)

    def __call__(self, x, batch):
        agg = segment_sum(self.messages(x, batch), batch.dst, batch.n_nodes)
        h = x + mul(x, self.eps) + agg
        return self.lin2(relu(self.lin1(h)))


class GATOp(MessageOp):
    """Attention-weighted bond-aware messages followed by an output map.

    score_ij = LeakyReLU(a_dst . x_i + a_src . m_ij), softmax over each
    node's incoming edges; isolated nodes aggregate nothing.
    """

    kind = "GATmol"

    def __init__(self, store, prefix, seed, d_in, d_out):
        super().__init__(store, prefix, seed, d_in, d_out)
        self.a_src = self.param("a_src", (d_in,), init="normal", scale=0.1)
        self.a_dst = self.param("a_dst", (d_in,), init="normal", scale=0.1)
        self.lin = Linear(store, f"{prefix}.lin", seed, d_in, d_out)

    def attention(self, x, batch):
        msg = self.messages(x, batch)
        score = leaky_relu(take_rows(matmul(x, self.a_dst), batch.dst) + matmul(msg, self.a_src))
        return msg, segment_softmax(score, batch.dst, batch.n_nodes)

    def __call__(self, x, batch):
        msg, alpha = self.attention(x, batch)
        agg = segment_sum(mul(msg, reshape(alpha, (-1, 1))), batch.dst, batch.n_nodes)
        return self.lin(agg)


class SAGEOp(MessageOp):
    """h_i = W_root x_i + W_nb mean_j ReLU(x_j + e_ij) + b."""

    kind = "SAGEmol"

    def __init__(self, store, prefix, seed, d_in, d_out):
        super().__init__(store, prefix, seed, d_in, d_out)
        self.root = Linear(store, f"{prefix}.root", seed, d_in, d_out)
        self.nb = Linear(store, f"{prefix}.nb", seed, d_in, d_out, bias=False)

    def __call__(self, x, batch):
        inv = 1.0 / np.maximum(batch.in_degree, 1.0)
        agg = mul(segment_sum(self.messages(x, batch), batch.dst, batch.n_nodes), inv[:, None])
        return self.root(x) + self.nb(agg)


class GraphConvOp(MessageOp):
    """h_i = W_root x_i + W_nb sum_j ReLU(x_j + e_ij) + b."""

    kind = "Graphmol"

    def __init__(self, store, prefix, seed, d_in, d_out):
        super().__init__(store, prefix, seed, d_in, d_out)
        self.root = Linear(store, f"{prefix}.root", seed, d_in, d_out)
        self.nb = Linear(store, f"{prefix}.nb", seed, d_in, d_out, bias=False)

    def __call__(self, x, batch):
        agg = segment_sum(self.messages(x, batch), batch.dst, batch.n_nodes)
        return self.root(x) + self.nb(agg)


class MLPOp(MessageOp):
    """Pointwise linear map; ignores the bond structure."""

    kind = "MLPmol"
    uses_bonds = False

    def __init__(self, store, prefix, seed, d_in, d_out):
        super().__init__(store, prefix, seed, d_in, d_out)
        self.lin = Linear(store, f"{prefix}.lin", seed, d_in, d_out)

    def __call__(self, x, batch):
        return self.lin(x)


OPERATORS = {cls.kind: cls for cls in (GCNOp, GINOp, GATOp, SAGEOp, GraphConvOp, MLPOp)}


def make_operator(kind, store, prefix, seed, d_in, d_out):
    if kind not in OPERATORS:
        raise ValueError(f"unknown operator kind {kind!r}")
    return OPERATORS[kind](store, prefix, seed, d_in, d_out)


def message_op(kind, x, batch, op=None, **kw):
    """Run one operator; builds a throwaway parameter set when ``op`` is None."""
    if op is None:
        from .diffcore import ParamStore
        x = x if isinstance(x, Tensor) else Tensor(x)
        op = make_operator(kind, ParamStore(), kind, kw.get("seed", 0), x.shape[1], kw.get("d_out", x.shape[1]))
    return op(x, batch)


# routing

def init_descriptors(rng, m, d_op, noise=0.1):
    """Unit-norm descriptors from one orthogonalization pass plus a small perturbation.

    The perturbation keeps the separation loss small but nonzero at start.
    """
    raw = rng.normal(size=(max(m, d_op), d_op))
    q, _ = np.linalg.qr(raw)
    base = q[:m] if m <= d_op else raw[:m] / np.linalg.norm(raw[:m], axis=1, keepdims=True)
    out = base + noise * rng.normal(size=(m, d_op)) / np.sqrt(d_op)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


class RoutingLayer(Module):
    def __init__(self, store, prefix, seed, layer, d_in, d_out, d_op, kinds=OPERATOR_KINDS):
        super().__init__(store, prefix, seed)
        if len(kinds) < 2:
            raise ValueError("a routing layer needs at least two operators")
        self.layer = layer
        self.kinds = tuple(kinds)
        self.d_op = d_op
        rng = rng_stream(seed, f"{prefix}.descriptors")
        self.descriptors = store.add(f"{prefix}.descriptors", init_descriptors(rng, len(kinds), d_op))
        self.ops = [make_operator(k, store, f"{prefix}.op{i}.{k}", seed, d_in, d_out)
                    for i, k in enumerate(self.kinds)]

    @property
    def m(self):
        return len(self.kinds)

    def mixed(self, x, batch, alpha):
        """sum_i alpha_i op_i(x); ``alpha`` is (n_graphs x m), broadcast to each graph's atoms."""
        alpha = alpha if isinstance(alpha, Tensor) else Tensor(alpha)
        per_node = take_rows(alpha, batch.node_graph)
        out = None
        for i, op in enumerate(self.ops):
            term = mul(op(x, batch), per_node[:, i:i + 1])
            out = term if out is None else out + term
        return out


def routing_weights(h, descriptors, proj=None):
    """softmax_i <P h, o_i> for each row of ``h``; ``proj`` maps h into descriptor space."""
    h = h if isinstance(h, Tensor) else Tensor(h)
    q = proj(h) if proj is not None else h
    return softmax(matmul(q, transpose(descriptors)), axis=-1)


def mixed_layer(x, batch, alpha, layer):
    return layer.mixed(x, batch, alpha)


def _layer_separation(desc):
    norms = np.linalg.norm(desc.data, axis=1)
    if (norms <= 1e-12).any():
        raise DegenerateDescriptor("operator descriptor has near-zero norm")
    m = desc.shape[0]
    unit = desc / sqrt(tsum(mul(desc, desc), axis=1, keepdims=True))
    cos = matmul(unit, transpose(unit))
    off = 1.0 - np.eye(m)
    return tsum(mul(mul(cos, cos), off)) * (1.0 / (m * (m - 1)))


def separation_loss(layers):
    """Mean over layers of the mean squared cosine between distinct descriptors."""
    descs = [l.descriptors if isinstance(l, RoutingLayer) else l for l in layers]
    descs = [d if isinstance(d, Tensor) else Tensor(d) for d in descs]
    total = None
    for d in descs:
        term = _layer_separation(d)
        total = term if total is None else total + term
    return total * (1.0 / len(descs))


# pair context

class PairAttention(Module):
    """Cross-attention from one drug's embedding onto its partner's tokens.

    The partner embedding [z_irr | slot_1 .. slot_K] is read as 1 + K tokens;
    the irrelevant part and the target slots get their own key/value maps.
    The same weights serve both directions of the pair.
    """

    def __init__(self, store, prefix, seed, d_irr, d_k, k_max, d_attn=16, heads=2, d_ff=32):
        super().__init__(store, prefix, seed)
        if d_attn % heads:
            raise ValueError("attention width must be divisible by the head count")
        self.d_irr, self.d_k, self.k_max = d_irr, d_k, k_max
        self.width = d_irr + k_max * d_k
        self.d_attn, self.heads = d_attn, heads
        self.q = Linear(store, f"{prefix}.q", seed, self.width, d_attn, bias=False)
        self.k_irr = Linear(store, f"{prefix}.k_irr", seed, d_irr, d_attn, bias=False)
        self.v_irr = Linear(store, f"{prefix}.v_irr", seed, d_irr, d_attn, bias=False)
        self.k_slot = Linear(store, f"{prefix}.k_slot", seed, d_k, d_attn, bias=False)
        self.v_slot = Linear(store, f"{prefix}.v_slot", seed, d_k, d_attn, bias=False)
        self.out = Linear(store, f"{prefix}.o", seed, d_attn, d_attn)
        self.ff1 = Linear(store, f"{prefix}.ff1", seed, d_attn, d_ff)
        self.ff2 = Linear(store, f"{prefix}.ff2", seed, d_ff, self.width)

    def tokens(self, e):
        n = e.shape[0]
        z_irr = e[:, :self.d_irr]
        slots = reshape(e[:, self.d_irr:], (n, self.k_max, self.d_k))
        keys = concat([reshape(self.k_irr(z_irr), (n, 1, self.d_attn)), self.k_slot(slots)], axis=1)
        vals = concat([reshape(self.v_irr(z_irr), (n, 1, self.d_attn)), self.v_slot(slots)], axis=1)
        return keys, vals

    def attend(self, e_query, e_partner, return_weights=False):
        """Rows of ``e_query`` attend to the tokens of the matching rows of ``e_partner``."""
        n, h, dh = e_query.shape[0], self.heads, self.d_attn // self.heads
        t = 1 + self.k_max
        keys, vals = self.tokens(e_partner)
        q = transpose(reshape(self.q(e_query), (n, 1, h, dh)), (0, 2, 1, 3))      # n h 1 dh
        k = transpose(reshape(keys, (n, t, h, dh)), (0, 2, 3, 1))                 # n h dh t
        v = transpose(reshape(vals, (n, t, h, dh)), (0, 2, 1, 3))                 # n h t dh
        w = softmax(matmul(q, k) * (1.0 / np.sqrt(dh)), axis=-1)                 # n h 1 t
        ctx = reshape(transpose(matmul(w, v), (0, 2, 1, 3)), (n, self.d_attn))
        upd = self.ff2(relu(self.ff1(self.out(ctx))))
        res = e_query + upd
        return (res, w.data[:, :, 0, :]) if return_weights else res

    def __call__(self, e1, e2):
        if e1.shape != e2.shape:
            raise ValueError(f"pair embeddings differ in shape: {e1.shape} vs {e2.shape}")
        both = concat([e1, e2], axis=0)
        partner = concat([e2, e1], axis=0)
        h = self.attend(both, partner)
        n = e1.shape[0]
        return h[:n], h[n:]


def pair_attend(e1, e2, attn):
    return attn(e1, e2)


class RoutedStack(Module):
    """L routing layers over contextualized atoms plus a node-sum readout."""

    def __init__(self, store, prefix, seed, d_in, hidden, d_embed, d_op, n_layers=3,
                 kinds=OPERATOR_KINDS, d_out=None):
        super().__init__(store, prefix, seed)
        self.proj = Linear(store, f"{prefix}.route_proj", seed, d_embed, d_op, bias=False)
        self.layers = []
        width = d_in
        for l in range(n_layers):
            self.layers.append(RoutingLayer(store, f"{prefix}.layer{l}", seed, l, width, hidden, d_op, kinds))
            width = hidden
        self.readout = Linear(store, f"{prefix}.readout", seed, hidden, d_out or hidden)

    def alphas(self, h):
        return [routing_weights(h, layer.descriptors, self.proj) for layer in self.layers]

    def __call__(self, x0, batch, h, alphas=None):
        alphas = self.alphas(h) if alphas is None else alphas
        x = x0
        for layer, alpha in zip(self.layers, alphas):
            x = layer.mixed(x, batch, alpha)
        pooled = segment_sum(x, batch.node_graph, batch.n_graphs)
        return self.readout(pooled), alphas

    def separation_loss(self):
        return separation_loss(self.layers)
