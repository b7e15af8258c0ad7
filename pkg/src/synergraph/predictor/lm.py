"""Tiny decoder-only transformer over the byte vocabulary with spliced prefix rows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import (
    Linear, Module, Tensor, concat, gelu, index, layer_normalize, log_softmax, matmul, mul, no_grad,
    reshape, softmax, stack, take_rows, transpose,
)
from .tokenizer import EOS, VOCAB_SIZE, as_ids, detokenize, tokenize

NEG_INF = -1e9


class ContextOverflow(ValueError):
    pass


@dataclass
class LMConfig:
    n_layers: int = 2
    heads: int = 2
    width: int = 64
    context: int = 512
    ff_mult: int = 4
    emb_scale: float = 0.02

    def __post_init__(self):
        if self.width % self.heads:
            raise ValueError("width must be divisible by the head count")


class LayerNorm(Module):
    def __init__(self, store, prefix, seed, width):
        super().__init__(store, prefix, seed)
        self.g = self.param("g", (width,), init="ones")
        self.b = self.param("b", (width,), init="zeros")

    def __call__(self, x):
        return mul(layer_normalize(x), self.g) + self.b


class Block(Module):
    def __init__(self, store, prefix, seed, cfg: LMConfig):
        super().__init__(store, prefix, seed)
        w = cfg.width
        self.cfg = cfg
        self.ln1 = LayerNorm(store, f"{prefix}.ln1", seed, w)
        self.qkv = Linear(store, f"{prefix}.qkv", seed, w, 3 * w)
        self.proj = Linear(store, f"{prefix}.proj", seed, w, w)
        self.ln2 = LayerNorm(store, f"{prefix}.ln2", seed, w)
        self.fc1 = Linear(store, f"{prefix}.fc1", seed, w, cfg.ff_mult * w)
        self.fc2 = Linear(store, f"{prefix}.fc2", seed, cfg.ff_mult * w, w)

    def __call__(self, x, mask):
        b, t, w = x.shape
        h, dh = self.cfg.heads, w // self.cfg.heads
        qkv = transpose(reshape(self.qkv(self.ln1(x)), (b, t, 3, h, dh)), (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh)) + mask
        att = softmax(scores, axis=-1)
        ctx = reshape(transpose(matmul(att, v), (0, 2, 1, 3)), (b, t, w))
        x = x + self.proj(ctx)
        x = x + self.fc2(gelu(self.fc1(self.ln2(x))))
        return x, att.data


class TinyLM(Module):
    def __init__(self, store, prefix, seed, cfg: LMConfig | None = None):
        super().__init__(store, prefix, seed)
        self.cfg = cfg = cfg or LMConfig()
        self.tok = self.param("tok_emb", (VOCAB_SIZE, cfg.width), init="normal", scale=cfg.emb_scale)
        self.pos = self.param("pos_emb", (cfg.context, cfg.width), init="normal", scale=cfg.emb_scale)
        self.blocks = [Block(store, f"{prefix}.block{i}", seed, cfg) for i in range(cfg.n_layers)]
        self.ln_f = LayerNorm(store, f"{prefix}.ln_f", seed, cfg.width)
        self.head = Linear(store, f"{prefix}.head", seed, cfg.width, VOCAB_SIZE)

    @property
    def width(self):
        return self.cfg.width

    def embed(self, segments, slot_rows=None, extra_ids=None):
        """Interleave token embeddings with prefix rows into a (T x width) tensor."""
        parts = []
        for seg in segments:
            if isinstance(seg, str):
                if slot_rows is None or seg not in slot_rows:
                    raise KeyError(f"no embedding rows supplied for slot {seg}")
                rows = slot_rows[seg]
                rows = rows if isinstance(rows, Tensor) else Tensor(rows)
                if rows.shape[-1] != self.width:
                    raise ValueError(f"slot {seg} rows have width {rows.shape[-1]}, expected {self.width}")
                parts.append(rows)
            elif len(seg):
                parts.append(take_rows(self.tok, as_ids(seg)))
        if extra_ids is not None and len(extra_ids):
            parts.append(take_rows(self.tok, as_ids(extra_ids)))
        return concat(parts, axis=0)

    def hidden(self, seqs, return_attn=False):
        """Final-layer states for right-padded sequences; returns (B x T x W, lengths, attn)."""
        lengths = [s.shape[0] for s in seqs]
        t = max(lengths)
        if t > self.cfg.context:
            raise ContextOverflow(f"sequence of {t} positions exceeds context {self.cfg.context}")
        padded = [s if s.shape[0] == t else concat([s, Tensor(np.zeros((t - s.shape[0], self.width)))], axis=0)
                  for s in seqs]
        x = stack(padded, axis=0) + self.pos[:t]
        mask = np.triu(np.full((t, t), NEG_INF), k=1)
        attn = []
        for blk in self.blocks:
            x, a = blk(x, mask)
            attn.append(a)
        x = self.ln_f(x)
        return (x, lengths, attn) if return_attn else (x, lengths)

    def logits(self, seqs):
        x, _ = self.hidden(seqs)
        return self.head(x)


def lm_forward(prompt, lm: TinyLM, slot_rows=None):
    """Vocabulary logits (T x V) at every position of one prompt."""
    return lm.logits([lm.embed(prompt.segments, slot_rows)])[0]


def masked_nll(lm: TinyLM, items):
    """Mean NLL over all response tokens of a batch.

    ``items`` holds ``(segments, slot_rows, target_ids)``; each sequence is
    the prompt followed by the response, and only positions that predict a
    response token contribute.
    """
    seqs, rows_b, rows_p, toks = [], [], [], []
    for b, (segments, slot_rows, target) in enumerate(items):
        target = as_ids(target)
        if not len(target):
            raise ValueError("empty target response")
        seq = lm.embed(segments, slot_rows, extra_ids=target[:-1])
        p = seq.shape[0] - len(target) + 1
        seqs.append(seq)
        rows_b += [b] * len(target)
        rows_p += list(range(p - 1, p - 1 + len(target)))
        toks += list(target)
    x, _ = lm.hidden(seqs)
    picked = index(x, (np.array(rows_b), np.array(rows_p)))
    logp = log_softmax(lm.head(picked), axis=-1)
    nll = index(logp, (np.arange(len(toks)), np.array(toks)))
    return -(nll.sum() * (1.0 / len(toks)))


def instruction_loss(prompt, target_text, lm: TinyLM, slot_rows=None):
    target = np.array(tokenize(target_text) + [EOS], dtype=np.int64)
    return masked_nll(lm, [(prompt.segments, slot_rows, target)])


def task_loss(prompt, response, lm: TinyLM, slot_rows):
    text = response if isinstance(response, str) else response.serialize()
    return instruction_loss(prompt, text, lm, slot_rows)


def greedy_decode(prompt_or_segments, lm: TinyLM, max_len=96, slot_rows=None, return_ids=False):
    """Argmax decoding until EOS or ``max_len`` new tokens (lowest id wins ties)."""
    segments = getattr(prompt_or_segments, "segments", prompt_or_segments)
    out = []
    with no_grad():
        if slot_rows is not None:
            slot_rows = {k: Tensor(v.data if isinstance(v, Tensor) else v) for k, v in slot_rows.items()}
        while len(out) < max_len:
            seq = lm.embed(segments, slot_rows, extra_ids=np.array(out, dtype=np.int64))
            if seq.shape[0] > lm.cfg.context:
                raise ContextOverflow(f"decoding exceeds context {lm.cfg.context}")
            x, _ = lm.hidden([seq])
            logits = lm.head(x[0, seq.shape[0] - 1]).data
            nxt = int(np.argmax(logits))
            if nxt == EOS:
                break
            out.append(nxt)
    return out if return_ids else detokenize(out)
