"""Cell-line context: structural features appended to atoms and semantic prefix rows."""
from __future__ import annotations

import numpy as np

from .diffcore import Linear, Module, Tensor, concat, relu, reshape, take_rows
from .predictor.tokenizer import tokenize_description


class TwoLayerProjector(Module):
    """y = W2 ReLU(W1 x + b1) + b2."""

    def __init__(self, store, prefix, seed, d_in, d_hidden, d_out):
        super().__init__(store, prefix, seed)
        self.d_in, self.d_out = d_in, d_out
        self.l1 = Linear(store, f"{prefix}.l1", seed, d_in, d_hidden)
        self.l2 = Linear(store, f"{prefix}.l2", seed, d_hidden, d_out)

    def __call__(self, x):
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.shape[-1] != self.d_in:
            raise ValueError(f"expected input width {self.d_in}, got {x.shape[-1]}")
        return self.l2(relu(self.l1(x)))


class ContextProjector(TwoLayerProjector):
    """Expression profile -> structural context vector e_c."""


class EmbeddingProjector(Module):
    """Vector -> ``n_rows`` prefix rows of the language model's token width."""

    def __init__(self, store, prefix, seed, d_in, d_hidden, n_rows, width):
        super().__init__(store, prefix, seed)
        self.n_rows, self.width = n_rows, width
        self.net = TwoLayerProjector(store, prefix, seed, d_in, d_hidden, n_rows * width)

    def __call__(self, x):
        y = self.net(x)
        if y.ndim == 1:
            return reshape(y, (self.n_rows, self.width))
        return reshape(y, (y.shape[0], self.n_rows, self.width))


def project_context(x_c, projector: ContextProjector):
    return projector(x_c)


def project_cell_embedding(x_c, projector: EmbeddingProjector):
    return projector(x_c)


def contextualize_graph(z_v, e_c):
    """Append the same context vector to every atom row."""
    z_v = z_v if isinstance(z_v, Tensor) else Tensor(z_v)
    e_c = e_c if isinstance(e_c, Tensor) else Tensor(e_c)
    rows = take_rows(reshape(e_c, (1, -1)), np.zeros(z_v.shape[0], dtype=np.int64))
    return concat([z_v, rows], axis=1)


def contextualize_batch(x, node_cell, e_c):
    """Batched form: atom ``i`` receives row ``node_cell[i]`` of ``e_c``."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    return concat([x, take_rows(e_c, node_cell)], axis=1)


def cell_tokens(description):
    return tokenize_description(description)
