"""Metric-grade classification/regression head over the prefix embeddings."""
from __future__ import annotations

from ..diffcore import Linear, Module, Tensor, concat, relu, reshape


class DirectHead(Module):
    """concat(E_c, E_d1, E_d2, x_d1, x_d2) -> two-layer net -> (2 logits, score).

    With ``symmetric`` set, outputs are averaged over both drug orders.
    """

    def __init__(self, store, prefix, seed, d_in, hidden=64, symmetric=True):
        super().__init__(store, prefix, seed)
        self.d_in = d_in
        self.symmetric = symmetric
        self.l1 = Linear(store, f"{prefix}.l1", seed, d_in, hidden)
        self.l2 = Linear(store, f"{prefix}.l2", seed, hidden, 3)

    def _one(self, parts):
        n = parts[0].shape[0]
        x = concat([reshape(p, (n, -1)) for p in parts], axis=1)
        if x.shape[1] != self.d_in:
            raise ValueError(f"direct head expects {self.d_in} inputs, got {x.shape[1]}")
        return self.l2(relu(self.l1(x)))

    def __call__(self, e_c, e_d1, e_d2, x_d1, x_d2):
        """Batched inputs with a leading sample axis; returns (n x 2 logits, n scores)."""
        parts = [t if isinstance(t, Tensor) else Tensor(t) for t in (e_c, e_d1, e_d2, x_d1, x_d2)]
        out = self._one(parts)
        if self.symmetric:
            swapped = self._one([parts[0], parts[2], parts[1], parts[4], parts[3]])
            out = (out + swapped) * 0.5
        return out[:, :2], out[:, 2]


def direct_head(e_c, e_d1, e_d2, x_d1, x_d2, head: DirectHead):
    """Unbatched convenience wrapper."""
    parts = [t if isinstance(t, Tensor) else Tensor(t) for t in (e_c, e_d1, e_d2, x_d1, x_d2)]
    parts = [reshape(p, (1,) + p.shape) for p in parts]
    logits, score = head(*parts)
    return logits[0], score[0]
