"""Disjoint-union batching of molecular graphs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import chem


@dataclass
class GraphBatch:
    x: np.ndarray           # N x F initial atom features
    node_graph: np.ndarray  # N, graph index of each node
    src: np.ndarray         # E, directed edge source
    dst: np.ndarray         # E, directed edge target
    bond_kind: np.ndarray   # E, index into chem.BOND_KINDS
    n_graphs: int

    @property
    def n_nodes(self):
        return self.x.shape[0]

    @property
    def in_degree(self):
        return np.bincount(self.dst, minlength=self.n_nodes).astype(np.float64)

    @classmethod
    def from_graphs(cls, graphs, feature_dim, features=None):
        xs, ng, srcs, dsts, kinds = [], [], [], [], []
        offset = 0
        for gi, g in enumerate(graphs):
            if g.n_atoms == 0:
                raise ValueError("cannot batch an empty molecular graph")
            feats = features[gi] if features is not None else chem.atom_features(g, feature_dim)
            xs.append(feats)
            ng.append(np.full(g.n_atoms, gi, dtype=np.int64))
            s, d, k = g.edge_arrays()
            srcs.append(s + offset)
            dsts.append(d + offset)
            kinds.append(k)
            offset += g.n_atoms
        return cls(
            x=np.concatenate(xs, axis=0),
            node_graph=np.concatenate(ng),
            src=np.concatenate(srcs).astype(np.int64),
            dst=np.concatenate(dsts).astype(np.int64),
            bond_kind=np.concatenate(kinds).astype(np.int64),
            n_graphs=len(graphs),
        )

    def permuted(self, perm):
        """Same batch with nodes relabelled: new node ``i`` is old node ``perm[i]``."""
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return GraphBatch(self.x[perm], self.node_graph[perm], inv[self.src], inv[self.dst],
                          self.bond_kind.copy(), self.n_graphs)
