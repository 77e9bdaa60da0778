"""Self-supervised contrastive regularization on top of linear propagation.

The ranking part is exactly the linear-propagation BPR objective on the
full graph. Two stochastically edge-dropped views of the normalized
adjacency (kept entries rescaled by 1/(1-rho), both directions of an edge
tied) propagate the same embeddings; an InfoNCE term over batch users and
batch positive items pulls each node's two views together against the
other in-batch nodes of the same type.
"""

import numpy as np
import scipy.sparse as sp

from . import base, lightgcn


class SGL:
    kind = "sgl"

    def __init__(self, num_users: int, num_items: int, adjacency, R,
                 dim: int = 64, layers: int = 3, rho: float = 0.1,
                 tau: float = 0.2, lambda1: float = 0.1,
                 augmentation: str = "edge"):
        if not 0.0 <= rho < 1.0:
            raise ValueError("rho must be in [0, 1); rho = 1 empties the graph")
        if tau <= 0:
            raise ValueError("tau must be positive")
        if augmentation not in ("edge", "node", "walk"):
            raise ValueError(f"unknown augmentation: {augmentation!r}")
        self.num_users = num_users
        self.num_items = num_items
        self.adjacency = adjacency
        self.dim = dim
        self.layers = layers
        self.rho = rho
        self.tau = tau
        self.lambda1 = lambda1
        self.augmentation = augmentation
        coo = adjacency.tocoo()
        # entries come in symmetric pairs; remember each stored entry's
        # undirected edge id so a drop removes both directions at once
        upper = coo.row < coo.col
        key = np.where(upper, coo.row * (num_users + num_items) + coo.col,
                       coo.col * (num_users + num_items) + coo.row)
        _, edge_id = np.unique(key, return_inverse=True)
        self._coo = coo
        self._edge_id = edge_id
        self._num_undirected = int(edge_id.max()) + 1 if edge_id.size else 0
        self._views = None

    def hyperparameters(self) -> dict:
        return {"dim": self.dim, "layers": self.layers, "rho": self.rho,
                "tau": self.tau, "lambda1": self.lambda1,
                "augmentation": self.augmentation}

    def _dropped_view(self, rng) -> sp.csr_matrix:
        if self.augmentation == "edge":
            keep_edge = rng.random(self._num_undirected) >= self.rho
            keep = keep_edge[self._edge_id]
        elif self.augmentation == "node":
            # optional variant: drop whole nodes with their incident edges
            keep_node = rng.random(self.num_users + self.num_items) >= self.rho
            keep = keep_node[self._coo.row] & keep_node[self._coo.col]
        else:  # walk: fresh edge drop per call, one per layer downstream
            keep = (rng.random(self._num_undirected) >= self.rho)[self._edge_id]
        data = self._coo.data * keep / (1.0 - self.rho)
        view = sp.csr_matrix(
            (data.astype(self._coo.data.dtype), (self._coo.row, self._coo.col)),
            shape=self._coo.shape,
        )
        view.eliminate_zeros()
        return view

    def on_epoch_begin(self, rng) -> None:
        if self.rho > 0.0 and self.lambda1 != 0.0:
            self._views = (self._dropped_view(rng), self._dropped_view(rng))
        else:
            self._views = None

    def init_params(self, rng, dtype=np.float32) -> dict:
        n = self.num_users + self.num_items
        return {"embeddings": base.init_table(rng, n, self.dim, dtype)}

    def _info_nce(self, tape, z1, z2, rows):
        a = tape.l2norm_rows(tape.gather_rows(z1, rows))
        b = tape.l2norm_rows(tape.gather_rows(z2, rows))
        sims = tape.scale(tape.matmul(a, b, transpose_b=True), 1.0 / self.tau)
        aligned = tape.take_diag(sims)
        partition = tape.logsumexp_rows(sims)
        return tape.reduce_sum(tape.sub(partition, aligned))

    def loss(self, tape, pnodes, users, pos, neg, l2, rng):
        e0 = pnodes["embeddings"]
        final = lightgcn.propagate(tape, self.adjacency, e0, self.layers)
        loss = base.bpr_from_final(
            tape, final, users, pos, neg, self.num_users, l2, pnodes
        )
        if self.lambda1 == 0.0:
            return loss
        if self._views is not None:
            adj1, adj2 = self._views
        else:
            adj1 = adj2 = self.adjacency  # rho = 0: both views are the graph
        z1 = lightgcn.propagate(tape, adj1, e0, self.layers)
        z2 = lightgcn.propagate(tape, adj2, e0, self.layers)
        users = np.asarray(users, dtype=np.int64)
        item_rows = self.num_users + np.asarray(pos, dtype=np.int64)
        contrast = tape.add(
            self._info_nce(tape, z1, z2, users),
            self._info_nce(tape, z1, z2, item_rows),
        )
        return tape.add(loss, tape.scale(contrast, self.lambda1))

    def final_embeddings(self, params) -> tuple:
        final = lightgcn.propagate_embeddings(
            self.adjacency, params["embeddings"], self.layers
        )
        return final[: self.num_users], final[self.num_users:]
