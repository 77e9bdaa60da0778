"""Propagation-free model: degree-derived edge weights stand in for the
limit of infinitely many message-passing layers.

Two weighted binary cross-entropy components: one over sampled
(user, positive/negative) pairs with weight 1 + beta_ui where
beta_ui = (1/d_u) * sqrt((d_u + 1) / (d_i + 1)), and an item-item
component pulling each user toward the top-k co-occurrence neighbors of
every positive item, weighted by the normalized gram coefficients
omega_ij = G_ij * sqrt(g_i + 1) / (g_i * sqrt(g_j + 1)), G = R^T R.
"""

import numpy as np
import scipy.sparse as sp

from ..ranking import topk_row
from ..trainer import l2_penalty
from . import base


def item_item_neighbors(R: sp.csr_matrix, topk: int) -> tuple:
    """Per-item top-k neighbor indices and omega weights from the gram
    matrix (diagonal included; items rank among their own neighbors)."""
    G = (R.T @ R).tocsr().astype(np.float64)
    g = np.asarray(G.sum(axis=1)).ravel()
    n_items = G.shape[0]
    nb_idx = np.zeros((n_items, topk), dtype=np.int64)
    nb_w = np.zeros((n_items, topk), dtype=np.float64)
    row_factor = np.where(g > 0, np.sqrt(g + 1.0) / np.maximum(g, 1e-300), 0.0)
    col_factor = 1.0 / np.sqrt(g + 1.0)
    for i in range(n_items):
        row = G[i].toarray().ravel() * row_factor[i] * col_factor
        kept = topk_row(row, min(topk, n_items))
        kept = kept[row[kept] > 0]
        nb_idx[i, : len(kept)] = kept
        nb_w[i, : len(kept)] = row[kept]
    return nb_idx, nb_w


class UltraGCN:
    kind = "ultragcn"

    def __init__(self, num_users: int, num_items: int, R,
                 dim: int = 64, gamma_item: float = 1.0, item_topk: int = 10):
        if item_topk < 1:
            raise ValueError("item_topk must be >= 1")
        self.num_users = num_users
        self.num_items = num_items
        self.dim = dim
        self.gamma_item = gamma_item
        self.item_topk = item_topk
        deg = lambda axis: np.asarray(R.sum(axis=axis)).ravel().astype(np.float64)
        d_u, d_i = deg(1), deg(0)
        self._user_factor = np.sqrt(d_u + 1.0) / np.maximum(d_u, 1e-300)
        self._item_factor = 1.0 / np.sqrt(d_i + 1.0)
        self.nb_idx, self.nb_w = item_item_neighbors(R, item_topk)

    def hyperparameters(self) -> dict:
        return {"dim": self.dim, "gamma_item": self.gamma_item,
                "item_topk": self.item_topk}

    def beta(self, users, items) -> np.ndarray:
        return self._user_factor[np.asarray(users)] * \
            self._item_factor[np.asarray(items)]

    def init_params(self, rng, dtype=np.float32) -> dict:
        return {
            "user_embeddings": base.init_table(rng, self.num_users, self.dim, dtype),
            "item_embeddings": base.init_table(rng, self.num_items, self.dim, dtype),
        }

    def loss(self, tape, pnodes, users, pos, neg, l2, rng):
        users = np.asarray(users, dtype=np.int64)
        pos = np.asarray(pos, dtype=np.int64)
        neg = np.asarray(neg, dtype=np.int64)
        u_e = tape.gather_rows(pnodes["user_embeddings"], users)
        p_e = tape.gather_rows(pnodes["item_embeddings"], pos)
        n_e = tape.gather_rows(pnodes["item_embeddings"], neg)

        pos_dot = tape.reduce_sum(tape.mul(u_e, p_e), axis=1)
        neg_dot = tape.reduce_sum(tape.mul(u_e, n_e), axis=1)
        w_pos = (1.0 + self.beta(users, pos))[:, None]
        w_neg = (1.0 + self.beta(users, neg))[:, None]
        # -log sigmoid(x) = softplus(-x)
        pos_part = tape.mul_const(tape.softplus(tape.scale(pos_dot, -1.0)), w_pos)
        neg_part = tape.mul_const(tape.softplus(neg_dot), w_neg)
        loss = tape.add(tape.reduce_sum(pos_part), tape.reduce_sum(neg_part))

        if self.gamma_item != 0.0:
            item_loss = None
            for slot in range(self.item_topk):
                nb = self.nb_idx[pos, slot]
                w = self.nb_w[pos, slot][:, None]
                dot = tape.reduce_sum(
                    tape.mul(u_e, tape.gather_rows(pnodes["item_embeddings"], nb)),
                    axis=1,
                )
                term = tape.reduce_sum(
                    tape.mul_const(tape.softplus(tape.scale(dot, -1.0)), w)
                )
                item_loss = term if item_loss is None else tape.add(item_loss, term)
            loss = tape.add(loss, tape.scale(item_loss, self.gamma_item))

        if l2 != 0.0:
            loss = tape.add(loss, l2_penalty(tape, l2, pnodes))
        return loss

    def final_embeddings(self, params) -> tuple:
        return params["user_embeddings"], params["item_embeddings"]
