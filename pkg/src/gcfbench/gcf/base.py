"""Shared pieces of the trainable models.

A trainable model exposes:

* ``kind``: string tag
* ``init_params(rng, dtype)``: name -> ndarray dict
* ``loss(tape, pnodes, users, pos, neg, l2, rng)``: scalar loss node over
  tape inputs ``pnodes`` and a sampled triplet batch
* ``final_embeddings(params)``: (user_table, item_table) for scoring
* optionally ``on_epoch_begin(rng)`` for per-epoch resampling
* ``hyperparameters()``: dict persisted in checkpoints
"""

import numpy as np

from ..evaluator import EmbeddingScorer  # noqa: F401  (re-exported)
from ..trainer import bpr_loss


def init_table(rng, rows: int, dim: int, dtype=np.float32, scale: float = 0.1):
    return (rng.normal(0.0, scale, size=(rows, dim))).astype(dtype)


def pair_scores(tape, final, users, pos, neg, num_users):
    """Inner-product scores for (user, positive) and (user, negative) pairs
    out of a stacked user+item embedding node."""
    u_e = tape.gather_rows(final, np.asarray(users, dtype=np.int64))
    p_e = tape.gather_rows(final, num_users + np.asarray(pos, dtype=np.int64))
    n_e = tape.gather_rows(final, num_users + np.asarray(neg, dtype=np.int64))
    pos_scores = tape.reduce_sum(tape.mul(u_e, p_e), axis=1)
    neg_scores = tape.reduce_sum(tape.mul(u_e, n_e), axis=1)
    return pos_scores, neg_scores


def bpr_from_final(tape, final, users, pos, neg, num_users, l2, pnodes):
    pos_scores, neg_scores = pair_scores(tape, final, users, pos, neg, num_users)
    return bpr_loss(tape, pos_scores, neg_scores, l2, pnodes)
