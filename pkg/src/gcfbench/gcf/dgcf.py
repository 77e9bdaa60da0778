"""Intent-disentangled message passing with iterative edge-score routing.

Embeddings split into K chunks of d/K columns. Each undirected edge keeps a
score per intent, initialized to 1. A routing iteration softmaxes scores
across intents per edge, builds a degree-normalized weighted adjacency per
intent, propagates every chunk through its own adjacency, and raises the
score of intent k on edge (u, i) by e_u^k . tanh(e_i^k) using the freshly
propagated user chunk. After T iterations the layer output is one more
propagation under the final weights; layer outputs (with layer 0) are
summed.
"""

import numpy as np
import scipy.sparse as sp

from ..autodiff import Tape
from . import base

_DEGREE_GUARD = 1e-12  # keeps isolated-node inverse degrees finite


class _EdgeStructure:
    """Directed edge lists over the stacked user+item node space."""

    def __init__(self, R: sp.csr_matrix, num_users: int):
        coo = R.tocoo()
        self.num_nodes = R.shape[0] + R.shape[1]
        self.num_edges = coo.nnz
        self.edge_users = coo.row.astype(np.int64)
        self.edge_item_nodes = (num_users + coo.col).astype(np.int64)
        self.heads = np.concatenate([self.edge_users, self.edge_item_nodes])
        self.tails = np.concatenate([self.edge_item_nodes, self.edge_users])
        self.dup = np.concatenate(
            [np.arange(self.num_edges), np.arange(self.num_edges)]
        )
        e2 = 2 * self.num_edges
        self.head_incidence = sp.csr_matrix(
            (np.ones(e2), (self.heads, np.arange(e2))),
            shape=(self.num_nodes, e2),
        )


def _propagate_once(tape, edges: _EdgeStructure, scores, chunks):
    """One weighted propagation of every chunk under softmaxed scores."""
    probs = tape.softmax_rows(scores)
    outs = []
    for k, chunk in enumerate(chunks):
        w = tape.slice_cols(probs, k, k + 1)            # (E, 1)
        w_dir = tape.gather_rows(w, edges.dup)          # both edge directions
        deg = tape.sparse_matmul(edges.head_incidence, w_dir)
        inv_sqrt = tape.pow_const(tape.add_const(deg, _DEGREE_GUARD), -0.5)
        weighted = tape.mul(
            tape.mul(w_dir, tape.gather_rows(inv_sqrt, edges.heads)),
            tape.gather_rows(inv_sqrt, edges.tails),
        )
        outs.append(
            tape.edge_matmul(
                edges.heads, edges.tails,
                (edges.num_nodes, edges.num_nodes), weighted, chunk,
            )
        )
    return outs


def propagate(tape, edges: _EdgeStructure, e0, intents: int, routing: int,
              layers: int, capture: dict | None = None):
    dim = e0.value.shape[1]
    if dim % intents != 0:
        raise ValueError(f"dim {dim} not divisible by intents {intents}")
    if routing < 0 or layers < 0:
        raise ValueError("routing and layers must be >= 0")
    chunk_w = dim // intents
    dtype = e0.value.dtype
    scores = tape.input(np.ones((edges.num_edges, intents), dtype=dtype))

    out = e0
    cur = e0
    for _ in range(layers):
        chunks_in = [
            tape.slice_cols(cur, k * chunk_w, (k + 1) * chunk_w)
            for k in range(intents)
        ]
        for _ in range(routing):
            propagated = _propagate_once(tape, edges, scores, chunks_in)
            updates = []
            for k in range(intents):
                head = tape.gather_rows(propagated[k], edges.edge_users)
                tail = tape.tanh(
                    tape.gather_rows(chunks_in[k], edges.edge_item_nodes)
                )
                updates.append(tape.reduce_sum(tape.mul(head, tail), axis=1))
            scores = tape.add(scores, tape.concat_cols(*updates))
        cur = tape.concat_cols(*_propagate_once(tape, edges, scores, chunks_in))
        out = tape.add(out, cur)
    if capture is not None:
        capture["scores"] = scores
    return out


def routing_probabilities(R, num_users: int, E0: np.ndarray, intents: int,
                          routing: int) -> np.ndarray:
    """Per-edge softmax weights over intents after the routing iterations
    of a single layer. Exposed for behavioral checks of the update rule."""
    edges = _EdgeStructure(R, num_users)
    tape = Tape()
    cap = {}
    propagate(tape, edges, tape.input(E0), intents, routing, layers=1,
              capture=cap)
    s = cap["scores"].value
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def propagate_embeddings(R, num_users: int, E0: np.ndarray, intents: int,
                         routing: int, layers: int) -> np.ndarray:
    edges = _EdgeStructure(R, num_users)
    tape = Tape()
    return propagate(tape, edges, tape.input(E0), intents, routing, layers).value


class DGCF:
    kind = "dgcf"

    def __init__(self, num_users: int, num_items: int, R,
                 dim: int = 64, layers: int = 3, intents: int = 4,
                 routing: int = 2):
        if dim % intents != 0:
            raise ValueError(f"dim {dim} not divisible by intents {intents}")
        self.num_users = num_users
        self.num_items = num_items
        self.dim = dim
        self.layers = layers
        self.intents = intents
        self.routing = routing
        self.edges = _EdgeStructure(R, num_users)

    def hyperparameters(self) -> dict:
        return {"dim": self.dim, "layers": self.layers,
                "intents": self.intents, "routing": self.routing}

    def init_params(self, rng, dtype=np.float32) -> dict:
        n = self.num_users + self.num_items
        return {"embeddings": base.init_table(rng, n, self.dim, dtype)}

    def loss(self, tape, pnodes, users, pos, neg, l2, rng):
        final = propagate(tape, self.edges, pnodes["embeddings"],
                          self.intents, self.routing, self.layers)
        return base.bpr_from_final(
            tape, final, users, pos, neg, self.num_users, l2, pnodes
        )

    def final_embeddings(self, params) -> tuple:
        tape = Tape()
        final = propagate(tape, self.edges, tape.input(params["embeddings"]),
                          self.intents, self.routing, self.layers).value
        return final[: self.num_users], final[self.num_users:]
