"""Linear message passing: no transforms, no nonlinearities.

E^(l+1) = A_norm E^(l); the final representation is the mean over layers
0..L. With L = 0 this is plain matrix factorization.
"""

import numpy as np

from ..autodiff import Tape
from . import base


def propagate(tape, adj, e0, layers: int):
    """Tape composition of the layer recursion and the layer mean."""
    if layers < 0:
        raise ValueError("layers must be >= 0")
    acc = e0
    cur = e0
    for _ in range(layers):
        cur = tape.sparse_matmul(adj, cur)
        acc = tape.add(acc, cur)
    return tape.mul_const(acc, 1.0 / (layers + 1))


def propagate_embeddings(adj, E0: np.ndarray, layers: int) -> np.ndarray:
    """Numpy-in, numpy-out convenience around ``propagate``."""
    tape = Tape()
    return propagate(tape, adj, tape.input(E0), layers).value


class LightGCN:
    kind = "lightgcn"

    def __init__(self, num_users: int, num_items: int, adjacency,
                 dim: int = 64, layers: int = 3):
        if layers < 0:
            raise ValueError("layers must be >= 0")
        self.num_users = num_users
        self.num_items = num_items
        self.adjacency = adjacency
        self.dim = dim
        self.layers = layers

    def hyperparameters(self) -> dict:
        return {"dim": self.dim, "layers": self.layers}

    def init_params(self, rng, dtype=np.float32) -> dict:
        n = self.num_users + self.num_items
        return {"embeddings": base.init_table(rng, n, self.dim, dtype)}

    def loss(self, tape, pnodes, users, pos, neg, l2, rng):
        final = propagate(tape, self.adjacency, pnodes["embeddings"], self.layers)
        return base.bpr_from_final(
            tape, final, users, pos, neg, self.num_users, l2, pnodes
        )

    def final_embeddings(self, params) -> tuple:
        final = propagate_embeddings(
            self.adjacency, params["embeddings"], self.layers
        )
        return final[: self.num_users], final[self.num_users:]
