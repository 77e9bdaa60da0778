"""Message passing with feature transforms and ego-neighbor interactions.

Per layer:  E^(l+1) = LeakyReLU( (E^(l) + A_norm E^(l)) W1_l
                                 + (A_norm E^(l) * E^(l)) W2_l )
with slope 0.2; optional message dropout after the activation during
training. Every layer output (including layer 0) is row-L2-normalized and
the final representation concatenates them, width d*(L+1).
"""

import numpy as np

from ..autodiff import Tape
from . import base

LEAKY_SLOPE = 0.2


def propagate(tape, adj, e0, w1_nodes, w2_nodes, dropout_masks=None,
              normalize_layers: bool = True):
    if len(w1_nodes) != len(w2_nodes):
        raise ValueError("need matching W1/W2 per layer")
    outs = [tape.l2norm_rows(e0) if normalize_layers else e0]
    cur = e0
    for layer, (w1, w2) in enumerate(zip(w1_nodes, w2_nodes)):
        side = tape.sparse_matmul(adj, cur)
        linear = tape.matmul(tape.add(cur, side), w1)
        interaction = tape.matmul(tape.mul(side, cur), w2)
        cur = tape.leaky_relu(tape.add(linear, interaction), LEAKY_SLOPE)
        if dropout_masks is not None:
            cur = tape.mul_const(cur, dropout_masks[layer])
        outs.append(tape.l2norm_rows(cur) if normalize_layers else cur)
    return tape.concat_cols(*outs)


def propagate_embeddings(adj, E0, W1s, W2s, normalize_layers=True) -> np.ndarray:
    tape = Tape()
    w1_nodes = [tape.input(w) for w in W1s]
    w2_nodes = [tape.input(w) for w in W2s]
    return propagate(
        tape, adj, tape.input(E0), w1_nodes, w2_nodes,
        normalize_layers=normalize_layers,
    ).value


class NGCF:
    kind = "ngcf"

    def __init__(self, num_users: int, num_items: int, adjacency,
                 dim: int = 64, layers: int = 3, msg_dropout: float = 0.1):
        if layers < 1:
            raise ValueError("layers must be >= 1")
        if not 0.0 <= msg_dropout < 1.0:
            raise ValueError("msg_dropout must be in [0, 1)")
        self.num_users = num_users
        self.num_items = num_items
        self.adjacency = adjacency
        self.dim = dim
        self.layers = layers
        self.msg_dropout = msg_dropout

    def hyperparameters(self) -> dict:
        return {"dim": self.dim, "layers": self.layers,
                "msg_dropout": self.msg_dropout}

    def init_params(self, rng, dtype=np.float32) -> dict:
        n = self.num_users + self.num_items
        params = {"embeddings": base.init_table(rng, n, self.dim, dtype)}
        for layer in range(self.layers):
            params[f"w1_{layer}"] = base.init_table(rng, self.dim, self.dim, dtype)
            params[f"w2_{layer}"] = base.init_table(rng, self.dim, self.dim, dtype)
        return params

    def _weight_nodes(self, pnodes):
        w1 = [pnodes[f"w1_{layer}"] for layer in range(self.layers)]
        w2 = [pnodes[f"w2_{layer}"] for layer in range(self.layers)]
        return w1, w2

    def loss(self, tape, pnodes, users, pos, neg, l2, rng):
        masks = None
        if self.msg_dropout > 0.0:
            dtype = pnodes["embeddings"].value.dtype
            n = self.num_users + self.num_items
            keep = 1.0 - self.msg_dropout
            masks = [
                (rng.random((n, self.dim)) < keep).astype(dtype) / dtype.type(keep)
                for _ in range(self.layers)
            ]
        w1, w2 = self._weight_nodes(pnodes)
        final = propagate(tape, self.adjacency, pnodes["embeddings"], w1, w2,
                          dropout_masks=masks)
        return base.bpr_from_final(
            tape, final, users, pos, neg, self.num_users, l2, pnodes
        )

    def final_embeddings(self, params) -> tuple:
        W1s = [params[f"w1_{layer}"] for layer in range(self.layers)]
        W2s = [params[f"w2_{layer}"] for layer in range(self.layers)]
        final = propagate_embeddings(self.adjacency, params["embeddings"], W1s, W2s)
        return final[: self.num_users], final[self.num_users:]
