"""The six graph collaborative-filtering models.

Five trainable message-passing models plus one closed-form spectral
filter. Trainable models implement the protocol consumed by
``gcfbench.trainer.train``; the closed-form model follows the baseline
fit/score interface.
"""

from .. import graph
from .base import EmbeddingScorer
from .dgcf import DGCF
from .gfcf import Gfcf
from .lightgcn import LightGCN
from .ngcf import NGCF
from .sgl import SGL
from .ultragcn import UltraGCN

GCF_KINDS = ("ngcf", "dgcf", "lightgcn", "sgl", "ultragcn", "gfcf")
TRAINABLE_KINDS = ("ngcf", "dgcf", "lightgcn", "sgl", "ultragcn")


def build_model(kind: str, train, **hyper):
    """Construct a model from a train InteractionSet; graph structures
    (interaction matrix, normalized adjacency) are derived here."""
    R = graph.build_interaction_matrix(train)
    if kind == "lightgcn":
        adj = graph.sym_normalize(graph.build_adjacency(R))
        return LightGCN(train.num_users, train.num_items, adj, **hyper)
    if kind == "ngcf":
        adj = graph.sym_normalize(graph.build_adjacency(R))
        return NGCF(train.num_users, train.num_items, adj, **hyper)
    if kind == "sgl":
        adj = graph.sym_normalize(graph.build_adjacency(R))
        return SGL(train.num_users, train.num_items, adj, R, **hyper)
    if kind == "dgcf":
        return DGCF(train.num_users, train.num_items, R, **hyper)
    if kind == "ultragcn":
        return UltraGCN(train.num_users, train.num_items, R, **hyper)
    if kind == "gfcf":
        # closed form: fitting here makes the returned object scorer-ready
        return Gfcf(**hyper).fit(R)
    raise ValueError(f"unknown model kind: {kind!r}")
