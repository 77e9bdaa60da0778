"""Benchmark engine for collaborative filtering on bipartite user-item
graphs: graph-propagation recommenders, closed-form and neighborhood
reference scorers, a shared top-K evaluation protocol, k-hop
information-flow analysis, and seeded hyperparameter search.

Submodules are imported explicitly (``from gcfbench import ingest``);
nothing heavy is pulled in at package import time.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("gcfbench")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0+unknown"
