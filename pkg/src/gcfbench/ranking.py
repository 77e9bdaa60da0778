"""Exact deterministic top-k selection.

All ranking ties in this package break by ascending index: argpartition
alone keeps arbitrary tied members, so the threshold value is re-examined
and tied entries are admitted smallest-index-first.
"""

import numpy as np


def topk_row(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, ordered by (value desc, index asc)."""
    n = values.shape[0]
    if k >= n:
        selected = np.arange(n)
    else:
        part = np.argpartition(-values, k - 1)[:k]
        threshold = values[part].min()
        above = np.flatnonzero(values > threshold)
        ties = np.flatnonzero(values == threshold)
        selected = np.concatenate([above, ties[: k - above.shape[0]]])
    order = np.lexsort((selected, -values[selected]))
    return selected[order]
