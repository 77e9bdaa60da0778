"""Hop-wise information flow and quartile accuracy breakdown.

How much of the graph a user can see in h propagation hops is the walk
count: the number of length-h walks leaving the user node in the
bipartite graph. Users are then split into quartiles of that quantity
and per-quartile mean accuracy is compared against the global mean.
"""

import warnings

import numpy as np
import scipy.sparse as sp

from .errors import UsageError

HOPS = (1, 2, 3)


def info_flow(R: sp.csr_matrix, hop: int) -> np.ndarray:
    """Per-user count of length-`hop` walks from the user node.

    Exact integer arithmetic; equals the user rows of A^hop @ 1 for the
    symmetric bipartite adjacency A = [[0, R], [R^T, 0]].
    """
    if hop not in HOPS:
        raise UsageError(f"hop must be one of {HOPS}, got {hop!r}")
    Ri = R.astype(np.int64)
    ones_items = np.ones(Ri.shape[1], dtype=np.int64)
    d_users = Ri @ ones_items                      # hop 1: user degrees
    if hop == 1:
        return d_users
    d_items = Ri.T @ np.ones(Ri.shape[0], dtype=np.int64)
    if hop == 2:
        return Ri @ d_items                        # sum of neighbor item degrees
    return Ri @ (Ri.T @ d_users)                   # hop 3: (R R^T)(R 1)


def flow_profile(R: sp.csr_matrix) -> dict:
    """All three hop vectors keyed by hop number."""
    return {h: info_flow(R, h) for h in HOPS}


def quartile_partition(values) -> np.ndarray:
    """Assign each user a group id in {1,2,3,4} by value quartile.

    Thresholds are linear-interpolation empirical quantiles. Groups are
    [min, q25), [q25, q50), [q50, q75), [q75, max]: half-open below,
    closed at the top, so boundary ties land in the upper group.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 4:
        raise UsageError("quartile partition needs a 1-d vector of >= 4 values")
    if np.all(values == values[0]):
        warnings.warn("all flow values equal; every user lands in quartile 4",
                      stacklevel=2)
        return np.full(values.size, 4, dtype=np.int64)
    q25, q50, q75 = np.quantile(values, [0.25, 0.50, 0.75])
    groups = np.full(values.size, 4, dtype=np.int64)
    groups[values < q75] = 3
    groups[values < q50] = 2
    groups[values < q25] = 1
    return groups


def quartile_report(per_user_metric, groups, global_mean: float) -> list:
    """Per-quartile size, mean and percentage variation vs the global mean.

    Returns four dicts (quartile 1..4). Empty quartiles carry None for
    mean and variation.
    """
    per_user_metric = np.asarray(per_user_metric, dtype=np.float64)
    groups = np.asarray(groups)
    if per_user_metric.shape != groups.shape:
        raise UsageError("metric vector and group vector must align")
    rows = []
    for q in (1, 2, 3, 4):
        member = groups == q
        size = int(member.sum())
        if size == 0:
            rows.append({"quartile": q, "size": 0, "mean": None, "variation": None})
            continue
        mean = float(per_user_metric[member].mean())
        variation = (mean / global_mean - 1.0) * 100.0 if global_mean != 0 else None
        rows.append({"quartile": q, "size": size, "mean": mean,
                     "variation": variation})
    return rows


def write_variation_table(path, model_names, variation_by_model) -> None:
    """Figure-data table: comma-separated, x column `Quartiles`, one
    column per model, four rows of percentage variations."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["Quartiles"] + list(model_names)) + "\n")
        for qi in range(4):
            cells = [str(qi + 1)]
            for name in model_names:
                v = variation_by_model[name][qi]
                cells.append("" if v is None else f"{v:.4f}")
            fh.write(",".join(cells) + "\n")
