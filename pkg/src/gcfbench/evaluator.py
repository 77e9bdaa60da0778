"""All-unrated-item top-K evaluation: Recall@K and nDCG@K.

For every user with a nonempty test profile, candidate items are all items
the user did not interact with in train (train items masked to -inf).
Ties break by ascending item index everywhere.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import build_interaction_matrix
from .ranking import topk_row


@dataclass
class EvalReport:
    K: int
    recall: np.ndarray      # per user; NaN where not evaluable
    ndcg: np.ndarray
    evaluable: np.ndarray   # bool mask
    recall_mean: float
    ndcg_mean: float
    n_evaluable: int


class EmbeddingScorer:
    """Inner-product scorer over fitted user/item embedding tables."""

    kind = "embeddings"

    def __init__(self, user_embeddings: np.ndarray, item_embeddings: np.ndarray):
        self.user_embeddings = np.asarray(user_embeddings)
        self.item_embeddings = np.asarray(item_embeddings)

    def score(self, users) -> np.ndarray:
        return self.user_embeddings[np.asarray(users)] @ self.item_embeddings.T


def _topk_masked(scores_row: np.ndarray, K: int, train_items) -> np.ndarray:
    masked = scores_row.astype(np.float64, copy=True)
    if len(train_items):
        masked[train_items] = -np.inf
    top = topk_row(masked, min(K, masked.shape[0]))
    return top[masked[top] > -np.inf]  # fewer candidates than K: return them all


def rank_topk(scorer, u: int, K: int, train_items) -> np.ndarray:
    """Ordered top-K items for one user under the train mask."""
    row = scorer.score(np.array([u]))[0]
    return _topk_masked(row, K, np.asarray(train_items, dtype=np.int64))


def recall_at_k(topk, test_items) -> float:
    test = set(int(i) for i in test_items)
    if not test:
        return 0.0
    hits = sum(1 for i in topk if int(i) in test)
    return hits / len(test)


def ndcg_at_k(topk, test_items, K: int | None = None) -> float:
    """Binary-relevance nDCG with the ideal DCG truncated at min(|test|, K)."""
    test = set(int(i) for i in test_items)
    if not test:
        return 0.0
    if K is None:
        K = len(topk)
    dcg = 0.0
    for rank, item in enumerate(topk, start=1):
        if int(item) in test:
            dcg += 1.0 / np.log2(rank + 1)
    ideal = sum(1.0 / np.log2(r + 1) for r in range(1, min(len(test), K) + 1))
    return dcg / ideal


def evaluate(scorer, split, K: int = 20, batch_users: int = 2048,
             mask_train: bool = True) -> EvalReport:
    """Score every evaluable user and aggregate both metrics.

    Users whose test part is empty are excluded from the aggregates and
    carry NaN in the per-user arrays.
    """
    R_train = build_interaction_matrix(split.train)
    R_test = build_interaction_matrix(split.test)
    num_users = R_train.shape[0]

    test_counts = np.asarray(R_test.sum(axis=1)).ravel()
    evaluable = test_counts > 0
    eval_users = np.flatnonzero(evaluable)
    if eval_users.size == 0:
        raise DataError("no users have test interactions; nothing to evaluate")

    recall = np.full(num_users, np.nan)
    ndcg = np.full(num_users, np.nan)

    for start in range(0, eval_users.size, batch_users):
        batch = eval_users[start:start + batch_users]
        scores = scorer.score(batch)
        for row, u in enumerate(batch):
            train_items = (
                R_train.indices[R_train.indptr[u]:R_train.indptr[u + 1]]
                if mask_train else np.empty(0, dtype=np.int64)
            )
            test_items = R_test.indices[R_test.indptr[u]:R_test.indptr[u + 1]]
            top = _topk_masked(scores[row], K, train_items)
            recall[u] = recall_at_k(top, test_items)
            ndcg[u] = ndcg_at_k(top, test_items, K=K)

    return EvalReport(
        K=K,
        recall=recall,
        ndcg=ndcg,
        evaluable=evaluable,
        recall_mean=float(recall[evaluable].mean()),
        ndcg_mean=float(ndcg[evaluable].mean()),
        n_evaluable=int(eval_users.size),
    )


def write_report_tsv(report: EvalReport, path, user_ids=None) -> None:
    """Per-user rows plus an aggregate footer."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user\trecall\tndcg\n")
        for u in np.flatnonzero(report.evaluable):
            label = user_ids[u] if user_ids is not None else u
            fh.write(f"{label}\t{report.recall[u]:.10g}\t{report.ndcg[u]:.10g}\n")
        fh.write(f"#aggregate\t{report.recall_mean:.10g}\t{report.ndcg_mean:.10g}\n")


def write_report_json(report: EvalReport, path, extra: dict | None = None) -> None:
    payload = {
        "K": report.K,
        "recall": report.recall_mean,
        "ndcg": report.ndcg_mean,
        "evaluable_users": report.n_evaluable,
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
