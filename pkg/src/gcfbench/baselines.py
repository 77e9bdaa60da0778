"""Reference and classic collaborative-filtering scorers.

Six scorers share one interface: ``fit(R)`` consumes the binary train
matrix, ``score(users)`` returns a dense (len(users), num_items) block of
item scores. All of them are pure at inference: repeated calls agree
bitwise.
"""

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError
from .ranking import topk_row

# tie rule shared by every ranking surface in the package:
# equal scores order by ascending item index


class MostPop:
    """Unpersonalized popularity: score(i) = train degree of item i."""

    kind = "mostpop"

    def __init__(self):
        self.item_scores = None

    def fit(self, R: sp.csr_matrix):
        self.item_scores = np.asarray(R.sum(axis=0)).ravel().astype(np.float64)
        return self

    def score(self, users) -> np.ndarray:
        return np.tile(self.item_scores, (len(users), 1))


class RandomScorer:
    """Seeded uniform scores; the stream is independent per (seed, user)."""

    kind = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.num_items = None

    def fit(self, R: sp.csr_matrix):
        self.num_items = R.shape[1]
        return self

    def score(self, users) -> np.ndarray:
        out = np.empty((len(users), self.num_items))
        for row, u in enumerate(users):
            out[row] = np.random.default_rng([self.seed, int(u)]).random(self.num_items)
        return out


def _cosine_topk(M: sp.csr_matrix, k: int, shrink: float, block: int = 2048) -> sp.csr_matrix:
    """Row-wise cosine similarity of M, kept sparse at k neighbors per row.

    sim(a, b) = <m_a, m_b> / (|m_a| |m_b| + shrink), self excluded.
    Ties take the smaller index. Computed in row blocks to bound memory.
    """
    n = M.shape[0]
    norms = np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel())
    rows, cols, vals = [], [], []
    for start in range(0, n, block):
        stop = min(start + block, n)
        dots = (M[start:stop] @ M.T).toarray().astype(np.float64)
        denom = norms[start:stop, None] * norms[None, :] + shrink
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
        for local in range(stop - start):
            r = start + local
            row_sims = sims[local]
            row_sims[r] = -np.inf  # self excluded
            kept = topk_row(row_sims, min(k, n - 1))
            kept = kept[row_sims[kept] > 0]
            rows.extend([r] * len(kept))
            cols.extend(kept.tolist())
            vals.extend(row_sims[kept].tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class Knn:
    """Neighborhood scorer over users or items (cosine, top-k, shrink)."""

    def __init__(self, mode: str, k: int = 50, shrink: float = 0.0):
        if mode not in ("user", "item"):
            raise ValueError(f"mode must be user or item, got {mode!r}")
        if k < 1:
            raise ValueError("k must be >= 1")
        self.mode = mode
        self.k = k
        self.shrink = shrink
        self.kind = f"{mode}knn"
        self.W = None
        self._R = None

    def fit(self, R: sp.csr_matrix):
        base = R if self.mode == "user" else R.T.tocsr()
        self.W = _cosine_topk(base, self.k, self.shrink)
        self._R = R.tocsr()
        return self

    def score(self, users) -> np.ndarray:
        users = np.asarray(users)
        if self.mode == "user":
            # score(u, i) = sum over neighbors v of sim(u, v) R[v, i]
            return (self.W[users] @ self._R).toarray()
        # item mode: score(u, i) = sum over j in topk(i) of sim(i, j) R[u, j]
        return (self._R[users] @ self.W.T).toarray()


class RP3Beta:
    """Two-step random-walk item-item scorer with popularity damping.

    W = (D_I^-1 R^T)(D_U^-1 R); column j damped by d_j^-beta; rows top-k.
    """

    kind = "rp3beta"

    def __init__(self, k: int = 100, beta: float = 0.0):
        if beta < 0:
            raise ValueError("beta must be >= 0")
        self.k = k
        self.beta = beta
        self.W = None
        self._R = None

    def fit(self, R: sp.csr_matrix):
        R = R.tocsr().astype(np.float64)
        du = np.asarray(R.sum(axis=1)).ravel()
        di = np.asarray(R.sum(axis=0)).ravel()
        inv_du = np.where(du > 0, 1.0 / np.maximum(du, 1e-300), 0.0)
        inv_di = np.where(di > 0, 1.0 / np.maximum(di, 1e-300), 0.0)
        item_to_user = sp.diags(inv_di) @ R.T
        user_to_item = sp.diags(inv_du) @ R
        W = (item_to_user @ user_to_item).tocsr()
        if self.beta > 0:
            with np.errstate(divide="ignore"):
                damp = np.where(di > 0, di ** (-self.beta), 0.0)
            W = (W @ sp.diags(damp)).tocsr()
        n = W.shape[0]
        rows, cols, vals = [], [], []
        for i in range(n):
            row = W[i].toarray().ravel()
            kept = topk_row(row, min(self.k, n))
            kept = kept[row[kept] > 0]
            rows.extend([i] * len(kept))
            cols.extend(kept.tolist())
            vals.extend(row[kept].tolist())
        self.W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self._R = R
        return self

    def score(self, users) -> np.ndarray:
        return (self._R[np.asarray(users)] @ self.W).toarray()


class EaseR:
    """Closed-form shallow autoencoder: ridge-regularized item-item weights
    with a zero diagonal.

    With G = R^T R + l2 I and P = G^-1: B_ij = -P_ij / P_jj, B_jj = 0.
    Dense 64-bit solve; refuses to run above ``max_items``.
    """

    kind = "easer"

    def __init__(self, l2: float = 1.0, max_items: int = 50_000):
        if l2 <= 0:
            raise ValueError("l2 must be > 0")
        self.l2 = l2
        self.max_items = max_items
        self.B = None
        self._R = None

    def fit(self, R: sp.csr_matrix):
        n_items = R.shape[1]
        if n_items > self.max_items:
            raise CapacityError(
                f"dense item-item solve needs {n_items}^2 double floats; "
                f"configured ceiling is max_items={self.max_items}"
            )
        R = R.tocsr().astype(np.float64)
        G = (R.T @ R).toarray()
        G[np.diag_indices(n_items)] += self.l2
        P = np.linalg.inv(G)
        B = -P / np.diag(P)[None, :]
        np.fill_diagonal(B, 0.0)
        self.B = B
        self._R = R
        return self

    def score(self, users) -> np.ndarray:
        return np.asarray(self._R[np.asarray(users)] @ self.B)


BASELINE_KINDS = ("mostpop", "random", "userknn", "itemknn", "rp3beta", "easer")


def build_baseline(kind: str, seed: int = 0, **hyper):
    if kind == "mostpop":
        return MostPop()
    if kind == "random":
        return RandomScorer(seed=seed)
    if kind == "userknn":
        return Knn("user", **hyper)
    if kind == "itemknn":
        return Knn("item", **hyper)
    if kind == "rp3beta":
        return RP3Beta(**hyper)
    if kind == "easer":
        return EaseR(**hyper)
    raise ValueError(f"unknown baseline kind: {kind!r}")
