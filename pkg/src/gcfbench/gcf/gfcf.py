"""Closed-form spectral filter: no training.

Scores blend a linear co-occurrence filter with an ideal low-pass filter
over the top singular subspace of the degree-normalized interaction
matrix:

    s_u = r_u (Rn^T Rn) + alpha * r_u D_I^-1/2 V_k V_k^T D_I^1/2

where Rn = D_U^-1/2 R D_I^-1/2 and V_k holds the top-k right singular
vectors, computed by a seeded randomized truncated SVD.
"""

import numpy as np
import scipy.sparse as sp

from ..errors import CapacityError, UsageError
from ..graph import normalize_bipartite


def randomized_svd_right(M, k: int, oversampling: int = 8,
                         power_iterations: int = 2, seed: int = 0) -> tuple:
    """Top-k right singular vectors and singular values of a sparse matrix.

    Gaussian range sketch with QR re-orthogonalization between power
    iterations. Deterministic for a fixed seed.
    """
    n_rows, n_cols = M.shape
    if k > min(n_rows, n_cols):
        raise UsageError(f"svd rank {k} exceeds min(shape) = {min(M.shape)}")
    if power_iterations < 2:
        raise UsageError("at least 2 power iterations are required")
    rng = np.random.default_rng(seed)
    sketch = min(k + oversampling, n_rows, n_cols)
    omega = rng.standard_normal((n_cols, sketch))
    Q, _ = np.linalg.qr(M @ omega)
    for _ in range(power_iterations):
        Z, _ = np.linalg.qr(M.T @ Q)
        Q, _ = np.linalg.qr(M @ Z)
    B = Q.T @ M  # (sketch, n_cols) dense
    B = np.asarray(B)
    _, sigma, Vt = np.linalg.svd(B, full_matrices=False)
    return Vt[:k].T.copy(), sigma[:k].copy()


class Gfcf:
    kind = "gfcf"

    def __init__(self, svd_rank: int = 256, alpha: float = 0.3, seed: int = 0,
                 oversampling: int = 8, power_iterations: int = 2,
                 max_gram_items: int = 5000):
        self.svd_rank = svd_rank
        self.alpha = alpha
        self.seed = seed
        self.oversampling = oversampling
        self.power_iterations = power_iterations
        self.max_gram_items = max_gram_items
        self.Rn = None
        self.V = None
        self.sigma = None
        self._R = None
        self._d_inv_sqrt = None
        self._d_sqrt = None

    def hyperparameters(self) -> dict:
        return {"svd_rank": self.svd_rank, "alpha": self.alpha,
                "seed": self.seed, "oversampling": self.oversampling,
                "power_iterations": self.power_iterations}

    def _bind(self, R: sp.csr_matrix):
        R = R.tocsr().astype(np.float64)
        self._R = R
        self.Rn = normalize_bipartite(R).astype(np.float64).tocsr()
        d_i = np.asarray(R.sum(axis=0)).ravel()
        with np.errstate(divide="ignore"):
            self._d_inv_sqrt = np.where(d_i > 0, 1.0 / np.sqrt(np.maximum(d_i, 1e-300)), 0.0)
        self._d_sqrt = np.sqrt(d_i)

    def fit(self, R: sp.csr_matrix):
        self._bind(R)
        self.V, self.sigma = randomized_svd_right(
            self.Rn, self.svd_rank, self.oversampling,
            self.power_iterations, self.seed,
        )
        return self

    def restore(self, R: sp.csr_matrix, V: np.ndarray, sigma: np.ndarray):
        """Rebuild scoring state from the train matrix and a previously
        computed factor, skipping the SVD."""
        self._bind(R)
        self.V = np.asarray(V, dtype=np.float64)
        self.sigma = np.asarray(sigma, dtype=np.float64)
        return self

    @property
    def gram(self) -> np.ndarray:
        """Dense Rn^T Rn, for small instances only (scoring never needs it)."""
        n_items = self.Rn.shape[1]
        if n_items > self.max_gram_items:
            raise CapacityError(
                f"dense gram of {n_items} items exceeds max_gram_items="
                f"{self.max_gram_items}; use score(), which factors the product"
            )
        return (self.Rn.T @ self.Rn).toarray()

    def score(self, users) -> np.ndarray:
        users = np.asarray(users)
        Rb = self._R[users]
        linear = np.asarray(((Rb @ self.Rn.T) @ self.Rn).todense())
        scaled = Rb.multiply(self._d_inv_sqrt[None, :]).tocsr()
        spectral = ((scaled @ self.V) @ self.V.T) * self._d_sqrt[None, :]
        return linear + self.alpha * spectral
