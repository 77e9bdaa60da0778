"""Bipartite graph construction and degree normalization.

The sparse carrier everywhere is ``scipy.sparse.csr_matrix`` (row pointer,
column index, value arrays). Model math runs in float32; closed-form
solvers upcast to float64 where they need it.
"""

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .ingest import InteractionSet

DTYPE_MODEL = np.float32
DTYPE_SOLVE = np.float64


class DegreeVectors(NamedTuple):
    user: np.ndarray
    item: np.ndarray


def build_interaction_matrix(iset: InteractionSet, dtype=DTYPE_MODEL) -> sp.csr_matrix:
    """Binary users x items matrix R from an interaction set."""
    data = np.ones(iset.num_pairs, dtype=dtype)
    mat = sp.csr_matrix(
        (data, (iset.users, iset.items)),
        shape=(iset.num_users, iset.num_items),
    )
    mat.sum_duplicates()
    # interaction sets are duplicate-free, so every stored value stays 1
    return mat


def degree_vectors(R: sp.csr_matrix) -> DegreeVectors:
    du = np.asarray(R.sum(axis=1)).ravel()
    di = np.asarray(R.sum(axis=0)).ravel()
    return DegreeVectors(user=du, item=di)


def build_adjacency(R: sp.csr_matrix) -> sp.csr_matrix:
    """Block adjacency [[0, R], [R^T, 0]] over user-then-item node order."""
    n_users, n_items = R.shape
    upper = sp.hstack(
        [sp.csr_matrix((n_users, n_users), dtype=R.dtype), R], format="csr"
    )
    lower = sp.hstack(
        [R.T.tocsr(), sp.csr_matrix((n_items, n_items), dtype=R.dtype)], format="csr"
    )
    return sp.vstack([upper, lower], format="csr")


def _inv_sqrt(deg: np.ndarray) -> np.ndarray:
    """Elementwise d^-1/2 with the convention 0^-1/2 = 0 (isolated nodes)."""
    out = np.zeros_like(deg, dtype=np.float64)
    nz = deg > 0
    out[nz] = 1.0 / np.sqrt(deg[nz])
    return out


def sym_normalize(A: sp.csr_matrix) -> sp.csr_matrix:
    """D^-1/2 A D^-1/2 for a square adjacency."""
    deg = np.asarray(A.sum(axis=1)).ravel()
    dinv = _inv_sqrt(deg)
    D = sp.diags(dinv)
    return (D @ A @ D).tocsr().astype(A.dtype)


def normalize_bipartite(R: sp.csr_matrix) -> sp.csr_matrix:
    """D_U^-1/2 R D_I^-1/2, the rectangular counterpart of sym_normalize."""
    du, di = degree_vectors(R)
    Du = sp.diags(_inv_sqrt(du))
    Di = sp.diags(_inv_sqrt(di))
    return (Du @ R @ Di).tocsr().astype(R.dtype)


def dump_coo(M: sp.spmatrix, path) -> None:
    """Write a matrix as `row col value` lines, row-major, for inspection."""
    coo = M.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r}\t{c}\t{v:.8g}\n")
