"""Sparse construction and normalization against dense oracles."""

import numpy as np
import pytest
import scipy.sparse as sp

from gcfbench import graph, ingest
from conftest import random_bipartite


def test_interaction_matrix_toy(toy_R):
    assert toy_R.shape == (4, 5)
    assert toy_R.nnz == 10
    np.testing.assert_array_equal(
        toy_R.toarray()[3], np.array([0, 1, 1, 1, 1], dtype=np.float32)
    )


def test_interaction_matrix_single_pair():
    ds = ingest.from_pairs([(0, 0)])
    R = graph.build_interaction_matrix(ds)
    assert R.shape == (1, 1) and R.nnz == 1


def test_degree_vectors(toy_R):
    deg = graph.degree_vectors(toy_R)
    assert deg.user.tolist() == [3, 1, 2, 4]
    assert deg.item.tolist() == [1, 3, 2, 2, 2]
    assert deg.user.sum() == deg.item.sum() == 10


def test_adjacency_shape_and_symmetry(toy_R):
    A = graph.build_adjacency(toy_R)
    assert A.shape == (9, 9)
    assert A.nnz == 20
    dense = A.toarray()
    np.testing.assert_array_equal(dense, dense.T)
    # diagonal blocks are zero
    assert not dense[:4, :4].any()
    assert not dense[4:, 4:].any()
    np.testing.assert_array_equal(dense[:4, 4:], toy_R.toarray())


def test_adjacency_single_edge():
    R = graph.build_interaction_matrix(ingest.from_pairs([(0, 0)]))
    assert graph.build_adjacency(R).nnz == 2


def test_sym_normalize_single_edge():
    R = graph.build_interaction_matrix(ingest.from_pairs([(0, 0)]))
    An = graph.sym_normalize(graph.build_adjacency(R))
    assert An[0, 1] == pytest.approx(1.0)


def test_sym_normalize_toy_entry(toy_R):
    # edge (u0, i1): degrees 3 and 3 -> 1/sqrt(9)
    An = graph.sym_normalize(graph.build_adjacency(toy_R))
    assert An[0, 4 + 1] == pytest.approx(1.0 / 3.0)


def test_sym_normalize_spectrum_bounded():
    # the guarantee of D^-1/2 A D^-1/2 is spectral: |eigenvalues| <= 1.
    # Row sums can exceed 1 (hub with degree-1 neighbors sums to sqrt(deg)).
    rng = np.random.default_rng(0)
    for _ in range(50):
        ds = random_bipartite(rng)
        A = graph.build_adjacency(graph.build_interaction_matrix(ds))
        An = graph.sym_normalize(A).toarray().astype(np.float64)
        eig = np.linalg.eigvalsh(An)
        assert np.max(np.abs(eig)) <= 1.0 + 1e-5  # float32 storage slack
        deg = np.asarray(A.sum(axis=1)).ravel()
        rows = An.sum(axis=1)
        assert np.all(rows <= np.sqrt(np.maximum(deg, 1)) + 1e-5)


def test_sym_normalize_dense_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        ds = random_bipartite(rng, 8, 6)
        A = graph.build_adjacency(graph.build_interaction_matrix(ds))
        dense = A.toarray().astype(np.float64)
        d = dense.sum(axis=1)
        dinv = np.where(d > 0, 1.0 / np.sqrt(np.maximum(d, 1e-300)), 0.0)
        expected = dinv[:, None] * dense * dinv[None, :]
        np.testing.assert_allclose(
            graph.sym_normalize(A).toarray(), expected, atol=1e-6
        )


def test_normalize_bipartite_identity():
    ds = ingest.from_pairs([(0, 0), (1, 1)])
    R = graph.build_interaction_matrix(ds)
    np.testing.assert_array_equal(graph.normalize_bipartite(R).toarray(), R.toarray())


def test_normalize_bipartite_matches_block():
    rng = np.random.default_rng(2)
    for _ in range(20):
        ds = random_bipartite(rng, 8, 6)
        R = graph.build_interaction_matrix(ds)
        Rn = graph.normalize_bipartite(R).toarray()
        An = graph.sym_normalize(graph.build_adjacency(R)).toarray()
        np.testing.assert_allclose(Rn, An[: ds.num_users, ds.num_users :], atol=1e-6)


def test_normalize_bipartite_toy_entry(toy_R):
    assert graph.normalize_bipartite(toy_R)[0, 1] == pytest.approx(1.0 / 3.0)


def test_zero_degree_row_stays_zero():
    A = sp.csr_matrix(np.array([[0.0, 1.0, 0], [1, 0, 0], [0, 0, 0]]))
    An = graph.sym_normalize(A)
    assert An.toarray()[2].tolist() == [0, 0, 0]
    assert np.all(np.isfinite(An.toarray()))


def test_csr_dense_roundtrip():
    rng = np.random.default_rng(3)
    for _ in range(10):
        M = rng.random((6, 4)) * (rng.random((6, 4)) > 0.5)
        np.testing.assert_array_equal(sp.csr_matrix(M).toarray(), M)


def test_sparse_dense_product_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        M = rng.random((20, 20)) * (rng.random((20, 20)) > 0.7)
        X = rng.random((20, 3))
        np.testing.assert_allclose(sp.csr_matrix(M) @ X, M @ X, atol=1e-12)


def test_dump_coo(tmp_path, toy_R):
    path = tmp_path / "R.coo"
    graph.dump_coo(toy_R, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "# shape 4 5"
    assert len(lines) == 1 + 10
    assert lines[1].split("\t")[:2] == ["0", "0"]
