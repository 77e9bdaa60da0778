"""Classic scorers against hand arithmetic and dense oracles."""

import numpy as np
import pytest
import scipy.sparse as sp

from gcfbench import arrayio, graph, ingest
from gcfbench.baselines import (EaseR, Knn, MostPop, RandomScorer, RP3Beta,
                                build_baseline)
from gcfbench.errors import CapacityError
from conftest import random_bipartite


# -- MostPop -----------------------------------------------------------------

def test_mostpop_toy_scores(toy_R):
    m = MostPop().fit(toy_R)
    np.testing.assert_array_equal(m.item_scores, [1, 3, 2, 2, 2])
    assert int(np.argmax(m.item_scores)) == 1
    s = m.score([0, 2])
    assert s.shape == (2, 5)
    np.testing.assert_array_equal(s[0], s[1])


# -- Random ------------------------------------------------------------------

def test_random_scorer_reproducible(toy_R):
    a = RandomScorer(seed=5).fit(toy_R)
    b = RandomScorer(seed=5).fit(toy_R)
    np.testing.assert_array_equal(a.score([0, 1]), b.score([0, 1]))
    assert not np.array_equal(a.score([0])[0], a.score([1])[0])
    c = RandomScorer(seed=6).fit(toy_R)
    assert not np.array_equal(a.score([0]), c.score([0]))


# -- kNN ---------------------------------------------------------------------

def test_userknn_toy_similarity(toy_R):
    m = Knn("user", k=3).fit(toy_R)
    # u2 and u3 share {i2, i4}: 2 / (sqrt(2) sqrt(4))
    assert m.W[2, 3] == pytest.approx(2.0 / (np.sqrt(2) * 2.0))
    assert m.W[3, 2] == pytest.approx(m.W[2, 3])


def test_knn_identical_profiles_sim_one():
    ds = ingest.from_pairs([(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)])
    R = graph.build_interaction_matrix(ds)
    m = Knn("user", k=2, shrink=0.0).fit(R)
    assert m.W[0, 1] == pytest.approx(1.0)


def test_knn_disjoint_profiles_sim_zero():
    ds = ingest.from_pairs([(0, 0), (1, 1), (2, 0), (2, 1)])
    R = graph.build_interaction_matrix(ds)
    m = Knn("user", k=2).fit(R)
    assert m.W[0, 1] == 0.0


def test_knn_shrink_lowers_similarity(toy_R):
    plain = Knn("user", k=3, shrink=0.0).fit(toy_R)
    shrunk = Knn("user", k=3, shrink=5.0).fit(toy_R)
    assert shrunk.W[2, 3] < plain.W[2, 3]


def test_knn_k_larger_than_population(toy_R):
    m = Knn("user", k=100).fit(toy_R)
    assert m.W.diagonal().sum() == 0  # self always excluded
    assert (m.W.getnnz(axis=1) <= 3).all()


def test_knn_similarity_symmetric_before_topk():
    rng = np.random.default_rng(7)
    for _ in range(10):
        ds = random_bipartite(rng, 8, 8)
        R = graph.build_interaction_matrix(ds)
        W = Knn("user", k=ds.num_users).fit(R).W.toarray()
        np.testing.assert_allclose(W, W.T, atol=1e-12)


def test_knn_user_mode_aggregation_k1(toy_R):
    m = Knn("user", k=1).fit(toy_R)
    scores = m.score([2])[0]
    # u2's single nearest neighbor is u3 (sim 0.7071); u3's items get that
    sim = 2.0 / (np.sqrt(2) * 2.0)
    np.testing.assert_allclose(scores, [0, sim, sim, sim, sim], atol=1e-12)


def test_knn_item_mode_matches_user_mode_on_transpose():
    rng = np.random.default_rng(8)
    for _ in range(5):
        ds = random_bipartite(rng, 7, 7)
        R = graph.build_interaction_matrix(ds)
        by_item = Knn("item", k=3).fit(R).W.toarray()
        by_user = Knn("user", k=3).fit(R.T.tocsr()).W.toarray()
        np.testing.assert_allclose(by_item, by_user, atol=1e-12)


def test_knn_item_mode_aggregation_dense_oracle(toy_R):
    m = Knn("item", k=2).fit(toy_R)
    W = m.W.toarray()
    expected = toy_R.toarray() @ W.T
    np.testing.assert_allclose(m.score(range(4)), expected, atol=1e-12)


# -- RP3beta -----------------------------------------------------------------

def test_rp3beta_toy_transition(toy_R):
    m = RP3Beta(k=5, beta=0.0).fit(toy_R)
    # path i0 -> u0 -> i1: (1/1) * (1/3)
    assert m.W[0, 1] == pytest.approx(1.0 / 3.0)


def test_rp3beta_unreweighted_rows_stochastic():
    rng = np.random.default_rng(9)
    for _ in range(10):
        ds = random_bipartite(rng, 8, 8)
        R = graph.build_interaction_matrix(ds)
        W = RP3Beta(k=ds.num_items, beta=0.0).fit(R).W
        rows = np.asarray(W.sum(axis=1)).ravel()
        np.testing.assert_allclose(rows, np.ones_like(rows), atol=1e-9)


def test_rp3beta_damping_changes_ranking(toy_R):
    plain = RP3Beta(k=5, beta=0.0).fit(toy_R)
    damped = RP3Beta(k=5, beta=1.0).fit(toy_R)
    di = np.array([1, 3, 2, 2, 2], dtype=float)
    np.testing.assert_allclose(
        damped.W.toarray(), plain.W.toarray() / di[None, :], atol=1e-12
    )


def test_rp3beta_score_sums_item_rows(toy_R):
    m = RP3Beta(k=5, beta=0.5).fit(toy_R)
    expected = toy_R.toarray() @ m.W.toarray()
    np.testing.assert_allclose(m.score(range(4)), expected, atol=1e-12)


# -- EASE --------------------------------------------------------------------

def test_ease_worked_2x2():
    R = sp.csr_matrix(np.array([[1.0, 0.0], [1.0, 1.0]]))
    m = EaseR(l2=1.0).fit(R)
    np.testing.assert_allclose(m.B, [[0.0, 1.0 / 3.0], [0.5, 0.0]], atol=1e-12)
    np.testing.assert_allclose(m.score([1])[0], [0.5, 1.0 / 3.0], atol=1e-12)


def test_ease_zero_diagonal():
    rng = np.random.default_rng(10)
    for _ in range(5):
        ds = random_bipartite(rng, 10, 8)
        R = graph.build_interaction_matrix(ds)
        m = EaseR(l2=2.0).fit(R)
        np.testing.assert_array_equal(np.diag(m.B), np.zeros(m.B.shape[0]))


def test_ease_large_l2_shrinks_to_zero(toy_R):
    m = EaseR(l2=1e9).fit(toy_R)
    assert np.max(np.abs(m.B)) < 1e-6


def ease_column_ridge_oracle(R_dense: np.ndarray, l2: float) -> np.ndarray:
    """Direct solve: column j regressed on all other columns under ridge."""
    n = R_dense.shape[1]
    B = np.zeros((n, n))
    for j in range(n):
        others = [c for c in range(n) if c != j]
        X = R_dense[:, others]
        b = np.linalg.solve(X.T @ X + l2 * np.eye(n - 1), X.T @ R_dense[:, j])
        B[others, j] = b
    return B


def test_ease_matches_column_ridge_oracle():
    rng = np.random.default_rng(11)
    for trial in range(10):
        ds = random_bipartite(rng, 12, 10)
        R = graph.build_interaction_matrix(ds)
        l2 = float(rng.uniform(0.5, 10.0))
        m = EaseR(l2=l2).fit(R)
        oracle = ease_column_ridge_oracle(R.toarray().astype(np.float64), l2)
        np.testing.assert_allclose(m.B, oracle, atol=1e-8)


def test_ease_capacity_error(toy_R):
    with pytest.raises(CapacityError):
        EaseR(l2=1.0, max_items=3).fit(toy_R)


# -- shared behavior -----------------------------------------------------------

@pytest.mark.parametrize("kind", ["mostpop", "random", "userknn", "itemknn",
                                  "rp3beta", "easer"])
def test_inference_is_pure(kind, toy_R):
    model = build_baseline(kind, seed=3)
    model.fit(toy_R)
    first = model.score([0, 1, 2, 3])
    second = model.score([0, 1, 2, 3])
    assert first.tobytes() == second.tobytes()


def test_persistence_roundtrip(tmp_path, toy_R):
    knn = Knn("item", k=2, shrink=0.5).fit(toy_R)
    arrayio.save_model(tmp_path / "knn", knn.kind,
                       {"k": 2, "shrink": 0.5}, {"W": knn.W})
    kind, hyper, arrays = arrayio.load_model(tmp_path / "knn")
    assert kind == "itemknn" and hyper["k"] == 2
    np.testing.assert_array_equal(arrays["W"].toarray(), knn.W.toarray())

    ease = EaseR(l2=1.0).fit(toy_R)
    arrayio.save_model(tmp_path / "ease", ease.kind, {"l2": 1.0}, {"B": ease.B})
    _, _, arrays = arrayio.load_model(tmp_path / "ease")
    np.testing.assert_array_equal(arrays["B"], ease.B)
