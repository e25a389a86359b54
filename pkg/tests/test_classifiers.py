import json

import numpy as np
import pytest

from sigreadout.classifiers import (
    ForestHyperparams,
    ForestModel,
    GmmModel,
    LdaModel,
    gmm_fit,
    gmm_log_joint,
    gmm_predict,
    lda_fit,
    lda_predict,
    lda_project,
    rf_fit,
    rf_predict,
    rf_predict_proba,
)
from sigreadout.errors import InvalidInputError


def blobs(centers, n, sigma, seed=0):
    rng = np.random.default_rng(seed)
    X = np.concatenate([np.asarray(c) + sigma * rng.standard_normal((n, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n)
    return X, y


def xor(n_per_blob, sigma=0.25, seed=0):
    X, blob = blobs([(1, 1), (-1, -1), (1, -1), (-1, 1)], n_per_blob, sigma, seed)
    return X, (blob >= 2).astype(int)


# ---------------------------------------------------------------- GMM


def test_gmm_recovers_means():
    X, y = blobs([(-1, 0), (1, 0)], 1000, 0.1)
    m = gmm_fit(X, y)
    np.testing.assert_allclose(m.means, [[-1, 0], [1, 0]], atol=0.02)
    np.testing.assert_array_equal(m.priors, [0.5, 0.5])
    assert m.covariances[0][0, 0] == pytest.approx(0.01, rel=0.1)


def test_gmm_single_class_identical_rows():
    m = gmm_fit(np.tile([2.0, 3.0], (5, 1)), np.zeros(5, int))
    np.testing.assert_array_equal(m.means[0], [2, 3])
    assert m.covariances[0][0, 0] == 1e-9


def test_gmm_predict_rules():
    X, y = blobs([(-1, 0), (1, 0)], 200, 0.1)
    m = gmm_fit(X, y)
    m = GmmModel(m.classes, np.array([[-1.0, 0], [1.0, 0]]), np.array([np.eye(2) * 0.01] * 2), np.array([0.5, 0.5]), "spherical")
    assert list(gmm_predict(m, [[-1, 0], [1, 0], [0.9, 0], [0.0, 0.3]])) == [0, 1, 1, 0]


def test_gmm_full_covariance():
    rng = np.random.default_rng(3)
    A = np.array([[1.0, 0.9], [0.0, 0.3]])
    X = rng.standard_normal((4000, 2)) @ A.T
    m = gmm_fit(np.vstack([X, X + 5]), np.repeat([0, 1], 4000), mode="full")
    np.testing.assert_allclose(m.covariances[0], A @ A.T, atol=0.06)
    lj = gmm_log_joint(m, X[:3])
    assert lj.shape == (3, 2)


def test_gmm_validation_and_round_trip():
    with pytest.raises(InvalidInputError):
        gmm_fit(np.zeros((3, 2)), [0, 0, 1])
    with pytest.raises(InvalidInputError):
        gmm_fit(np.zeros((4, 2)), [0, 0, 1, 1], mode="diag")
    X, y = blobs([(0, 0), (3, 3)], 50, 0.5)
    m = gmm_fit(X, y)
    m2 = GmmModel.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_array_equal(gmm_predict(m, X), gmm_predict(m2, X))
    with pytest.raises(InvalidInputError):
        gmm_predict(m, np.zeros((2, 3)))


# ---------------------------------------------------------------- random forest


def test_rf_memorizes_separable():
    X, y = blobs([(0, 0), (5, 5), (0, 5)], 60, 0.5)
    m = rf_fit(X, y, {"n_trees": 20, "max_depth": 20}, seed=1)
    pred, proba = rf_predict(m, X)
    assert np.mean(pred == y) == 1.0
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)


def test_rf_xor_beats_linear():
    X, y = xor(250, seed=0)
    Xt, yt = xor(250, seed=1)
    m = rf_fit(X, y, {"n_trees": 100, "max_depth": 10}, seed=0)
    assert np.mean(rf_predict(m, Xt)[0] == yt) >= 0.95
    assert np.mean(lda_predict(lda_fit(X, y), Xt) == yt) <= 0.6


def test_rf_single_tree_pure_leaf():
    X = np.concatenate([np.linspace(0, 0.1, 30), np.linspace(5, 5.1, 30)])[:, None]
    y = np.repeat([0, 1], 30)
    m = rf_fit(X, y, {"n_trees": 1, "max_depth": 5}, seed=2)
    np.testing.assert_array_equal(rf_predict_proba(m, [[0.05], [5.05]]), [[1, 0], [0, 1]])


def test_rf_deterministic_and_seed_sensitive():
    X, y = xor(60, seed=4)
    hp = ForestHyperparams(n_trees=15, max_depth=6)
    a, b = rf_fit(X, y, hp, seed=9), rf_fit(X, y, hp, seed=9)
    probe = np.random.default_rng(0).normal(size=(100, 2))
    np.testing.assert_array_equal(rf_predict_proba(a, probe), rf_predict_proba(b, probe))
    c = rf_fit(X, y, hp, seed=10)
    assert not np.array_equal(rf_predict_proba(a, probe), rf_predict_proba(c, probe))


def test_rf_hyperparams_respected():
    X, y = xor(100, seed=5)
    m = rf_fit(X, y, {"n_trees": 5, "max_depth": 3, "min_samples_leaf": 4}, seed=0)
    assert len(m.trees) == 5
    assert max(t.depth for t in m.trees) <= 3
    assert min(c.min() for c in m.leaf_counts) >= 4


def test_rf_round_trip():
    X, y = xor(50, seed=6)
    m = rf_fit(X, y, {"n_trees": 7}, seed=3)
    m2 = ForestModel.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_array_equal(rf_predict_proba(m, X), rf_predict_proba(m2, X))


def test_rf_validation():
    with pytest.raises(InvalidInputError):
        rf_fit(np.zeros((4, 1)), [0, 0, 0, 0])
    with pytest.raises(InvalidInputError):
        rf_fit([[np.nan], [1.0]], [0, 1])
    with pytest.raises(InvalidInputError):
        rf_fit(np.zeros((4, 1)), [0, 1, 0, 1], {"min_samples_split": 1})


# ---------------------------------------------------------------- LDA


def test_lda_direction_parallel_to_mean_difference():
    X, y = blobs([(0, 0, 0), (1, 2, -1)], 3000, 1.0, seed=2)
    m = lda_fit(X, y)
    v = m.directions[:, 0]
    dmu = m.means[1] - m.means[0]
    # the analytic solution is S_W^{-1} dmu
    expected = np.linalg.solve(m.within_scatter, dmu)
    cos = abs(v @ expected) / (np.linalg.norm(v) * np.linalg.norm(expected))
    assert np.arccos(min(cos, 1.0)) < 1e-6
    # and for spherical classes it is close to dmu itself
    assert abs(v @ dmu) / (np.linalg.norm(v) * np.linalg.norm(dmu)) > 0.999


def test_lda_rank_and_swap_symmetry():
    X, y = blobs([(0, 0, 0, 0), (3, 0, 0, 0), (0, 3, 0, 0)], 200, 1.0)
    m = lda_fit(X, y)
    assert m.n_directions == 2
    assert np.sum(m.eigenvalues > 1e-9) <= 2
    m2 = lda_fit(X, (y + 1) % 3)
    P1 = m.directions @ np.linalg.pinv(m.directions)
    P2 = m2.directions @ np.linalg.pinv(m2.directions)
    np.testing.assert_allclose(P1, P2, atol=1e-9)


def test_lda_project_bimodal():
    X, y = blobs([(0, 0), (4, 4)], 500, 0.5)
    z = lda_project(lda_fit(X, y), X, 1)[:, 0]
    # Sarle's bimodality coefficient; 5/9 is the uniform-distribution value
    n = len(z)
    c = z - z.mean()
    g = (c**3).mean() / (c**2).mean() ** 1.5
    k = (c**4).mean() / (c**2).mean() ** 2 - 3
    bc = (g**2 + 1) / (k + 3 * (n - 1) ** 2 / ((n - 2) * (n - 3)))
    assert bc > 5 / 9


def test_lda_means_maximally_separated():
    X, y = blobs([(0, 0, 0), (1, 0.5, 0)], 500, [1.0, 0.5, 2.0], seed=8)
    m = lda_fit(X, y)
    Sw = m.within_scatter

    def separation(v):
        v = v / np.sqrt(v @ Sw @ v)
        return abs((m.means[1] - m.means[0]) @ v)

    best = separation(m.directions[:, 0])
    rng = np.random.default_rng(0)
    assert all(separation(rng.normal(size=3)) <= best + 1e-12 for _ in range(100))


def test_lda_identical_rows_project_equal():
    X = np.tile([1.0, 2.0], (6, 1))
    m = lda_fit(X, [0, 0, 0, 1, 1, 1])
    p = lda_project(m, X, 1)
    assert np.ptp(p) == 0


def test_lda_errors_and_round_trip():
    with pytest.raises(InvalidInputError):
        lda_fit(np.zeros((4, 2)), [0, 0, 0, 0])
    X, y = blobs([(0, 0), (2, 2)], 30, 0.5)
    m = lda_fit(X, y)
    with pytest.raises(InvalidInputError):
        lda_project(m, X, 2)
    m2 = LdaModel.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_allclose(lda_project(m2, X, 1), lda_project(m, X, 1))
