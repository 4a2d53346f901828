import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from icdm_fusion.cirsp import SpMatrix
from icdm_fusion.clustering import ClusterModel, adjusted_rand_index, cluster_centers, kmeans


def _sp(data, Q=2):
    data = np.asarray(data, dtype=np.uint8)
    return SpMatrix(data, tuple(f"N{i}" for i in range(data.shape[0] // Q)), Q)


def _random_sp(rng, I=10, Q=5, M=60):
    data = np.zeros((I * Q, M), dtype=np.uint8)
    for m in range(M):
        for i in rng.choice(I, size=rng.integers(0, 7), replace=False):
            data[i * Q + rng.integers(Q), m] = 1
    return _sp(data, Q)


def test_k_equals_m(rng):
    sp = _random_sp(rng, M=12)
    # duplicate columns would make K=M degenerate, so force distinct columns
    sp = _sp(np.vstack([sp.data, np.eye(12, dtype=np.uint8)]), 1)
    model = kmeans(sp, 12, seed=0)
    assert model.inertia == pytest.approx(0.0, abs=1e-12)
    assert model.sizes.tolist() == [1] * 12


def test_k_one_is_column_mean(rng):
    sp = _random_sp(rng)
    model = kmeans(sp, 1, seed=0)
    np.testing.assert_allclose(model.centers[:, 0], sp.data.mean(axis=1), atol=1e-15)
    assert (model.membership == 1).all()


def test_two_disjoint_groups_every_seed():
    rng = np.random.default_rng(0)
    Q, I = 4, 12
    cols, truth = [], []
    for m in range(40):
        g = m % 2
        col = np.zeros(I * Q, dtype=np.uint8)
        # each group has its own six cells, each usually seen in its home interval
        for i in range(6 * g, 6 * g + 6):
            if rng.random() < 0.8:
                q = i % Q if rng.random() < 0.8 else rng.integers(Q)
                col[i * Q + q] = 1
        cols.append(col)
        truth.append(g)
    sp = _sp(np.column_stack(cols), Q)
    for seed in range(10):
        model = kmeans(sp, 2, seed=seed)
        assert adjusted_rand_index(model.membership, truth) == 1.0


def test_k_greater_than_m(rng):
    with pytest.raises(ValueError):
        kmeans(_random_sp(rng, M=5), 6)


def test_centers_match_direct_summation(rng):
    sp = _random_sp(rng)
    model = kmeans(sp, 4, seed=3)
    for k in range(1, 5):
        members = [m for m in range(sp.M) if model.membership[m] == k]
        direct = np.zeros(sp.data.shape[0])
        for m in members:
            direct += sp.data[:, m]
        direct /= len(members)
        assert np.max(np.abs(model.centers[:, k - 1] - direct)) <= 1e-12
    np.testing.assert_allclose(cluster_centers(model.membership, sp, 4), model.centers, atol=1e-12)


def test_center_examples():
    data = np.array([[1, 0, 1], [0, 1, 0]])
    c = cluster_centers(np.array([1, 1, 2]), data)
    assert c[:, 0].tolist() == [0.5, 0.5]
    assert c[:, 1].tolist() == [1.0, 0.0]


def test_model_invariants(rng):
    sp = _random_sp(rng, M=90)
    model = kmeans(sp, 6, seed=1)
    assert model.sizes.sum() == sp.M
    np.testing.assert_array_equal(np.bincount(model.membership, minlength=7)[1:], model.sizes)
    assert (model.centers >= 0).all() and (model.centers <= 1).all()
    assert model.centers.reshape(10, 5, 6).sum(axis=1).max() <= 1 + 1e-12
    assert model.centers.sum(axis=0).max() <= 6 + 1e-12
    h = np.array(model.history)
    assert (np.diff(h) <= 1e-9).all()


def test_deterministic(rng):
    sp = _random_sp(rng)
    a, b = kmeans(sp, 3, seed=5), kmeans(sp, 3, seed=5)
    np.testing.assert_array_equal(a.membership, b.membership)
    assert a.inertia == b.inertia


def test_empty_cluster_repair():
    # five identical points and one outlier: K=3 forces a repair
    data = np.zeros((4, 6), dtype=np.uint8)
    data[0, :5] = 1
    data[3, 5] = 1
    model = kmeans(_sp(data), 3, seed=0, n_init=1)
    assert (model.sizes > 0).all()
    assert model.sizes.sum() == 6


def test_json_round_trip(rng):
    model = kmeans(_random_sp(rng), 3, seed=0)
    back = ClusterModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(back.centers, model.centers)
    np.testing.assert_array_equal(back.membership, model.membership)
    assert back.neighbor_ids == model.neighbor_ids and back.Q == model.Q


def test_ari_matches_sklearn(rng):
    for _ in range(20):
        a = rng.integers(0, 5, 50)
        b = np.where(rng.random(50) < 0.7, a, rng.integers(0, 5, 50))
        assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
