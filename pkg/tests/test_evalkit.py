import numpy as np
import pytest

from evlstm.evalkit import (
    CentroidModel,
    FeatureVector,
    compute_metrics,
    cosine_similarity,
    fit_centroids,
    invariance_score,
    pool_features,
    predict,
)
from evlstm.surfaces import Grid


def fv(values, label=None):
    return FeatureVector(np.asarray(values, dtype=np.float64), label=label)


def test_pool_identity_and_constant():
    rng = np.random.default_rng(0)
    g = Grid(rng.normal(size=(4, 6, 3)))
    assert np.array_equal(pool_features(g, 1).values, g.values.reshape(-1))
    assert np.all(pool_features(Grid(np.full((8, 8, 2), 0.25)), 4).values == 0.25)


def test_pool_block_mean_oracle():
    rng = np.random.default_rng(1)
    v = rng.normal(size=(8, 8, 2))
    out = pool_features(Grid(v), 4).values
    ref = []
    for by in range(2):
        for bx in range(2):
            for c in range(2):
                ref.append(np.mean([v[by * 4 + i, bx * 4 + j, c] for i in range(4) for j in range(4)]))
    np.testing.assert_allclose(out, ref, rtol=1e-12)


def test_pool_bad_factor():
    with pytest.raises(ValueError):
        pool_features(Grid(np.zeros((6, 6))), 4)


def test_single_example_per_class():
    feats = [fv([1, 0, 0], "a"), fv([0, 1, 0], "b"), fv([0, 0, 1], "c")]
    m = fit_centroids(feats)
    assert [predict(m, f) for f in feats] == ["a", "b", "c"]


def test_tie_goes_to_first_class():
    m = fit_centroids([fv([0, 1], "zeta"), fv([1, 0], "alpha")])
    assert m.classes == ["alpha", "zeta"]
    assert predict(m, fv([1, 1])) == "alpha"


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_centroids([fv([1, 0], "a"), fv([0, 1], "a")])
    with pytest.raises(ValueError):
        fit_centroids([fv([1, 0], "a"), fv([0, 1])])
    with pytest.raises(ValueError):
        fit_centroids([])
    with pytest.raises(ValueError):
        CentroidModel(["a"], np.zeros((2, 3)))


def test_separated_clusters():
    rng = np.random.default_rng(2)
    centers = np.eye(5) * 10
    train = [fv(centers[k] + rng.normal(0, 0.1, 5), f"c{k}") for k in range(5) for _ in range(20)]
    test = [fv(centers[k] + rng.normal(0, 0.1, 5), f"c{k}") for k in range(5) for _ in range(20)]
    m = fit_centroids(train)
    rep = compute_metrics([predict(m, f) for f in test], [f.label for f in test])
    assert rep.accuracy == 1.0 and rep.macro["f1"] == 1.0


def test_scaling_invariance():
    rng = np.random.default_rng(3)
    m = fit_centroids([fv(rng.normal(size=6), lab) for lab in "abcd" for _ in range(3)])
    for _ in range(50):
        q = rng.normal(size=6)
        assert predict(m, q) == predict(m, q * float(rng.uniform(0.01, 100)))


def test_metrics_examples():
    rep = compute_metrics(["a", "b", "a"], ["a", "b", "a"])
    assert rep.macro == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    rep = compute_metrics(["a"] * 4, ["a", "a", "b", "b"])
    assert rep.recall == {"a": 1.0, "b": 0.0}
    assert rep.precision["b"] == 0.0 and rep.f1["b"] == 0.0
    with pytest.raises(ValueError):
        compute_metrics([], [])
    with pytest.raises(ValueError):
        compute_metrics(["a"], ["a", "b"])


@pytest.mark.parametrize("seed", range(10))
def test_metrics_counting_oracle(seed):
    rng = np.random.default_rng(seed)
    classes = ["x", "y", "z"]
    n = int(rng.integers(1, 60))
    labels = [classes[k] for k in rng.integers(0, 3, n)]
    preds = [classes[k] for k in rng.integers(0, 3, n)]
    rep = compute_metrics(preds, labels)
    for c in rep.classes:
        tp = sum(p == c and t == c for p, t in zip(preds, labels))
        fp = sum(p == c and t != c for p, t in zip(preds, labels))
        fn = sum(p != c and t == c for p, t in zip(preds, labels))
        assert rep.precision[c] == (tp / (tp + fp) if tp + fp else 0.0)
        assert rep.recall[c] == (tp / (tp + fn) if tp + fn else 0.0)
        assert rep.support[c] == labels.count(c)
        assert 0 <= rep.f1[c] <= 1
    assert rep.confusion.sum(axis=1).tolist() == [labels.count(c) for c in rep.classes]
    micro_recall = np.trace(rep.confusion) / rep.confusion.sum()
    assert micro_recall == rep.accuracy


def test_report_serialization():
    rep = compute_metrics(["a", "b", "b"], ["a", "a", "b"])
    d = rep.to_dict()
    assert d["confusion"] == [[1, 1], [0, 1]]
    assert rep.confusion_csv() == "true\\pred,a,b\na,1,1\nb,0,1\n"


def test_cosine_zero_vector():
    assert cosine_similarity(np.zeros(3), np.ones(3)) == 0.0


def test_invariance_examples():
    rng = np.random.default_rng(4)
    gs = [Grid(rng.random((4, 4, 2))) for _ in range(3)]
    assert invariance_score(gs[:1], gs[:1]) == pytest.approx(1.0, abs=1e-15)
    a, b = np.zeros((2, 2)), np.zeros((2, 2))
    a[0, 0], b[1, 1] = 1.0, 5.0
    assert invariance_score([Grid(a)], [Grid(b)]) == 0.0
    assert invariance_score([Grid(a)], [Grid(np.zeros((2, 2)))]) == 0.0
    with pytest.raises(ValueError):
        invariance_score([Grid(a)], [Grid(np.zeros((3, 2)))])


@pytest.mark.parametrize("seed", range(5))
def test_invariance_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    A = [Grid(rng.normal(size=(5, 5, 3))) for _ in range(int(rng.integers(1, 4)))]
    B = [Grid(rng.normal(size=(5, 5, 3))) for _ in range(int(rng.integers(1, 4)))]
    s = invariance_score(A, B)
    assert s == pytest.approx(invariance_score(B, A), abs=1e-15)
    assert -1.0 <= s <= 1.0
