import numpy as np
import pytest
from sklearn.svm import LinearSVC

from fusecat import svm
from fusecat.errors import (CorruptFileError, DegenerateInputError, ShapeMismatchError,
                            UnknownLabelError)


def blobs(n_per, centers, spread, seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c, spread, (n_per, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per)
    return X, y


def projected_gradient(X, y, alpha, C):
    Xa = np.hstack([X, np.ones((len(X), 1))])
    w = (alpha * y) @ Xa
    g = y * (Xa @ w) - 1
    return np.where(alpha <= 0, np.minimum(g, 0), np.where(alpha >= C, np.maximum(g, 0), g))


def test_separable_two_blobs():
    X, y = blobs(50, [(-3, -3), (3, 3)], 0.5, 0)
    model = svm.train(X, y, C=1.0)
    assert svm.evaluate(model, X, y)["sample_accuracy"] == 100.0


FOUR = [(0, 0), (6, 0), (0, 6), (6, 6)]


def test_four_blobs_held_out_and_reference():
    X, y = blobs(50, FOUR, 1.0, 1)
    Xt, yt = blobs(50, FOUR, 1.0, 2)
    model = svm.train(X, y, C=1.0)
    ours = svm.evaluate(model, Xt, yt)["sample_accuracy"]
    ref = LinearSVC(C=1.0, loss="hinge", dual=True, max_iter=100000, random_state=0)
    theirs = 100.0 * np.mean(ref.fit(X, y).predict(Xt) == yt)
    assert ours >= 95.0
    assert abs(ours - theirs) <= 1.0


def test_duplication_consistency():
    X, y = blobs(30, [(-1, 0), (1, 0)], 1.0, 3)  # overlapping, so the margin is soft
    yb = np.where(y == 1, 1.0, -1.0)
    one = svm.fit_binary(X, yb, C=1.0, tol=1e-7, max_iter=100000)
    two = svm.fit_binary(np.vstack([X, X]), np.concatenate([yb, yb]), C=0.5, tol=1e-7,
                         max_iter=100000)
    assert np.allclose(one.w, two.w, atol=1e-4)
    assert abs(one.bias - two.bias) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_dual_objective_monotone(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(10, 80), rng.integers(2, 20)
    X = rng.normal(size=(n, d))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    C = float(rng.choice([0.01, 0.1, 1.0, 10.0]))
    fit = svm.fit_binary(X, y, C=C, tol=1e-4, max_iter=300, rng=rng)
    obj = np.array(fit.objective)
    assert np.all(np.diff(obj) >= -1e-9 * max(1.0, abs(obj).max()))


@pytest.mark.parametrize("seed", range(5))
def test_kkt_at_termination(seed):
    rng = np.random.default_rng(100 + seed)
    X = rng.normal(size=(60, 5))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=60) > 0, 1.0, -1.0)
    fit = svm.fit_binary(X, y, C=1.0, tol=1e-3, max_iter=1000)
    assert fit.sweeps < 1000
    assert fit.max_violation < 1e-3
    assert np.all((fit.alpha >= 0) & (fit.alpha <= 1.0))
    # recomputed from scratch; the last sweep's moves are tiny, so the bound holds with slack
    assert np.abs(projected_gradient(X, y, fit.alpha, 1.0)).max() < 1e-2


def test_prediction_invariant_to_positive_scaling():
    X, y = blobs(30, FOUR, 1.0, 4)
    model = svm.train(X, y, C=1.0)
    scaled = svm.SvmModel(model.weights * 3.5, model.biases * 3.5, model.labels)
    assert svm.predict(model, X) == svm.predict(scaled, X)


def test_decision_scores_by_hand():
    model = svm.SvmModel(np.array([[1.0, 2.0], [0.0, -1.0]]), np.array([0.5, 0.0]), ["a", "b"])
    assert svm.decision_scores(model, [[1.0, 1.0]]).tolist() == [[3.5, -1.0]]
    zero = svm.SvmModel(np.zeros((2, 2)), np.array([0.1, 0.2]), ["a", "b"])
    assert svm.decision_scores(zero, [[5.0, -5.0]]).tolist() == [[0.1, 0.2]]
    assert svm.predict(model, [[1.0, 1.0], [0.0, 0.0], [1.0, -1.0]]) == ["a", "a", "b"]


def test_confusion_report_cases():
    r = svm.confusion_report([0, 1, 1, 2], [0, 1, 1, 2], 3)
    assert r["accuracy"] == 100.0
    r = svm.confusion_report([0, 0, 1, 1], [0, 0, 0, 0], 2)
    assert r["accuracy"] == 50.0 and r["sample_accuracy"] == 50.0
    # imbalanced: per-class mean differs from hit rate
    r = svm.confusion_report([0, 0, 0, 1], [0, 0, 0, 0], 2)
    assert r["accuracy"] == 50.0 and r["sample_accuracy"] == 75.0


def test_confusion_report_matches_loop():
    rng = np.random.default_rng(5)
    t, p = rng.integers(0, 4, 200), rng.integers(0, 4, 200)
    r = svm.confusion_report(t, p, 4)
    conf = np.zeros((4, 4), int)
    for a, b in zip(t, p):
        conf[a, b] += 1
    assert np.array_equal(r["confusion"], conf)
    recalls = [conf[i, i] / conf[i].sum() * 100 for i in range(4)]
    assert abs(r["accuracy"] - sum(recalls) / 4) < 1e-9


def test_errors():
    model = svm.SvmModel(np.zeros((2, 2)), np.zeros(2), ["a", "b"])
    with pytest.raises(UnknownLabelError):
        svm.evaluate(model, np.zeros((1, 2)), ["c"])
    with pytest.raises(ShapeMismatchError):
        svm.decision_scores(model, np.zeros((1, 3)))
    with pytest.raises(DegenerateInputError):
        svm.train(np.zeros((4, 2)), ["a"] * 4)
    with pytest.raises(ValueError):
        svm.train(np.zeros((4, 2)), ["a", "b"] * 2, C=0)
    with pytest.raises(ValueError):
        svm.evaluate(model, np.zeros((0, 2)), [])


def test_string_labels_and_grid_search():
    X, y = blobs(30, FOUR, 1.0, 6)
    names = np.array(["north", "east", "south", "west"])[y]
    best, scores = svm.grid_search(X, names)
    assert best in svm.C_GRID and set(scores) == set(svm.C_GRID)
    model = svm.train(X, names, best)
    assert model.labels == ["east", "north", "south", "west"]


def test_training_is_deterministic():
    X, y = blobs(30, FOUR, 1.0, 7)
    a, b = svm.train(X, y, seed=1), svm.train(X, y, seed=1)
    assert a.weights.tobytes() == b.weights.tobytes()


def test_save_load_roundtrip(tmp_path):
    X, y = blobs(30, FOUR, 1.0, 8)
    model = svm.train(X, y)
    svm.save_svm(tmp_path / "m.fsv", model)
    back = svm.load_svm(tmp_path / "m.fsv")
    assert back.weights.tobytes() == model.weights.tobytes()
    assert back.biases.tobytes() == model.biases.tobytes()
    assert back.labels == model.labels and back.C == model.C
    raw = (tmp_path / "m.fsv").read_bytes()
    for n in np.random.default_rng(0).choice(len(raw), 200, replace=False):
        (tmp_path / "c.fsv").write_bytes(raw[:n])
        with pytest.raises(CorruptFileError):
            svm.load_svm(tmp_path / "c.fsv")
