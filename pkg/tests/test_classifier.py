import io

import numpy as np
import pytest

from croce import classifier as clf
from croce.classifier import Classifier, ClassifierConfig
from croce.data import make_moons, split_folds
from croce.numerics import Tensor


@pytest.fixture(scope="module")
def moons_fold():
    ds = make_moons(1024, noise=0.1, seed=7)
    split = split_folds(ds, n_folds=1, seed=42)[0]
    return split.scaled(ds, "train"), split.scaled(ds, "test")


@pytest.fixture(scope="module")
def moons_mlp(moons_fold):
    (Xtr, ytr), _ = moons_fold
    return clf.train(ClassifierConfig(seed=1), Xtr, ytr)


def test_mlp_accuracy_on_moons(moons_fold, moons_mlp):
    _, (Xte, yte) = moons_fold
    assert np.mean(moons_mlp.predict(Xte) == yte) >= 0.98


def test_logistic_accuracy_on_moons(moons_fold):
    (Xtr, ytr), (Xte, yte) = moons_fold
    model = clf.train(ClassifierConfig(arch="logistic", seed=1), Xtr, ytr)
    assert 0.80 <= np.mean(model.predict(Xte) == yte) <= 0.90


def test_separable_toy_is_memorized():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1])
    model = clf.train(ClassifierConfig(epochs=50, batch_size=2, seed=0), X, y)
    assert model.train_accuracy == 1.0


def test_single_class_labels_rejected():
    with pytest.raises(ValueError, match="single class"):
        clf.train(ClassifierConfig(), np.ones((4, 2)), np.ones(4))


def test_predict_proba_matches_hand_forward():
    # one hidden layer of width 2, weights set by hand, oracle in plain numpy
    config = ClassifierConfig(hidden_sizes=(2,))
    w1 = np.array([[0.5, -1.0], [2.0, 0.25]])
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[1.5], [-0.5]])
    b2 = np.array([0.3])
    params = [Tensor(p, requires_grad=False) for p in (w1, b1, w2, b2)]
    model = Classifier(config, params, train_accuracy=1.0)

    X = np.array([[0.2, 0.7], [-1.0, 0.4]])
    h = np.maximum(X @ w1 + b1, 0.0)
    z = (h @ w2 + b2)[:, 0]
    np.testing.assert_allclose(model.logits(X), z, atol=1e-10)
    np.testing.assert_allclose(model.predict_proba(X), 1 / (1 + np.exp(-z)), atol=1e-10)


def test_logits_node_agrees_with_fast_path(moons_mlp):
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, size=(20, 2))
    graph = moons_mlp.logits_node(Tensor(X)).data
    np.testing.assert_allclose(graph, moons_mlp.logits(X), atol=1e-12)


def test_probability_bounds_and_tie_rule():
    config = ClassifierConfig(arch="logistic")
    params = [Tensor(np.zeros((2, 1))), Tensor(np.zeros(1))]
    model = Classifier(config, params, train_accuracy=0.5)
    p = model.predict_proba(np.array([[5.0, -3.0]]))
    assert p[0] == 0.5
    assert model.predict(np.array([[5.0, -3.0]]))[0] == 1  # ties go to class 1


def test_dimension_mismatch_rejected(moons_mlp):
    with pytest.raises(ValueError):
        moons_mlp.predict_proba(np.ones((3, 5)))


def test_training_is_deterministic(moons_fold):
    (Xtr, ytr), _ = moons_fold
    config = ClassifierConfig(epochs=3, seed=11)
    a = clf.train(config, Xtr, ytr)
    b = clf.train(config, Xtr, ytr)
    for wa, wb in zip(a._weights, b._weights):
        np.testing.assert_array_equal(wa, wb)


def test_seed_changes_parameters(moons_fold):
    (Xtr, ytr), _ = moons_fold
    a = clf.train(ClassifierConfig(epochs=3, seed=1), Xtr, ytr)
    b = clf.train(ClassifierConfig(epochs=3, seed=2), Xtr, ytr)
    assert any(not np.array_equal(wa, wb) for wa, wb in zip(a._weights, b._weights))


def test_serialization_round_trip_is_bit_exact(moons_mlp, tmp_path):
    path = tmp_path / "model.npz"
    moons_mlp.save(path)
    loaded = Classifier.load(path)
    assert loaded.config == moons_mlp.config
    assert loaded.train_accuracy == moons_mlp.train_accuracy
    for wa, wb in zip(loaded._weights, moons_mlp._weights):
        np.testing.assert_array_equal(wa, wb)


def test_to_bytes_round_trip(moons_mlp):
    blob = moons_mlp.to_bytes()
    loaded = Classifier.load(io.BytesIO(blob))
    X = np.random.default_rng(1).uniform(size=(10, 2))
    np.testing.assert_array_equal(loaded.logits(X), moons_mlp.logits(X))


def test_unknown_arch_rejected():
    with pytest.raises(ValueError):
        ClassifierConfig(arch="transformer")
