import numpy as np
import pytest

from croce import ensemble as ens
from croce import metrics
from croce.cfgen import CounterfactualResult
from croce.classifier import Classifier, ClassifierConfig
from croce.numerics import Tensor


def make_result(x0, delta, target):
    x0 = np.asarray(x0, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    return CounterfactualResult(
        x0=x0,
        delta=delta,
        s_star=0.9,
        target_class=target,
        gamma=0.9,
        alpha=5.0,
        loss_trace=np.zeros(1),
        final_loss=0.0,
        hinge_active=False,
    )


def linear_model(w, b):
    """Logistic scorer with fixed weights (no training)."""
    params = [Tensor(np.asarray(w, dtype=np.float64).reshape(-1, 1)), Tensor(np.array([b]))]
    return Classifier(ClassifierConfig(arch="logistic"), params, train_accuracy=1.0)


# predicts class 1 iff x0 + x1 > 1
GATE = linear_model([4.0, 4.0], -4.0)


class TestValidity:
    def test_hits_and_misses(self):
        results = [
            make_result([0.9, 0.9], [0.0, 0.0], 1),  # 1.8 > 1: predicted 1, target 1
            make_result([0.0, 0.0], [0.1, 0.1], 1),  # 0.2 < 1: predicted 0, target 1
            make_result([0.0, 0.0], [0.0, 0.0], 0),
        ]
        np.testing.assert_array_equal(metrics.validity(GATE, results), [1.0, 0.0, 1.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            metrics.validity(GATE, [])


class TestProximity:
    def test_hand_arithmetic(self):
        l1, l2 = metrics.proximity([make_result([0.0, 0.0], [3.0, 4.0], 1)])
        assert (l1[0], l2[0]) == (7.0, 5.0)

    def test_zero_delta(self):
        l1, l2 = metrics.proximity([make_result([0.5, 0.5], [0.0, 0.0], 1)])
        assert (l1[0], l2[0]) == (0.0, 0.0)

    def test_l2_never_exceeds_l1(self):
        rng = np.random.default_rng(0)
        results = [make_result(np.zeros(5), rng.normal(size=5), 1) for _ in range(50)]
        l1, l2 = metrics.proximity(results)
        assert np.all(l2 <= l1 + 1e-12)


class TestPlausibilityKnn:
    def test_exact_distance_on_constructed_pool(self):
        # target-class pool: k points all at distance 2 from the counterfactual
        X_train = np.vstack([np.tile([2.0, 0.0], (3, 1)), np.tile([9.0, 9.0], (3, 1))])
        y_train = np.array([1, 1, 1, 0, 0, 0])
        out = metrics.plausibility_knn(
            [make_result([0.0, 0.0], [0.0, 0.0], 1)], X_train, y_train, k=3
        )
        np.testing.assert_allclose(out, [2.0])

    def test_k_monotonicity(self):
        rng = np.random.default_rng(1)
        X_train = rng.uniform(size=(60, 2))
        y_train = np.arange(60) % 2
        results = [make_result(rng.uniform(size=2), np.zeros(2), 1) for _ in range(10)]
        prev = metrics.plausibility_knn(results, X_train, y_train, k=1)
        for k in (3, 5, 10):
            cur = metrics.plausibility_knn(results, X_train, y_train, k=k)
            assert np.all(cur >= prev - 1e-12)  # mean over a larger ball can't shrink
            prev = cur

    def test_pool_too_small(self):
        with pytest.raises(ValueError, match="need k"):
            metrics.plausibility_knn(
                [make_result([0.0], [0.0], 1)], np.ones((4, 1)), np.array([1, 1, 0, 0]), k=3
            )


class TestRobustnessPair:
    @pytest.fixture(scope="class")
    def eval_pair(self):
        from croce.data import make_moons, split_folds

        ds = make_moons(200, noise=0.1, seed=3)
        split = split_folds(ds, 1, seed=0)[0]
        Xtr, ytr = split.scaled(ds, "train")
        Xp, yp = split.scaled(ds, "valpool")
        cfg = ClassifierConfig(hidden_sizes=(8,), epochs=20, batch_size=16, seed=0)
        ret = ens.build_retrain_eval_ensemble(Xtr, ytr, Xp, yp, cfg, K=3, seed=1)
        bse = ens.build_bootstrap_eval_ensemble(Xp, yp, cfg, K=3, seed=1)
        return ret, bse

    def test_matches_member_counting(self, eval_pair):
        ret, bse = eval_pair
        results = [make_result([0.2, 0.8], [0.0, 0.0], 1), make_result([0.9, 0.1], [0.0, 0.0], 0)]
        X = np.stack([r.x_cf for r in results])
        t = np.array([1, 0])
        rr, rb = metrics.robustness_pair(ret, bse, results)
        np.testing.assert_allclose(rr, np.mean([m.predict(X) == t for m in ret.members], axis=0))
        np.testing.assert_allclose(rb, np.mean([m.predict(X) == t for m in bse.members], axis=0))


class TestAggregation:
    def test_fold_mean_and_sample_stdev(self):
        v = metrics.MetricValue.from_folds([np.array([1.0, 0.0]), np.array([1.0, 1.0])])
        assert v.per_fold == [0.5, 1.0]
        assert v.mean == 0.75
        np.testing.assert_allclose(v.stdev, np.std([0.5, 1.0], ddof=1))

    def test_single_fold_stdev_is_zero(self):
        assert metrics.MetricValue.from_folds([np.array([0.3, 0.7])]).stdev == 0.0

    def test_build_report_names(self):
        fold = {name: np.array([0.5]) for name in metrics.METRIC_NAMES}
        report = metrics.build_report([fold, fold])
        d = report.as_dict()
        assert set(d) == set(metrics.METRIC_NAMES)
        assert d["l1"]["mean"] == 0.5
        assert d["l1"]["per_fold"] == [0.5, 0.5]
