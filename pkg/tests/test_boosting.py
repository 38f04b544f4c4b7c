import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrocert import boosting
from surrocert.boosting import (CONVERGED, HIGH_BIAS, HIGH_VARIANCE, NEEDS_DATA, LearningCurve,
                                LPIterationLimit, diagnose_regime, fit_hull, fit_hypercube,
                                hull_contains, hypercube_contains, l1_feature_selection,
                                learning_curves, phase_one_feasible)
from surrocert.surrogate import SurrogateModel, TrainingConfig, train

from oracles import LOW_ERROR_TOL, SIZES, monotone_chain, polygon_contains, regime_curve


def _flat(v, n=6):
    return [v] * n


def test_regime_examples():
    d = diagnose_regime((_flat(0.01), _flat(0.30)), low_error_tol=0.05)
    assert d.regime == HIGH_VARIANCE
    assert diagnose_regime((_flat(0.5), _flat(0.5)), low_error_tol=0.05).regime == HIGH_BIAS
    te = [1.0, 0.8, 0.6, 0.5, 0.4, 0.32]
    assert diagnose_regime((te, te), low_error_tol=0.05).regime == NEEDS_DATA
    assert diagnose_regime((_flat(0.01), _flat(0.011)), low_error_tol=0.05).regime == CONVERGED


def test_rising_test_error_counts_as_plateau():
    tr = _flat(0.01)
    te = [0.3, 0.2, 0.15, 0.15, 0.16, 0.18]
    d = diagnose_regime((tr, te), low_error_tol=0.05)
    assert d.test_plateau and d.regime == HIGH_VARIANCE


def test_regime_errors_and_thresholds():
    with pytest.raises(ValueError):
        diagnose_regime(([1, 1], [1, 1]), low_error_tol=0.1)
    with pytest.raises(ValueError):
        diagnose_regime((_flat(1), _flat(1)))
    d = diagnose_regime((_flat(0.5), _flat(0.5)), low_error_tol=0.05)
    again = diagnose_regime((_flat(0.5), _flat(0.5)), **d.thresholds)
    assert again.to_dict() == d.to_dict()


@pytest.mark.parametrize("label", [HIGH_VARIANCE, HIGH_BIAS, NEEDS_DATA, CONVERGED])
def test_regime_families(label):
    rng = np.random.default_rng(hash(label) % 2 ** 32)
    for _ in range(25):
        curve = regime_curve(label, rng)
        assert diagnose_regime(curve, low_error_tol=LOW_ERROR_TOL).regime == label


def test_learning_curve_sizes_validation():
    with pytest.raises(ValueError):
        LearningCurve([10, 10, 20], [0] * 3, [0] * 3, "mse", [0])
    X = np.zeros((50, 2))
    cfg = TrainingConfig(hidden=(2,), epochs=1)
    with pytest.raises(ValueError):
        learning_curves(X, X[:, :1], X, X[:, :1], cfg, [10, 20, 60])
    with pytest.raises(ValueError):
        learning_curves(X, X[:, :1], X, X[:, :1], cfg, [10, 20])


def _linear_problem(n=1200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 3))
    Y = X @ np.array([[1.0], [-0.5], [0.25]]) + 0.01 * rng.normal(size=(n, 1))
    return X[:1000], Y[:1000], X[1000:], Y[1000:]


def test_learning_curve_converged_linear():
    Xtr, Ytr, Xte, Yte = _linear_problem()
    cfg = TrainingConfig(hidden=(8,), activation="linear", epochs=60, lr=0.01, batch_size=32)
    c = learning_curves(Xtr, Ytr, Xte, Yte, cfg, [100, 250, 500, 1000], seeds=(0, 1))
    assert c.test_error[-1] < 1e-3 and c.train_error[-1] < 1e-3
    assert diagnose_regime(c, low_error_tol=1e-2).regime == CONVERGED


def test_learning_curve_high_bias():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(1200, 1))
    Y = np.sin(3 * np.pi * X)
    cfg = TrainingConfig(hidden=(2,), activation="linear", epochs=30, lr=0.01)
    c = learning_curves(X[:1000], Y[:1000], X[1000:], Y[1000:], cfg, [100, 250, 500, 1000])
    d = diagnose_regime(c, low_error_tol=0.05)
    assert d.regime == HIGH_BIAS
    assert c.train_error[-1] > 0.3 and abs(d.gap) < 0.2


def test_learning_curve_train_error_grows_with_size():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(700, 4))
    Y = X[:, :1] * X[:, 1:2] + 0.3 * rng.normal(size=(700, 1))
    cfg = TrainingConfig(hidden=(32,), epochs=200, lr=0.01, batch_size=16)
    c = learning_curves(X[:600], Y[:600], X[600:], Y[600:], cfg, [20, 100, 600], seeds=(0, 1, 2))
    assert c.train_error[0] <= c.train_error[-1]
    assert len(c.per_seed["test"]) == 3


def test_learning_curve_all_full_size_repeats():
    Xtr, Ytr, Xte, Yte = _linear_problem(seed=3)
    cfg = TrainingConfig(hidden=(4,), activation="linear", epochs=20, lr=0.01)
    with pytest.raises(ValueError):
        learning_curves(Xtr, Ytr, Xte, Yte, cfg, [1000, 1000, 1000])


def test_l1_selection():
    W = np.ones((3, 2))
    W[1] = 0.0
    m = SurrogateModel((3, 2, 1), [W, np.ones((2, 1))], [np.zeros(2), np.zeros(1)], "relu",
                       epochs_trained=1)
    assert l1_feature_selection(m, 1e-12) == ["x2"]
    assert l1_feature_selection(m, 0.5, groups={"a": [0, 1], "b": [2]}) == []
    assert l1_feature_selection(m, 0.5, groups={"a": [1], "b": [0, 2]}) == ["a"]
    with pytest.raises(ValueError):
        l1_feature_selection(SurrogateModel((3, 2, 1), [W, np.ones((2, 1))],
                                            [np.zeros(2), np.zeros(1)], "relu"), 0.5)


def test_l1_selection_end_to_end():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(2000, 6))
    Y = 3 * X[:, :1] + 0.05 * rng.normal(size=(2000, 1))
    m, _ = train(X, Y, TrainingConfig(hidden=(8,), epochs=60, lr=0.01, reg="l1", lam=1e-3))
    assert l1_feature_selection(m, 0.05) == ["x2", "x3", "x4", "x5", "x6"]


def test_hypercube():
    X = np.array([[0.0, 1.0], [1.0, 3.0], [0.5, 2.0]])
    d = fit_hypercube(X)
    assert np.all(hypercube_contains(d, X))
    assert not hypercube_contains(d, np.array([1.01, 2.0]))
    assert hypercube_contains(d, np.array([1.0, 1.0]))  # a corner far from all data
    with pytest.raises(ValueError):
        hypercube_contains(d, np.zeros(3))
    with pytest.raises(ValueError):
        fit_hypercube(np.array([[np.inf, 0.0]]))


def test_hull_centroid_vertices_and_errors():
    rng = np.random.default_rng(4)
    P = rng.normal(size=(40, 3))
    d = fit_hull(P)
    assert hull_contains(d, P.mean(axis=0))
    assert np.all(hull_contains(d, P))
    assert not hull_contains(d, P.max(axis=0) + 1)
    with pytest.raises(ValueError):
        hull_contains(fit_hull(P[:3]), P[0])
    with pytest.raises(ValueError):
        hull_contains(d, np.zeros(2))
    with pytest.raises(ValueError):
        fit_hull(np.empty((0, 2)))


def test_hull_2d_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        P = rng.uniform(size=(rng.integers(10, 60), 2))
        Q = rng.uniform(-0.2, 1.2, size=(50, 2))
        expected = polygon_contains(monotone_chain(P), Q)
        assert np.array_equal(hull_contains(fit_hull(P), Q), expected)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 6), st.floats(-50, 50), st.sampled_from([0.5, 2.0, 4.0]))
def test_hull_affine_invariance_and_box(seed, dim, shift, scale):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(dim + 15, dim))
    Q = rng.normal(size=(10, dim)) * 1.5
    inside = hull_contains(fit_hull(P), Q)
    moved = hull_contains(fit_hull(scale * P + shift), scale * Q + shift)
    assert np.array_equal(inside, moved)
    assert np.all(hypercube_contains(fit_hypercube(P), Q)[inside])


def test_hull_pca_above_max_dim():
    rng = np.random.default_rng(6)
    Z = rng.normal(size=(300, 3))
    P = Z @ rng.normal(size=(3, 25))
    d = fit_hull(P)
    assert d.pca is not None and d.points.shape[1] <= 25
    assert hull_contains(d, P.mean(axis=0))


def test_phase_one_simple_systems():
    ok, w = phase_one_feasible(np.array([[1.0, 1.0]]), np.array([1.0]))
    assert ok and np.isclose(w.sum(), 1) and np.all(w >= 0)
    ok, _ = phase_one_feasible(np.array([[1.0, 1.0]]), np.array([-1.0]))
    assert not ok
    ok, w = phase_one_feasible(np.array([[1.0, -1.0]]), np.array([-2.0]))
    assert ok and np.isclose(w[0] - w[1], -2)
    with pytest.raises(LPIterationLimit):
        phase_one_feasible(np.array([[1.0, 2.0], [3.0, 1.0]]), np.array([3.0, 4.0]), max_iter=1)


def test_error_classifier_protocol():
    class Never:
        def flags(self, X):
            return np.zeros(len(X), dtype=bool)

    clf: boosting.ErrorClassifier = Never()
    assert not clf.flags(np.zeros((3, 2))).any()
