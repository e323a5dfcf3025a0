import math

import numpy as np
import pytest

from moldweight import classic
from moldweight import model as mdl
from moldweight.errors import EmptyGridError, InsufficientDataError, NoConvergenceError


def project_box_hyperplane(v, a, C):
    """Euclidean projection onto {0 <= z <= C, a.z = 0} by bisection on the multiplier."""
    lo, hi = -C - np.abs(v).max() - 1, C + np.abs(v).max() + 1
    for _ in range(80):
        lam = 0.5 * (lo + hi)
        if a @ np.clip(v - lam * a, 0, C) > 0:
            lo = lam
        else:
            hi = lam
    return np.clip(v - 0.5 * (lo + hi) * a, 0, C)


def dense_dual_oracle(K, y, C, eps, iters=20_000, tol=1e-12):
    """Accelerated projected gradient on the dual in z = [alpha; alpha*]."""
    n = len(y)
    a = np.concatenate([np.ones(n), -np.ones(n)])
    Q = np.block([[K, -K], [-K, K]])
    q = np.concatenate([eps - y, eps + y])
    step = 1.0 / np.linalg.eigvalsh(Q).max()
    z = np.zeros(2 * n)
    w, t = z.copy(), 1.0
    for _ in range(iters):
        z_new = project_box_hyperplane(w - step * (Q @ w + q), a, C)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        w = z_new + (t - 1) / t_new * (z_new - z)
        done = np.abs(z_new - z).max() < tol
        z, t = z_new, t_new
        if done:
            break
    beta = z[:n] - z[n:]
    f = K @ beta
    free_up = (z[:n] > 1e-8) & (z[:n] < C - 1e-8)
    free_lo = (z[n:] > 1e-8) & (z[n:] < C - 1e-8)
    b = np.concatenate([y[free_up] - eps - f[free_up], y[free_lo] + eps - f[free_lo]])
    return beta, float(b.mean())


@pytest.fixture
def toy():
    r = np.random.default_rng(3)
    X = r.uniform(-2, 2, size=(10, 2))
    y = np.sin(X[:, 0]) + 0.3 * X[:, 1] + 0.05 * r.normal(size=10)
    return X, y


def test_svr_matches_dense_dual_oracle(toy):
    X, y = toy
    C, eps, gamma = 1.0, 0.1, 0.5
    K = classic.rbf_kernel(X, X, gamma)
    beta_ref, b_ref = dense_dual_oracle(K, y, C, eps)
    model = classic.svr_fit(X, y, C=C, epsilon=eps, gamma=gamma, tol=1e-9)
    Xt = np.random.default_rng(4).uniform(-2, 2, size=(50, 2))
    ref = classic.rbf_kernel(Xt, X, gamma) @ beta_ref + b_ref
    np.testing.assert_allclose(model.predict(Xt), ref, atol=1e-4)


def test_svr_matches_libsvm(toy):
    svm = pytest.importorskip("sklearn.svm")
    X, y = toy
    for C, eps, gamma in [(1.0, 0.1, 0.5), (10.0, 0.01, 1.0), (0.1, 0.05, 0.1)]:
        ours = classic.svr_fit(X, y, C=C, epsilon=eps, gamma=gamma, tol=1e-9)
        ref = svm.SVR(C=C, epsilon=eps, gamma=gamma, tol=1e-9).fit(X, y)
        np.testing.assert_allclose(ours.predict(X), ref.predict(X), atol=1e-6)


def test_svr_kkt_conditions(toy):
    X, y = toy
    C, eps = 1.0, 0.1
    K = classic.rbf_kernel(X, X, 0.5)
    beta, b, _ = classic.solve_svr_dual(K, y, C, eps, tol=1e-10)
    r = y - (K @ beta + b)
    assert abs(beta.sum()) < 1e-9
    assert np.all(np.abs(beta) <= C + 1e-12)
    # strictly inside the tube: zero coefficient; strictly outside: at the bound
    assert np.all(beta[np.abs(r) < eps - 1e-6] == 0)
    outside = np.abs(r) > eps + 1e-6
    np.testing.assert_allclose(np.abs(beta[outside]), C)
    free = (np.abs(beta) > 1e-9) & (np.abs(beta) < C - 1e-9)
    np.testing.assert_allclose(np.abs(r[free]), eps, atol=1e-6)


def test_svr_fits_line_within_tube():
    X = np.linspace(0, 1, 30)[:, None]
    y = 2 * X[:, 0]
    m = classic.svr_fit(X, y, C=100.0, epsilon=1e-3, gamma=1.0, tol=1e-3)
    assert np.sqrt(np.mean((m.predict(X) - y) ** 2)) < 1e-3 + 1e-3


def test_svr_no_convergence_is_reported(toy):
    X, y = toy
    with pytest.raises(NoConvergenceError):
        classic.svr_fit(X, y, C=100.0, epsilon=0.0, gamma=1.0, tol=1e-12, max_iter=3)


def test_svr_wide_tube_gives_constant():
    X = np.arange(6.0)[:, None]
    y = np.array([0.0, 0.1, 0.0, 0.1, 0.0, 0.1])
    m = classic.svr_fit(X, y, epsilon=1.0)
    assert len(m.dual_coef) == 0
    assert np.all(np.abs(m.predict(X) - y) <= 1.0)


def brute_force_root_split(X, y):
    best = (math.inf, None, None)
    for f in range(X.shape[1]):
        xs = np.unique(X[:, f])
        for lo, hi in zip(xs[:-1], xs[1:]):
            thr = 0.5 * (lo + hi)
            L, R = y[X[:, f] <= thr], y[X[:, f] > thr]
            sse = ((L - L.mean()) ** 2).sum() + ((R - R.mean()) ** 2).sum()
            if sse < best[0] - 1e-12:
                best = (sse, f, thr)
    return best


def test_root_split_is_variance_optimal(rng):
    for _ in range(10):
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40) + (X[:, 1] > 0.3)
        t = classic.grow_tree(X, y, max_features=3, seed_key=(0,), max_depth=1)
        _, f, thr = brute_force_root_split(X, y)
        assert t.feature[0] == f and t.threshold[0] == pytest.approx(thr)


def test_unlimited_tree_interpolates_distinct_points(rng):
    X = rng.normal(size=(60, 2))
    y = rng.normal(size=60)
    t = classic.grow_tree(X, y, 2, (1,))
    np.testing.assert_allclose(t.predict(X), y)


def test_constant_target_gives_single_leaf():
    t = classic.grow_tree(np.arange(10.0)[:, None], np.full(10, 3.0), 1, (0,))
    assert len(t.value) == 1 and t.value[0] == 3.0


def test_truncation_equals_growing_with_limits(rng):
    X = rng.normal(size=(80, 5))
    y = np.sin(X[:, 0]) + X[:, 2] ** 2 + 0.1 * rng.normal(size=80)
    full = classic.grow_tree(X, y, 2, (5, 1))
    Xt = rng.normal(size=(40, 5))
    for depth in (1, 2, 4, None):
        for split in (2, 5, 10):
            limited = classic.grow_tree(X, y, 2, (5, 1), depth, split)
            np.testing.assert_array_equal(full.predict(Xt, depth, split), limited.predict(Xt))


def test_forest_prefix_is_smaller_forest(rng):
    X = rng.normal(size=(50, 4))
    y = X[:, 0] - X[:, 3] + 0.1 * rng.normal(size=50)
    big = classic.rf_fit(X, y, n_trees=20, seed=3)
    small = classic.rf_fit(X, y, n_trees=8, seed=3)
    np.testing.assert_array_equal(big.predict(X, n_trees=8), small.predict(X))


def test_forest_beats_mean_predictor(rng):
    X = rng.normal(size=(200, 3))
    y = np.where(X[:, 0] > 0, 1.0, -1.0) + 0.1 * rng.normal(size=200)
    f = classic.rf_fit(X[:150], y[:150], n_trees=30, seed=0)
    err = np.sqrt(np.mean((f.predict(X[150:]) - y[150:]) ** 2))
    assert err < 0.3 * y[150:].std()


def test_fast_rf_search_equals_generic_search(rng):
    X = rng.normal(size=(45, 3))
    y = X[:, 0] * X[:, 1] + 0.1 * rng.normal(size=45)
    grid = {"n_trees": [3, 6], "max_depth": [2, None], "min_samples_split": [2, 7]}
    fast = classic.rf_grid_search_cv(grid, X, y, k=5, seed=2)
    slow = classic.grid_search_cv(lambda a, b, **p: classic.rf_fit(a, b, seed=2, **p), grid, X, y, k=5)
    assert fast.best_params == slow.best_params
    for (pf, sf, ff), (ps, ss, fs) in zip(fast.scores, slow.scores):
        assert pf == ps and ff == pytest.approx(fs, rel=1e-12)


def test_contiguous_folds():
    folds = classic.contiguous_folds(23, 5)
    assert [len(f) for f in folds] == [5, 5, 5, 4, 4]
    np.testing.assert_array_equal(np.concatenate(folds), np.arange(23))
    assert all(np.all(np.diff(f) == 1) for f in folds)
    with pytest.raises(InsufficientDataError):
        classic.contiguous_folds(3, 5)


def test_grid_search_picks_lowest_and_breaks_ties_in_order():
    class Const:
        def __init__(self, c):
            self.c = c

        def predict(self, X):
            return np.full(len(X), self.c)

    X = np.zeros((10, 1))
    y = np.ones(10)
    res = classic.grid_search_cv(lambda a, b, c: Const(c), {"c": [0.0, 1.0, 1.0, 2.0]}, X, y)
    assert res.best_params == {"c": 1.0} and res.scores.index(min(res.scores, key=lambda s: s[1])) == 1
    with pytest.raises(EmptyGridError):
        classic.grid_search_cv(lambda a, b: Const(0), {"c": []}, X, y)


def test_grid_search_non_converging_combo_scores_inf(toy):
    X, y = toy

    def fit(a, b, bad):
        if bad:
            raise NoConvergenceError("nope")
        return classic.svr_fit(a, b)

    res = classic.grid_search_cv(fit, {"bad": [True, False]}, X, y, k=2)
    assert res.scores[0][1] == math.inf and res.best_params == {"bad": False}


@pytest.mark.parametrize("variant", ["svr", "rf"])
def test_classic_model_save_load(tmp_path, small_dataset, variant):
    grid = {"C": [1.0], "gamma": [0.1], "epsilon": [0.01]} if variant == "svr" else \
        {"n_trees": [5], "max_depth": [3], "min_samples_split": [2]}
    m = classic.fit_classic(variant, small_dataset.molds(1, 100), grid, seed=1)
    p = tmp_path / "m.json"
    mdl.save(m, p)
    back = mdl.load(p)
    _, a = mdl.predict_dataset(m, small_dataset)
    _, b = mdl.predict_dataset(back, small_dataset)
    np.testing.assert_array_equal(a, b)
    online = [v for _, v in mdl.predict_online(back, small_dataset.records())]
    np.testing.assert_allclose(online, b, atol=1e-12)
