"""Classical baselines: epsilon-SVR (SMO), random-forest regression, grid-search CV.

Both models consume the current mold's standardized channel vector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, FeatureSchema, Standardization, standardize_fit
from .errors import (
    CorruptFileError,
    EmptyGridError,
    InsufficientDataError,
    NoConvergenceError,
    NonFiniteInputError,
    ShapeMismatchError,
)

SVR_GRID = {"C": [0.1, 1.0, 10.0, 100.0], "gamma": [0.01, 0.1, 1.0], "epsilon": [0.001, 0.01]}
RF_GRID = {
    "n_trees": [50, 100, 200],
    "max_depth": [3, 5, 10, None],
    "min_samples_split": [2, 5, 10],
}


def rbf_kernel(A, B, gamma):
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


# ---------------------------------------------------------------------------
# epsilon-SVR


@dataclass
class SvrModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i - alpha_i^*, one per support vector
    bias: float
    gamma: float
    C: float
    epsilon: float
    n_iter: int = 0

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if len(self.dual_coef) == 0:
            return np.full(len(X), self.bias)
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias


def _svr_rho(a, y, G, C):
    yG = y * G
    upper = a >= C
    lower = a <= 0
    free = ~(upper | lower)
    if free.any():
        return float(yG[free].mean())
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else math.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -math.inf
    return float((ub + lb) / 2)


def solve_svr_dual(K, target, C, epsilon, tol=1e-3, max_iter=100_000):
    """SMO on the 2n-variable epsilon-SVR dual

        min 1/2 a'Qa + p'a   s.t.  y'a = 0,  0 <= a <= C

    with y = [+1..., -1...], p = [eps - t, eps + t], Q = (y y') * [[K, K], [K, K]].
    Pairs are picked by maximal violation plus second-order gain. Returns
    ``(beta, bias, n_iter)`` where beta = a[:n] - a[n:].
    """
    n = len(target)
    y = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - target, epsilon + target])
    Kd = np.diag(K)
    a = np.zeros(2 * n)
    G = p.copy()
    tau = 1e-12
    it = 0
    while True:
        mG = -y * G
        up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
        if not up.any() or not low.any():
            break
        mg_up = np.where(up, mG, -np.inf)
        i = int(np.argmax(mg_up))
        gmax = mg_up[i]
        mg_low = np.where(low, mG, np.inf)
        if gmax - mg_low.min() < tol:
            break
        if it >= max_iter:
            raise NoConvergenceError(f"SMO did not reach tol={tol} in {max_iter} iterations")
        it += 1
        ii = i % n
        b = gmax - mG
        cand = low & (b > 0)
        quad = np.maximum(Kd[ii] + np.tile(Kd, 2) - 2.0 * np.tile(K[ii], 2), tau)
        gain = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(gain))
        jj = j % n

        Qij = y[i] * y[j] * K[ii, jj]
        ai, aj = a[i], a[j]
        if y[i] != y[j]:
            q = max(Kd[ii] + Kd[jj] + 2.0 * Qij, tau)
            delta = (-G[i] - G[j]) / q
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            q = max(Kd[ii] + Kd[jj] - 2.0 * Qij, tau)
            delta = (G[i] - G[j]) / q
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        dai, daj = ai - a[i], aj - a[j]
        a[i], a[j] = ai, aj
        # column t of Q is y_t * y * [K[:, t % n]; K[:, t % n]]
        G += y * np.tile(y[i] * dai * K[:, ii] + y[j] * daj * K[:, jj], 2)
    beta = a[:n] - a[n:]
    return beta, -_svr_rho(a, y, G, C), it


def svr_fit(X, y, C=1.0, epsilon=0.01, gamma=0.1, tol=1e-3, max_iter=100_000) -> SvrModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeMismatchError("X must be (n, p) with one target per row")
    if len(y) < 2:
        raise InsufficientDataError("SVR needs at least 2 samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInputError("SVR inputs contain NaN or inf")
    if not (C > 0 and gamma > 0 and epsilon >= 0):
        raise ValueError("need C > 0, gamma > 0, epsilon >= 0")
    K = rbf_kernel(X, X, gamma)
    beta, bias, it = solve_svr_dual(K, y, C, epsilon, tol, max_iter)
    sv = np.abs(beta) > 0
    return SvrModel(X[sv].copy(), beta[sv].copy(), bias, gamma, C, epsilon, it)


# ---------------------------------------------------------------------------
# Random forest


@dataclass
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    depth: np.ndarray

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def predict(self, X, max_depth=None, min_samples_split=2):
        """Leaf means; ``max_depth``/``min_samples_split`` cut the tree short
        exactly as if it had been grown with those limits."""
        X = np.asarray(X, dtype=float)
        stop = self.left < 0
        if max_depth is not None:
            stop = stop | (self.depth >= max_depth)
        stop = stop | (self.n_samples < min_samples_split)
        node = np.zeros(len(X), dtype=np.int64)
        active = ~stop[node]
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = ~stop[node[idx]]
        return self.value[node]

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "n_samples", "depth")}

    @classmethod
    def from_json(cls, d):
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
            np.array(d["n_samples"], dtype=np.int64),
            np.array(d["depth"], dtype=np.int64),
        )


def grow_tree(X, y, max_features, seed_key, max_depth=None, min_samples_split=2) -> RegressionTree:
    """Variance-reduction regression tree.

    Every node draws its feature order from a generator keyed on
    ``(seed_key, node path)``, so growth at a node does not depend on how
    the rest of the tree was built; depth/min-split limits therefore act as
    pure truncation.
    """
    n, p = X.shape
    feature, threshold, left, right, value, count, depth = [], [], [], [], [], [], []
    stack = [(np.arange(n), 0, 1, -1, False)]  # (rows, depth, path id, parent, is_right)
    while stack:
        rows, d, path, parent, is_right = stack.pop()
        node = len(value)
        yn = y[rows]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(yn.mean()))
        count.append(len(rows))
        depth.append(d)
        if parent >= 0:
            (right if is_right else left)[parent] = node
        if len(rows) < min_samples_split or (max_depth is not None and d >= max_depth):
            continue
        if not np.any(yn != yn[0]):
            continue
        rng = np.random.default_rng([*seed_key, path])
        order = rng.permutation(p)
        best = None
        best_score = -math.inf
        tried = 0
        total = yn.sum()
        m = len(rows)
        for f in order:
            xs = X[rows, f]
            srt = np.argsort(xs, kind="stable")
            xs_s = xs[srt]
            valid = xs_s[1:] > xs_s[:-1]
            if not valid.any():
                continue
            cs = np.cumsum(yn[srt])[:-1]
            nl = np.arange(1, m)
            score = cs * cs / nl + (total - cs) ** 2 / (m - nl)
            score = np.where(valid, score, -math.inf)
            k = int(np.argmax(score))
            if score[k] > best_score:
                best_score = score[k]
                best = (int(f), 0.5 * (xs_s[k] + xs_s[k + 1]))
            tried += 1
            if tried >= max_features:
                break
        if best is None:
            continue
        f, thr = best
        mask = X[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        stack.append((rows[~mask], d + 1, 2 * path + 1, node, True))
        stack.append((rows[mask], d + 1, 2 * path, node, False))
    return RegressionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
        np.array(count, dtype=np.int64),
        np.array(depth, dtype=np.int64),
    )


@dataclass
class ForestModel:
    trees: list
    n_trees: int
    max_depth: int | None
    min_samples_split: int
    seed: int
    bootstrap: bool = True

    def tree_predictions(self, X, n_trees=None, max_depth="own", min_samples_split=None):
        depth = self.max_depth if max_depth == "own" else max_depth
        split = self.min_samples_split if min_samples_split is None else min_samples_split
        trees = self.trees[: n_trees or len(self.trees)]
        return np.stack([t.predict(X, depth, split) for t in trees])

    def predict(self, X, **limits):
        return self.tree_predictions(X, **limits).mean(axis=0)


def rf_fit(X, y, n_trees=100, max_depth=None, min_samples_split=2, seed=0, bootstrap=True,
           max_features=None) -> ForestModel:
    """Bagged variance-reduction trees with ceil(p/3) features tried per split.

    Tree ``t`` depends only on ``(seed, t)``, so a forest's first k trees are
    the k-tree forest.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeMismatchError("X must be (n, p) with one target per row")
    if len(y) < max(min_samples_split, 1) or len(y) == 0:
        raise InsufficientDataError(f"{len(y)} samples < min_samples_split={min_samples_split}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInputError("forest inputs contain NaN or inf")
    n, p = X.shape
    m = max_features or math.ceil(p / 3)
    trees = []
    for t in range(n_trees):
        if bootstrap:
            rows = np.random.default_rng([seed, t, 0]).integers(0, n, size=n)
        else:
            rows = np.arange(n)
        trees.append(grow_tree(X[rows], y[rows], m, (seed, t, 1), max_depth, min_samples_split))
    return ForestModel(trees, n_trees, max_depth, min_samples_split, seed, bootstrap)


# ---------------------------------------------------------------------------
# Grid search


@dataclass
class GridSearchResult:
    best_params: dict
    best_score: float
    scores: list  # (params, mean fold RMSE, per-fold RMSEs) in grid order
    folds: list  # index arrays of each validation fold

    def to_json(self) -> dict:
        return {
            "best_params": self.best_params,
            "best_score": self.best_score,
            "scores": [
                {"params": p, "mean_rmse": s, "fold_rmse": f} for p, s, f in self.scores
            ],
            "folds": [f.tolist() for f in self.folds],
        }


def expand_grid(grid) -> list[dict]:
    if isinstance(grid, dict):
        keys = list(grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    return [dict(g) for g in grid]


def contiguous_folds(n: int, k: int) -> list[np.ndarray]:
    if n < k:
        raise InsufficientDataError(f"{n} samples cannot form {k} folds")
    return np.array_split(np.arange(n), k)


def _rmse(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def _pick(scores, combos, folds):
    best = min(range(len(scores)), key=lambda c: (scores[c][1], c))
    return GridSearchResult(combos[best], scores[best][1], scores, folds)


def grid_search_cv(fit_fn, grid, X, y, k=5) -> GridSearchResult:
    """Exhaustive search; the lowest mean fold RMSE wins, ties go to grid order.

    ``fit_fn(X, y, **params)`` must return an object with ``predict``. A
    combination whose fit fails to converge scores +inf.
    """
    combos = expand_grid(grid)
    if not combos:
        raise EmptyGridError("grid has no combinations")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    folds = contiguous_folds(len(y), k)
    scores = []
    for params in combos:
        errs = []
        for val in folds:
            tr = np.setdiff1d(np.arange(len(y)), val)
            try:
                model = fit_fn(X[tr], y[tr], **params)
                errs.append(_rmse(model.predict(X[val]), y[val]))
            except NoConvergenceError:
                errs.append(math.inf)
        scores.append((params, float(np.mean(errs)), errs))
    return _pick(scores, combos, folds)


def rf_grid_search_cv(grid, X, y, k=5, seed=0, bootstrap=True) -> GridSearchResult:
    """Same result as ``grid_search_cv(rf_fit, ...)`` at a fraction of the cost:
    one unlimited forest per fold, truncated per combination."""
    combos = expand_grid(grid)
    if not combos:
        raise EmptyGridError("grid has no combinations")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    folds = contiguous_folds(len(y), k)
    n_max = max(c["n_trees"] for c in combos)
    fold_preds = []  # per fold: {(depth, split): tree prediction matrix}
    for val in folds:
        tr = np.setdiff1d(np.arange(len(y)), val)
        forest = rf_fit(X[tr], y[tr], n_max, None, 2, seed, bootstrap)
        cache = {}
        for c in combos:
            key = (c["max_depth"], c["min_samples_split"])
            if key not in cache:
                cache[key] = forest.tree_predictions(X[val], None, *key)
        fold_preds.append((val, cache))
    scores = []
    for c in combos:
        key = (c["max_depth"], c["min_samples_split"])
        errs = []
        for val, cache in fold_preds:
            if len(y) - len(val) < c["min_samples_split"]:
                errs.append(math.inf)
                continue
            errs.append(_rmse(cache[key][: c["n_trees"]].mean(axis=0), y[val]))
        scores.append((c, float(np.mean(errs)), errs))
    return _pick(scores, combos, folds)


def svr_grid_search_cv(grid, X, y, k=5, tol=1e-3) -> GridSearchResult:
    return grid_search_cv(lambda X_, y_, **p: svr_fit(X_, y_, tol=tol, **p), grid, X, y, k)


# ---------------------------------------------------------------------------
# Model wrapper used by the harness / CLI


@dataclass
class ClassicModel:
    variant: str  # "svr" | "rf"
    params: dict
    schema: FeatureSchema
    standardization: Standardization
    estimator: object
    search: GridSearchResult | None = field(default=None, repr=False)

    window_length = 1

    def predict_windows(self, raw_windows):
        X = np.asarray(raw_windows, dtype=float)[:, -1, :]
        z = self.estimator.predict(self.standardization.apply(X))
        return self.standardization.invert_target(z)

    def config_json(self) -> dict:
        return {"variant": self.variant, "params": self.params}

    def payload(self) -> dict:
        est = self.estimator
        if self.variant == "svr":
            return {
                "support_vectors": {"shape": list(est.support_vectors.shape),
                                    "data": est.support_vectors.reshape(-1).tolist()},
                "dual_coef": {"shape": [len(est.dual_coef)], "data": est.dual_coef.tolist()},
                "bias": est.bias,
                "gamma": est.gamma,
                "C": est.C,
                "epsilon": est.epsilon,
            }
        return {
            "n_trees": est.n_trees,
            "max_depth": est.max_depth,
            "min_samples_split": est.min_samples_split,
            "seed": est.seed,
            "bootstrap": est.bootstrap,
            "trees": [t.to_json() for t in est.trees],
        }

    @classmethod
    def from_payload(cls, variant, config, schema, stats, payload):
        try:
            if variant == "svr":
                sv = payload["support_vectors"]
                est = SvrModel(
                    np.array(sv["data"], dtype=float).reshape(sv["shape"]),
                    np.array(payload["dual_coef"]["data"], dtype=float),
                    float(payload["bias"]),
                    float(payload["gamma"]),
                    float(payload["C"]),
                    float(payload["epsilon"]),
                )
            else:
                est = ForestModel(
                    [RegressionTree.from_json(t) for t in payload["trees"]],
                    int(payload["n_trees"]),
                    payload["max_depth"],
                    int(payload["min_samples_split"]),
                    int(payload["seed"]),
                    bool(payload["bootstrap"]),
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFileError(f"malformed {variant} payload: {exc}") from exc
        return cls(variant, dict(config.get("params", {})), schema, stats, est)


def fit_classic(variant: str, train_data: Dataset, grid=None, seed=0, k=5, svr_tol=1e-3):
    """Grid-search CV on the training molds, then refit the winner on all of them."""
    stats = standardize_fit(train_data)
    X = stats.apply(train_data.values)
    y = stats.apply_target(train_data.weight)
    if variant == "svr":
        search = svr_grid_search_cv(grid or SVR_GRID, X, y, k, svr_tol)
        est = svr_fit(X, y, tol=svr_tol, **search.best_params)
    elif variant == "rf":
        search = rf_grid_search_cv(grid or RF_GRID, X, y, k, seed)
        est = rf_fit(X, y, seed=seed, **search.best_params)
    else:
        raise ValueError(f"unknown classical variant {variant!r}")
    return ClassicModel(variant, search.best_params, train_data.schema, stats, est, search)
