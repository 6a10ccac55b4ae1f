"""Binary classifiers written from scratch: DT, RF, ET, GBC, LR, KNN and NB.

Every classifier exposes ``fit(X, y)``, ``predict_proba(X)`` returning the
class-1 probability, ``feature_importances()`` and JSON-ready ``to_dict``.
"""

from __future__ import annotations

import numpy as np

from zfnad.scorer.trees import Tree, build_tree

KINDS = ("DT", "RF", "ET", "GBC", "LR", "KNN", "NB")
NB_VAR_FLOOR = 1e-9
LR_ITERATIONS = 500
LR_STEP = 1.0


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"bad training shapes {X.shape} / {y.shape}")
    if len(X) == 0:
        raise ValueError("empty training set")
    return X, y


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Classifier:
    kind = ""

    def __init__(self, seed: int = 0, **params):
        self.seed = int(seed)
        self.params = dict(params)
        self.n_features = None

    def _rng(self, *tags):
        return np.random.default_rng(np.random.SeedSequence([self.seed, *tags]))

    def fit(self, X, y):
        raise NotImplementedError

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def feature_importances(self):
        """Normalized importances, or None when the model has no notion of them."""
        return None

    def state(self) -> dict:
        raise NotImplementedError

    def load_state(self, state: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "params": self.params,
                "n_features": self.n_features, "state": self.state()}


class _TreeEnsemble(Classifier):
    splitter = "best"
    bootstrap = False
    default_max_features = None

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features = X.shape[1]
        n_trees = int(self.params.get("n_estimators", 1))
        self.trees = []
        for t in range(n_trees):
            rng = self._rng(t)
            idx = rng.integers(0, len(X), size=len(X)) if self.bootstrap else np.arange(len(X))
            self.trees.append(build_tree(
                X[idx], y[idx],
                max_depth=self.params.get("max_depth"),
                min_samples_leaf=int(self.params.get("min_samples_leaf", 1)),
                max_features=self.params.get("max_features", self.default_max_features),
                splitter=self.splitter, rng=rng,
            ))
        return self

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def feature_importances(self):
        per_tree = []
        for t in self.trees:
            imp = t.impurity_importance(self.n_features)
            s = imp.sum()
            per_tree.append(imp / s if s > 0 else imp)
        imp = np.mean(per_tree, axis=0)
        s = imp.sum()
        return imp / s if s > 0 else imp

    def state(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    def load_state(self, state):
        self.trees = [Tree.from_dict(d) for d in state["trees"]]


class DecisionTree(_TreeEnsemble):
    kind = "DT"

    def __init__(self, seed=0, **params):
        params.pop("n_estimators", None)
        super().__init__(seed, **params)


class RandomForest(_TreeEnsemble):
    kind = "RF"
    bootstrap = True
    default_max_features = "sqrt"


class ExtraTrees(_TreeEnsemble):
    kind = "ET"
    splitter = "random"
    default_max_features = "sqrt"


class GradientBoosting(Classifier):
    """Logistic-loss boosting of shallow regression trees with Newton leaf values."""

    kind = "GBC"

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features = X.shape[1]
        p0 = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        self.init = float(np.log(p0 / (1 - p0)))
        lr = float(self.params.get("learning_rate", 0.1))
        f = np.full(len(X), self.init)
        self.trees = []
        for t in range(int(self.params.get("n_estimators", 100))):
            p = _sigmoid(f)
            resid = y - p
            tree = build_tree(X, resid, max_depth=int(self.params.get("max_depth", 3)),
                              min_samples_leaf=int(self.params.get("min_samples_leaf", 1)),
                              rng=self._rng(t), classification=False)
            leaves = tree.apply(X)
            values = tree.value.copy()
            for leaf in np.unique(leaves):
                sel = leaves == leaf
                den = (p[sel] * (1 - p[sel])).sum()
                values[leaf] = resid[sel].sum() / den if den > 1e-12 else 0.0
            tree.value = values
            f = f + lr * values[leaves]
            self.trees.append(tree)
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        lr = float(self.params.get("learning_rate", 0.1))
        f = np.full(len(X), self.init)
        for t in self.trees:
            f = f + lr * t.predict(X)
        return f

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))

    def feature_importances(self):
        imp = np.zeros(self.n_features)
        for t in self.trees:
            imp += t.impurity_importance(self.n_features)
        s = imp.sum()
        return imp / s if s > 0 else imp

    def state(self):
        return {"init": self.init, "trees": [t.to_dict() for t in self.trees]}

    def load_state(self, state):
        self.init = state["init"]
        self.trees = [Tree.from_dict(d) for d in state["trees"]]


class LogisticRegression(Classifier):
    """L2-regularized logistic regression by fixed-step batch gradient descent."""

    kind = "LR"

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features = X.shape[1]
        l2 = float(self.params.get("l2", 1.0))
        n, d = X.shape
        w = np.zeros(d)
        b = 0.0
        # step bounded by the loss Lipschitz constant keeps descent monotone
        lip = 0.25 * (np.linalg.norm(X, 2) ** 2 / n + 1.0) + l2
        step = LR_STEP / lip
        for _ in range(int(self.params.get("max_iter", LR_ITERATIONS))):
            p = _sigmoid(X @ w + b)
            g = p - y
            w -= step * (X.T @ g / n + l2 * w)
            b -= step * g.mean()
        self.coef = w
        self.intercept = float(b)
        return self

    def predict_proba(self, X):
        return _sigmoid(np.asarray(X, dtype=np.float64) @ self.coef + self.intercept)

    def feature_importances(self):
        a = np.abs(self.coef)
        s = a.sum()
        return a / s if s > 0 else a

    def state(self):
        return {"coef": self.coef.tolist(), "intercept": self.intercept}

    def load_state(self, state):
        self.coef = np.asarray(state["coef"], dtype=np.float64)
        self.intercept = float(state["intercept"])


class KNearestNeighbors(Classifier):
    """Probability = fraction of class-1 points among the k nearest (Euclidean)."""

    kind = "KNN"

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features = X.shape[1]
        self.X, self.y = X, y
        return self

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        k = min(int(self.params.get("n_neighbors", 5)), len(self.X))
        d2 = ((X[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
        # stable sort: equidistant neighbors resolved by training order
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return self.y[nn].mean(axis=1)

    def state(self):
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    def load_state(self, state):
        self.X = np.asarray(state["X"], dtype=np.float64).reshape(len(state["y"]), -1)
        self.y = np.asarray(state["y"], dtype=np.float64)


class GaussianNaiveBayes(Classifier):
    kind = "NB"

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features = X.shape[1]
        self.prior, self.mean, self.var = [], [], []
        for c in (0, 1):
            Xc = X[y == c]
            if len(Xc) == 0:
                raise ValueError("naive Bayes needs both classes")
            self.prior.append(len(Xc) / len(X))
            self.mean.append(Xc.mean(axis=0))
            self.var.append(np.maximum(Xc.var(axis=0), NB_VAR_FLOOR))
        self.mean, self.var = np.array(self.mean), np.array(self.var)
        self.prior = np.array(self.prior)
        return self

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        ll = np.log(self.prior)[None, :] - 0.5 * (
            np.log(2 * np.pi * self.var)[None, :, :]
            + (X[:, None, :] - self.mean[None, :, :]) ** 2 / self.var[None, :, :]
        ).sum(axis=2)
        return _sigmoid(ll[:, 1] - ll[:, 0])

    def state(self):
        return {"prior": self.prior.tolist(), "mean": self.mean.tolist(), "var": self.var.tolist()}

    def load_state(self, state):
        self.prior = np.asarray(state["prior"])
        self.mean = np.asarray(state["mean"])
        self.var = np.asarray(state["var"])


REGISTRY = {
    "DT": DecisionTree,
    "RF": RandomForest,
    "ET": ExtraTrees,
    "GBC": GradientBoosting,
    "LR": LogisticRegression,
    "KNN": KNearestNeighbors,
    "NB": GaussianNaiveBayes,
}


def make_classifier(kind: str, params: dict | None = None, seed: int = 0) -> Classifier:
    if kind not in REGISTRY:
        raise ValueError(f"unknown classifier kind {kind!r}; expected one of {KINDS}")
    return REGISTRY[kind](seed=seed, **(params or {}))


def classifier_from_dict(d: dict) -> Classifier:
    clf = make_classifier(d["kind"], d["params"], d["seed"])
    clf.n_features = d["n_features"]
    clf.load_state(d["state"])
    return clf
