"""SMOTE, stratified cross-validation, randomized search and LOOCV."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from zfnad.scorer.models import KINDS, make_classifier

DEFAULT_SPACE = {
    "DT": {"max_depth": ["int", 1, 20]},
    "RF": {"n_estimators": ["int", 10, 500], "max_depth": ["int", 1, 20]},
    "ET": {"n_estimators": ["int", 10, 500], "max_depth": ["int", 1, 20]},
    "GBC": {"n_estimators": ["int", 10, 500], "learning_rate": ["uniform", 0.01, 0.3],
            "max_depth": ["int", 1, 5]},
    "LR": {"l2": ["loguniform", 1e-4, 10.0]},
    "KNN": {"n_neighbors": ["int", 1, 15]},
    "NB": {},
}


def sub_seed(seed: int, *tags: int) -> int:
    """Deterministic child seed, independent of execution order."""
    return int(np.random.SeedSequence([int(seed), *[int(t) for t in tags]]).generate_state(1)[0])


def smote(minority: np.ndarray, k: int, n_new: int, seed: int) -> np.ndarray:
    """Synthetic minority rows x + u * (neighbor - x), u ~ U[0, 1].

    Bases are drawn uniformly; the neighbor is one of the k nearest other
    minority rows (Euclidean, ties by row order).
    """
    X = np.asarray(minority, dtype=np.float64)
    m = len(X)
    if m < 2:
        raise ValueError(f"SMOTE needs at least 2 minority samples, got {m}")
    if not 1 <= k <= m - 1:
        raise ValueError(f"k must lie in [1, {m - 1}], got {k}")
    if n_new == 0:
        return np.empty((0, X.shape[1]))
    rng = np.random.default_rng(seed)
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    neighbors = np.argsort(d2, axis=1, kind="stable")[:, :k]
    base = rng.integers(0, m, size=n_new)
    pick = neighbors[base, rng.integers(0, k, size=n_new)]
    u = rng.random(n_new)[:, None]
    return X[base] + u * (X[pick] - X[base])


def balance(X: np.ndarray, y: np.ndarray, k: int, seed: int):
    """Oversample the minority class with SMOTE up to the majority count.

    Balanced inputs are returned unchanged.
    """
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n0 == n1 or n0 == 0 or n1 == 0:
        return X, y
    minority = 1 if n1 < n0 else 0
    Xm = X[y == minority]
    if len(Xm) < 2:
        return X, y
    synth = smote(Xm, min(k, len(Xm) - 1), abs(n0 - n1), seed)
    return np.vstack([X, synth]), np.concatenate([y, np.full(len(synth), minority, dtype=y.dtype)])


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Validation index arrays; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    out = [[] for _ in range(folds)]
    for c in (0, 1):
        idx = np.nonzero(y == c)[0]
        if len(idx) < folds:
            raise ValueError(f"class {c} has {len(idx)} samples, fewer than {folds} folds")
        idx = rng.permutation(idx)
        for i, j in enumerate(idx):
            out[i % folds].append(j)
    return [np.sort(np.array(f, dtype=np.int64)) for f in out]


def sample_params(space: dict, rng: np.random.Generator) -> dict:
    params = {}
    for name, spec in space.items():
        kind, lo, hi = spec
        if kind == "int":
            params[name] = int(rng.integers(int(lo), int(hi) + 1))
        elif kind == "uniform":
            params[name] = float(rng.uniform(lo, hi))
        elif kind == "loguniform":
            params[name] = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        elif kind == "choice":
            params[name] = spec[1][int(rng.integers(len(spec[1])))]
        else:
            raise ValueError(f"unknown parameter distribution {kind!r} for {name}")
    return params


def cv_accuracy(X, y, kind, params, folds, seed, smote_k=5) -> float:
    """Mean stratified k-fold accuracy at threshold 0.5, SMOTE inside training folds only."""
    accs = []
    for f, val in enumerate(stratified_folds(y, folds, seed)):
        train = np.setdiff1d(np.arange(len(y)), val)
        Xt, yt = balance(X[train], y[train], smote_k, sub_seed(seed, 1, f))
        clf = make_classifier(kind, params, sub_seed(seed, 2, f)).fit(Xt, yt)
        pred = (clf.predict_proba(X[val]) >= 0.5).astype(int)
        accs.append(float(np.mean(pred == y[val])))
    return float(np.mean(accs))


def search_hyperparameters(X, y, kinds=KINDS, space=None, iterations=500, folds=5, seed=0, smote_k=5):
    """Randomized search per classifier kind; returns (best_kind, best_params, per_kind).

    ``per_kind`` maps each kind to ``{"params", "cv_accuracy"}`` of its best
    draw. Ties keep the first sampled configuration, and across kinds the
    first kind in ``kinds`` order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    for c in (0, 1):
        if np.sum(y == c) < folds:
            raise ValueError(f"class {c} too small for {folds}-fold stratification")
    space = space or DEFAULT_SPACE
    fold_seed = sub_seed(seed, 0)
    per_kind = {}
    for ki, kind in enumerate(kinds):
        rng = np.random.default_rng(sub_seed(seed, 10, ki))
        kind_space = space.get(kind, {})
        draws = 1 if not kind_space else iterations
        best = None
        for _ in range(draws):
            params = sample_params(kind_space, rng)
            acc = cv_accuracy(X, y, kind, params, folds, fold_seed, smote_k)
            if best is None or acc > best["cv_accuracy"]:
                best = {"params": params, "cv_accuracy": acc}
        per_kind[kind] = best
    best_kind = max(kinds, key=lambda k: (per_kind[k]["cv_accuracy"], -kinds.index(k)))
    return best_kind, per_kind[best_kind]["params"], per_kind


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def fit_predict_loocv(X, y, kind, params, seed=0, smote_k=5, threads=1) -> np.ndarray:
    """Out-of-fold class-1 probability for every record (leave-one-out)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if len(y) < 3:
        raise ValueError("LOOCV needs at least 3 records")

    def one(i):
        train = np.r_[0:i, i + 1:len(y)]
        yt = y[train]
        if yt.min() == yt.max():
            raise ValueError(f"holding out record {i} leaves a single-class training set")
        Xt, yt = balance(X[train], yt, smote_k, sub_seed(seed, 3, i))
        clf = make_classifier(kind, params, sub_seed(seed, 4, i)).fit(Xt, yt)
        return float(clf.predict_proba(X[i:i + 1])[0])

    return np.array(_map(one, range(len(y)), threads))
