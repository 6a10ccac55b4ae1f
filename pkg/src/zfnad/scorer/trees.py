"""Binary-target decision trees stored as flat node arrays.

A single builder serves classification (targets in {0, 1}, Gini impurity)
and regression on boosting residuals (squared error). For 0/1 targets the
Gini index is exactly twice the variance, so both use a variance criterion.
"""

from __future__ import annotations

import math

import numpy as np

LEAF = -1


class Tree:
    """Fitted tree. Samples with ``x[feature] <= threshold`` go left."""

    def __init__(self, feature, threshold, left, right, value, impurity, n_samples):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.impurity = np.asarray(impurity, dtype=np.float64)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.left[node] != LEAF
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.left[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def impurity_importance(self, n_features: int) -> np.ndarray:
        """Weighted impurity decrease summed per feature (unnormalized)."""
        imp = np.zeros(n_features)
        for i in range(self.node_count):
            if self.left[i] == LEAF:
                continue
            l, r = self.left[i], self.right[i]
            dec = (self.n_samples[i] * self.impurity[i]
                   - self.n_samples[l] * self.impurity[l]
                   - self.n_samples[r] * self.impurity[r])
            imp[self.feature[i]] += max(dec, 0.0)
        return imp

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "impurity": self.impurity.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"], d["impurity"], d["n_samples"])


def n_split_features(max_features, n_features: int) -> int:
    if max_features in (None, "all"):
        return n_features
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, int(math.log2(n_features))) if n_features > 1 else 1
    if isinstance(max_features, float):
        return max(1, int(max_features * n_features))
    return max(1, min(int(max_features), n_features))


def _best_split_exhaustive(Xn, yn, min_leaf):
    """Best (feature column, threshold, weighted child SSE) over midpoints, or None."""
    n = len(yn)
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    y = yn[:, 0]
    ys = y[order]
    cs = np.cumsum(ys, axis=0)[:-1]
    cs2 = np.cumsum(ys * ys, axis=0)[:-1]
    tot, tot2 = y.sum(), (y * y).sum()
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    sse = (cs2 - cs * cs / nl) + ((tot2 - cs2) - (tot - cs) ** 2 / nr)
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    # column-major scan: first feature wins ties, then first position
    flat = np.argmin(sse.T)
    f, pos = divmod(int(flat), n - 1)
    thr = 0.5 * (xs[pos, f] + xs[pos + 1, f])
    if thr >= xs[pos + 1, f]:  # midpoint rounded up onto the right value
        thr = xs[pos, f]
    return f, thr, float(sse[pos, f])


def _best_split_random(Xn, yn, min_leaf, rng):
    lo, hi = Xn.min(axis=0), Xn.max(axis=0)
    usable = hi > lo
    if not usable.any():
        return None
    u = rng.random(Xn.shape[1])
    thr = lo + u * (hi - lo)
    thr = np.where(thr >= hi, lo, thr)
    left = Xn <= thr
    nl = left.sum(axis=0).astype(np.float64)
    nr = len(yn) - nl
    y = yn[:, 0]
    sl = (left * y[:, None]).sum(axis=0)
    sl2 = (left * (y * y)[:, None]).sum(axis=0)
    tot, tot2 = y.sum(), (y * y).sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        sse = (sl2 - sl * sl / nl) + ((tot2 - sl2) - (tot - sl) ** 2 / nr)
    valid = usable & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    f = int(np.argmin(sse))
    return f, float(thr[f]), float(sse[f])


def build_tree(X, y, *, max_depth=None, min_samples_split=2, min_samples_leaf=1,
               max_features=None, splitter="best", rng=None, classification=True) -> Tree:
    """Grow a tree greedily by variance (equivalently Gini) reduction.

    ``splitter="random"`` draws one uniform threshold per candidate feature
    (extremely randomized trees). Features considered at each node are a
    random subset of size ``max_features`` when that is below the total.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot build a tree on zero samples")
    if rng is None:
        rng = np.random.default_rng(0)
    k = n_split_features(max_features, d)
    depth_cap = max_depth if max_depth is not None else 10 ** 9
    nodes = {"feature": [], "threshold": [], "left": [], "right": [], "value": [], "impurity": [], "n_samples": []}

    def new_node(idx):
        yy = y[idx]
        mean = yy.mean()
        var = float(((yy - mean) ** 2).mean())
        nodes["feature"].append(LEAF)
        nodes["threshold"].append(0.0)
        nodes["left"].append(LEAF)
        nodes["right"].append(LEAF)
        nodes["value"].append(float(mean))
        nodes["impurity"].append(2.0 * var if classification else var)
        nodes["n_samples"].append(len(idx))
        return len(nodes["feature"]) - 1, var

    root, root_var = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0, root_var)]
    while stack:
        node, idx, depth, var = stack.pop()
        if depth >= depth_cap or len(idx) < min_samples_split or len(idx) < 2 * min_samples_leaf or var <= 0.0:
            continue
        feats = np.arange(d) if k >= d else np.sort(rng.choice(d, size=k, replace=False))
        Xn = X[np.ix_(idx, feats)]
        yn = y[idx][:, None]
        if splitter == "random":
            found = _best_split_random(Xn, yn, min_samples_leaf, rng)
        else:
            found = _best_split_exhaustive(Xn, yn, min_samples_leaf)
        if found is None:
            continue
        col, thr, _ = found
        f = int(feats[col])
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        if len(li) == 0 or len(ri) == 0:
            continue
        nodes["feature"][node] = f
        nodes["threshold"][node] = thr
        lnode, lvar = new_node(li)
        rnode, rvar = new_node(ri)
        nodes["left"][node] = lnode
        nodes["right"][node] = rnode
        # right pushed first so the left subtree is numbered first
        stack.append((rnode, ri, depth + 1, rvar))
        stack.append((lnode, li, depth + 1, lvar))
    return Tree(**nodes)
