"""Feature pruning and [0, 1] scaling learned on the training table."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from zfnad.metrics import MetricTable

CORRELATION_LIMIT = 0.95


@dataclass
class PreprocState:
    kept_features: list
    minimum: list
    maximum: list
    dropped_missing: list = field(default_factory=list)
    dropped_constant: list = field(default_factory=list)
    dropped_correlated: list = field(default_factory=list)  # [dropped, kept partner]

    def transform_matrix(self, X: np.ndarray) -> np.ndarray:
        """Scale columns already ordered as ``kept_features``; clamps to [0, 1]."""
        lo = np.asarray(self.minimum)
        hi = np.asarray(self.maximum)
        return np.clip((np.asarray(X, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)

    def transform(self, table: MetricTable) -> np.ndarray:
        missing = [n for n in self.kept_features if n not in table.schema]
        if missing:
            raise ValueError(f"table lacks {len(missing)} model features, e.g. {missing[:3]}")
        X = table.matrix(self.kept_features)
        if np.isnan(X).any():
            bad = [self.kept_features[j] for j in np.nonzero(np.isnan(X).any(axis=0))[0]]
            raise ValueError(f"missing values in model features {bad[:3]}")
        return self.transform_matrix(X)

    def to_dict(self) -> dict:
        return {
            "kept_features": list(self.kept_features),
            "min": [float(v) for v in self.minimum],
            "max": [float(v) for v in self.maximum],
            "dropped_missing": list(self.dropped_missing),
            "dropped_constant": list(self.dropped_constant),
            "dropped_correlated": [list(p) for p in self.dropped_correlated],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocState":
        return cls(d["kept_features"], d["min"], d["max"], d["dropped_missing"],
                   d["dropped_constant"], [tuple(p) for p in d["dropped_correlated"]])


def _correlation(X: np.ndarray) -> np.ndarray:
    Xc = X - X.mean(axis=0)
    norm = np.sqrt((Xc * Xc).sum(axis=0))
    Z = Xc / norm
    return np.clip(Z.T @ Z, -1.0, 1.0)


def preprocess_fit(table: MetricTable) -> tuple[PreprocState, np.ndarray]:
    """Drop missing, constant and highly correlated features, then min-max scale.

    Of two features with |Pearson r| > 0.95 the one earlier in the schema survives.
    """
    if len(table) < 2:
        raise ValueError("preprocessing needs at least 2 records")
    if len(set(table.labels.tolist())) < 2:
        raise ValueError("preprocessing needs both labels present")
    names = list(table.schema)
    X = table.matrix(names)
    missing_cols = np.isnan(X).any(axis=0)
    dropped_missing = [n for n, m in zip(names, missing_cols) if m]
    keep = [j for j in range(len(names)) if not missing_cols[j]]
    const = [j for j in keep if np.all(X[:, j] == X[0, j])]
    dropped_constant = [names[j] for j in const]
    keep = [j for j in keep if j not in set(const)]
    dropped_correlated = []
    if keep:
        r = np.abs(_correlation(X[:, keep]))
        alive = np.ones(len(keep), dtype=bool)
        for a in range(len(keep)):
            if not alive[a]:
                continue
            partners = np.nonzero(alive & (r[a] > CORRELATION_LIMIT))[0]
            for b in partners:
                if b > a:
                    alive[b] = False
                    dropped_correlated.append((names[keep[b]], names[keep[a]]))
        keep = [j for j, ok in zip(keep, alive) if ok]
    if not keep:
        raise ValueError("no features survive preprocessing")
    kept = [names[j] for j in keep]
    lo = X[:, keep].min(axis=0)
    hi = X[:, keep].max(axis=0)
    state = PreprocState(kept, lo.tolist(), hi.tolist(), dropped_missing, dropped_constant, dropped_correlated)
    return state, state.transform_matrix(X[:, keep])
