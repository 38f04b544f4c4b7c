"""Permutation feature importance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PfiRanking:
    features: list
    baseline_mse: float
    permuted_mse: list
    importance: list
    importance_std: list
    rank: list
    repeats: int
    seed: int

    def ordered(self) -> list:
        """Features sorted by decreasing importance (ties by index)."""
        order = sorted(range(len(self.features)), key=lambda j: (-self.importance[j], j))
        return [self.features[j] for j in order]

    def to_dict(self):
        rows = [{"feature": f, "permuted_mse": p, "importance": d, "importance_std": s, "rank": r}
                for f, p, d, s, r in zip(self.features, self.permuted_mse, self.importance,
                                         self.importance_std, self.rank)]
        rows.sort(key=lambda row: row["rank"])
        return {"baseline_mse": self.baseline_mse, "repeats": self.repeats, "seed": self.seed,
                "features": rows}


def permutation_importance(model, X, Y, groups=None, repeats: int = 10, seed: int = 0,
                           min_rows: int = 50) -> PfiRanking:
    """Shuffle one source feature at a time and record the MSE increase.

    ``groups`` maps source feature names to lists of encoded column
    indices (e.g. ``EncodedMatrix.groups()``); all columns of a group are
    permuted with the same row permutation, so one-hot blocks and cyclic
    (cos, sin) pairs stay consistent. ``model`` is anything with a
    ``predict`` method, or a callable.
    """
    predict = model.predict if hasattr(model, "predict") else model
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] < min_rows:
        raise ValueError(f"permutation importance needs >= {min_rows} rows")
    if getattr(model, "n_inputs", X.shape[1]) != X.shape[1]:
        raise ValueError("input width does not match the model")
    if groups is None:
        groups = {f"x{j + 1}": [j] for j in range(X.shape[1])}
    names = list(groups)
    base = float(np.mean((predict(X) - Y) ** 2))
    rng = np.random.default_rng(seed)
    perms = [[rng.permutation(X.shape[0]) for _ in range(repeats)] for _ in names]
    permuted, delta, delta_sd = [], [], []
    for name, plist in zip(names, perms):
        cols = list(groups[name])
        scores = []
        for perm in plist:
            Xp = X.copy()
            Xp[:, cols] = X[perm][:, cols]
            scores.append(float(np.mean((predict(Xp) - Y) ** 2)))
        scores = np.array(scores)
        permuted.append(float(scores.mean()))
        d = scores - base
        delta.append(float(d.mean()))
        delta_sd.append(float(d.std(ddof=1)) if repeats > 1 else 0.0)
    order = sorted(range(len(names)), key=lambda j: (-delta[j], j))
    rank = [0] * len(names)
    for r, j in enumerate(order, start=1):
        rank[j] = r
    return PfiRanking(names, base, permuted, delta, delta_sd, rank, repeats, seed)
