"""Holdout splitting and the voxel tessellation and proximity method (VTPM)
for auditing how well a test set covers the training set."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from . import stats
from .dataset import Dataset, apply_normalizer, encode, fit_normalizer, lhs_sample

logger = logging.getLogger(__name__)

RESIDUAL = ("<residual>",)
MAX_VOXEL_POINTS = 2000


class VtpmClass(str, Enum):
    VALID = "Valid"
    ISOLATED = "Isolated"
    PHACKING = "PHacking"
    RESIDUAL = "ResidualVoxel"


@dataclass(frozen=True)
class SplitResult:
    train_indices: np.ndarray
    test_indices: np.ndarray
    fraction: float

    def __post_init__(self):
        tr, te = np.asarray(self.train_indices), np.asarray(self.test_indices)
        if np.intersect1d(tr, te).size:
            raise ValueError("train and test overlap")
        if tr.size <= te.size:
            raise ValueError("train set must be larger than test set")

    def to_dict(self):
        return {"fraction": self.fraction, "train_indices": np.asarray(self.train_indices).tolist(),
                "test_indices": np.asarray(self.test_indices).tolist()}


def holdout_split(ds, p: float = 0.8, seed=None, strategy: str = "random",
                  encoded=None) -> SplitResult:
    """Single train/test partition with round(p*N) training rows.

    ``strategy="lhs"`` picks each test row as the not-yet-used row nearest
    to a Latin hypercube design point in the min-max scaled encoded space.
    """
    N = ds if isinstance(ds, (int, np.integer)) else ds.N
    if not 0.5 < p < 1:
        raise ValueError("train fraction p must satisfy 0.5 < p < 1")
    if N < 5:
        raise ValueError("holdout split needs N >= 5")
    n_train = int(round(p * N))
    n_test = N - n_train
    if n_test < 1 or n_train <= n_test:
        raise ValueError(f"p={p} gives an invalid split of N={N}")
    rng = np.random.default_rng(seed)
    if strategy == "random":
        perm = rng.permutation(N)
        test = np.sort(perm[:n_test])
    elif strategy == "lhs":
        if encoded is None:
            encoded = encode(ds)
        X = encoded.values if hasattr(encoded, "values") else np.asarray(encoded)
        X = apply_normalizer(fit_normalizer(X, "minmax"), X)
        design = lhs_sample(n_test, X.shape[1], seed=rng.integers(2**32))
        tree = cKDTree(X)
        used = np.zeros(N, dtype=bool)
        test = []
        for pt in design:
            k = min(N, 16)
            while True:
                _, cand = tree.query(pt, k=k)
                cand = np.atleast_1d(cand)
                free = [c for c in cand if not used[c]]
                if free:
                    break
                if k == N:
                    raise RuntimeError("no free rows left")
                k = min(N, 4 * k)
            used[free[0]] = True
            test.append(free[0])
        test = np.sort(np.asarray(test))
    else:
        raise ValueError(f"unknown split strategy {strategy!r}")
    train = np.setdiff1d(np.arange(N), test)
    return SplitResult(train, test, p)


# ------------------------------------------------------------------ voxels

@dataclass(frozen=True, eq=False)
class VoxelTable:
    columns: tuple
    voxels: dict
    residual: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def counts(self, keys) -> np.ndarray:
        return np.array([len(self.voxels.get(k, ())) for k in keys])

    @property
    def size(self) -> int:
        return sum(len(v) for v in self.voxels.values()) + len(self.residual)


def _key_tuples(frame, columns):
    cols = [frame[c].tolist() for c in columns]
    return list(zip(*cols))


def voxelize(rows, categorical_columns, reference: VoxelTable | None = None) -> VoxelTable:
    """Group row positions by their tuple of categorical values.

    With a ``reference`` table (the training voxels) tuples unseen there
    go to the residual voxel.
    """
    columns = tuple(categorical_columns)
    if not columns:
        raise ValueError("voxelization needs at least one categorical column")
    frame = rows.frame if isinstance(rows, Dataset) else rows
    groups: dict = {}
    residual = []
    for i, key in enumerate(_key_tuples(frame, columns)):
        if reference is not None and key not in reference.voxels:
            residual.append(i)
        else:
            groups.setdefault(key, []).append(i)
    voxels = {k: np.asarray(v, dtype=int) for k, v in groups.items()}
    return VoxelTable(columns, voxels, np.asarray(residual, dtype=int))


def voxel_chi2(train_table: VoxelTable, test_table: VoxelTable, min_expected: float = 5.0):
    """Two-sample chi-squared test of voxel occupancy (residual voxel
    excluded). Returns the TestResult; sparse voxels are pooled."""
    keys = sorted(set(train_table.voxels) | set(test_table.voxels), key=repr)
    return stats.chi2_two_sample(train_table.counts(keys), test_table.counts(keys), min_expected)


# ------------------------------------------------------------ proximity

@dataclass(frozen=True)
class VoxelDistanceStats:
    p2_5: float
    p97_5: float
    pair_count: int

    def __post_init__(self):
        if not 0 <= self.p2_5 <= self.p97_5:
            raise ValueError("need 0 <= P2.5 <= P97.5")


def voxel_distance_stats(points, mode: str = "nearest", max_points: int = MAX_VOXEL_POINTS,
                         rng=None) -> VoxelDistanceStats:
    """Percentiles of the within-voxel training distance distribution.

    ``nearest`` (default) uses each training point's distance to its
    nearest neighbour in the voxel; ``all_pairs`` uses every pairwise
    distance. Voxels above ``max_points`` are subsampled; in ``nearest``
    mode the sampled points still search the whole voxel.
    """
    P = np.asarray(points, dtype=float)
    if P.shape[0] < 2:
        raise ValueError("need at least 2 training points in the voxel")
    sub = P
    if P.shape[0] > max_points:
        rng = np.random.default_rng(rng)
        sub = P[np.sort(rng.choice(P.shape[0], max_points, replace=False))]
    if mode == "nearest":
        d, _ = cKDTree(P).query(sub, k=2)
        dist = d[:, 1]
    elif mode == "all_pairs":
        P = sub
        diff = P[:, None, :] - P[None, :, :]
        iu = np.triu_indices(P.shape[0], 1)
        dist = np.sqrt((diff ** 2).sum(-1))[iu]
    else:
        raise ValueError(f"unknown distance mode {mode!r}")
    lo, hi = stats.percentile(dist, [2.5, 97.5])
    return VoxelDistanceStats(float(lo), float(hi), int(dist.size))


def classify_distance(d_z, vstats: VoxelDistanceStats):
    """Valid strictly between the percentiles; ties go to the invalid side."""
    d = np.asarray(d_z, dtype=float)
    out = np.where(d <= vstats.p2_5, VtpmClass.PHACKING.value,
                   np.where(d >= vstats.p97_5, VtpmClass.ISOLATED.value, VtpmClass.VALID.value))
    return out if out.ndim else str(out)


def vtpm_classify(z, voxel_train_points, vstats: VoxelDistanceStats) -> str:
    P = np.asarray(voxel_train_points, dtype=float)
    if P.shape[0] == 0:
        raise ValueError("empty voxel")
    d_z = float(np.sqrt(((P - np.asarray(z, dtype=float)) ** 2).sum(axis=1)).min())
    return classify_distance(d_z, vstats)


@dataclass
class VtpmReport:
    classes: np.ndarray
    residual_fraction: float
    valid_fraction: float
    class_fractions: dict
    chi2_stat: float | None
    chi2_pvalue: float | None
    adequate: bool
    flagged_voxels: list
    occupancy: list
    notes: list = field(default_factory=list)

    def to_dict(self, include_points: bool = False):
        d = {"adequate": self.adequate, "valid_fraction": self.valid_fraction,
             "residual_fraction": self.residual_fraction, "class_fractions": self.class_fractions,
             "chi2_stat": self.chi2_stat, "chi2_pvalue": self.chi2_pvalue,
             "flagged_voxels": [list(map(_plain, k)) for k in self.flagged_voxels],
             "n_test": int(len(self.classes)), "notes": list(self.notes)}
        if include_points:
            d["classes"] = list(self.classes)
        return d


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def vtpm_report(split: SplitResult, ds: Dataset, seed=0, mode: str = "nearest",
                max_voxel_points: int = MAX_VOXEL_POINTS, valid_threshold: float = 0.95,
                residual_threshold: float = 0.05) -> VtpmReport:
    """Audit a split: residual voxel share, chi-squared occupancy test and
    per-test-point proximity classification."""
    cat = [c.name for c in ds.categorical]
    num = [c.name for c in ds.numeric_features]
    train_rows, test_rows = np.asarray(split.train_indices), np.asarray(split.test_indices)
    frame = ds.frame
    tr_frame, te_frame = frame.iloc[train_rows], frame.iloc[test_rows]
    tr_table = voxelize(tr_frame, cat)
    te_table = voxelize(te_frame, cat, reference=tr_table)

    Xtr = tr_frame[num].to_numpy(float)
    Xte = te_frame[num].to_numpy(float)
    if num:
        norm = fit_normalizer(Xtr, "minmax")
        Xtr, Xte = apply_normalizer(norm, Xtr), apply_normalizer(norm, Xte)

    classes = np.empty(len(test_rows), dtype=object)
    classes[te_table.residual] = VtpmClass.RESIDUAL.value
    notes = []
    if not num:
        notes.append("no numeric features: proximity distances are all zero")
    for key in sorted(te_table.voxels, key=repr):
        te_idx = te_table.voxels[key]
        tr_idx = tr_table.voxels[key]
        # per-voxel stream keeps results independent of iteration order
        vrng = np.random.default_rng([seed, _key_hash(key)])
        if len(tr_idx) < 2:
            classes[te_idx] = VtpmClass.ISOLATED.value
            continue
        if not num:
            classes[te_idx] = VtpmClass.PHACKING.value
            continue
        P = Xtr[tr_idx]
        vs = voxel_distance_stats(P, mode, max_voxel_points, vrng)
        d, _ = cKDTree(P).query(Xte[te_idx], k=1)
        classes[te_idx] = classify_distance(d, vs)

    n_te = len(test_rows)
    fractions = {c.value: float(np.mean(classes == c.value)) for c in VtpmClass}
    residual_fraction = fractions[VtpmClass.RESIDUAL.value]
    valid_fraction = fractions[VtpmClass.VALID.value]

    chi2_stat = chi2_p = None
    flagged = []
    keys = sorted(tr_table.voxels, key=repr)
    tr_counts = tr_table.counts(keys)
    te_counts = te_table.counts(keys)
    try:
        res = voxel_chi2(tr_table, te_table)
        chi2_stat, chi2_p = res.statistic, res.pvalue
    except ValueError as exc:
        notes.append(f"chi2 not computed: {exc}")
    if chi2_p is not None and chi2_p < 0.05:
        tr_share = tr_counts / max(tr_counts.sum(), 1)
        te_share = te_counts / max(te_counts.sum(), 1)
        flagged = [k for k, a, b in zip(keys, tr_share, te_share) if b > 0 and a < 0.5 * b]
    occupancy = [{"voxel": list(map(_plain, k)), "train": int(a), "test": int(b)}
                 for k, a, b in zip(keys, tr_counts, te_counts)]
    occupancy.append({"voxel": list(RESIDUAL), "train": 0, "test": int(len(te_table.residual))})
    adequate = bool(valid_fraction >= valid_threshold and residual_fraction <= residual_threshold)
    if residual_fraction > residual_threshold:
        notes.append("more than 5% of test points fall in the residual voxel")
    logger.debug("VTPM: %d test points, valid %.4f", n_te, valid_fraction)
    return VtpmReport(classes, residual_fraction, valid_fraction, fractions, chi2_stat, chi2_p,
                      adequate, flagged, occupancy, notes)


def _key_hash(key) -> int:
    return zlib.crc32(repr(key).encode())
