"""Prediction-interval uncertainty models: global (GUM), input- and
output-conditioned (iMUM, oMUM), their intersection (FUM), and coverage
validation on held-out data."""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import assign_bins, merge_small_bins, quantile_edges

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionInterval:
    """Offsets around a prediction: [yhat - eps_low, yhat + eps_high]."""
    eps_low: float
    eps_high: float
    level: float = 0.95
    conservative: bool = False

    def __post_init__(self):
        if self.eps_low + self.eps_high < 0:
            raise ValueError("empty interval")

    def bounds(self, yhat):
        yhat = np.asarray(yhat, dtype=float)
        return yhat - self.eps_low, yhat + self.eps_high

    def to_dict(self):
        return {"eps_low": self.eps_low, "eps_high": self.eps_high, "level": self.level,
                "conservative": self.conservative}


def three_way_split(N, fractions=(0.6, 0.2, 0.2), seed=None, min_size: int = 50):
    """Disjoint seeded train/calibration/validation index sets."""
    N = N if isinstance(N, (int, np.integer)) else N.N
    f = np.asarray(fractions, dtype=float)
    if f.size != 3 or np.any(f <= 0) or abs(f.sum() - 1) > 1e-9:
        raise ValueError("fractions must be three positive numbers summing to 1")
    n_tr = int(round(f[0] * N))
    n_cal = int(round(f[1] * N))
    n_val = N - n_tr - n_cal
    if min(n_tr, n_cal, n_val) < min_size:
        raise ValueError(f"split sizes {n_tr}/{n_cal}/{n_val} fall below {min_size} rows")
    perm = np.random.default_rng(seed).permutation(N)
    return np.sort(perm[:n_tr]), np.sort(perm[n_tr:n_tr + n_cal]), np.sort(perm[n_tr + n_cal:])


def _tail_levels(level):
    a = round((1 - level) / 2 * 100, 10)
    return a, round(100 - a, 10)


def build_gum(residues, level: float = 0.95, B: int = 1000, seed: int = 0,
              conservative: bool = False, min_count: int = 100) -> PredictionInterval:
    """Global interval from the bootstrapped tail percentiles of the
    calibration residues.

    The default uses the bootstrap means of the lower and upper percentiles;
    ``conservative`` uses the outer CI95 bounds instead. Offsets are clipped
    at 0 so the interval always contains the prediction.
    """
    e = np.asarray(residues, dtype=float).ravel()
    if e.size < min_count:
        raise ValueError(f"GUM needs >= {min_count} calibration residues, got {e.size}")
    lo_q, hi_q = _tail_levels(level)
    lo = stats.bootstrap(e, f"p{lo_q}", B=B, seed=seed)
    hi = stats.bootstrap(e, f"p{hi_q}", B=B, seed=seed + 1)
    if conservative:
        a, b = lo.ci95[0], hi.ci95[1]
    else:
        a, b = lo.boot_mean, hi.boot_mean
    return PredictionInterval(max(0.0, -a), max(0.0, b), level, conservative)


@dataclass
class ConditionalIntervalModel:
    variable: str
    edges: np.ndarray
    intervals: list
    counts: list
    fallback: bool = False

    def offsets(self, values):
        """Per-query (eps_low, eps_high); out-of-range values use the end bins."""
        idx = assign_bins(np.asarray(values, dtype=float), self.edges)
        lo = np.array([iv.eps_low for iv in self.intervals])[idx]
        hi = np.array([iv.eps_high for iv in self.intervals])[idx]
        return lo, hi

    def to_dict(self):
        return {"variable": self.variable, "edges": np.asarray(self.edges).tolist(),
                "intervals": [iv.to_dict() for iv in self.intervals], "counts": self.counts,
                "fallback": self.fallback}


def build_mum(residues, values, variable: str = "yhat", bins: int = 10, min_count: int = 50,
              level: float = 0.95, B: int = 1000, seed: int = 0,
              conservative: bool = False) -> ConditionalIntervalModel:
    """Bin the calibration residues by a conditioning variable (an input
    for iMUM, the prediction for oMUM) and build one GUM per bin."""
    e = np.asarray(residues, dtype=float).ravel()
    v = np.asarray(values, dtype=float).ravel()
    if e.size != v.size:
        raise ValueError("residues and conditioning values differ in length")
    # no more equal-count bins than the minimum count allows, then merge leftovers
    bins = max(1, min(bins, v.size // max(min_count, 1)))
    edges = merge_small_bins(v, quantile_edges(v, bins), min_count)
    if len(edges) < 2:
        edges = np.array([v.min(), v.max()])
    idx = assign_bins(v, edges)
    intervals, counts = [], []
    for b in range(len(edges) - 1):
        sel = e[idx == b]
        counts.append(int(sel.size))
        intervals.append(build_gum(sel, level, B, seed + 2 * b, conservative,
                                   min_count=min(min_count, sel.size)))
    fallback = len(intervals) == 1
    if fallback:
        warnings.warn(f"{variable}: a single usable bin, model reduces to the GUM", stacklevel=2)
    return ConditionalIntervalModel(variable, np.asarray(edges), intervals, counts, fallback)


@dataclass
class FumResult:
    eps_low: np.ndarray
    eps_high: np.ndarray
    empty: np.ndarray

    def bounds(self, yhat):
        yhat = np.asarray(yhat, dtype=float)
        return yhat - self.eps_low, yhat + self.eps_high


def fum_interval(gum: PredictionInterval, omum: ConditionalIntervalModel | None, imums: dict,
                 yhat, X: dict | None = None) -> FumResult:
    """Intersect GUM, oMUM and every iMUM interval per prediction.

    ``imums`` maps a variable name to its model and ``X`` maps the same
    names to the query values. An empty intersection falls back to the
    GUM and is flagged in ``empty``.
    """
    yhat = np.atleast_1d(np.asarray(yhat, dtype=float))
    lo = np.full(yhat.shape, -gum.eps_low)
    hi = np.full(yhat.shape, gum.eps_high)
    comps = []
    if omum is not None:
        comps.append(omum.offsets(yhat))
    for name, model in (imums or {}).items():
        comps.append(model.offsets(np.atleast_1d(np.asarray(X[name], dtype=float))))
    for a, b in comps:
        lo = np.maximum(lo, -a)
        hi = np.minimum(hi, b)
    empty = lo > hi
    lo = np.where(empty, -gum.eps_low, lo)
    hi = np.where(empty, gum.eps_high, hi)
    return FumResult(-lo, hi, empty)


@dataclass
class CoverageReport:
    coverage: float
    ci95: tuple
    passed: bool
    n: int
    per_bin: list | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"coverage": self.coverage, "ci95": list(self.ci95), "pass": self.passed, "n": self.n}
        if self.per_bin is not None:
            d["per_bin"] = self.per_bin
        d.update(self.extra)
        return d


def coverage_report(lower, upper, y, B: int = 1000, seed: int = 0, target: float = 0.95,
                    bin_values=None, edges=None) -> CoverageReport:
    """Share of rows with lower <= y <= upper, its bootstrap CI95, and the
    pass rule (coverage >= target, or target inside the CI)."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empty validation set")
    hit = ((y >= np.asarray(lower)) & (y <= np.asarray(upper))).astype(float)
    cov = float(hit.mean())
    if hit.size >= 2 and np.ptp(hit) > 0:
        b = stats.bootstrap(hit, "mean", B=B, seed=seed)
        ci = b.ci95
    else:
        ci = (cov, cov)
    passed = bool(cov >= target or ci[0] <= target <= ci[1])
    per_bin = None
    if bin_values is not None and edges is not None:
        idx = assign_bins(np.asarray(bin_values, dtype=float), np.asarray(edges))
        per_bin = [{"bin": int(k), "n": int((idx == k).sum()),
                    "coverage": float(hit[idx == k].mean()) if (idx == k).any() else None}
                   for k in range(len(edges) - 1)]
    return CoverageReport(cov, (float(ci[0]), float(ci[1])), passed, int(y.size), per_bin)


@dataclass
class UncertaintyModel:
    """GUM, oMUM and iMUMs for one output, built on one calibration set."""
    output: str
    gum: PredictionInterval
    omum: ConditionalIntervalModel
    imums: dict
    calibration_hash: str
    omum_mode: str = "yhat"

    def interval(self, yhat, X: dict | None = None, component: str = "fum"):
        yhat = np.asarray(yhat, dtype=float)
        if component == "gum":
            return self.gum.bounds(yhat)
        if component == "omum":
            a, b = self.omum.offsets(yhat)
            return yhat - a, yhat + b
        if component.startswith("imum:"):
            name = component[5:]
            a, b = self.imums[name].offsets(X[name])
            return yhat - a, yhat + b
        if component == "fum":
            return fum_interval(self.gum, self.omum, self.imums, yhat, X).bounds(yhat)
        if component == "fum_reduced":
            return fum_interval(self.gum, self.omum, {}, yhat).bounds(yhat)
        raise ValueError(f"unknown component {component!r}")

    def to_dict(self):
        return {"output": self.output, "gum": self.gum.to_dict(), "omum": self.omum.to_dict(),
                "imums": {k: v.to_dict() for k, v in self.imums.items()},
                "calibration_sha256": self.calibration_hash, "omum_mode": self.omum_mode}


def data_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()


def build_uncertainty_model(residues, yhat, X: dict | None = None, output: str = "y",
                            bins: int = 10, min_count: int = 50, level: float = 0.95,
                            B: int = 1000, seed: int = 0, conservative: bool = False,
                            omum_values=None, omum_mode: str = "yhat") -> UncertaintyModel:
    """Build every component model for one output from calibration data.

    The oMUM conditions on the prediction by default; pass ``omum_values``
    (e.g. the true y) with ``omum_mode="y"`` for the diagnostic variant.
    """
    e = np.asarray(residues, dtype=float).ravel()
    gum = build_gum(e, level, B, seed, conservative)
    cond = yhat if omum_values is None else omum_values
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        omum = build_mum(e, cond, "yhat" if omum_values is None else omum_mode, bins, min_count,
                         level, B, seed + 1000, conservative)
        imums = {}
        for k, (name, vals) in enumerate((X or {}).items()):
            if np.ptp(np.asarray(vals, dtype=float)) == 0:
                continue
            imums[name] = build_mum(e, vals, name, bins, min_count, level, B,
                                    seed + 2000 + 100 * k, conservative)
    return UncertaintyModel(output, gum, omum, imums, data_hash(e, yhat), omum_mode)


def validate_coverage(model, yhat, y, X: dict | None = None, component: str = "gum",
                      B: int = 1000, seed: int = 0) -> CoverageReport:
    """Coverage of one component (gum, omum, imum:<name>, fum, fum_reduced)
    of an UncertaintyModel, or of a bare PredictionInterval, on
    validation data that played no part in training or calibration."""
    yhat = np.asarray(yhat, dtype=float).ravel()
    if isinstance(model, PredictionInterval):
        lo, hi = model.bounds(yhat)
        return coverage_report(lo, hi, y, B, seed)
    lo, hi = model.interval(yhat, X, component)
    rep = coverage_report(lo, hi, y, B, seed,
                          bin_values=yhat if component == "omum" else None,
                          edges=model.omum.edges if component == "omum" else None)
    if component == "fum":
        rep.extra["empty_intersections"] = int(
            fum_interval(model.gum, model.omum, model.imums, yhat, X).empty.sum())
    return rep
