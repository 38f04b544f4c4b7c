"""Point-wise metrics, residues, and the marginal, input-conditioned and
output-conditioned analyses of the residue distribution."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .surrogate import PredictionTable

logger = logging.getLogger(__name__)

KEY_PERCENTILES = (2.5, 5.0, 95.0, 97.5)


@dataclass(frozen=True, eq=False)
class ResidueSet:
    """Signed residues e = y - yhat, one column per output; positive values
    mean the prediction is conservative (it over-predicts risk)."""
    e: np.ndarray
    row_ids: np.ndarray
    output_names: tuple

    def column(self, j) -> np.ndarray:
        if isinstance(j, str):
            j = self.output_names.index(j)
        return self.e[:, j]


def residues(pt: PredictionTable) -> ResidueSet:
    return ResidueSet(pt.y - pt.yhat, pt.row_ids, pt.output_names)


def pointwise_metrics(pt: PredictionTable) -> list[dict]:
    """MSE, MAE, R^2 and residue moments per output. R^2 is None when y
    is constant."""
    if pt.y.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    out = []
    for j, name in enumerate(pt.output_names):
        y, e = pt.y[:, j], pt.y[:, j] - pt.yhat[:, j]
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = None if ss_tot == 0 else 1.0 - float(np.sum(e * e)) / ss_tot
        out.append({"output": name, "mse": float(np.mean(e * e)), "mae": float(np.mean(np.abs(e))),
                    "r2": r2, "mean_residue": float(e.mean()), "std_residue": float(e.std(ddof=1))})
    return out


# ------------------------------------------------------------- marginal

def marginal_analysis(e, families=stats.FAMILIES, B: int = 1000, seed: int = 0,
                      ad_boot: int = 500) -> dict:
    """Fit each family, test it with KS and AD, and bootstrap the key
    percentiles of the residue distribution."""
    e = np.asarray(e, dtype=float).ravel()
    if e.size < 30:
        raise ValueError("marginal analysis needs >= 30 residues")
    fits = {}
    for k, fam in enumerate(families):
        try:
            f = stats.fit(e, fam)
        except ValueError as exc:
            fits[fam] = {"error": str(exc)}
            continue
        ks = stats.ks_test(e, f)
        ad = stats.ad_test(e, f, n_boot=ad_boot, seed=seed + k)
        fits[fam] = {"fit": f.to_dict(), "ks": ks.to_dict(), "ad": ad.to_dict(),
                     "_fit": f}
    pct = {}
    for k, q in enumerate(KEY_PERCENTILES):
        b = stats.bootstrap(e, f"p{q}", B=B, seed=seed + 100 + k)
        pct[str(q)] = {"value": b.point_estimate, "ci95": list(b.ci95), "boot_mean": b.boot_mean}
    return {"n": int(e.size), "mean": float(e.mean()), "std": float(e.std(ddof=1)),
            "fits": fits, "percentiles": pct}


def strip_private(obj):
    """Drop keys starting with '_' (live objects kept for internal use)."""
    if isinstance(obj, dict):
        return {k: strip_private(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, list):
        return [strip_private(v) for v in obj]
    return obj


def detect_outliers(e, max_outliers: int = 10, alpha: float = 0.05) -> dict:
    """Johnson SU normalization followed by gESD.

    Falls back to gESD on the raw residues (with a warning in the trace)
    when fewer than 20 residues are available or the fit fails.
    """
    e = np.asarray(e, dtype=float).ravel()
    k = min(max_outliers, e.size - 3)
    trace = {"method": "johnsonsu+gesd", "alpha": alpha, "max_outliers": k, "warning": None}
    z = e
    if e.size < 20:
        trace.update(method="gesd", warning="fewer than 20 residues; gESD on raw residues "
                                            "assumes normality")
    else:
        try:
            f = stats.fit(e, "JohnsonSU")
            z = stats.johnson_normalize(e, f)
            trace["fit"] = f.to_dict()
        except ValueError as exc:
            trace.update(method="gesd", warning=f"Johnson SU fit failed ({exc}); gESD on raw "
                                                 "residues assumes normality")
    if trace["warning"]:
        warnings.warn(trace["warning"], stacklevel=2)
    trace["indices"] = stats.gesd(z, k, alpha) if k >= 1 else []
    return trace


# ------------------------------------------------------- conditioning

@dataclass
class ConditionedReport:
    variable: str
    mode: str
    groups: list
    tests: dict
    edges: list | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"variable": self.variable, "mode": self.mode, "groups": self.groups,
                "tests": {k: v.to_dict() for k, v in self.tests.items()},
                "edges": self.edges, "notes": self.notes}


def _summary(label, x):
    q1, med, q3 = stats.percentile(x, [25, 50, 75])
    return {"label": label, "count": int(x.size), "mean": float(x.mean()),
            "std": float(x.std(ddof=1)) if x.size > 1 else 0.0, "min": float(x.min()),
            "q1": float(q1), "median": float(med), "q3": float(q3), "max": float(x.max())}


def _group_tests(groups):
    tests = {}
    try:
        tests["anova"] = stats.anova(groups)
        tests["levene"] = stats.levene(groups)
    except ValueError as exc:
        logger.info("group tests skipped: %s", exc)
    return tests


def condition_on_categorical(e, labels, variable: str = "", min_count: int = 2) -> ConditionedReport:
    """Per-level summaries plus ANOVA and Levene across levels. Levels with
    fewer than ``min_count`` residues are pooled into 'other'."""
    e = np.asarray(e, dtype=float).ravel()
    labels = np.asarray(labels, dtype=object)
    levels = sorted(set(labels.tolist()), key=repr)
    if len(levels) < 2:
        raise ValueError(f"{variable or 'column'} has a single level")
    groups, data, pooled = [], [], []
    for lv in levels:
        x = e[labels == lv]
        if x.size < min_count:
            pooled.append(x)
            continue
        groups.append(_summary(_plain(lv), x))
        data.append(x)
    notes = []
    if pooled:
        x = np.concatenate(pooled)
        groups.append(_summary("other", x))
        data.append(x)
        notes.append(f"{len(pooled)} level(s) with < {min_count} residues pooled into 'other'")
    tests = _group_tests([d for d in data if d.size >= 2]) if len(data) >= 2 else {}
    return ConditionedReport(variable, "categorical", groups, tests, None, notes)


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def quantile_edges(x, bins: int) -> np.ndarray:
    edges = stats.percentile(x, np.linspace(0, 100, bins + 1))
    return np.unique(edges)


def uniform_edges(lo: float, hi: float, bins: int) -> np.ndarray:
    return np.linspace(lo, hi, bins + 1)


def assign_bins(x, edges) -> np.ndarray:
    """Bin index per value; interior edges are right-closed on the left bin,
    values outside the edges are clamped to the end bins."""
    idx = np.searchsorted(edges[1:-1], x, side="left")
    return idx


def merge_small_bins(x, edges, min_count: int) -> np.ndarray:
    """Greedily merge each under-populated bin into its smaller neighbour."""
    edges = np.asarray(edges, dtype=float)
    while len(edges) > 2:
        counts = np.bincount(assign_bins(x, edges), minlength=len(edges) - 1)
        small = np.flatnonzero(counts < min_count)
        if small.size == 0:
            break
        b = int(small[np.argmin(counts[small])])
        if b == 0:
            drop = 1
        elif b == len(counts) - 1:
            drop = b
        else:
            drop = b if counts[b - 1] <= counts[b + 1] else b + 1
        edges = np.delete(edges, drop)
    return edges


def condition_on_numeric(e, x, variable: str = "", bins: int = 5, min_count: int = 2) -> ConditionedReport:
    """Pearson and Spearman trend tests on (x, e) plus equal-count binning
    with ANOVA and Levene across bins."""
    e = np.asarray(e, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if np.ptp(x) == 0:
        raise ValueError(f"{variable or 'column'} is constant")
    tests = {"pearson": stats.pearson(x, e), "spearman": stats.spearman(x, e)}
    edges = merge_small_bins(x, quantile_edges(x, bins), min_count)
    idx = assign_bins(x, edges)
    groups, data = [], []
    for b in range(len(edges) - 1):
        sel = e[idx == b]
        if sel.size == 0:
            continue
        groups.append(_summary(f"[{edges[b]:.6g}, {edges[b + 1]:.6g}]", sel))
        data.append(sel)
    if len(data) >= 2:
        tests.update(_group_tests(data))
    return ConditionedReport(variable, "numeric-binned", groups, tests, edges.tolist())


@dataclass
class BinFitTable:
    conditioning: str
    edges: list
    bins: list
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"conditioning": self.conditioning, "edges": self.edges,
                "bins": strip_private(self.bins), "notes": self.notes}

    @property
    def stds(self) -> np.ndarray:
        return np.array([b["std"] for b in self.bins])


def condition_on_output(e, values, bins: int = 10, families=stats.FAMILIES, min_count: int = 30,
                        binning: str = "quantile", edges=None, conditioning: str = "yhat") -> BinFitTable:
    """Bin residues by an output value (y or yhat) and fit each family per
    bin with a one-sample KS p-value; per-bin std exposes
    heteroscedasticity."""
    e = np.asarray(e, dtype=float).ravel()
    v = np.asarray(values, dtype=float).ravel()
    if edges is None:
        if bins < 1:
            raise ValueError("need at least 1 bin")
        edges = quantile_edges(v, bins) if binning == "quantile" else uniform_edges(v.min(), v.max(), bins)
    edges = merge_small_bins(v, np.asarray(edges, dtype=float), min_count)
    notes = []
    if bins >= 2 and len(edges) == 2:
        raise ValueError("all data collapse into one bin")
    idx = assign_bins(v, edges)
    rows = []
    for b in range(len(edges) - 1):
        sel = e[idx == b]
        row = {"lo": float(edges[b]), "hi": float(edges[b + 1]), "count": int(sel.size),
               "mean": float(sel.mean()) if sel.size else None,
               "std": float(sel.std(ddof=1)) if sel.size > 1 else 0.0, "fits": {}}
        for fam in families:
            try:
                f = stats.fit(sel, fam)
                row["fits"][fam] = {"fit": f.to_dict(), "ks_pvalue": stats.ks_test(sel, f).pvalue}
            except ValueError as exc:
                row["fits"][fam] = {"error": str(exc)}
        rows.append(row)
    return BinFitTable(conditioning, edges.tolist(), rows, notes)


def pair_table(E, a_labels, b_labels, output_names, metric: str = "max_abs", y=None) -> list:
    """2-D table over two categorical inputs; each cell names the output
    with the largest error (max |e|, mean |e| or max relative |e|/y)."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    a_labels, b_labels = np.asarray(a_labels, dtype=object), np.asarray(b_labels, dtype=object)
    if metric == "max_abs":
        score = lambda sel: np.abs(E[sel]).max(axis=0)
    elif metric == "mean_abs":
        score = lambda sel: np.abs(E[sel]).mean(axis=0)
    elif metric == "relative":
        if y is None:
            raise ValueError("relative metric needs y")
        Yv = np.where(np.abs(y) < 1e-9, np.nan, y)
        score = lambda sel: np.nanmax(np.abs(E[sel] / Yv[sel]), axis=0)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    cells = []
    for a in sorted(set(a_labels.tolist()), key=repr):
        for b in sorted(set(b_labels.tolist()), key=repr):
            sel = (a_labels == a) & (b_labels == b)
            if not sel.any():
                continue
            s = score(sel)
            j = int(np.nanargmax(s))
            cells.append({"a": _plain(a), "b": _plain(b), "count": int(sel.sum()),
                          "worst_output": output_names[j], "score": float(s[j])})
    return cells
