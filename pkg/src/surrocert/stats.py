"""Statistical kernel: distribution fits, goodness-of-fit and group tests,
correlation tests, gESD outlier detection and the percentile bootstrap.

Percentiles everywhere in the package use linear interpolation between
order statistics (Hyndman-Fan type 7, numpy's default ``linear`` method).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special
from scipy import stats as sps

logger = logging.getLogger(__name__)

FAMILIES = ("Normal", "Laplace", "Cauchy", "JohnsonSU")
_MIN_SAMPLES = {"Normal": 8, "Laplace": 8, "Cauchy": 8, "JohnsonSU": 20}
# quantile levels matched by the Johnson SU fit
_JSU_LEVELS = np.array([0.05, 0.25, 0.75, 0.95])


def percentile(x, q, axis=None):
    """Type-7 percentile (``q`` in percent)."""
    return np.percentile(x, q, axis=axis, method="linear")


@dataclass(frozen=True)
class DistributionFit:
    family: str
    params: dict
    method: str = "closed-form"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        for key in ("scale", "sigma", "delta", "lam"):
            if key in self.params and not self.params[key] > 0:
                raise ValueError(f"{self.family} parameter {key} must be > 0")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "Normal":
            return special.ndtr((x - p["mu"]) / p["sigma"])
        if self.family == "Laplace":
            z = (x - p["loc"]) / p["scale"]
            return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0)), 1 - 0.5 * np.exp(-np.maximum(z, 0)))
        if self.family == "Cauchy":
            return 0.5 + np.arctan((x - p["loc"]) / p["scale"]) / np.pi
        return special.ndtr(p["gamma"] + p["delta"] * np.arcsinh((x - p["xi"]) / p["lam"]))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "Normal":
            z = (x - p["mu"]) / p["sigma"]
            return np.exp(-0.5 * z * z) / (p["sigma"] * np.sqrt(2 * np.pi))
        if self.family == "Laplace":
            return np.exp(-np.abs(x - p["loc"]) / p["scale"]) / (2 * p["scale"])
        if self.family == "Cauchy":
            z = (x - p["loc"]) / p["scale"]
            return 1.0 / (np.pi * p["scale"] * (1 + z * z))
        u = (x - p["xi"]) / p["lam"]
        z = p["gamma"] + p["delta"] * np.arcsinh(u)
        return p["delta"] / (p["lam"] * np.sqrt(2 * np.pi) * np.sqrt(1 + u * u)) * np.exp(-0.5 * z * z)

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        p = self.params
        if self.family == "Normal":
            return p["mu"] + p["sigma"] * special.ndtri(q)
        if self.family == "Laplace":
            return p["loc"] - p["scale"] * np.sign(q - 0.5) * np.log1p(-2 * np.abs(q - 0.5))
        if self.family == "Cauchy":
            return p["loc"] + p["scale"] * np.tan(np.pi * (q - 0.5))
        return p["xi"] + p["lam"] * np.sinh((special.ndtri(q) - p["gamma"]) / p["delta"])

    def sample(self, size, rng: np.random.Generator):
        return self.ppf(rng.uniform(size=size))

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params), "method": self.method}


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    pvalue: float
    df: tuple = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.pvalue <= 1.0:
            raise ValueError(f"p-value {self.pvalue} outside [0, 1]")

    def to_dict(self):
        out = {"name": self.name, "statistic": _jsonable(self.statistic),
               "pvalue": float(self.pvalue), "df": list(self.df)}
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class BootstrapResult:
    statistic: str
    point_estimate: float
    ci95: tuple
    B: int
    boot_mean: float
    boot_std: float

    def to_dict(self):
        return {"statistic": self.statistic, "point_estimate": self.point_estimate,
                "ci95": list(self.ci95), "B": self.B, "boot_mean": self.boot_mean,
                "boot_std": self.boot_std}


def _jsonable(v):
    v = float(v)
    return v if np.isfinite(v) else str(v)


def _as_1d(samples):
    x = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    return x


# ---------------------------------------------------------------- fitting

def fit(samples, family: str) -> DistributionFit:
    """Fit one of the four residue families.

    Normal and Laplace use their closed-form maximum likelihood estimates,
    Cauchy uses median and half inter-quartile range, Johnson SU matches the
    5/25/75/95 % quantiles.
    """
    x = _as_1d(samples)
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if x.size < _MIN_SAMPLES[family]:
        raise ValueError(f"{family} fit needs >= {_MIN_SAMPLES[family]} samples, got {x.size}")
    if np.ptp(x) == 0:
        raise ValueError("degenerate sample: all values equal")
    if family == "Normal":
        return DistributionFit("Normal", {"mu": float(x.mean()), "sigma": float(x.std())})
    if family == "Laplace":
        loc = float(np.median(x))
        return DistributionFit("Laplace", {"loc": loc, "scale": float(np.mean(np.abs(x - loc)))})
    if family == "Cauchy":
        q1, med, q3 = percentile(x, [25, 50, 75])
        if q3 == q1:
            raise ValueError("degenerate sample: zero inter-quartile range")
        return DistributionFit("Cauchy", {"loc": float(med), "scale": float((q3 - q1) / 2)},
                               method="quantile")
    return _fit_johnson(x)


def _jsu_linear(zs, targets, gamma, delta):
    # for fixed (gamma, delta) the quantiles are affine in (xi, lam)
    s = np.sinh((zs - gamma) / delta)
    A = np.column_stack([np.ones_like(s), s])
    coef, *_ = np.linalg.lstsq(A, targets, rcond=None)
    return coef, A @ coef - targets


def _fit_johnson(x, start=None):
    targets = percentile(x, 100 * _JSU_LEVELS)
    spread = targets[3] - targets[0]
    if spread <= 0:
        raise ValueError("degenerate sample: zero quantile spread")
    t = (targets - np.median(x)) / spread
    zs = special.ndtri(_JSU_LEVELS)

    def resid(theta):
        gamma, log_delta = theta
        coef, r = _jsu_linear(zs, t, gamma, np.exp(log_delta))
        # lam must stay positive; push the search away from sign flips
        return np.append(r, 0.0 if coef[1] > 0 else 10.0 * abs(coef[1]) + 1.0)

    starts = [(g0, ld0) for g0 in (0.0, -0.5, 0.5) for ld0 in (0.0, 1.0, -0.7)]
    if start is not None:
        # bootstrap refits: replicates sit near the original fit
        starts = [start, (0.0, 0.0)]
    best = None
    for x0 in starts:
        x0 = np.clip(x0, [-19.9, -3.9], [19.9, 4.9])
        sol = optimize.least_squares(resid, x0, bounds=([-20, -4], [20, 5]),
                                     xtol=1e-12, ftol=1e-12, gtol=1e-12)
        if best is None or sol.cost < best.cost:
            best = sol
        if best.cost < 1e-20:
            break
    gamma, delta = best.x[0], float(np.exp(best.x[1]))
    (xi, lam), _ = _jsu_linear(zs, t, gamma, delta)
    if lam <= 0:
        raise ValueError("Johnson SU quantile matching failed (non-positive scale)")
    xi = xi * spread + np.median(x)
    lam = lam * spread
    return DistributionFit("JohnsonSU", {"gamma": float(gamma), "delta": delta,
                                         "xi": float(xi), "lam": float(lam)}, method="quantile")


def _fit_batch(X, family, start=None):
    """Row-wise fits of a (B, n) array; used by the AD parametric bootstrap."""
    if family == "Normal":
        return [DistributionFit("Normal", {"mu": m, "sigma": s})
                for m, s in zip(X.mean(axis=1), X.std(axis=1))]
    if family == "Laplace":
        loc = np.median(X, axis=1)
        scale = np.mean(np.abs(X - loc[:, None]), axis=1)
        return [DistributionFit("Laplace", {"loc": a, "scale": b}) for a, b in zip(loc, scale)]
    if family == "Cauchy":
        q1, med, q3 = percentile(X, [25, 50, 75], axis=1)
        return [DistributionFit("Cauchy", {"loc": a, "scale": (c - b) / 2}, method="quantile")
                for a, b, c in zip(med, q1, q3)]
    return [_fit_johnson(row, start) for row in X]


# ------------------------------------------------------ goodness of fit

def ks_statistic(samples, fit: DistributionFit) -> float:
    x = np.sort(_as_1d(samples))
    n = x.size
    F = fit.cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_test(samples, fit: DistributionFit, split_half: bool = False, seed: int = 0) -> TestResult:
    """One-sample Kolmogorov-Smirnov test against ``fit``.

    The p-value uses the asymptotic Kolmogorov distribution with Stephens'
    small-sample correction. When ``fit`` was estimated from the same
    samples the p-value is optimistic; ``split_half=True`` refits on a
    random half and tests the other half.
    """
    x = _as_1d(samples)
    if x.size < 8:
        raise ValueError("KS test needs >= 8 samples")
    if split_half:
        x, fit = _split_half(x, fit.family, seed)
    n = x.size
    D = ks_statistic(x, fit)
    sn = np.sqrt(n)
    p = float(np.clip(sps.kstwobign.sf((sn + 0.12 + 0.11 / sn) * D), 0.0, 1.0))
    return TestResult("KS", D, p, (n,), {"family": fit.family})


def _split_half(x, family, seed):
    rng = np.random.default_rng(seed)
    idx = rng.permutation(x.size)
    half = x.size // 2
    return x[idx[half:]], fit(x[idx[:half]], family)


def ad_statistic(samples, fit: DistributionFit) -> float:
    return float(_ad_stat_rows(np.sort(_as_1d(samples))[None, :], [fit])[0])


def _ad_stat_rows(X_sorted, fits):
    B, n = X_sorted.shape
    i = np.arange(1, n + 1)
    out = np.empty(B)
    eps = 1e-300
    for b in range(B):
        F = np.clip(fits[b].cdf(X_sorted[b]), eps, 1 - 1e-16)
        out[b] = -n - np.mean((2 * i - 1) * (np.log(F) + np.log1p(-F[::-1])))
    return out


def ad_test(samples, fit: DistributionFit, n_boot: int = 500, seed: int = 0,
            refit: bool = True) -> TestResult:
    """Anderson-Darling A^2 against ``fit`` with a parametric-bootstrap p-value.

    Replicates are drawn from ``fit``; with ``refit`` (the default, for fits
    estimated on ``samples``) each replicate is refitted before computing
    its statistic, so the p-value accounts for parameter estimation.
    """
    x = np.sort(_as_1d(samples))
    n = x.size
    if n < 8:
        raise ValueError("AD test needs >= 8 samples")
    A2 = ad_statistic(x, fit)
    rng = np.random.default_rng(seed)
    reps = np.sort(fit.sample((n_boot, n), rng), axis=1)
    if refit:
        start = None
        if fit.family == "JohnsonSU":
            start = (fit.params["gamma"], np.log(fit.params["delta"]))
        fits = _fit_batch(reps, fit.family, start)
    else:
        fits = [fit] * n_boot
    boot = _ad_stat_rows(reps, fits)
    p = (1 + np.count_nonzero(boot >= A2)) / (n_boot + 1)
    return TestResult("AD", A2, float(p), (n,), {"family": fit.family, "n_boot": n_boot})


# --------------------------------------------------------- group tests

def _check_groups(groups):
    gs = [_as_1d(g) for g in groups]
    if len(gs) < 2:
        raise ValueError("need at least 2 groups")
    for k, g in enumerate(gs):
        if g.size < 2:
            raise ValueError(f"group {k} has fewer than 2 samples")
    return gs


def anova(groups: Sequence) -> TestResult:
    """One-way ANOVA F test."""
    gs = _check_groups(groups)
    k = len(gs)
    N = sum(g.size for g in gs)
    means = np.array([g.mean() for g in gs])
    grand = np.concatenate(gs).mean()
    ssb = sum(g.size * (m - grand) ** 2 for g, m in zip(gs, means))
    ssw = sum(((g - m) ** 2).sum() for g, m in zip(gs, means))
    dfb, dfw = k - 1, N - k
    if np.ptp(means) == 0:
        F, p = 0.0, 1.0
    elif ssw == 0:
        F, p = np.inf, 0.0
    else:
        F = (ssb / dfb) / (ssw / dfw)
        p = float(special.fdtrc(dfb, dfw, F))
    return TestResult("ANOVA", float(F), float(np.clip(p, 0, 1)), (dfb, dfw))


def levene(groups: Sequence, center: str = "median") -> TestResult:
    """Levene's test on absolute deviations from each group's center
    (median by default, i.e. the Brown-Forsythe variant)."""
    gs = _check_groups(groups)
    fn = np.median if center == "median" else np.mean
    dev = [np.abs(g - fn(g)) for g in gs]
    res = anova(dev)
    return TestResult("Levene", res.statistic, res.pvalue, res.df, {"center": center})


def chi2_two_sample(counts_a, counts_b, min_expected: float = 5.0) -> TestResult:
    """Two-sample chi-squared homogeneity test on category counts.

    Categories whose expected count falls below ``min_expected`` in either
    sample are pooled into one extra bucket.
    """
    a = np.asarray(counts_a, dtype=float)
    b = np.asarray(counts_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("count vectors differ in length")
    na, nb = a.sum(), b.sum()
    if na == 0 or nb == 0:
        raise ValueError("empty sample")
    tot = a + b
    keep = tot > 0
    a, b, tot = a[keep], b[keep], tot[keep]
    small = np.minimum(tot * na, tot * nb) / (na + nb) < min_expected
    if small.any():
        a = np.append(a[~small], a[small].sum())
        b = np.append(b[~small], b[small].sum())
        tot = a + b
        if tot[-1] == 0:
            a, b, tot = a[:-1], b[:-1], tot[:-1]
    if a.size < 2:
        raise ValueError("all mass in one category after pooling")
    N = na + nb
    ea, eb = tot * na / N, tot * nb / N
    stat = float(np.sum((a - ea) ** 2 / ea) + np.sum((b - eb) ** 2 / eb))
    df = a.size - 1
    p = float(np.clip(special.chdtrc(df, stat), 0, 1))
    return TestResult("chi2", stat, p, (df,), {"pooled": int(small.sum())})


# -------------------------------------------------------- correlations

def _check_pair(x, y):
    x, y = _as_1d(x), _as_1d(y)
    if x.size != y.size:
        raise ValueError("x and y differ in length")
    if x.size < 3:
        raise ValueError("need n >= 3")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("constant input")
    return x, y


def _corr_test(name, x, y):
    xc, yc = x - x.mean(), y - y.mean()
    r = float(np.clip(xc @ yc / np.sqrt((xc @ xc) * (yc @ yc)), -1.0, 1.0))
    n = x.size
    if abs(r) >= 1.0:
        p = 0.0
    else:
        t = r * np.sqrt((n - 2) / (1 - r * r))
        p = float(2 * special.stdtr(n - 2, -abs(t)))
    return TestResult(name, r, float(np.clip(p, 0, 1)), (n - 2,))


def pearson(x, y) -> TestResult:
    return _corr_test("Pearson", *_check_pair(x, y))


def spearman(x, y) -> TestResult:
    x, y = _check_pair(x, y)
    return _corr_test("Spearman", sps.rankdata(x), sps.rankdata(y))


# ------------------------------------------------------------ outliers

def gesd_critical(n: int, i: int, alpha: float) -> float:
    """Rosner's critical value lambda_i for the i-th removal (1-based)."""
    p = 1 - alpha / (2 * (n - i + 1))
    t = special.stdtrit(n - i - 1, p)
    return (n - i) * t / np.sqrt((n - i - 1 + t * t) * (n - i + 1))


def gesd(samples, max_outliers: int = 10, alpha: float = 0.05) -> list:
    """Generalized ESD test; returns sorted indices of the detected outliers."""
    x = _as_1d(samples)
    n = x.size
    if max_outliers < 1 or max_outliers >= n - 2:
        raise ValueError("max_outliers must satisfy 1 <= k < n - 2")
    if np.ptp(x) == 0:
        raise ValueError("zero deviation: all samples equal")
    idx = np.arange(n)
    vals = x.copy()
    removed = []
    n_out = 0
    for i in range(1, max_outliers + 1):
        sd = vals.std(ddof=1)
        if sd == 0:
            break
        dev = np.abs(vals - vals.mean())
        j = int(np.argmax(dev))
        R = dev[j] / sd
        removed.append(int(idx[j]))
        if R > gesd_critical(n, i, alpha):
            n_out = i
        vals = np.delete(vals, j)
        idx = np.delete(idx, j)
    return sorted(removed[:n_out])


def johnson_normalize(samples, fit: DistributionFit) -> np.ndarray:
    """Map Johnson SU distributed samples to standard normal scores."""
    if fit.family != "JohnsonSU":
        raise ValueError("johnson_normalize needs a JohnsonSU fit")
    p = fit.params
    x = np.asarray(samples, dtype=float)
    return p["gamma"] + p["delta"] * np.arcsinh((x - p["xi"]) / p["lam"])


# ----------------------------------------------------------- bootstrap

_STATS: dict[str, Callable] = {
    "mean": lambda X: X.mean(axis=1),
    "median": lambda X: np.median(X, axis=1),
    "std": lambda X: X.std(axis=1, ddof=1),
    "var": lambda X: X.var(axis=1, ddof=1),
}


def _statistic(tag: str) -> Callable:
    if tag in _STATS:
        return _STATS[tag]
    if tag.startswith("p"):
        try:
            q = float(tag[1:])
        except ValueError:
            q = None
        if q is not None and 0 <= q <= 100:
            return lambda X: percentile(X, q, axis=1)
    raise ValueError(f"unknown statistic {tag!r}")


def bootstrap(samples, statistic: str = "mean", B: int = 2000, seed: int = 0,
              chunk_elems: int = 4_000_000) -> BootstrapResult:
    """Nonparametric percentile bootstrap.

    ``statistic`` is one of ``mean``, ``median``, ``std``, ``var`` or
    ``p<q>`` for the q-th percentile (e.g. ``p2.5``).
    """
    fn = _statistic(statistic)
    x = _as_1d(samples)
    n = x.size
    if n < 2:
        raise ValueError("bootstrap needs n >= 2")
    if B < 200:
        raise ValueError("bootstrap needs B >= 200")
    rng = np.random.default_rng(seed)
    reps = np.empty(B)
    step = max(1, chunk_elems // n)
    for start in range(0, B, step):
        stop = min(B, start + step)
        reps[start:stop] = fn(x[rng.integers(0, n, size=(stop - start, n))])
    lo, hi = percentile(reps, [2.5, 97.5])
    return BootstrapResult(statistic, float(fn(x[None, :])[0]), (float(lo), float(hi)), B,
                           float(reps.mean()), float(reps.std(ddof=1)))
