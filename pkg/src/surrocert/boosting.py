"""Learning curves and bias/variance regime diagnosis, L1-based feature
selection, and input applicability domains (hypercube, convex hull)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .dataset import PcaModel, fit_pca, project
from .surrogate import TrainingConfig, error_term, predict, train

logger = logging.getLogger(__name__)

HIGH_VARIANCE = "HighVariancePlateau"
HIGH_BIAS = "HighBiasPlateau"
NEEDS_DATA = "NeedsMoreData"
CONVERGED = "Converged"


@dataclass
class LearningCurve:
    sizes: list
    train_error: list
    test_error: list
    metric: str
    seeds: list
    per_seed: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("learning curve sizes must be strictly increasing")

    def to_dict(self):
        return {"sizes": list(self.sizes), "train_error": self.train_error,
                "test_error": self.test_error, "metric": self.metric, "seeds": list(self.seeds)}


def learning_curves(X_train, Y_train, X_test, Y_test, cfg: TrainingConfig, sizes, seeds=(0,),
                    metric: str = "mse") -> LearningCurve:
    """Train fresh models on seeded subsamples of growing size, evaluated on
    a fixed test set; errors averaged over ``seeds``."""
    X_train, Y_train = np.asarray(X_train, float), np.asarray(Y_train, float)
    sizes = [int(s) for s in sizes]
    if len(sizes) < 3:
        raise ValueError("need at least 3 training sizes")
    if max(sizes) > X_train.shape[0]:
        raise ValueError(f"size {max(sizes)} exceeds the training set ({X_train.shape[0]})")
    tr = np.zeros((len(seeds), len(sizes)))
    te = np.zeros_like(tr)
    for a, seed in enumerate(seeds):
        rng = np.random.default_rng([seed, 7])
        for b, s in enumerate(sizes):
            idx = rng.choice(X_train.shape[0], s, replace=False)
            c = TrainingConfig(**{**cfg.__dict__, "seed": int(seed) * 1000 + b})
            model, _ = train(X_train[idx], Y_train[idx], c)
            tr[a, b] = error_term(predict(model, X_train[idx]), Y_train[idx], metric, guard=True)[0]
            te[a, b] = error_term(predict(model, X_test), Y_test, metric, guard=True)[0]
    return LearningCurve(sizes, tr.mean(0).tolist(), te.mean(0).tolist(), metric, list(seeds),
                         {"train": tr.tolist(), "test": te.tolist()})


@dataclass
class RegimeDiagnosis:
    regime: str
    train_plateau: bool
    test_plateau: bool
    gap: float
    final_test_error: float
    thresholds: dict

    def to_dict(self):
        return dict(self.__dict__)


def _tail_change(series):
    s = np.asarray(series, dtype=float)
    i0 = min(len(s) - 2, (2 * (len(s) - 1)) // 3)
    ref = max(abs(s[i0]), 1e-300)
    return (s[i0] - s[-1]) / ref


def diagnose_regime(curve, plateau_tol: float = 0.05, gap_tol: float = 0.2,
                    low_error_tol: float | None = None) -> RegimeDiagnosis:
    """Classify a learning curve into one of the four bias/variance regimes.

    A series has plateaued when its relative decrease over the final third
    of the sizes is below ``plateau_tol``. A still-improving test error
    means more data helps; otherwise a relative train/test gap above
    ``gap_tol`` flags high variance, and a final test error above
    ``low_error_tol`` flags high bias.
    """
    if low_error_tol is None:
        raise ValueError("low_error_tol must be supplied for the problem at hand")
    train_e = np.asarray(curve.train_error if hasattr(curve, "train_error") else curve[0], float)
    test_e = np.asarray(curve.test_error if hasattr(curve, "test_error") else curve[1], float)
    if len(test_e) < 3 or len(train_e) != len(test_e):
        raise ValueError("need at least 3 curve points")
    # plateau means little further improvement; a rising error has stopped improving too
    train_flat = _tail_change(train_e) < plateau_tol
    test_flat = _tail_change(test_e) < plateau_tol
    final = float(test_e[-1])
    gap = float((test_e[-1] - train_e[-1]) / max(abs(test_e[-1]), 1e-300))
    if not test_flat:
        regime = NEEDS_DATA
    elif gap > gap_tol:
        regime = HIGH_VARIANCE
    elif final > low_error_tol:
        regime = HIGH_BIAS
    else:
        regime = CONVERGED
    return RegimeDiagnosis(regime, bool(train_flat), bool(test_flat), gap, final,
                           {"plateau_tol": plateau_tol, "gap_tol": gap_tol,
                            "low_error_tol": low_error_tol})


def l1_feature_selection(model, threshold: float, groups=None) -> list:
    """Source features whose incident first-layer weights all have
    magnitude below ``threshold``; grouped columns are dropped jointly."""
    if model is None or getattr(model, "epochs_trained", 0) < 1:
        raise ValueError("model has not been trained")
    W = np.abs(model.weights[0])
    if groups is None:
        groups = {f"x{j + 1}": [j] for j in range(W.shape[0])}
    return [name for name, cols in groups.items() if W[list(cols)].max() < threshold]


# ---------------------------------------------------------- applicability

@dataclass(frozen=True, eq=False)
class ApplicabilityDomain:
    kind: str
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    points: np.ndarray | None = None
    pca: PcaModel | None = None

    def __post_init__(self):
        if self.kind == "hypercube":
            if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
                raise ValueError("hypercube bounds must be finite")
        elif self.kind == "convex-hull":
            if self.points is None or len(self.points) == 0:
                raise ValueError("hull needs training points")
        else:
            raise ValueError(f"unknown applicability kind {self.kind!r}")


class ErrorClassifier(Protocol):
    """Extension point for an error-based applicability layer: returns True
    for rows predicted to exceed the error tolerance."""

    def flags(self, X) -> np.ndarray: ...


def fit_hypercube(X_train) -> ApplicabilityDomain:
    X = np.atleast_2d(np.asarray(X_train, dtype=float))
    return ApplicabilityDomain("hypercube", lower=X.min(axis=0), upper=X.max(axis=0))


def hypercube_contains(domain: ApplicabilityDomain, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != domain.lower.size:
        raise ValueError("dimension mismatch")
    inside = np.all((X >= domain.lower) & (X <= domain.upper), axis=1)
    return bool(inside[0]) if single else inside


def fit_hull(X_train, pca_threshold: float | None = None, max_dim: int = 20) -> ApplicabilityDomain:
    """Store training points for LP-based hull membership. Above ``max_dim``
    dimensions (or when ``pca_threshold`` is given) points are first
    projected onto the PCA space keeping that share of variance (0.99
    by default)."""
    X = np.atleast_2d(np.asarray(X_train, dtype=float))
    pca = None
    if pca_threshold is not None or X.shape[1] > max_dim:
        pca = fit_pca(X, pca_threshold or 0.99)
        X = project(pca, X)
    return ApplicabilityDomain("convex-hull", points=X, pca=pca)


class LPIterationLimit(RuntimeError):
    pass


def phase_one_feasible(A, b, tol: float = 1e-9, max_iter: int | None = None):
    """Decide whether {w >= 0 : A w = b} is non-empty with a Phase-I
    simplex (revised form, Bland's rule). Returns (feasible, w)."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # artificial basis: B = I, x_B = b
    basis = np.arange(n, n + m)
    Binv = np.eye(m)
    xB = b.copy()
    scale = max(1.0, float(np.abs(A).max()), float(b.max()) if b.size else 1.0)
    eps = 1e-12 * scale
    if max_iter is None:
        max_iter = 50 * (n + m)
    for it in range(max_iter):
        if it and it % 100 == 0:
            # refactor to limit drift in the product-form inverse
            Bmat = np.where(basis[None, :] < n, A[:, np.minimum(basis, n - 1)],
                            np.eye(m)[:, np.maximum(basis - n, 0)])
            Binv = np.linalg.inv(Bmat)
            xB = Binv @ b
        y = (basis >= n).astype(float) @ Binv
        reduced = -(y @ A)
        # Bland: lowest-index improving column (artificials never re-enter)
        cand = np.flatnonzero(reduced < -eps)
        if cand.size == 0:
            break
        q = int(cand[0])
        d = Binv @ A[:, q]
        pos = d > eps
        if not pos.any():
            break  # unbounded direction cannot occur in phase I; stop defensively
        ratios = np.full(m, np.inf)
        ratios[pos] = xB[pos] / d[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + eps * 1e-3)
        r = int(ties[np.argmin(basis[ties])])
        piv = d[r]
        Binv[r] /= piv
        xB[r] /= piv
        others = np.arange(m) != r
        Binv[others] -= np.outer(d[others], Binv[r])
        xB[others] -= d[others] * xB[r]
        basis[r] = q
    else:
        raise LPIterationLimit(f"phase-I simplex exceeded {max_iter} iterations")
    xB = np.maximum(xB, 0.0)
    w = np.zeros(n)
    struct = basis < n
    w[basis[struct]] = xB[struct]
    infeas = float(xB[~struct].sum())
    return infeas <= tol * scale, w


def hull_contains(domain: ApplicabilityDomain, X, tolerance: float = 1e-8):
    """Convex-hull membership without building the hull: a query x is
    inside iff some convex combination of the training points equals x
    (within ``tolerance``)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if domain.pca is not None:
        X = project(domain.pca, X)
    P = domain.points
    if X.shape[1] != P.shape[1]:
        raise ValueError("dimension mismatch")
    if P.shape[0] < P.shape[1] + 1:
        raise ValueError("hull membership needs at least d+1 training points")
    lo, hi = P.min(axis=0), P.max(axis=0)
    A = np.vstack([P.T, np.ones(P.shape[0])])
    out = np.zeros(X.shape[0], dtype=bool)
    for i, x in enumerate(X):
        if np.any(x < lo - tolerance) or np.any(x > hi + tolerance):
            continue
        ok, w = phase_one_feasible(A, np.append(x, 1.0), tol=tolerance)
        if ok:
            ok = float(np.abs(P.T @ w - x).max()) <= tolerance * max(1.0, np.abs(P).max())
        out[i] = ok
    return bool(out[0]) if single else out
