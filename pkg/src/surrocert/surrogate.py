"""Feed-forward regression surrogate with MSE/MAE/relative losses, L1/L2
weight penalties and an output-correlation regularizer, trained by
mini-batch gradient descent (plain or adaptive moments)."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

REL_GUARD = 1e-9


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainingConfig:
    loss: str = "mse"
    reg: str = "none"
    lam: float = 0.0
    gamma: float = 0.0
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 50
    optimizer: str = "adam"
    hidden: tuple = (64, 64)
    activation: str = "relu"
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))
        if self.loss not in ("mse", "mae", "relative"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.reg not in ("none", "l1", "l2"):
            raise ValueError(f"unknown regularizer {self.reg!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.activation not in ("relu", "tanh", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.lr >= 0:
            raise ValueError("learning rate must be >= 0")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass(eq=False)
class SurrogateModel:
    widths: tuple
    weights: list
    biases: list
    activation: str = "relu"
    epochs_trained: int = 0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match widths")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.widths[k], self.widths[k + 1]) or b.shape != (self.widths[k + 1],):
                raise ValueError(f"layer {k} has shape {W.shape}, expected "
                                 f"{(self.widths[k], self.widths[k + 1])}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameters")

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def set_params(self, theta) -> "SurrogateModel":
        theta = np.asarray(theta, dtype=float)
        Ws, bs, k = [], [], 0
        for a, b in zip(self.widths[:-1], self.widths[1:]):
            Ws.append(theta[k:k + a * b].reshape(a, b))
            k += a * b
            bs.append(theta[k:k + b].copy())
            k += b
        return SurrogateModel(self.widths, Ws, bs, self.activation, self.epochs_trained)

    def copy(self) -> "SurrogateModel":
        return SurrogateModel(self.widths, [W.copy() for W in self.weights],
                              [b.copy() for b in self.biases], self.activation, self.epochs_trained)

    def to_dict(self, config: TrainingConfig | None = None) -> dict:
        d = {"widths": list(self.widths), "activation": self.activation,
             "epochs_trained": self.epochs_trained, "params": self.get_params().tolist()}
        if config is not None:
            d["config"] = asdict(config)
            d["seed"] = config.seed
        return d

    @classmethod
    def from_dict(cls, d) -> "SurrogateModel":
        shell = init_model(d["widths"], seed=0, activation=d.get("activation", "relu"))
        model = shell.set_params(np.asarray(d["params"], dtype=float))
        model.epochs_trained = int(d.get("epochs_trained", 0))
        return model

    def save(self, path, config: TrainingConfig | None = None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(config), fh)

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def init_model(widths, seed=0, activation: str = "relu") -> SurrogateModel:
    """Fan-in scaled uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    Ws, bs = [], []
    for a, b in zip(widths[:-1], widths[1:]):
        gain = np.sqrt(6.0 / a) if activation == "relu" else np.sqrt(3.0 / a)
        Ws.append(rng.uniform(-gain, gain, size=(a, b)))
        bs.append(np.zeros(b))
    return SurrogateModel(tuple(widths), Ws, bs, activation)


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _forward(model, X):
    acts, pre = [X], []
    a = X
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        pre.append(z)
        a = z if k == last else _act(z, model.activation)
        acts.append(a)
    return acts, pre


def predict(model: SurrogateModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_inputs:
        raise ValueError(f"input width {X.shape[1]} does not match model width {model.n_inputs}")
    return _forward(model, X)[0][-1]


# ------------------------------------------------------------------ losses

def error_term(yhat, y, kind: str = "mse", guard: bool = False):
    """Mean error over all batch elements. With ``guard`` the relative
    error skips elements with |y| < 1e-9 and returns the skip count."""
    yhat, y = np.asarray(yhat, float), np.asarray(y, float)
    r = yhat - y
    if kind == "mse":
        return float(np.mean(r * r)), 0
    if kind == "mae":
        return float(np.mean(np.abs(r))), 0
    mask = np.abs(y) >= REL_GUARD
    skipped = int(mask.size - mask.sum())
    if skipped and not guard:
        raise ValueError("relative loss undefined for y = 0")
    if not mask.any():
        return 0.0, skipped
    return float(np.sum(np.abs(r[mask] / y[mask])) / mask.sum()), skipped


def _error_grad(yhat, y, kind):
    r = yhat - y
    if kind == "mse":
        return 2.0 * r / r.size
    if kind == "mae":
        return np.sign(r) / r.size
    mask = np.abs(y) >= REL_GUARD
    cnt = max(int(mask.sum()), 1)
    safe = np.where(mask, y, 1.0)
    return np.where(mask, np.sign(r) / np.abs(safe), 0.0) / cnt


def regularizer(model: SurrogateModel, kind: str) -> float:
    if kind == "l1":
        return float(sum(np.abs(W).sum() for W in model.weights))
    if kind == "l2":
        return float(sum((W * W).sum() for W in model.weights))
    return 0.0


def _corr(M):
    C = M - M.mean(axis=0)
    norms = np.sqrt((C * C).sum(axis=0))
    U = C / norms
    return U.T @ U, U, norms


def correlation_penalty(Y, Yhat) -> float:
    """Frobenius distance between the Pearson correlation matrices of the
    true and predicted outputs over a batch; 0 when undefined."""
    return _corr_penalty_and_grad(np.asarray(Y, float), np.asarray(Yhat, float))[0]


def _corr_penalty_and_grad(Y, Yhat):
    zero = np.zeros_like(Yhat)
    if Y.shape[0] < 3 or Y.shape[1] < 2:
        return 0.0, zero
    if np.any(np.ptp(Y, axis=0) == 0) or np.any(np.ptp(Yhat, axis=0) == 0):
        logger.debug("correlation penalty skipped: zero-variance output in batch")
        return 0.0, zero
    CY, _, _ = _corr(Y)
    CH, U, norms = _corr(Yhat)
    D = CY - CH
    P = float(np.sqrt((D * D).sum()))
    if P == 0.0:
        return 0.0, zero
    # dP/dCH = -D/P; CH_ij = u_i . u_j
    G = -D / P
    gU = 2.0 * U @ G
    gC = (gU - U * (U * gU).sum(axis=0)) / norms
    return P, gC - gC.mean(axis=0)


def loss(yhat, y, model: SurrogateModel, cfg: TrainingConfig, guard: bool = False) -> float:
    """Error term + lam * weight penalty + gamma * correlation penalty."""
    E, _ = error_term(yhat, y, cfg.loss, guard=guard)
    total = E + cfg.lam * regularizer(model, cfg.reg)
    if cfg.gamma > 0:
        total += cfg.gamma * correlation_penalty(y, yhat)
    return float(total)


def loss_and_grad(model: SurrogateModel, X, Y, cfg: TrainingConfig):
    """Full loss and its gradient w.r.t. (weights, biases) by backprop."""
    acts, pre = _forward(model, X)
    yhat = acts[-1]
    E, _ = error_term(yhat, Y, cfg.loss, guard=True)
    delta = _error_grad(yhat, Y, cfg.loss)
    total = E
    if cfg.gamma > 0:
        P, gP = _corr_penalty_and_grad(Y, yhat)
        total += cfg.gamma * P
        delta = delta + cfg.gamma * gP
    gW, gb = [None] * len(model.weights), [None] * len(model.weights)
    for k in range(len(model.weights) - 1, -1, -1):
        gW[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k].T) * _act_grad(pre[k - 1], acts[k], model.activation)
    if cfg.lam > 0 and cfg.reg != "none":
        total += cfg.lam * regularizer(model, cfg.reg)
        for k, W in enumerate(model.weights):
            gW[k] = gW[k] + cfg.lam * (np.sign(W) if cfg.reg == "l1" else 2.0 * W)
    return float(total), gW, gb


# ---------------------------------------------------------------- training

@dataclass
class TrainingTrace:
    epochs: list = field(default_factory=list)
    train_error: list = field(default_factory=list)
    test_error: list = field(default_factory=list)
    metric: str = "mse"
    skipped_relative: int = 0

    def to_dict(self):
        return {"metric": self.metric, "epochs": self.epochs, "train_error": self.train_error,
                "test_error": self.test_error, "skipped_relative": self.skipped_relative}


def train(X, Y, cfg: TrainingConfig, X_test=None, Y_test=None, model: SurrogateModel | None = None):
    """Mini-batch training; returns (model, trace).

    Every epoch visits a fresh random permutation of the training rows in
    batches of ``cfg.batch_size``. The trace records the configured error
    metric on the full training (and optional test) set after each epoch.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if model is None:
        model = init_model((X.shape[1], *cfg.hidden, Y.shape[1]), seed=cfg.seed,
                           activation=cfg.activation)
    else:
        model = model.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    mW = [np.zeros_like(W) for W in model.weights]
    vW = [np.zeros_like(W) for W in model.weights]
    mb = [np.zeros_like(b) for b in model.biases]
    vb = [np.zeros_like(b) for b in model.biases]
    b1, b2 = cfg.adam_betas
    step = 0
    trace = TrainingTrace(metric=cfg.loss)
    N = X.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(N)
        for start in range(0, N, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            L, gW, gb = loss_and_grad(model, X[idx], Y[idx], cfg)
            if not np.isfinite(L):
                raise TrainingDivergence(epoch)
            step += 1
            for k in range(len(model.weights)):
                if cfg.optimizer == "sgd":
                    model.weights[k] -= cfg.lr * gW[k]
                    model.biases[k] -= cfg.lr * gb[k]
                    continue
                mW[k] = b1 * mW[k] + (1 - b1) * gW[k]
                vW[k] = b2 * vW[k] + (1 - b2) * gW[k] ** 2
                mb[k] = b1 * mb[k] + (1 - b1) * gb[k]
                vb[k] = b2 * vb[k] + (1 - b2) * gb[k] ** 2
                c1, c2 = 1 - b1 ** step, 1 - b2 ** step
                model.weights[k] -= cfg.lr * (mW[k] / c1) / (np.sqrt(vW[k] / c2) + cfg.adam_eps)
                model.biases[k] -= cfg.lr * (mb[k] / c1) / (np.sqrt(vb[k] / c2) + cfg.adam_eps)
        tr, skipped = error_term(_forward(model, X)[0][-1], Y, cfg.loss, guard=True)
        if not np.isfinite(tr):
            raise TrainingDivergence(epoch)
        trace.epochs.append(epoch)
        trace.train_error.append(tr)
        trace.skipped_relative = skipped
        if X_test is not None:
            te, _ = error_term(predict(model, X_test), np.asarray(Y_test, float).reshape(-1, Y.shape[1]),
                               cfg.loss, guard=True)
            trace.test_error.append(te)
        model.epochs_trained += 1
    return model, trace


# ------------------------------------------------------- prediction tables

@dataclass(frozen=True, eq=False)
class PredictionTable:
    row_ids: np.ndarray
    y: np.ndarray
    yhat: np.ndarray
    output_names: tuple = ()

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y, dtype=float).T).T
        yhat = np.atleast_2d(np.asarray(self.yhat, dtype=float).T).T
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "yhat", yhat)
        object.__setattr__(self, "row_ids", np.asarray(self.row_ids))
        if y.shape != yhat.shape or len(self.row_ids) != y.shape[0]:
            raise ValueError("prediction table columns are misaligned")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
            raise ValueError("prediction table contains non-finite values")
        if not self.output_names:
            object.__setattr__(self, "output_names", tuple(f"y{j + 1}" for j in range(y.shape[1])))

    @property
    def m(self) -> int:
        return self.y.shape[1]

    def to_frame(self) -> pd.DataFrame:
        d = {"row_id": self.row_ids}
        for j, name in enumerate(self.output_names):
            d[f"y_{name}"] = self.y[:, j]
        for j, name in enumerate(self.output_names):
            d[f"yhat_{name}"] = self.yhat[:, j]
        return pd.DataFrame(d)


def import_predictions(path) -> PredictionTable:
    """Read a CSV with columns ``row_id``, ``y_<name>``... and matching
    ``yhat_<name>``... ."""
    df = pd.read_csv(path)
    if "row_id" not in df.columns:
        raise ValueError("prediction file lacks a row_id column")
    ys = [c[2:] for c in df.columns if c.startswith("y_")]
    yh = [c[5:] for c in df.columns if c.startswith("yhat_")]
    if not ys or sorted(ys) != sorted(yh):
        raise ValueError(f"misaligned prediction columns: y={ys} yhat={yh}")
    if df["row_id"].duplicated().any():
        raise ValueError("duplicate row ids in prediction file")
    try:
        y = df[[f"y_{n}" for n in ys]].to_numpy(float)
        yhat = df[[f"yhat_{n}" for n in ys]].to_numpy(float)
    except ValueError as exc:
        raise ValueError(f"non-numeric prediction cells: {exc}") from None
    return PredictionTable(df["row_id"].to_numpy(), y, yhat, tuple(ys))
