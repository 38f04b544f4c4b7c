"""Dataset ingestion, encoding, normalization, PCA, Latin hypercube
sampling and uncertainty-driven augmentation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
ORDINAL = "categorical-ordinal"
CYCLIC = "categorical-cyclic"
NOMINAL = "categorical-nominal"
KINDS = (NUMERIC, ORDINAL, CYCLIC, NOMINAL)
_KIND_ALIASES = {"ordinal": ORDINAL, "cyclic": CYCLIC, "nominal": NOMINAL}

MAX_NOMINAL_LEVELS = 32


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = NUMERIC
    role: str = "feature"
    cycle_length: int | None = None
    ci: tuple[str, str] | None = None
    levels: tuple | None = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ("feature", "output"):
            raise SchemaError(f"column {self.name!r}: role must be 'feature' or 'output'")
        if self.role == "output" and kind != NUMERIC:
            raise SchemaError(f"output column {self.name!r} must be numeric")
        if kind == CYCLIC and (self.cycle_length is None or self.cycle_length < 2):
            raise SchemaError(f"cyclic column {self.name!r} needs cycle_length >= 2")
        if self.ci is not None:
            if kind != NUMERIC or len(self.ci) != 2:
                raise SchemaError(f"column {self.name!r}: ci needs a numeric column and two bounds")
            object.__setattr__(self, "ci", tuple(self.ci))
        if self.levels is not None:
            object.__setattr__(self, "levels", tuple(self.levels))

    @property
    def categorical(self) -> bool:
        return self.kind != NUMERIC


def parse_schema(spec: dict) -> list[ColumnSpec]:
    """Build column specs from a mapping with a ``columns`` list.

    Each entry accepts ``name``, ``kind`` (numeric, categorical-ordinal,
    categorical-cyclic, categorical-nominal), ``role`` (feature/output),
    ``cycle_length``, ``ci: [lower_col, upper_col]`` and ``levels``.
    """
    cols = spec.get("columns") if isinstance(spec, dict) else None
    if not cols:
        raise SchemaError("schema has no 'columns' list")
    out = []
    for entry in cols:
        unknown = set(entry) - {"name", "kind", "role", "cycle_length", "ci", "levels"}
        if unknown:
            raise SchemaError(f"column {entry.get('name')!r}: unknown keys {sorted(unknown)}")
        out.append(ColumnSpec(**entry))
    names = [c.name for c in out]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")
    return out


def load_schema(path) -> list[ColumnSpec]:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(yaml.safe_load(fh))


def dump_schema(schema, path):
    cols = []
    for c in schema:
        d = {"name": c.name, "kind": c.kind, "role": c.role}
        if c.cycle_length is not None:
            d["cycle_length"] = int(c.cycle_length)
        if c.ci is not None:
            d["ci"] = list(c.ci)
        if c.levels is not None:
            d["levels"] = list(c.levels)
        cols.append(d)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump({"columns": cols}, fh, sort_keys=False)


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: tuple
    frame: pd.DataFrame

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "frame", self.frame.reset_index(drop=True))
        if len(self.frame) == 0:
            raise DataError("no rows")
        if not self.outputs:
            raise SchemaError("schema declares no output columns")
        for c in self.schema:
            if c.name not in self.frame.columns:
                raise DataError(f"missing column {c.name!r}")
            if self.frame[c.name].isna().any():
                row = int(np.flatnonzero(self.frame[c.name].isna().to_numpy())[0])
                raise DataError(f"missing value in column {c.name!r} at row {row}")
            if c.ci is not None:
                _check_ci(self.frame, c)

    @property
    def features(self) -> list[ColumnSpec]:
        return [c for c in self.schema if c.role == "feature"]

    @property
    def outputs(self) -> list[ColumnSpec]:
        return [c for c in self.schema if c.role == "output"]

    @property
    def categorical(self) -> list[ColumnSpec]:
        return [c for c in self.features if c.categorical]

    @property
    def numeric_features(self) -> list[ColumnSpec]:
        return [c for c in self.features if not c.categorical]

    @property
    def N(self) -> int:
        return len(self.frame)

    @property
    def n(self) -> int:
        return len(self.features)

    @property
    def m(self) -> int:
        return len(self.outputs)

    @property
    def Y(self) -> np.ndarray:
        return self.frame[[c.name for c in self.outputs]].to_numpy(dtype=float)

    def column(self, name) -> ColumnSpec:
        for c in self.schema:
            if c.name == name:
                return c
        raise KeyError(name)

    def subset(self, indices) -> "Dataset":
        return Dataset(self.schema, self.frame.iloc[np.asarray(indices)])

    def levels(self) -> dict:
        """Level inventory of every categorical feature (schema levels win)."""
        out = {}
        for c in self.categorical:
            if c.levels is not None:
                out[c.name] = tuple(c.levels)
            elif c.kind == CYCLIC:
                out[c.name] = tuple(range(int(c.cycle_length)))
            else:
                out[c.name] = tuple(sorted(pd.unique(self.frame[c.name])))
        return out


def _check_ci(frame, col):
    lo_name, hi_name = col.ci
    for b in (lo_name, hi_name):
        if b not in frame.columns:
            raise DataError(f"missing CI column {b!r} for {col.name!r}")
    lo, hi = frame[lo_name].to_numpy(float), frame[hi_name].to_numpy(float)
    v = frame[col.name].to_numpy(float)
    present = ~(np.isnan(lo) | np.isnan(hi))
    bad = present & ((lo > v) | (v > hi))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DataError(f"CI bound violation in column {col.name!r} at row {row}: "
                        f"[{lo[row]}, {hi[row]}] does not contain {v[row]}")


def load_dataset(path, schema) -> Dataset:
    """Read a UTF-8 CSV with a header row and validate it against ``schema``
    (a list of ColumnSpec or a path to a YAML schema file)."""
    if not isinstance(schema, (list, tuple)):
        schema = load_schema(schema)
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.stat().st_size == 0:
        raise DataError("no rows")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError("no rows") from None
    if len(raw) == 0:
        raise DataError("no rows")
    frame = pd.DataFrame(index=raw.index)
    for c in schema:
        needed = [c.name] + (list(c.ci) if c.ci else [])
        for name in needed:
            if name not in raw.columns:
                raise DataError(f"missing column {name!r}")
        if c.kind in (NUMERIC, ORDINAL, CYCLIC):
            frame[c.name] = _parse_numeric(raw[c.name], c.name, allow_blank=False)
            if c.kind == CYCLIC:
                if not np.all(frame[c.name] == np.round(frame[c.name])):
                    raise DataError(f"cyclic column {c.name!r} must hold integer indices")
        else:
            frame[c.name] = raw[c.name]
        if c.ci:
            for b in c.ci:
                frame[b] = _parse_numeric(raw[b], b, allow_blank=True)
    return Dataset(tuple(schema), frame)


def _parse_numeric(series, name, allow_blank):
    vals = np.empty(len(series))
    for i, cell in enumerate(series):
        cell = cell.strip()
        if cell == "" and allow_blank:
            vals[i] = np.nan
            continue
        try:
            vals[i] = float(cell)
        except ValueError:
            raise DataError(f"unparseable cell {cell!r} at row {i}, column {name!r}") from None
        if not np.isfinite(vals[i]):
            raise DataError(f"non-finite cell at row {i}, column {name!r}")
    return vals


def fingerprint(ds: Dataset) -> dict:
    """Size and per-column moments, for external drift comparison."""
    out = {"N": ds.N, "columns": {}}
    for c in ds.schema:
        col = ds.frame[c.name]
        if c.kind == NOMINAL:
            out["columns"][c.name] = {"levels": int(col.nunique())}
        else:
            v = col.to_numpy(float)
            out["columns"][c.name] = {"mean": float(v.mean()), "std": float(v.std()),
                                      "min": float(v.min()), "max": float(v.max())}
    return out


# --------------------------------------------------------------- encoding

@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    values: np.ndarray
    columns: tuple
    provenance: tuple
    levels: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def groups(self) -> dict:
        """Source column -> encoded column indices."""
        out: dict[str, list[int]] = {}
        for j, src in enumerate(self.provenance):
            out.setdefault(src, []).append(j)
        return out

    def with_values(self, values) -> "EncodedMatrix":
        return replace(self, values=np.asarray(values, dtype=float))

    def rows(self, indices) -> "EncodedMatrix":
        return self.with_values(self.values[np.asarray(indices)])


def encode(ds: Dataset, levels: dict | None = None,
           max_nominal_levels: int = MAX_NOMINAL_LEVELS) -> EncodedMatrix:
    """Encode feature columns as reals.

    Numeric columns pass through, ordinal columns become their rank in the
    level inventory, cyclic columns become (cos, sin) of 2*pi*x/q and nominal
    columns are one-hot. Passing ``levels`` (e.g. from a training matrix)
    freezes the inventory; unseen ordinal or nominal levels then raise.
    """
    frozen = levels is not None
    inv = dict(levels) if frozen else ds.levels()
    blocks, names, prov = [], [], []
    for c in ds.features:
        col = ds.frame[c.name]
        if c.kind == NUMERIC:
            blocks.append(col.to_numpy(float)[:, None])
            names.append(c.name)
            prov.append(c.name)
        elif c.kind == CYCLIC:
            theta = 2 * np.pi * col.to_numpy(float) / c.cycle_length
            blocks.append(np.column_stack([np.cos(theta), np.sin(theta)]))
            names += [f"{c.name}_cos", f"{c.name}_sin"]
            prov += [c.name, c.name]
        else:
            lv = inv.get(c.name)
            if lv is None:
                raise SchemaError(f"no level inventory for {c.name!r}")
            lookup = {v: k for k, v in enumerate(lv)}
            codes = np.array([lookup.get(v, -1) for v in col])
            if (codes < 0).any():
                bad = col.iloc[int(np.flatnonzero(codes < 0)[0])]
                raise DataError(f"unseen level {bad!r} in column {c.name!r}")
            if c.kind == ORDINAL:
                blocks.append(codes[:, None].astype(float))
                names.append(c.name)
                prov.append(c.name)
            else:
                if len(lv) > max_nominal_levels:
                    raise SchemaError(
                        f"nominal column {c.name!r} has {len(lv)} levels (> {max_nominal_levels}); "
                        "one-hot would inflate the input dimension, consider an ordinal or "
                        "cyclic encoding or raise max_nominal_levels")
                onehot = np.zeros((len(col), len(lv)))
                onehot[np.arange(len(col)), codes] = 1.0
                blocks.append(onehot)
                names += [f"{c.name}={v}" for v in lv]
                prov += [c.name] * len(lv)
    values = np.hstack(blocks) if blocks else np.empty((ds.N, 0))
    return EncodedMatrix(values, tuple(names), tuple(prov), inv)


def decode_cyclic(cos_sin, cycle_length: int) -> np.ndarray:
    """Recover the integer index x mod q from a (cos, sin) pair array."""
    cs = np.atleast_2d(cos_sin)
    theta = np.arctan2(cs[:, 1], cs[:, 0])
    return np.mod(np.rint(theta * cycle_length / (2 * np.pi)), cycle_length).astype(int)


def decode_ordinal(codes, levels) -> list:
    return [levels[int(k)] for k in np.rint(np.asarray(codes)).astype(int)]


# ---------------------------------------------------------- normalization

@dataclass(frozen=True, eq=False)
class Normalizer:
    method: str
    offset: np.ndarray
    scale: np.ndarray

    def to_dict(self):
        return {"method": self.method, "offset": self.offset.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["method"], np.asarray(d["offset"], float), np.asarray(d["scale"], float))


def _values(data):
    return data.values if isinstance(data, EncodedMatrix) else np.asarray(data, dtype=float)


def fit_normalizer(train, method: str = "minmax", columns=None) -> Normalizer:
    """Learn per-column statistics from the training rows only.

    Under minmax a constant column is shifted to 0 and left unscaled; under
    zscore it is an error.
    """
    X = _values(train)
    names = columns or (train.columns if isinstance(train, EncodedMatrix) else range(X.shape[1]))
    if method == "minmax":
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = hi - lo
        scale = np.where(span > 0, span, 1.0)
        return Normalizer("minmax", lo, scale)
    if method == "zscore":
        mu, sd = X.mean(axis=0), X.std(axis=0, ddof=1)
        zero = [str(n) for n, s in zip(names, sd) if not s > 0]
        if zero:
            raise DataError(f"zero-variance columns cannot be z-scored: {zero}")
        return Normalizer("zscore", mu, sd)
    raise ValueError(f"unknown normalization {method!r}")


def apply_normalizer(norm: Normalizer, data):
    X = (_values(data) - norm.offset) / norm.scale
    return data.with_values(X) if isinstance(data, EncodedMatrix) else X


# -------------------------------------------------------------------- PCA

@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_ratio: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[1]


def fit_pca(train, variance_threshold: float = 0.99, n_components: int | None = None) -> PcaModel:
    """Eigen-decomposition of the sample covariance (denominator N-1).

    Keeps the smallest number of components whose cumulative explained
    variance reaches ``variance_threshold``. Each component is signed so its
    largest-magnitude loading is positive.
    """
    if not 0 < variance_threshold <= 1:
        raise ValueError("variance_threshold must lie in (0, 1]")
    X = _values(train)
    if X.shape[0] < 2:
        raise ValueError("PCA needs at least 2 rows")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    ratio = evals / total if total > 0 else np.zeros_like(evals)
    if n_components is None:
        cum = np.cumsum(ratio)
        # tolerate round-off at threshold 1
        k = int(np.searchsorted(cum, variance_threshold - 1e-12) + 1)
        k = min(max(k, 1), X.shape[1])
    else:
        k = n_components
    comps = evecs[:, :k]
    flip = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(k)])
    comps = comps * np.where(flip == 0, 1.0, flip)
    return PcaModel(mean, comps, ratio[:k])


def project(pca: PcaModel, data):
    Z = (_values(data) - pca.mean) @ pca.components
    if isinstance(data, EncodedMatrix):
        names = tuple(f"pc{j + 1}" for j in range(pca.k))
        return EncodedMatrix(Z, names, names, data.levels)
    return Z


def reconstruct(pca: PcaModel, Z) -> np.ndarray:
    return _values(Z) @ pca.components.T + pca.mean


# ------------------------------------------------------------------ LHS

def lhs_sample(count: int, dims: int, seed=None) -> np.ndarray:
    """Latin hypercube design in [0, 1)^dims: each column has exactly one
    point in each of the ``count`` equal-width strata."""
    if count < 1 or dims < 1:
        raise ValueError("count and dims must be positive")
    rng = np.random.default_rng(seed)
    strata = np.column_stack([rng.permutation(count) for _ in range(dims)])
    pts = (strata + rng.uniform(size=(count, dims))) / count
    # guard the open upper bound against round-up
    return np.minimum(pts, np.nextafter(1.0, 0.0))


# ----------------------------------------------------------- augmentation

def ci_draws(value, lower, upper, size, rng, distribution="normal"):
    """Draw from a distribution whose 2.5/97.5 percentiles are the CI bounds."""
    if distribution == "normal":
        sigma = (upper - lower) / 3.92
        return value + sigma * rng.standard_normal(size)
    if distribution == "uniform":
        half = (upper - lower) / 2 / 0.95
        mid = (upper + lower) / 2
        return rng.uniform(mid - half, mid + half, size)
    raise ValueError(f"unknown CI distribution {distribution!r}")


def augment_from_uncertainty(ds: Dataset, q: int, seed=None, distribution: str = "normal") -> Dataset:
    """Append q*q error-free replicas for every row carrying confidence intervals.

    Input and output cells are drawn independently: q draws of the input
    vector are crossed with q draws of the output vector. Replicas keep the
    row's categorical coordinates and have their CI cells blanked.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    rng = np.random.default_rng(seed)
    ci_cols = [c for c in ds.schema if c.ci is not None]
    if not ci_cols:
        return ds
    frame = ds.frame
    present = np.zeros(len(frame), dtype=bool)
    for c in ci_cols:
        lo, hi = frame[c.ci[0]].to_numpy(float), frame[c.ci[1]].to_numpy(float)
        present |= ~(np.isnan(lo) | np.isnan(hi))
    ci_names = [b for c in ci_cols for b in c.ci]
    replicas = []
    for i in np.flatnonzero(present):
        row = frame.iloc[i]
        draws = {}
        for c in ci_cols:
            lo, hi = row[c.ci[0]], row[c.ci[1]]
            if np.isnan(lo) or np.isnan(hi):
                draws[c.name] = np.full(q, row[c.name])
            else:
                draws[c.name] = ci_draws(row[c.name], lo, hi, q, rng, distribution)
        rep = frame.iloc[[i] * (q * q)].reset_index(drop=True)
        a, b = np.divmod(np.arange(q * q), q)
        for c in ci_cols:
            rep[c.name] = draws[c.name][a if c.role == "feature" else b]
        rep[ci_names] = np.nan
        replicas.append(rep)
    out = pd.concat([frame] + replicas, ignore_index=True)
    return Dataset(ds.schema, out)
