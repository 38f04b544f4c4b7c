"""Ten-box validation pipeline: configuration, DAG execution, report
assembly and file emission."""

from __future__ import annotations

import copy
import datetime as _dt
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import boosting, errors, stats, uncertainty, xai
from .dataset import (Dataset, apply_normalizer, augment_from_uncertainty, encode, fingerprint,
                      fit_normalizer, load_dataset)
from .splitting import SplitResult, VtpmClass, vtpm_report
from .surrogate import PredictionTable, TrainingConfig, predict, train
from .synthetic import generate_synthetic_case

logger = logging.getLogger(__name__)

BOXES = {
    1: "data",
    2: "split_audit",
    3: "model",
    4: "pointwise_errors",
    5: "marginal_errors",
    6: "input_conditioned_errors",
    7: "output_conditioned_errors",
    8: "feature_importance",
    9: "boosting",
    10: "uncertainty",
}
DEPENDS = {1: [], 2: [1], 3: [1], 4: [3], 5: [4], 6: [4], 7: [4], 8: [3], 9: [3], 10: [4]}

DEFAULT_CONFIG = {
    "seed": 0,
    "jobs": 1,
    "data": {
        "path": None,
        "schema": None,
        "synthetic": {"n_rows": 20000, "n_features": 26, "n_frames": 20, "n_stringers": 40,
                      "noise": 0.02, "heteroscedastic": True},
        "augment_q": 0,
    },
    "split": {"fractions": [0.6, 0.2, 0.2]},
    "normalization": "minmax",
    "model": {"hidden": [64, 64], "epochs": 40, "lr": 0.001, "batch_size": 128, "loss": "mse",
              "reg": "none", "lam": 0.0, "gamma": 0.0, "optimizer": "adam",
              "activation": "relu"},
    "boxes": {name: True for name in BOXES.values()},
    "analysis": {
        "bootstrap_B": 1000,
        "ad_boot": 500,
        "families": list(stats.FAMILIES),
        "input_bins": 5,
        "output_bins": 10,
        "output_min_count": 30,
        "pair": ["frame", "stringer"],
        "pair_metric": "max_abs",
        "gesd_max_outliers": 10,
        "gesd_alpha": 0.05,
        "vtpm_mode": "nearest",
        "pfi_repeats": 10,
        "curve_fractions": [0.125, 0.25, 0.5, 1.0],
        "curve_seeds": [0],
        "curve_epochs": None,
        "plateau_tol": 0.05,
        "gap_tol": 0.2,
        "low_error_tol": None,
        "l1_threshold": 1e-3,
        "hull_queries": 200,
        "imum_top_k": 5,
        "uq_bins": 10,
        "uq_min_count": 50,
        "uq_level": 0.95,
        "conservative": False,
        "fum_mode": "full",
    },
    "output": {"dir": "surrocert_out", "format": ["json", "csv"]},
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, box, cause):
        super().__init__(f"box {box} ({BOXES[box]}) failed: {cause}")
        self.box = box
        self.cause = cause
        self.report = None


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, d: dict | None = None, base_dir=None) -> "PipelineConfig":
        unknown = set(d or {}) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(_merge(DEFAULT_CONFIG, d or {}), Path(base_dir or Path.cwd()))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            d = yaml.safe_load(fh) or {}
        return cls.from_dict(d, base_dir=path.parent)

    def __getitem__(self, key):
        return self.raw[key]

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def enabled(self) -> dict:
        boxes = self.raw["boxes"]
        bad = set(boxes) - set(BOXES.values())
        if bad:
            raise ConfigError(f"unknown boxes: {sorted(bad)}")
        return {k: bool(boxes.get(name, True)) for k, name in BOXES.items()}

    def validate(self):
        data = self.raw["data"]
        if data.get("path"):
            if not self.resolve(data["path"]).exists():
                raise ConfigError(f"dataset {data['path']} not found")
            if not data.get("schema") or not self.resolve(data["schema"]).exists():
                raise ConfigError("a dataset path needs an existing schema file")
        fr = self.raw["split"]["fractions"]
        if len(fr) != 3 or abs(sum(fr) - 1) > 1e-9 or min(fr) <= 0:
            raise ConfigError("split.fractions must be three positive numbers summing to 1")
        self.enabled()
        self.training_config()

    def training_config(self) -> TrainingConfig:
        m = self.raw["model"]
        try:
            return TrainingConfig(seed=int(self.raw["seed"]), **m)
        except TypeError as exc:
            raise ConfigError(f"bad model config: {exc}") from None


@dataclass
class PipelineReport:
    sections: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    recommendations: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self):
        return _clean({"meta": self.meta, "verdicts": self.verdicts, "notes": self.notes,
                       "recommendations": self.recommendations, "sections": self.sections,
                       "error": self.error})

    @property
    def all_pass(self) -> bool:
        return all(v is True for v in self.verdicts.values())


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    return obj


def _task_map(fn, items, jobs):
    """Ordered map; results do not depend on the number of workers."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------------ state

@dataclass
class _State:
    ds: Dataset | None = None
    idx: tuple | None = None
    enc: object = None
    X: np.ndarray | None = None
    norm: object = None
    model: object = None
    pt_cal: PredictionTable | None = None
    pt_val: PredictionTable | None = None
    pfi: object = None


def _load_data(cfg: PipelineConfig, seed):
    d = cfg["data"]
    if d.get("path"):
        ds = load_dataset(cfg.resolve(d["path"]), cfg.resolve(d["schema"]))
        source = str(d["path"])
    else:
        ds = generate_synthetic_case(seed=seed, **d["synthetic"])
        source = "synthetic"
    return ds, source


def run(config, boxes: list | None = None, jobs: int | None = None) -> PipelineReport:
    """Execute the enabled boxes in DAG order and return the report.

    Boxes whose prerequisites are disabled are skipped with a note. The
    loops back from box 9 to earlier boxes are emitted as recommendations
    rather than applied.
    """
    cfg = config if isinstance(config, PipelineConfig) else PipelineConfig.from_dict(config)
    seed = int(cfg["seed"])
    jobs = int(jobs if jobs is not None else cfg["jobs"])
    an = cfg["analysis"]
    requested = cfg.enabled() if boxes is None else {k: (k in boxes) for k in BOXES}
    enabled = dict(requested)
    for k in sorted(BOXES):
        if enabled[k] and not all(enabled[d] for d in DEPENDS[k]):
            enabled[k] = False
    report = PipelineReport()
    report.meta = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(), "seed": seed,
                   "config": _clean(cfg.raw)}
    for k in sorted(BOXES):
        if requested[k] and not enabled[k]:
            missing = [d for d in DEPENDS[k] if not enabled[d]]
            report.notes.append(f"box {k} ({BOXES[k]}) skipped: prerequisite box(es) "
                                f"{missing} disabled")
    st = _State()
    steps = {1: _box_data, 2: _box_split, 3: _box_model, 4: _box_pointwise, 5: _box_marginal,
             6: _box_input, 7: _box_output, 8: _box_pfi, 9: _box_boosting, 10: _box_uncertainty}
    for k in sorted(BOXES):
        if not enabled[k]:
            continue
        logger.info("box %d: %s", k, BOXES[k])
        try:
            report.sections[f"{k:02d}_{BOXES[k]}"] = steps[k](cfg, st, report, seed, an, jobs)
        except Exception as exc:
            err = StageError(k, exc)
            report.error = str(err)
            err.report = report
            raise err from exc
    _recommend(report, st, an)
    return report


# ------------------------------------------------------------------ boxes

def _box_data(cfg, st, report, seed, an, jobs):
    ds, source = _load_data(cfg, seed)
    q = int(cfg["data"].get("augment_q") or 0)
    n_before = ds.N
    tr, cal, val = uncertainty.three_way_split(ds.N, cfg["split"]["fractions"], seed=seed)
    if q > 0:
        # augment only the training rows; replicas are appended and join the training set
        aug = augment_from_uncertainty(ds.subset(tr), q, seed=seed)
        extra = aug.frame.iloc[len(tr):]
        ds = Dataset(ds.schema, pd.concat([ds.frame, extra], ignore_index=True))
        tr = np.concatenate([tr, np.arange(n_before, ds.N)])
    st.ds = ds
    st.idx = (tr, cal, val)
    st.enc = encode(ds)
    st.norm = fit_normalizer(st.enc.values[tr], cfg["normalization"])
    st.X = apply_normalizer(st.norm, st.enc.values)
    return {"source": source, "N": ds.N, "n": ds.n, "m": ds.m, "encoded_dim": st.enc.d,
            "augmented_rows": ds.N - n_before,
            "split_sizes": {"train": len(tr), "calibration": len(cal), "validation": len(val)},
            "categorical": [c.name for c in ds.categorical],
            "fingerprint": fingerprint(ds)}


def _box_split(cfg, st, report, seed, an, jobs):
    tr, cal, val = st.idx
    out = {}
    tables = []
    adequate = True
    for name, test in (("calibration", cal), ("validation", val)):
        if not st.ds.categorical:
            out[name] = {"skipped": "no categorical features to voxelize"}
            continue
        rep = vtpm_report(SplitResult(tr, test, len(tr) / (len(tr) + len(test))), st.ds,
                          seed=seed, mode=an["vtpm_mode"])
        out[name] = rep.to_dict()
        out[name]["_report"] = rep
        adequate &= rep.adequate
        occ = pd.DataFrame([{**{"voxel": "|".join(map(str, o["voxel"]))}, "train": o["train"],
                             "test": o["test"], "test_set": name} for o in rep.occupancy])
        tables.append(occ)
    if tables:
        report.tables["voxel_occupancy"] = pd.concat(tables, ignore_index=True)
    report.verdicts["split_adequate"] = bool(adequate)
    if not adequate:
        report.notes.append("split inadequate: downstream boxes ran on a split that failed VTPM")
    return out


def _box_model(cfg, st, report, seed, an, jobs):
    tr, cal, val = st.idx
    tcfg = cfg.training_config()
    Y = st.ds.Y
    model, trace = train(st.X[tr], Y[tr], tcfg, st.X[cal], Y[cal])
    st.model = model
    names = tuple(c.name for c in st.ds.outputs)
    st.pt_cal = PredictionTable(cal, Y[cal], predict(model, st.X[cal]), names)
    st.pt_val = PredictionTable(val, Y[val], predict(model, st.X[val]), names)
    report.tables["training_trace"] = pd.DataFrame(
        {"epoch": trace.epochs, "train_error": trace.train_error, "test_error": trace.test_error})
    return {"widths": list(model.widths), "n_params": model.n_params,
            "config": _clean(tcfg.__dict__), "trace": trace.to_dict(),
            "_checkpoint": model.to_dict(tcfg)}


def _box_pointwise(cfg, st, report, seed, an, jobs):
    cal = errors.pointwise_metrics(st.pt_cal)
    val = errors.pointwise_metrics(st.pt_val)
    pt = st.pt_cal
    rows = []
    for j, name in enumerate(pt.output_names):
        rows.append(pd.DataFrame({"output": name, "row_id": pt.row_ids, "y": pt.y[:, j],
                                  "yhat": pt.yhat[:, j]}))
    report.tables["scatter"] = pd.concat(rows, ignore_index=True)
    return {"test_set": "calibration", "calibration": cal, "validation": val}


def _box_marginal(cfg, st, report, seed, an, jobs):
    E = errors.residues(st.pt_cal)
    names = E.output_names

    def task(j):
        e = E.e[:, j]
        res = errors.marginal_analysis(e, an["families"], B=an["bootstrap_B"],
                                       seed=seed + 10 * j, ad_boot=an["ad_boot"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = errors.detect_outliers(e, an["gesd_max_outliers"], an["gesd_alpha"])
        out["row_ids"] = [int(E.row_ids[i]) for i in out["indices"]]
        res["outliers"] = out
        return res

    results = _task_map(task, range(len(names)), jobs)
    hist_rows = []
    for name, res in zip(names, results):
        e = E.column(name)
        counts, edges = np.histogram(e, bins=60)
        centers = (edges[:-1] + edges[1:]) / 2
        width = edges[1] - edges[0]
        frame = {"output": name, "bin_center": centers, "density": counts / (e.size * width)}
        for fam, fr in res["fits"].items():
            if "_fit" in fr:
                frame[f"pdf_{fam}"] = fr["_fit"].pdf(centers)
        hist_rows.append(pd.DataFrame(frame))
    report.tables["residue_histogram"] = pd.concat(hist_rows, ignore_index=True)
    return {name: res for name, res in zip(names, results)}


def _box_input(cfg, st, report, seed, an, jobs):
    E = errors.residues(st.pt_cal)
    rows = st.ds.frame.iloc[st.pt_cal.row_ids]
    out = {}
    box_rows = []
    for j, name in enumerate(E.output_names):
        per = {}
        for c in st.ds.features:
            try:
                if c.categorical:
                    rep = errors.condition_on_categorical(E.e[:, j], rows[c.name].to_numpy(), c.name)
                else:
                    rep = errors.condition_on_numeric(E.e[:, j], rows[c.name].to_numpy(float), c.name,
                                                      bins=an["input_bins"])
            except ValueError as exc:
                per[c.name] = {"skipped": str(exc)}
                continue
            per[c.name] = rep.to_dict()
            for g in rep.groups:
                box_rows.append({"output": name, "variable": c.name, **g})
        out[name] = per
    report.tables["conditioned_boxplots"] = pd.DataFrame(box_rows)
    pair = an.get("pair")
    if pair and all(p in rows.columns for p in pair):
        cells = errors.pair_table(E.e, rows[pair[0]].to_numpy(), rows[pair[1]].to_numpy(),
                                  E.output_names, an["pair_metric"], y=st.pt_cal.y)
        out["_pair_table"] = cells
        report.tables["pair_table"] = pd.DataFrame(cells)
        out["pair_table"] = {"variables": list(pair), "metric": an["pair_metric"], "cells": len(cells)}
    return out


def _box_output(cfg, st, report, seed, an, jobs):
    E = errors.residues(st.pt_cal)

    def task(j):
        return errors.condition_on_output(E.e[:, j], st.pt_cal.yhat[:, j], bins=an["output_bins"],
                                          families=an["families"], min_count=an["output_min_count"])

    tables = _task_map(task, range(len(E.output_names)), jobs)
    rows = []
    for name, t in zip(E.output_names, tables):
        for b in t.bins:
            r = {"output": name, "lo": b["lo"], "hi": b["hi"], "count": b["count"], "std": b["std"]}
            for fam, fr in b["fits"].items():
                r[f"ks_p_{fam}"] = fr.get("ks_pvalue")
            rows.append(r)
    report.tables["bin_fits"] = pd.DataFrame(rows)
    out = {}
    for name, t in zip(E.output_names, tables):
        stds = t.stds
        d = t.to_dict()
        d["heteroscedasticity"] = {"std_first_bin": float(stds[0]), "std_last_bin": float(stds[-1]),
                                   "spearman_std_vs_bin": float(stats.spearman(
                                       np.arange(len(stds)), stds).statistic) if len(stds) >= 3 and np.ptp(stds) > 0 else None}
        out[name] = d
    return out


def _box_pfi(cfg, st, report, seed, an, jobs):
    tr, cal, val = st.idx
    rk = xai.permutation_importance(st.model, st.X[cal], st.ds.Y[cal], groups=st.enc.groups(),
                                    repeats=an["pfi_repeats"], seed=seed)
    st.pfi = rk
    d = rk.to_dict()
    report.tables["pfi"] = pd.DataFrame(d["features"])
    return d


def _box_boosting(cfg, st, report, seed, an, jobs):
    tr, cal, val = st.idx
    Y = st.ds.Y
    tcfg = cfg.training_config()
    if an.get("curve_epochs"):
        tcfg = TrainingConfig(**{**tcfg.__dict__, "epochs": int(an["curve_epochs"])})
    sizes = sorted({max(10, int(round(f * len(tr)))) for f in an["curve_fractions"]})
    out = {}
    curve = boosting.learning_curves(st.X[tr], Y[tr], st.X[cal], Y[cal], tcfg, sizes,
                                     seeds=an["curve_seeds"])
    tol = an.get("low_error_tol")
    if tol is None:
        # errors below 1% of the output variance count as low (R^2 >= 0.99)
        tol = 0.01 * float(np.mean(np.var(Y[tr], axis=0)))
    diag = boosting.diagnose_regime(curve, an["plateau_tol"], an["gap_tol"], tol)
    out["learning_curve"] = curve.to_dict()
    out["regime"] = diag.to_dict()
    report.tables["learning_curve"] = pd.DataFrame(
        {"size": curve.sizes, "train_error": curve.train_error, "test_error": curve.test_error})
    if tcfg.reg == "l1":
        out["l1_discardable"] = boosting.l1_feature_selection(st.model, an["l1_threshold"],
                                                              st.enc.groups())
    num_cols = [j for j, p in enumerate(st.enc.provenance) if not st.ds.column(p).categorical]
    Xn = st.enc.values[:, num_cols]
    cube = boosting.fit_hypercube(Xn[tr])
    in_cube = boosting.hypercube_contains(cube, Xn[val])
    nq = min(int(an["hull_queries"]), len(val))
    qidx = np.sort(np.random.default_rng([seed, 9]).choice(len(val), nq, replace=False))
    hull = boosting.fit_hull(st.X[tr])
    in_hull = boosting.hull_contains(hull, st.X[val][qidx])
    out["applicability"] = {
        "hypercube_inside_fraction": float(in_cube.mean()),
        "hull_queries": nq, "hull_inside_fraction": float(in_hull.mean()) if nq else None,
        "hull_space": "pca" if hull.pca is not None else "ambient",
        "hull_dim": int(hull.points.shape[1]),
        "hull_implies_hypercube": bool(np.all(~in_hull | in_cube[qidx])),
    }
    app = pd.DataFrame({"row_id": val, "in_hypercube": in_cube})
    app["in_hull"] = pd.array([pd.NA] * len(val), dtype="boolean")
    app.loc[qidx, "in_hull"] = in_hull
    report.tables["applicability"] = app
    out["drift_fingerprint"] = fingerprint(st.ds.subset(tr))
    return out


def _imum_features(st, an):
    numeric = [c.name for c in st.ds.numeric_features]
    k = int(an["imum_top_k"]) if an["imum_top_k"] else len(numeric)
    if st.pfi is not None:
        ranked = [f for f in st.pfi.ordered() if f in numeric]
    else:
        ranked = numeric
    return ranked[:k]


def _box_uncertainty(cfg, st, report, seed, an, jobs):
    cal_rows = st.ds.frame.iloc[st.pt_cal.row_ids]
    val_rows = st.ds.frame.iloc[st.pt_val.row_ids]
    feats = _imum_features(st, an)
    E = errors.residues(st.pt_cal)
    B = an["bootstrap_B"]

    def task(j):
        Xc = {f: cal_rows[f].to_numpy(float) for f in feats}
        Xv = {f: val_rows[f].to_numpy(float) for f in feats}
        um = uncertainty.build_uncertainty_model(
            E.e[:, j], st.pt_cal.yhat[:, j], Xc, output=E.output_names[j], bins=an["uq_bins"],
            min_count=an["uq_min_count"], level=an["uq_level"], B=B, seed=seed + 100 * j,
            conservative=an["conservative"])
        yv, yh = st.pt_val.y[:, j], st.pt_val.yhat[:, j]
        comps = ["gum", "omum", "fum", "fum_reduced"] + [f"imum:{f}" for f in um.imums]
        cov = {c: uncertainty.validate_coverage(um, yh, yv, Xv, c, B=B, seed=seed + 7 * j)
               for c in comps}
        return um, cov

    results = _task_map(task, range(E.e.shape[1]), jobs)
    out = {"imum_features": feats, "fum_mode": an["fum_mode"], "outputs": {}}
    band_rows = []
    fum_key = "fum" if an["fum_mode"] == "full" else "fum_reduced"
    gum_ok, fum_ok = True, True
    for j, (um, cov) in enumerate(results):
        name = um.output
        mins = min(v.coverage for k, v in cov.items() if k not in ("fum", "fum_reduced"))
        out["outputs"][name] = {"model": um.to_dict(),
                                "coverage": {k: v.to_dict() for k, v in cov.items()},
                                "fum_le_min_component": bool(cov["fum"].coverage <= mins + 1e-12)}
        gum_ok &= cov["gum"].passed
        fum_ok &= cov[fum_key].passed
        yh = st.pt_val.yhat[:, j]
        glo, ghi = um.interval(yh, None, "gum")
        Xv = {f: val_rows[f].to_numpy(float) for f in feats}
        flo, fhi = um.interval(yh, Xv, fum_key)
        band_rows.append(pd.DataFrame({"output": name, "row_id": st.pt_val.row_ids,
                                       "y": st.pt_val.y[:, j], "yhat": yh, "gum_lo": glo,
                                       "gum_hi": ghi, "fum_lo": flo, "fum_hi": fhi}))
    report.tables["uncertainty_bands"] = pd.concat(band_rows, ignore_index=True)
    report.verdicts["coverage_gum"] = bool(gum_ok)
    report.verdicts["coverage_fum"] = bool(fum_ok)
    return out


def _recommend(report, st, an):
    rec = {}
    split = report.sections.get("02_split_audit", {})
    vox, resid = set(), 0
    for name in ("calibration", "validation"):
        r = split.get(name, {}).get("_report")
        if r is None:
            continue
        vox |= {tuple(v) for v in r.flagged_voxels}
        resid += int(np.sum(r.classes == VtpmClass.RESIDUAL.value))
    if vox or resid:
        rec["augment_voxels"] = sorted([list(v) for v in vox], key=repr)
        rec["residual_test_points"] = resid
    out_sec = report.sections.get("07_output_conditioned_errors", {})
    hetero = [k for k, v in out_sec.items()
              if isinstance(v, dict) and (v.get("heteroscedasticity") or {}).get("spearman_std_vs_bin")
              and v["heteroscedasticity"]["spearman_std_vs_bin"] > 0.8]
    if hetero:
        rec["loss"] = {"suggest": "relative", "reason": "residue spread grows with the output",
                       "outputs": hetero}
    if st.pfi is not None:
        drop = [f for f, d, s in zip(st.pfi.features, st.pfi.importance, st.pfi.importance_std)
                if d <= max(s, 0.0)]
        if drop:
            rec["feature_drop_candidates"] = drop
    boost = report.sections.get("09_boosting", {})
    if boost.get("l1_discardable"):
        rec.setdefault("feature_drop_candidates", [])
        rec["feature_drop_candidates"] = sorted(set(rec["feature_drop_candidates"]) |
                                                set(boost["l1_discardable"]))
    regime = (boost.get("regime") or {}).get("regime")
    if regime:
        rec["regime_action"] = {
            boosting.HIGH_VARIANCE: "regularize more or add data in sparse regions",
            boosting.HIGH_BIAS: "increase model capacity or engineer features",
            boosting.NEEDS_DATA: "collect or augment more training data",
            boosting.CONVERGED: "no action",
        }[regime]
    report.recommendations = rec


# ---------------------------------------------------------------- emission

def _versioned_manifest(outdir: Path):
    m = outdir / "manifest.json"
    if m.exists():
        k = 1
        while (outdir / f"manifest.{k}.json").exists():
            k += 1
        m.rename(outdir / f"manifest.{k}.json")


def emit_reports(report: PipelineReport, outdir, formats=("json", "csv")) -> list:
    """Write the JSON report, one CSV per figure table and optional SVGs;
    returns the manifest (list of written file names)."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {outdir}: {exc}") from exc
    _versioned_manifest(outdir)
    files = []

    def _write(name, writer):
        path = outdir / name
        try:
            writer(path)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        files.append(name)

    if "json" in formats or "csv" in formats or "svg" in formats:
        _write("report.json", lambda p: p.write_text(json.dumps(report.to_dict(), indent=1,
                                                                 sort_keys=True), encoding="utf-8"))
    model = report.sections.get("03_model", {}).get("_checkpoint")
    if model is not None:
        _write("model.json", lambda p: p.write_text(json.dumps(model), encoding="utf-8"))
    unc = report.sections.get("10_uncertainty")
    if unc:
        models = {k: v["model"] for k, v in unc["outputs"].items()}
        _write("uncertainty_model.json",
               lambda p: p.write_text(json.dumps(_clean(models), indent=1), encoding="utf-8"))
    if "csv" in formats or "svg" in formats:
        for name, table in sorted(report.tables.items()):
            _write(f"{name}.csv", lambda p, t=table: t.to_csv(p, index=False))
    if "svg" in formats:
        from .plots import render_svgs
        for name in render_svgs(report, outdir):
            files.append(name)
    manifest = {"files": files}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return files


def verdict_sections(report: PipelineReport) -> dict:
    """Deterministic part of a report used for reproducibility checks."""
    d = report.to_dict()
    d.pop("meta", None)
    return d


def exit_code(report: PipelineReport) -> int:
    if report.error:
        return 1
    return 0 if report.all_pass else 2


def write_default_config(path, **overrides):
    cfg = _merge(DEFAULT_CONFIG, overrides)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False)


def dump_config_example() -> str:
    return yaml.safe_dump(DEFAULT_CONFIG, sort_keys=False)


__all__ = ["PipelineConfig", "PipelineReport", "run", "emit_reports", "exit_code",
           "verdict_sections", "BOXES", "DEFAULT_CONFIG", "ConfigError", "StageError"]
