"""Command-line entry point: ``surrocert <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import pipeline
from .dataset import dump_schema
from .synthetic import generate_synthetic_case

SUBSETS = {
    "run": None,
    "audit-split": [1, 2],
    "uncertainty": [1, 3, 4, 8, 10],
    "pfi": [1, 3, 8],
    "curves": [1, 3, 9],
}

CONFIG_EXAMPLE = """\
# every key is optional; omitted keys take these defaults
seed: 0
jobs: 1
data:
  path: null              # CSV file; null selects the synthetic case
  schema: null            # YAML schema (required with path)
  synthetic: {n_rows: 20000, n_features: 26, n_frames: 20, n_stringers: 40,
              noise: 0.02, heteroscedastic: true}
  augment_q: 0            # >0: q^2 CI-based replicas per training row with CI columns
split:
  fractions: [0.6, 0.2, 0.2]   # train / calibration / validation
normalization: minmax     # or zscore
model:
  hidden: [64, 64]
  activation: relu        # relu | tanh | linear
  epochs: 40
  lr: 0.001
  batch_size: 128
  optimizer: adam         # adam | sgd
  loss: mse               # mse | mae | relative
  reg: none               # none | l1 | l2
  lam: 0.0                # regularization weight
  gamma: 0.0              # correlation-penalty weight
boxes:                    # disabling a box also disables its dependents
  data: true
  split_audit: true
  model: true
  pointwise_errors: true
  marginal_errors: true
  input_conditioned_errors: true
  output_conditioned_errors: true
  feature_importance: true
  boosting: true
  uncertainty: true
analysis:
  bootstrap_B: 1000
  ad_boot: 500
  families: [Normal, Laplace, Cauchy, JohnsonSU]
  input_bins: 5
  output_bins: 10
  output_min_count: 30
  pair: [frame, stringer] # two categorical inputs for the worst-output table
  pair_metric: max_abs    # max_abs | mean_abs | relative
  gesd_max_outliers: 10
  gesd_alpha: 0.05
  vtpm_mode: nearest      # nearest | all_pairs
  pfi_repeats: 10
  curve_fractions: [0.125, 0.25, 0.5, 1.0]
  curve_seeds: [0]
  curve_epochs: null      # null reuses model.epochs
  plateau_tol: 0.05
  gap_tol: 0.2
  low_error_tol: null     # null: 1% of the mean output variance
  l1_threshold: 0.001
  hull_queries: 200
  imum_top_k: 5
  uq_bins: 10
  uq_min_count: 50
  uq_level: 0.95
  conservative: false
  fum_mode: full          # full | reduced (GUM and oMUM only)
output:
  dir: surrocert_out
  format: [json, csv]     # any of json, csv, svg
"""


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--format", action="append", choices=["json", "csv", "svg"],
                        help="output format; repeat for several")
    common.add_argument("--jobs", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(
        prog="surrocert", description="Validate and certify a regression surrogate model.",
        epilog="configuration file example:\n\n" + CONFIG_EXAMPLE,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the full ten-box pipeline")
    g = sub.add_parser("generate", parents=[common], help="write the synthetic dataset and schema")
    g.add_argument("--rows", type=int, default=20000)
    sub.add_parser("audit-split", parents=[common], help="data and VTPM split audit only")
    sub.add_parser("uncertainty", parents=[common], help="train and build/validate interval models")
    sub.add_parser("pfi", parents=[common], help="train and rank features by permutation")
    sub.add_parser("curves", parents=[common], help="learning curves, regime and applicability")
    sub.add_parser("config-example", help="print a complete configuration file")
    return p


def _load_config(args):
    raw = {}
    base = None
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        base = args.config.parent
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    out = dict(raw.get("output") or {})
    if args.out is not None:
        out["dir"] = str(args.out)
    if args.format:
        out["format"] = args.format
    raw["output"] = out
    return pipeline.PipelineConfig.from_dict(raw, base_dir=base)


def _generate(cfg, rows):
    outdir = Path(cfg["output"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    syn = {**cfg["data"]["synthetic"], "n_rows": rows}
    ds = generate_synthetic_case(seed=int(cfg["seed"]), **syn)
    ds.frame.to_csv(outdir / "synthetic.csv", index=False)
    dump_schema(ds.schema, outdir / "synthetic_schema.yaml")
    print(f"wrote {ds.N} rows to {outdir / 'synthetic.csv'}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "config-example":
        sys.stdout.write(CONFIG_EXAMPLE)
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        if args.command == "generate":
            return _generate(cfg, args.rows)
        outdir = Path(cfg["output"]["dir"])
        formats = cfg["output"]["format"]
        try:
            report = pipeline.run(cfg, boxes=SUBSETS[args.command])
        except pipeline.StageError as exc:
            if exc.report is not None:
                pipeline.emit_reports(exc.report, outdir, formats)
            print(f"error: {exc}", file=sys.stderr)
            return 1
        pipeline.emit_reports(report, outdir, formats)
    except (OSError, ValueError, ImportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"verdicts": report.verdicts, "notes": report.notes}, indent=1))
    return pipeline.exit_code(report)


if __name__ == "__main__":
    sys.exit(main())
