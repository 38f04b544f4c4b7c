"""Validation and certification toolkit for neural-network surrogate models."""

from .dataset import Dataset, encode, load_dataset, load_schema
from .pipeline import PipelineConfig, PipelineReport, emit_reports, run
from .surrogate import SurrogateModel, TrainingConfig, predict, train
from .synthetic import generate_synthetic_case

__version__ = "0.1.0"

__all__ = ["Dataset", "encode", "load_dataset", "load_schema", "PipelineConfig", "PipelineReport",
           "emit_reports", "run", "SurrogateModel", "TrainingConfig", "predict", "train",
           "generate_synthetic_case"]
