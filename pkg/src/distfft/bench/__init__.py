"""Benchmark harness: cost model, tensor files, runs and reports."""

from ..timing import TimingBreakdown
from .model import ComplexityModel, flops_estimate, predict_terms, predict_tfft
from .runner import RunConfig, report_rows, run, strong_scaling
from .tensorio import read_distributed, read_tensor, write_distributed, write_tensor

__all__ = ["ComplexityModel", "RunConfig", "TimingBreakdown", "flops_estimate", "predict_terms",
           "predict_tfft", "read_distributed", "read_tensor", "report_rows", "run",
           "strong_scaling", "write_distributed", "write_tensor"]
