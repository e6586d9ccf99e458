"""Analytic cost estimates: flop counts and the compute + all-to-all time model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TOPOLOGIES = ("hypercube", "torus3d")


def flops_estimate(dims) -> int | float:
    """``5 N log2 N`` for ``N = prod(dims)``; an exact int when N is a power of two."""
    n = math.prod(int(d) for d in dims)
    if n < 1:
        raise ValueError(f"invalid dims {dims}")
    if n & (n - 1) == 0:
        return 5 * n * (n.bit_length() - 1)
    return 5 * n * math.log2(n)


@dataclass(frozen=True)
class ComplexityModel:
    """``c1`` seconds per ``N log2 N`` unit of work, ``c2`` seconds per element moved."""

    topology: str = "hypercube"
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("model constants must be positive")

    @classmethod
    def from_cost_model(cls, cm, topology="hypercube", element_bytes=16):
        """Constants matching a transport cost model (5 flops per N log N unit)."""
        return cls(topology, 5 * cm.flop_time, element_bytes * cm.inv_bandwidth)


def predict_terms(dims, p: int, model: ComplexityModel) -> tuple[float, float]:
    """``(compute, communication)`` terms of the predicted transform time."""
    n = math.prod(int(d) for d in dims)
    compute = model.c1 * n * math.log2(n) / p
    if model.topology == "hypercube":
        comm = model.c2 * n / p
    else:
        comm = model.c2 * n / float(np.cbrt(p)) ** 2
    return compute, comm


def predict_tfft(dims, p: int, model: ComplexityModel) -> float:
    compute, comm = predict_terms(dims, p, model)
    return compute + comm
