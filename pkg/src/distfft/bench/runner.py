"""Benchmark runs: configure, execute over a backend, and build the report."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import ConfigError
from ..kernels import Direction, dft_oracle
from ..layout import ProcessGrid, TransformKind, assemble, factor_grid, scatter
from ..plan import execute, inverse_plan, make_plan
from ..timing import TimingBreakdown
from ..transport import BACKENDS, CostModel, spawn_world
from .model import ComplexityModel, flops_estimate, predict_tfft
from .tensorio import read_distributed, write_distributed

SCHEMA = "distfft.bench.report"
SCHEMA_VERSION = 1
ORACLE_AUTO_LIMIT = 1 << 16
DECOMPOSITIONS = ("slab", "pencil", "general")
TOLERANCE = {"double": 1e-10, "single": 1e-4}


@dataclass
class RunConfig:
    dims: tuple = (8, 8, 8)
    grid: tuple | None = None
    nprocs: int | None = None
    kind: str = "c2c"
    direction: str = "forward"
    decomposition: str = "pencil"
    backend: str = "inprocess"
    pipelined: bool = False
    chunks: int = 1
    staging_buffers: int = 2
    reps: int = 3
    warmup: int = 1
    seed: int = 0
    precision: str = "double"
    verify: str = "auto"
    input: str | None = None
    output: str | None = None
    latency: float = 1e-6
    inv_bw: float = 1e-9
    staging_inv_bw: float = 0.0
    flop_time: float = 1e-10
    pack_inv_bw: float = 1e-10
    timeout: float = 60.0

    def validate(self) -> "RunConfig":
        def bad(msg):
            raise ConfigError(msg)
        self.dims = tuple(int(n) for n in self.dims)
        if len(self.dims) < 2 or min(self.dims) < 1:
            bad(f"dims must have at least two positive axes, got {self.dims}")
        if self.kind not in ("c2c", "r2c", "c2r"):
            bad(f"unknown kind {self.kind!r}")
        if self.direction not in ("forward", "backward"):
            bad(f"unknown direction {self.direction!r}")
        if self.kind == "r2c" and self.direction != "forward":
            bad("r2c runs are forward only")
        if self.kind == "c2r":
            self.direction = "backward"
        if self.decomposition not in DECOMPOSITIONS:
            bad(f"unknown decomposition {self.decomposition!r}")
        if self.decomposition == "pencil" and len(self.dims) != 3:
            bad("pencil decomposition needs 3-axis dims; use general")
        if self.backend not in BACKENDS:
            bad(f"unknown backend {self.backend!r}")
        if self.precision not in TOLERANCE:
            bad(f"unknown precision {self.precision!r}")
        if self.verify not in ("auto", "on", "off"):
            bad(f"verify must be auto, on or off, not {self.verify!r}")
        if self.reps < 1 or self.warmup < 0:
            bad("need reps >= 1 and warmup >= 0")
        if self.chunks < 1 or self.staging_buffers < 2:
            bad("need chunks >= 1 and staging_buffers >= 2")
        if min(self.latency, self.inv_bw, self.staging_inv_bw, self.flop_time, self.pack_inv_bw) < 0:
            bad("cost-model parameters must be non-negative")
        if self.grid is None and self.nprocs is None:
            bad("give either a grid or a rank count")
        if self.grid is not None:
            self.grid = tuple(int(p) for p in self.grid)
            if self.nprocs is not None and math.prod(self.grid) != self.nprocs:
                bad(f"grid {self.grid} does not hold {self.nprocs} ranks")
            if len(self.grid) != self.grid_ndim():
                bad(f"{self.decomposition} decomposition of {len(self.dims)} axes needs a "
                    f"{self.grid_ndim()}-axis grid, got {self.grid}")
        return self

    def grid_ndim(self) -> int:
        return 1 if self.decomposition == "slab" else len(self.dims) - 1

    def process_grid(self) -> ProcessGrid:
        if self.grid is not None:
            return ProcessGrid(tuple(self.grid))
        return factor_grid(int(self.nprocs), self.grid_ndim())

    def cost_model(self) -> CostModel:
        return CostModel(latency=self.latency, inv_bandwidth=self.inv_bw,
                         staging_inv_bandwidth=self.staging_inv_bw,
                         flop_time=self.flop_time, pack_inv_bandwidth=self.pack_inv_bw)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["grid"] = list(self.grid) if self.grid is not None else None
        return d

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _plans(cfg: RunConfig, grid):
    opts = dict(pipelined=cfg.pipelined, chunks=cfg.chunks, staging_buffers=cfg.staging_buffers,
                precision=cfg.precision)
    fwd_kind = TransformKind.C2C if cfg.kind == "c2c" else TransformKind.R2C
    forward = make_plan(cfg.decomposition, cfg.dims, grid, fwd_kind, Direction.FORWARD, **opts)
    backward = inverse_plan(forward)
    timed = forward if cfg.direction == "forward" else backward
    return timed, forward, backward


def _relative_error(got, want) -> float:
    scale = float(np.max(np.abs(want))) if np.size(want) else 0.0
    err = float(np.max(np.abs(got - want))) if np.size(want) else 0.0
    return err / scale if scale > 0 else err


def _worker(comm, cfg: RunConfig, grid, verify: bool):
    timed, forward, backward = _plans(cfg, grid)
    if cfg.input:
        x = read_distributed(cfg.input, timed.input, comm, precision=cfg.precision)
    else:
        rng = np.random.default_rng(cfg.seed)
        if cfg.kind == "c2c":
            g = rng.standard_normal(timed.input.shape) + 1j * rng.standard_normal(timed.input.shape)
            x = scatter(g, timed.input, comm.rank, timed.input.dtype(cfg.precision))
        else:
            g = rng.standard_normal(cfg.dims)
            x = scatter(g, forward.input, comm.rank, forward.input.dtype(cfg.precision))
            if cfg.kind == "c2r":
                x = execute(forward, x, comm)
    for _ in range(cfg.warmup):
        execute(timed, x, comm)
    reps = []
    for _ in range(cfg.reps):
        comm.barrier()
        t = TimingBreakdown()
        y = execute(timed, x, comm, t)
        reps.append(t)

    check = None
    if verify:
        if cfg.kind == "c2r":
            back = execute(forward, y, comm)
            pair = comm.gather_obj((x, back))
            if comm.rank == 0:
                check = _relative_error(assemble([p[1] for p in pair]), assemble([p[0] for p in pair]))
        else:
            pair = comm.gather_obj((x, y))
            if comm.rank == 0:
                xin = assemble([p[0] for p in pair])
                got = assemble([p[1] for p in pair])
                if cfg.direction == "forward":
                    want = dft_oracle(xin, direction=Direction.FORWARD)
                    if cfg.kind == "r2c":
                        want = want[..., : got.shape[-1]]
                else:
                    want = dft_oracle(xin, direction=Direction.BACKWARD) / math.prod(cfg.dims)
                check = _relative_error(got, want)
    if cfg.output:
        write_distributed(cfg.output, y, comm)
    comm.barrier()
    return [r.as_dict() for r in reps], check


def _median(items) -> TimingBreakdown:
    return TimingBreakdown(**{k: statistics.median(getattr(t, k) for t in items)
                              for k in TimingBreakdown().as_dict()})


def run(config: RunConfig) -> dict:
    """Execute warmups and timed repetitions; return the versioned report dict."""
    cfg = config.validate()
    grid = cfg.process_grid()
    n = math.prod(cfg.dims)
    verify = cfg.verify == "on" or (cfg.verify == "auto" and n <= ORACLE_AUTO_LIMIT)
    _plans(cfg, grid)  # surface plan errors before any rank starts
    cm = cfg.cost_model() if cfg.backend == "costmodel" else None
    results = spawn_world(grid.size, _worker, backend=cfg.backend, cost_model=cm,
                          timeout=cfg.timeout, args=(cfg, grid, verify))

    per_rank = [[TimingBreakdown.from_dict(d) for d in reps] for reps, _ in results]
    reduced = [TimingBreakdown.reduce_max(rank_reps[i] for rank_reps in per_rank)
               for i in range(cfg.reps)]
    best = min(reduced, key=lambda t: t.total)
    median = _median(reduced)
    flops = flops_estimate(cfg.dims)
    err = results[0][1]
    tol = TOLERANCE[cfg.precision]
    predicted = None
    if cm is not None:
        predicted = predict_tfft(cfg.dims, grid.size, ComplexityModel.from_cost_model(cm))
    return {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "config": cfg.as_dict(),
        "problem": {
            "dims": list(cfg.dims), "grid": list(grid.shape), "ranks": grid.size,
            "kind": cfg.kind, "direction": cfg.direction, "decomposition": cfg.decomposition,
            "backend": cfg.backend, "pipelined": cfg.pipelined,
        },
        "clock": "virtual" if cm is not None else "wall",
        "timing": {
            "min": best.as_dict(),
            "median": median.as_dict(),
            "reps": [t.as_dict() for t in reduced],
            "per_rank_median": [_median(r).as_dict() for r in per_rank],
        },
        "flops": flops,
        "gflops": flops / best.total / 1e9 if best.total > 0 else None,
        "model_seconds": predicted,
        "verification": {
            "enabled": verify,
            "verified": None if err is None else bool(err <= tol),
            "max_rel_error": err,
            "tolerance": tol,
        },
    }


def strong_scaling(config: RunConfig, ranks) -> list[dict]:
    """Run ``config`` at each rank count, letting the grid be auto-factored."""
    rows = []
    base = config.as_dict()
    for p in ranks:
        d = dict(base, grid=None, nprocs=int(p))
        rows.append(run(RunConfig.from_dict(d)))
    return rows


def report_rows(report: dict) -> list[dict]:
    """Flatten a report into plot-ready rows (one per repetition plus min and median)."""
    prob = report["problem"]
    head = {
        "ranks": prob["ranks"], "dims": "x".join(map(str, prob["dims"])),
        "grid": "x".join(map(str, prob["grid"])), "kind": prob["kind"],
        "decomposition": prob["decomposition"], "backend": prob["backend"],
        "pipelined": prob["pipelined"],
    }
    rows = [dict(head, row=f"rep{i}", **t) for i, t in enumerate(report["timing"]["reps"])]
    rows.append(dict(head, row="min", **report["timing"]["min"]))
    rows.append(dict(head, row="median", **report["timing"]["median"]))
    return rows
