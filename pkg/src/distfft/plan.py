"""Distributed transform plans: slab, pencil and general decompositions.

A plan over a ``k``-axis process grid for a ``(d+1)``-axis tensor runs, in
the forward direction:

1. 1-D FFTs along the fully local trailing axes ``d, d-1, ..., k``
   (R2C on axis ``d`` for real input);
2. for ``g = k-1, ..., 0``: a global transpose moving grid axis ``g`` from
   tensor axis ``g`` to ``g+1``, then 1-D FFTs along the now-local axis ``g``.

With ``k == 1`` this is the slab algorithm, with ``k == d == 2`` the pencil
algorithm, and ``k == d`` in general the (d-1)-dimensional decomposition. When
``k >= 2`` the last exchange delivers blocks in (axis 1, axis 0, ...) memory
order and a local transpose restores xyz order, so spatial and frequency data
share one memory layout. Backward plans run the inverse stages in reverse and
finish with a single ``1/N`` scaling; forward plans never scale.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import GridMismatch, LayoutMismatch, RankTooLow
from .exchange import TRANSPOSE_TAG, global_transpose, grid_comms, local_transpose
from .kernels import BatchSpec, Direction, fft_batched
from .layout import (DistTensor, Distribution, Element, LocalBlock, ProcessGrid,
                     TransformKind, factor_grid, frequency_layout, hat_dims,
                     spatial_layout)
from .timing import TimingBreakdown


def loop_bounds(shape, axis: int) -> tuple[int, int, int]:
    """``(h, n, h')``: elements before, along, and after ``axis`` of a row-major block."""
    return math.prod(shape[:axis]), shape[axis], math.prod(shape[axis + 1:])


def lane_flops(n: int, kernel: str) -> float:
    """Nominal flop count of one length-``n`` transform (5 n log2 n; half for real kernels)."""
    if n <= 1:
        return 0.0
    f = 5.0 * n * math.log2(n)
    return f / 2 if kernel != "c2c" else f


# --------------------------------------------------------------------------
# stages


@dataclass(frozen=True)
class LocalFFT:
    axis: int
    direction: Direction
    kernel: str  # "c2c" | "r2c" | "c2r"
    src: Distribution
    dst: Distribution

    def batch(self, local_shape) -> tuple[BatchSpec, int, int]:
        """Batch for one leading slab, plus how many slabs and their spacing."""
        h, n, hp = loop_bounds(local_shape, self.axis)
        if hp == 1:
            # contiguous lanes: one batch covers the whole block
            return BatchSpec(length=n, stride=1, dist=n, count=h), 1, 0
        return BatchSpec(length=n, stride=hp, dist=1, count=hp), h, n * hp

    def inverse(self) -> "LocalFFT":
        kernel = {"r2c": "c2r", "c2r": "r2c", "c2c": "c2c"}[self.kernel]
        return LocalFFT(self.axis, self.direction.inverse(), kernel, self.dst, self.src)

    def run(self, t: DistTensor, comm, plan, timers):
        w = time.perf_counter()
        shape = self.src.local_shape(t.rank)
        out_shape = self.dst.local_shape(t.rank)
        data = t.data
        lanes = math.prod(shape) // max(shape[self.axis], 1)
        if 0 in shape:
            out = np.zeros(out_shape, dtype=self.dst.dtype(plan.precision))
        elif self.kernel == "r2c":
            out = kernels.rfft_lanes(data.reshape(-1, shape[-1])).reshape(out_shape)
        elif self.kernel == "c2r":
            n = out_shape[-1]
            xh = data.reshape(-1, shape[-1])
            kernels.check_hermitian(xh, n)
            out = kernels.irfft_lanes(xh, n).reshape(out_shape)
        else:
            buf = np.array(data, dtype=self.dst.dtype(plan.precision), copy=True).reshape(-1)
            spec, repeat, step = self.batch(shape)
            for r in range(repeat):
                fft_batched(buf, replace(spec, offset=r * step), self.direction)
            out = buf.reshape(out_shape)
        n = max(self.src.shape[self.axis], self.dst.shape[self.axis])
        _charge(comm, timers, "local_fft", w, lanes * lane_flops(n, self.kernel))
        return DistTensor(self.dst, LocalBlock(t.rank, self.dst.extents(t.rank), out))


@dataclass(frozen=True)
class Transpose:
    src: Distribution
    dst: Distribution
    grid_axis: int
    pipelined: bool = False

    def inverse(self) -> "Transpose":
        return Transpose(self.dst, self.src, self.grid_axis, self.pipelined)

    def run(self, t: DistTensor, comm, plan, timers):
        return global_transpose(t, self.dst, comm, pipelined=self.pipelined, chunks=plan.chunks,
                                staging_buffers=plan.staging_buffers,
                                tag=TRANSPOSE_TAG, timers=timers)


@dataclass(frozen=True)
class LocalTransposeStage:
    """Swap the two leading storage axes; everything after them is one super-element."""

    src: Distribution
    dst: Distribution

    def extents(self, rank) -> tuple[int, int, int]:
        shp = self.src.storage_shape(rank)
        return shp[0], shp[1], math.prod(shp[2:])

    def inverse(self) -> "LocalTransposeStage":
        return LocalTransposeStage(self.dst, self.src)

    def run(self, t: DistTensor, comm, plan, timers):
        w = time.perf_counter()
        rows, cols, sup = self.extents(t.rank)
        out = local_transpose(t.data.reshape(-1), rows, cols, sup).reshape(self.dst.storage_shape(t.rank))
        if timers is not None:
            if comm.virtual:
                dt = out.nbytes * comm.cost_model.pack_inv_bandwidth
                comm.advance(dt)
            else:
                dt = time.perf_counter() - w
            timers.unpack += dt
        return DistTensor(self.dst, LocalBlock(t.rank, t.block.extents, out))


@dataclass(frozen=True)
class Normalize:
    factor: float
    dist: Distribution

    def run(self, t: DistTensor, comm, plan, timers):
        w = time.perf_counter()
        out = t.data * t.data.dtype.type(self.factor)
        _charge(comm, timers, "local_fft", w, float(out.size))
        return DistTensor(self.dist, LocalBlock(t.rank, t.block.extents, out))


def _charge(comm, timers, name, wall_start, flops):
    if timers is None:
        return
    if comm.virtual:
        dt = comm.cost_model.flop_time * flops
        comm.advance(dt)
    else:
        dt = time.perf_counter() - wall_start
    setattr(timers, name, getattr(timers, name) + dt)


# --------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class Plan:
    direction: Direction
    kind: TransformKind
    dims: tuple[int, ...]
    grid: ProcessGrid
    stages: tuple
    input: Distribution
    output: Distribution
    decomposition: str
    precision: str = "double"
    normalize: bool = True
    chunks: int = 1
    staging_buffers: int = 2
    validate: bool = False
    twiddle_keys: tuple = field(default=(), compare=False)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def count(self, stage_type) -> int:
        return sum(isinstance(s, stage_type) for s in self.stages)


def _as_grid(grid, ndim) -> ProcessGrid:
    if isinstance(grid, ProcessGrid):
        return grid
    if isinstance(grid, int):
        return factor_grid(grid, ndim)
    return ProcessGrid(tuple(grid))


def _forward_stages(dims, grid, real, pipelined):
    d = len(dims) - 1
    k = grid.ndim
    cur = spatial_layout(dims, grid, TransformKind.R2C if real else TransformKind.C2C)
    stages = []

    def fft(cur, axis, kernel):
        shape = list(cur.shape)
        element = cur.element
        if kernel == "r2c":
            shape[axis] = shape[axis] // 2 + 1
            element = Element.COMPLEX
        hatted = tuple(h or a == axis for a, h in enumerate(cur.hatted))
        nxt = replace(cur, shape=tuple(shape), hatted=hatted, element=element)
        stages.append(LocalFFT(axis, Direction.FORWARD, kernel, cur, nxt))
        return nxt

    for axis in range(d, k - 1, -1):
        cur = fft(cur, axis, "r2c" if real and axis == d else "c2c")
    for g in range(k - 1, -1, -1):
        amap = list(cur.axis_map)
        amap[g], amap[g + 1] = None, g
        swapped = g == 0 and k >= 2
        order = (1, 0) + tuple(range(2, d + 1)) if swapped else tuple(range(d + 1))
        nxt = replace(cur, axis_map=tuple(amap), memory_order=order)
        stages.append(Transpose(cur, nxt, g, pipelined))
        cur = nxt
        if swapped:
            nxt = cur.with_memory_order(tuple(range(d + 1)))
            stages.append(LocalTransposeStage(cur, nxt))
            cur = nxt
        cur = fft(cur, g, "c2c")
    return stages


def _build(dims, grid: ProcessGrid, kind: TransformKind, direction: Direction, decomposition: str, *,
           normalize=True, pipelined=False, chunks=1, staging_buffers=2, precision="double",
           validate=False) -> Plan:
    dims = tuple(int(n) for n in dims)
    kind = TransformKind(kind)
    direction = Direction(direction) if not isinstance(direction, Direction) else direction
    if kind is TransformKind.R2C and direction is not Direction.FORWARD:
        raise ValueError("R2C plans are forward only")
    if kind is TransformKind.C2R and direction is not Direction.BACKWARD:
        raise ValueError("C2R plans are backward only")
    if precision not in ("double", "single"):
        raise ValueError(f"unknown precision {precision!r}")
    real = kind is not TransformKind.C2C
    fwd_kind = TransformKind.R2C if real else TransformKind.C2C
    stages = _forward_stages(dims, grid, real, pipelined)
    spatial = spatial_layout(dims, grid, fwd_kind)
    freq = frequency_layout(dims, grid, fwd_kind)
    if direction is Direction.FORWARD:
        inp, out = spatial, freq
    else:
        stages = [s.inverse() for s in reversed(stages)]
        if normalize:
            stages.append(Normalize(1.0 / math.prod(dims), spatial))
        inp, out = freq, spatial
    keys = []
    hd = hat_dims(dims, fwd_kind)
    for n in set(dims) | set(hd):
        for dr in Direction:
            kernels.twiddles(n, dr)
            keys.append((n, dr))
    return Plan(direction, kind, dims, grid, tuple(stages), inp, out, decomposition, precision,
                normalize, int(chunks), int(staging_buffers), validate, tuple(sorted(keys, key=str)))


def plan_slab(dims, p: int, kind=TransformKind.C2C, direction=Direction.FORWARD, **opts) -> Plan:
    """Slab plan: axis 0 split over ``p`` ranks (requires ``p <= N0``)."""
    grid = p if isinstance(p, ProcessGrid) else ProcessGrid((int(p),))
    if grid.ndim != 1:
        raise GridMismatch("slab decomposition takes a one-axis grid")
    return _build(dims, grid, kind, direction, "slab", **opts)


def _check_rank_counts(dims, grid):
    for g, pg in enumerate(grid.shape):
        if pg > dims[g]:
            raise RankTooLow(f"grid axis {g} has {pg} ranks but axis {g} holds only {dims[g]} points")


def plan_pencil(dims, grid, kind=TransformKind.C2C, direction=Direction.FORWARD, **opts) -> Plan:
    """Pencil plan for a 3-axis tensor over a P0 x P1 grid (an int P is factored)."""
    dims = tuple(dims)
    if len(dims) != 3:
        raise GridMismatch("pencil decomposition is for 3-axis tensors; use plan_general")
    grid = _as_grid(grid, 2)
    if grid.ndim != 2:
        raise GridMismatch(f"pencil decomposition needs a 2-axis grid, got {grid.shape}")
    _check_rank_counts(dims, grid)
    return _build(dims, grid, kind, direction, "pencil", **opts)


def plan_general(dims, grid, kind=TransformKind.C2C, direction=Direction.FORWARD, **opts) -> Plan:
    """Plan for a (d+1)-axis tensor over a d-axis grid."""
    dims = tuple(dims)
    grid = _as_grid(grid, len(dims) - 1)
    if grid.ndim != len(dims) - 1:
        raise GridMismatch(f"grid {grid.shape} must have {len(dims) - 1} axes for dims {dims}")
    _check_rank_counts(dims, grid)
    return _build(dims, grid, kind, direction, "general", **opts)


def make_plan(decomposition: str, dims, grid, kind=TransformKind.C2C, direction=Direction.FORWARD, **opts):
    if decomposition == "slab":
        p = grid if isinstance(grid, int) else math.prod(_as_grid(grid, 1).shape)
        return plan_slab(dims, p, kind, direction, **opts)
    if decomposition == "pencil":
        return plan_pencil(dims, grid, kind, direction, **opts)
    if decomposition == "general":
        return plan_general(dims, grid, kind, direction, **opts)
    raise ValueError(f"unknown decomposition {decomposition!r}")


def inverse_plan(plan: Plan) -> Plan:
    """The plan undoing ``plan`` (same grid, options and decomposition)."""
    kind = {TransformKind.C2C: TransformKind.C2C, TransformKind.R2C: TransformKind.C2R,
            TransformKind.C2R: TransformKind.R2C}[plan.kind]
    opts = dict(normalize=plan.normalize, chunks=plan.chunks, staging_buffers=plan.staging_buffers,
                precision=plan.precision, validate=plan.validate,
                pipelined=any(getattr(s, "pipelined", False) for s in plan.stages))
    return _build(plan.dims, plan.grid, kind, plan.direction.inverse(), plan.decomposition, **opts)


# --------------------------------------------------------------------------
# execution


def execute(plan: Plan, tensor: DistTensor, comm, timers: TimingBreakdown | None = None) -> DistTensor:
    """Run every stage of ``plan`` on this rank's block; collective over ``comm``."""
    if tensor.dist != plan.input:
        raise LayoutMismatch("input tensor layout differs from the plan's input layout")
    if comm.size != plan.grid.size:
        raise GridMismatch(f"plan needs {plan.grid.size} ranks, communicator has {comm.size}")
    if plan.validate and not np.all(np.isfinite(tensor.data)):
        raise ValueError(f"non-finite input on rank {tensor.rank}")
    data = np.ascontiguousarray(tensor.data, dtype=plan.input.dtype(plan.precision))
    t = DistTensor(tensor.dist, LocalBlock(tensor.rank, tensor.block.extents, data))
    grid_comms(comm, plan.grid)  # one-time communicator setup stays outside the timed region
    start = comm.now()
    for stage in plan.stages:
        t = stage.run(t, comm, plan, timers)
    if timers is not None:
        timers.total += comm.now() - start
    return t


def execute_r2c_c2r_roundtrip(forward: Plan, backward: Plan, tensor: DistTensor, comm,
                              timers: TimingBreakdown | None = None) -> DistTensor:
    """Real-to-complex forward then complex-to-real backward; returns the real field."""
    if forward.kind is not TransformKind.R2C or backward.kind is not TransformKind.C2R:
        raise ValueError("expected an R2C forward plan and a C2R backward plan")
    if forward.dims != backward.dims or forward.grid != backward.grid:
        raise GridMismatch("forward and backward plans disagree on dims or grid")
    return execute(backward, execute(forward, tensor, comm, timers), comm, timers)
