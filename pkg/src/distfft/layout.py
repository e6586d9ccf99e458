"""Global shapes, process grids and per-rank blocks.

A :class:`Distribution` says which tensor axes are split over which process
grid axes. Splits follow the ceil-block rule: along an axis of length ``n``
shared by ``p`` ranks, rank ``r`` owns ``[r*ceil(n/p), min((r+1)*ceil(n/p), n))``.
Trailing ranks may therefore own nothing.

Local storage is row-major with the last axis fastest. An intermediate layout
may store its axes in a different physical order (``memory_order``); every
user-facing layout uses the identity order, so frequency data keeps the same
xyz memory layout as spatial data.
"""

from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (EmptyBlockWarning, GridMismatch, OutOfRange,
                     SlabTooManyRanks)


class TransformKind(enum.Enum):
    C2C = "c2c"
    R2C = "r2c"
    C2R = "c2r"


class Element(enum.Enum):
    REAL = "real"
    COMPLEX = "complex"


@dataclass(frozen=True)
class BlockMap:
    axis: int
    counts: tuple[int, ...]
    offsets: tuple[int, ...]

    @property
    def length(self) -> int:
        return sum(self.counts)

    def owner(self, index: int) -> int:
        block = self.counts[0]
        return index // block


def block_map(n: int, p: int, axis: int = 0) -> BlockMap:
    if n < 0 or p < 1:
        raise ValueError(f"invalid block map n={n}, p={p}")
    b = -(-n // p)
    offsets = tuple(min(r * b, n) for r in range(p))
    counts = tuple(min((r + 1) * b, n) - offsets[r] for r in range(p))
    return BlockMap(axis, counts, offsets)


@dataclass(frozen=True)
class ProcessGrid:
    shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if not self.shape or any(s < 1 for s in self.shape):
            raise GridMismatch(f"bad process grid {self.shape}")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def coords(self, rank: int) -> tuple[int, ...]:
        if not 0 <= rank < self.size:
            raise OutOfRange(f"rank {rank} outside grid {self.shape}")
        return tuple(int(c) for c in np.unravel_index(rank, self.shape))

    def rank_of(self, coords) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.shape))


def factor_grid(p: int, ndim: int) -> ProcessGrid:
    """Most balanced factorization of ``p`` into ``ndim`` factors.

    Minimizes the largest factor; ties go to the factorization with the
    larger leading factors, so the result is non-increasing (P0 >= P1 >= ...).
    """
    if p < 1 or ndim < 1:
        raise GridMismatch(f"cannot factor {p} ranks into {ndim} axes")

    def splits(n, k):
        if k == 1:
            yield (n,)
            return
        for d in range(1, n + 1):
            if n % d == 0:
                for rest in splits(n // d, k - 1):
                    yield (d,) + rest

    best = min(splits(p, ndim), key=lambda f: (max(f), tuple(-x for x in f)))
    return ProcessGrid(best)


def hat_dims(dims, kind: TransformKind) -> tuple[int, ...]:
    """Axis lengths after transformation: R2C/C2R halve the last axis."""
    dims = tuple(int(d) for d in dims)
    if kind is TransformKind.C2C:
        return dims
    return dims[:-1] + (dims[-1] // 2 + 1,)


def unhat_dims(hdims, last_is_odd: bool = False) -> tuple[int, ...]:
    """Spatial lengths of a half spectrum; the parity of the last axis is not recoverable."""
    hdims = tuple(int(d) for d in hdims)
    return hdims[:-1] + (2 * (hdims[-1] - 1) + int(last_is_odd),)


@dataclass(frozen=True)
class Distribution:
    shape: tuple[int, ...]
    grid: ProcessGrid
    axis_map: tuple[int | None, ...]
    hatted: tuple[bool, ...]
    element: Element = Element.COMPLEX
    memory_order: tuple[int, ...] = field(default=())

    def __post_init__(self):
        nd = len(self.shape)
        if not self.memory_order:
            object.__setattr__(self, "memory_order", tuple(range(nd)))
        if len(self.axis_map) != nd or len(self.hatted) != nd:
            raise GridMismatch("axis_map/hatted length must equal the tensor rank")
        used = [g for g in self.axis_map if g is not None]
        if len(set(used)) != len(used) or sorted(used) != list(range(self.grid.ndim)):
            raise GridMismatch(f"axis map {self.axis_map} does not cover grid {self.grid.shape}")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def tensor_axis(self, grid_axis: int) -> int:
        return self.axis_map.index(grid_axis)

    def block_map(self, axis: int) -> BlockMap | None:
        g = self.axis_map[axis]
        if g is None:
            return None
        return block_map(self.shape[axis], self.grid.shape[g], axis)

    def extents(self, rank: int) -> tuple[tuple[int, int], ...]:
        coords = self.grid.coords(rank)
        out = []
        for axis, n in enumerate(self.shape):
            bm = self.block_map(axis)
            if bm is None:
                out.append((0, n))
            else:
                c = coords[self.axis_map[axis]]
                out.append((bm.offsets[c], bm.counts[c]))
        return tuple(out)

    def local_shape(self, rank: int) -> tuple[int, ...]:
        return tuple(n for _, n in self.extents(rank))

    def storage_shape(self, rank: int) -> tuple[int, ...]:
        shp = self.local_shape(rank)
        return tuple(shp[a] for a in self.memory_order)

    def empty_ranks(self) -> list[int]:
        return [r for r in range(self.grid.size) if 0 in self.local_shape(r)]

    def dtype(self, precision: str = "double"):
        if self.element is Element.REAL:
            return np.float64 if precision == "double" else np.float32
        return np.complex128 if precision == "double" else np.complex64

    def with_memory_order(self, order) -> "Distribution":
        return replace(self, memory_order=tuple(order))


def _check_grid(dims, grid: ProcessGrid):
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise GridMismatch(f"invalid global dims {dims}")
    if grid.ndim > len(dims) - 1:
        raise GridMismatch(f"grid {grid.shape} has too many axes for dims {dims}")
    if grid.ndim == 1 and grid.size > dims[0]:
        raise SlabTooManyRanks(f"slab over {grid.size} ranks but N0={dims[0]}")


def _warn_empty(dist: Distribution, what: str) -> Distribution:
    empty = dist.empty_ranks()
    if empty:
        warnings.warn(f"{what}: ranks {empty} own no elements", EmptyBlockWarning, stacklevel=3)
    return dist


def spatial_layout(dims, grid: ProcessGrid, kind: TransformKind = TransformKind.C2C) -> Distribution:
    """Spatial input layout: axes 0..k-1 split by grid axes 0..k-1, the rest local."""
    dims = tuple(int(d) for d in dims)
    _check_grid(dims, grid)
    k = grid.ndim
    axis_map = tuple(a if a < k else None for a in range(len(dims)))
    element = Element.COMPLEX if kind is TransformKind.C2C else Element.REAL
    dist = Distribution(dims, grid, axis_map, (False,) * len(dims), element)
    return _warn_empty(dist, "spatial layout")


def frequency_layout(dims, grid: ProcessGrid, kind: TransformKind = TransformKind.C2C) -> Distribution:
    """Frequency layout: axis 0 local, axis g+1 split by grid axis g."""
    dims = tuple(int(d) for d in dims)
    _check_grid(dims, grid)
    k = grid.ndim
    axis_map = tuple(a - 1 if 1 <= a <= k else None for a in range(len(dims)))
    dist = Distribution(hat_dims(dims, kind), grid, axis_map, (True,) * len(dims), Element.COMPLEX)
    return _warn_empty(dist, "frequency layout")


def local_index(dist: Distribution, coord) -> tuple[int, int]:
    """Map a global coordinate to ``(rank, flat offset in that rank's storage)``."""
    coord = tuple(int(c) for c in coord)
    if len(coord) != dist.ndim or any(not 0 <= c < n for c, n in zip(coord, dist.shape)):
        raise OutOfRange(f"coordinate {coord} outside {dist.shape}")
    gcoords = [0] * dist.grid.ndim
    for axis, g in enumerate(dist.axis_map):
        if g is not None:
            gcoords[g] = dist.block_map(axis).owner(coord[axis])
    rank = dist.grid.rank_of(gcoords)
    ext = dist.extents(rank)
    local = [coord[a] - ext[a][0] for a in range(dist.ndim)]
    shape = [ext[a][1] for a in range(dist.ndim)]
    phys = [local[a] for a in dist.memory_order]
    pshape = [shape[a] for a in dist.memory_order]
    return rank, int(np.ravel_multi_index(phys, pshape))


def owned_coordinates(dist: Distribution, rank: int):
    """Global coordinates owned by ``rank``, in storage order."""
    ext = dist.extents(rank)
    ranges = [range(ext[a][0], ext[a][0] + ext[a][1]) for a in dist.memory_order]
    inv = np.argsort(dist.memory_order)
    for phys in itertools.product(*ranges):
        yield tuple(phys[i] for i in inv)


@dataclass
class LocalBlock:
    rank: int
    extents: tuple[tuple[int, int], ...]
    data: np.ndarray


@dataclass
class DistTensor:
    """One rank's view of a distributed tensor: the layout plus the owned block."""

    dist: Distribution
    block: LocalBlock

    @property
    def rank(self) -> int:
        return self.block.rank

    @property
    def data(self) -> np.ndarray:
        return self.block.data

    def logical(self) -> np.ndarray:
        """Owned block with axes in tensor order (a view when possible)."""
        return self.block.data.transpose(np.argsort(self.dist.memory_order))


def scatter(global_array, dist: Distribution, rank: int, dtype=None) -> DistTensor:
    """Cut ``rank``'s block out of a full global array."""
    g = np.asarray(global_array)
    if g.shape != dist.shape:
        raise GridMismatch(f"global array {g.shape} does not match layout {dist.shape}")
    ext = dist.extents(rank)
    sl = tuple(slice(o, o + n) for o, n in ext)
    data = np.ascontiguousarray(g[sl].transpose(dist.memory_order), dtype=dtype or g.dtype)
    return DistTensor(dist, LocalBlock(rank, ext, data))


def assemble(tensors) -> np.ndarray:
    """Rebuild the global array from every rank's DistTensor."""
    tensors = list(tensors)
    dist = tensors[0].dist
    out = np.zeros(dist.shape, dtype=tensors[0].data.dtype)
    for t in tensors:
        sl = tuple(slice(o, o + n) for o, n in t.block.extents)
        out[sl] = t.logical()
    return out
