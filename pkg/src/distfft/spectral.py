"""Spectral operators on distributed fields: gradient, divergence, Laplacian and its inverse.

Wavenumbers use the signed convention ``k = i`` for ``2i < N`` and ``k = i - N``
otherwise (so the Nyquist bin of an even axis is ``-N/2``), scaled by
``2*pi/L``. A half-spectrum last axis (real transforms) keeps ``k = i``.
First derivatives zero the Nyquist bin; ``|k|^2`` keeps its full magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonZeroMean, NotFrequencyLayout
from .layout import DistTensor, Distribution, LocalBlock, ProcessGrid, TransformKind
from .plan import execute, inverse_plan, make_plan


@dataclass(frozen=True)
class WavenumberMap:
    """Per-axis wavenumbers of one rank's frequency block, shaped for broadcasting."""

    index: tuple[np.ndarray, ...]
    scale: tuple[float, ...]
    nyquist: tuple[np.ndarray, ...]

    def k(self, axis: int) -> np.ndarray:
        return self.index[axis] * self.scale[axis]

    def derivative(self, axis: int) -> np.ndarray:
        """Multiplier ``i*k`` for d/dx_axis, Nyquist bin zeroed."""
        return np.where(self.nyquist[axis], 0.0, 1j * self.k(axis))

    def k2(self) -> np.ndarray:
        total = 0.0
        for a in range(len(self.index)):
            total = total + self.k(a) ** 2
        return total


def wavenumbers(dist: Distribution, rank: int, lengths=None, spatial_dims=None) -> WavenumberMap:
    """Wavenumbers for ``rank``'s block of a frequency layout.

    ``spatial_dims`` gives the untransformed axis lengths; when its last entry
    differs from the layout's, the last axis is treated as a half spectrum.
    """
    if not all(dist.hatted) or dist.memory_order != tuple(range(dist.ndim)):
        raise NotFrequencyLayout("wavenumbers need a fully transformed, xyz-ordered layout")
    nd = dist.ndim
    spatial_dims = tuple(spatial_dims or dist.shape)
    lengths = tuple(lengths or (2 * math.pi,) * nd)
    half = spatial_dims[-1] != dist.shape[-1]
    if half and dist.shape[-1] != spatial_dims[-1] // 2 + 1:
        raise NotFrequencyLayout(f"last axis {dist.shape[-1]} is not a half spectrum of {spatial_dims[-1]}")
    index, nyq = [], []
    for a, (off, cnt) in enumerate(dist.extents(rank)):
        n = spatial_dims[a]
        i = np.arange(off, off + cnt)
        if half and a == nd - 1:
            k = i
        else:
            k = np.where(2 * i < n, i, i - n)
        shape = [1] * nd
        shape[a] = cnt
        index.append(k.reshape(shape))
        nyq.append(((n % 2 == 0) & (i == n // 2)).reshape(shape))
    scale = tuple(2 * math.pi / L for L in lengths)
    return WavenumberMap(tuple(index), scale, tuple(nyq))


class SpectralOperators:
    """Differential operators backed by a forward/backward plan pair.

    ``kind`` is ``"r2c"`` for real fields (outputs exactly real) or ``"c2c"``.
    The decomposition follows the grid: one axis means slab, otherwise the
    general pencil-style plan.
    """

    def __init__(self, dims, grid, *, kind="r2c", lengths=None, **plan_opts):
        self.dims = tuple(dims)
        grid = grid if isinstance(grid, ProcessGrid) else ProcessGrid(tuple(grid))
        decomposition = "slab" if grid.ndim == 1 else "general"
        self.kind = TransformKind(kind)
        if self.kind is TransformKind.C2R:
            raise ValueError("use kind='r2c' for real fields")
        self.forward = make_plan(decomposition, self.dims, grid, self.kind, **plan_opts)
        self.backward = inverse_plan(self.forward)
        self.lengths = tuple(lengths or (2 * math.pi,) * len(self.dims))
        self._k = {}

    @property
    def input_layout(self) -> Distribution:
        return self.forward.input

    def wavenumbers(self, rank: int) -> WavenumberMap:
        if rank not in self._k:
            self._k[rank] = wavenumbers(self.forward.output, rank, self.lengths, self.dims)
        return self._k[rank]

    def _spectral(self, spectrum: DistTensor, data) -> DistTensor:
        return DistTensor(spectrum.dist, LocalBlock(spectrum.rank, spectrum.block.extents, data))

    def gradient(self, x: DistTensor, comm) -> list[DistTensor]:
        xh = execute(self.forward, x, comm)
        k = self.wavenumbers(x.rank)
        return [execute(self.backward, self._spectral(xh, xh.data * k.derivative(a)), comm)
                for a in range(len(self.dims))]

    def divergence(self, fields, comm) -> DistTensor:
        if len(fields) != len(self.dims):
            raise ValueError(f"need {len(self.dims)} components, got {len(fields)}")
        acc = None
        for a, f in enumerate(fields):
            fh = execute(self.forward, f, comm)
            term = fh.data * self.wavenumbers(f.rank).derivative(a)
            acc = term if acc is None else acc + term
            spec = fh
        return execute(self.backward, self._spectral(spec, acc), comm)

    def laplacian(self, x: DistTensor, comm) -> DistTensor:
        xh = execute(self.forward, x, comm)
        return execute(self.backward, self._spectral(xh, -self.wavenumbers(x.rank).k2() * xh.data), comm)

    def inverse_laplacian(self, x: DistTensor, comm, rtol: float = 1e-12) -> DistTensor:
        """Solve ``laplacian(u) = x`` with the mean of ``u`` pinned to zero.

        Raises NonZeroMean when ``|mean(x)| > rtol * rms(x)``.
        """
        xh = execute(self.forward, x, comm)
        k2 = self.wavenumbers(x.rank).k2()
        zero = np.broadcast_to(k2 == 0, xh.data.shape)
        dc = complex(xh.data[zero].sum()) if zero.any() else 0j
        n = math.prod(self.dims)
        dc, sumsq = comm.allreduce(np.array([dc, np.vdot(x.data, x.data).real]))
        mean, rms = abs(dc) / n, math.sqrt(abs(sumsq) / n)
        if mean > rtol * rms:
            raise NonZeroMean(f"field mean {mean:.3e} exceeds {rtol:g} x rms {rms:.3e}")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(zero, 0.0, xh.data / np.where(k2 == 0, 1.0, -k2))
        return execute(self.backward, self._spectral(xh, out), comm)
