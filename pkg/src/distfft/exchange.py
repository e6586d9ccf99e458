"""Global transposes: pack, all-to-all, unpack, and the pipelined staged exchange.

A global transpose moves one process-grid axis from tensor axis ``t`` (which
becomes local) to tensor axis ``s`` (which becomes split) inside the
sub-communicator of that grid axis. Each rank packs, for every peer, the
sub-block the peer will own, ships the sections, and unpacks what it
receives into its new block.

The pipelined exchange models devices whose data must be copied to a host
buffer before it can go on the wire. Instead of staging everything, sending,
and staging the result back, it cuts the traffic into per-peer chunks: each
chunk is staged into one of a few bounce buffers and sent right away, and
every received chunk is staged back as soon as it lands. Peers are visited in
rotating order, rank ``i`` sending to ``(i + j) % P`` at step ``j``; the data a
rank keeps for itself never touches staging or the wire.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (ArenaExhausted, CountMismatch, IncompatibleLayouts,
                     LengthMismatch)
from .layout import DistTensor, Distribution, LocalBlock, block_map

TRANSPOSE_TAG = 100
MAX_CHUNKS = 1024


# --------------------------------------------------------------------------
# local reshuffles


@dataclass(frozen=True)
class TransposeSpec:
    """Geometry of one rank's part of a global transpose."""

    gather_axis: int
    scatter_axis: int
    in_shape: tuple[int, ...]
    send_counts: tuple[int, ...]
    send_offsets: tuple[int, ...]
    recv_counts: tuple[int, ...]
    recv_offsets: tuple[int, ...]
    me: int
    in_order: tuple[int, ...] = ()
    out_order: tuple[int, ...] = ()
    comm: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        nd = len(self.in_shape)
        for name in ("in_order", "out_order"):
            if not getattr(self, name):
                object.__setattr__(self, name, tuple(range(nd)))
        if sum(self.send_counts) != self.in_shape[self.scatter_axis]:
            raise CountMismatch("send counts do not cover the scattered axis")
        if self.recv_counts[self.me] != self.in_shape[self.gather_axis]:
            raise CountMismatch("own receive count disagrees with the local gathered extent")

    @property
    def peers(self) -> int:
        return len(self.send_counts)

    @property
    def out_shape(self) -> tuple[int, ...]:
        shp = list(self.in_shape)
        shp[self.scatter_axis] = self.send_counts[self.me]
        shp[self.gather_axis] = sum(self.recv_counts)
        return tuple(shp)

    @property
    def batch(self) -> int:
        """Elements outside (before) both exchanged axes."""
        return math.prod(self.in_shape[: min(self.gather_axis, self.scatter_axis)])

    @property
    def super_element(self) -> int:
        """Contiguous run moved intact: the product of axes after both exchanged axes."""
        return math.prod(self.in_shape[max(self.gather_axis, self.scatter_axis) + 1:])

    def send_sizes(self) -> list[int]:
        rest = _prod_except(self.in_shape, self.scatter_axis)
        return [rest * c for c in self.send_counts]

    def recv_sizes(self) -> list[int]:
        rest = _prod_except(self.out_shape, self.gather_axis)
        return [rest * c for c in self.recv_counts]


def _prod_except(shape, axis):
    return math.prod(n for a, n in enumerate(shape) if a != axis)


def _inverse(order):
    return tuple(int(i) for i in np.argsort(order))


def pack(data: np.ndarray, spec: TransposeSpec) -> np.ndarray:
    """Gather each destination's section into one contiguous send buffer.

    Sections follow destination rank order; within a section elements are in
    row-major order of the tensor axes.
    """
    expected = tuple(spec.in_shape[a] for a in spec.in_order)
    if data.shape != expected:
        raise CountMismatch(f"block shape {data.shape} != expected {expected}")
    logical = data.transpose(_inverse(spec.in_order))
    out = np.empty(sum(spec.send_sizes()), dtype=data.dtype)
    pos = 0
    index = [slice(None)] * data.ndim
    for off, cnt in zip(spec.send_offsets, spec.send_counts):
        index[spec.scatter_axis] = slice(off, off + cnt)
        sec = logical[tuple(index)]
        out[pos:pos + sec.size] = sec.reshape(-1)
        pos += sec.size
    return out


def unpack(buffer: np.ndarray, spec: TransposeSpec) -> np.ndarray:
    """Scatter received sections (source rank order) into the new local block."""
    sizes = spec.recv_sizes()
    if buffer.size != sum(sizes):
        raise CountMismatch(f"received {buffer.size} elements, expected {sum(sizes)}")
    out_shape = spec.out_shape
    mem = np.empty(tuple(out_shape[a] for a in spec.out_order), dtype=buffer.dtype)
    logical = mem.transpose(_inverse(spec.out_order))
    index = [slice(None)] * len(out_shape)
    pos = 0
    for off, cnt, size in zip(spec.recv_offsets, spec.recv_counts, sizes):
        index[spec.gather_axis] = slice(off, off + cnt)
        piece_shape = list(out_shape)
        piece_shape[spec.gather_axis] = cnt
        logical[tuple(index)] = buffer[pos:pos + size].reshape(piece_shape)
        pos += size
    return mem


def local_transpose(buffer: np.ndarray, rows: int, cols: int, super_element: int = 1) -> np.ndarray:
    """Out-of-place transpose of a rows x cols matrix of super-elements."""
    buffer = np.asarray(buffer)
    if buffer.size != rows * cols * super_element:
        raise LengthMismatch(f"buffer of {buffer.size} != {rows}*{cols}*{super_element}")
    return np.ascontiguousarray(
        buffer.reshape(rows, cols, super_element).transpose(1, 0, 2)).reshape(-1)


# --------------------------------------------------------------------------
# exchanges


def _offsets(counts):
    return np.concatenate(([0], np.cumsum(counts))).astype(int)


def _check_counts(comm, send, send_counts, recv_counts):
    if len(send_counts) != comm.size or len(recv_counts) != comm.size:
        raise CountMismatch(f"need {comm.size} counts per side")
    if send.size != sum(send_counts):
        raise CountMismatch(f"send buffer has {send.size} elements, counts sum to {sum(send_counts)}")


def _decode(payload: bytes, dtype, expected: int, peer: int) -> np.ndarray:
    arr = np.frombuffer(payload, dtype=dtype)
    if arr.size != expected:
        raise CountMismatch(f"peer {peer} sent {arr.size} elements, expected {expected}")
    return arr


def all_to_all(comm, send: np.ndarray, send_counts, recv_counts, *, tag: int = TRANSPOSE_TAG,
               timers=None) -> np.ndarray:
    """Blocking personalized all-to-all over isend/irecv with receives pre-posted.

    Section ``j`` of rank ``i``'s send buffer becomes section ``i`` of rank
    ``j``'s receive buffer. Counts are in elements.
    """
    send = np.ascontiguousarray(send).reshape(-1)
    _check_counts(comm, send, send_counts, recv_counts)
    t0 = comm.now()
    p, me = comm.size, comm.rank
    soff, roff = _offsets(send_counts), _offsets(recv_counts)
    recv = np.empty(int(roff[-1]), dtype=send.dtype)
    rreqs = [(src, comm.irecv(src, tag)) for src in ((me - j) % p for j in range(1, p))]
    sreqs = [comm.isend(dst, tag, send[soff[dst]:soff[dst + 1]])
             for dst in ((me + j) % p for j in range(1, p))]
    recv[roff[me]:roff[me + 1]] = send[soff[me]:soff[me + 1]]
    for src, req in rreqs:
        recv[roff[src]:roff[src + 1]] = _decode(comm.wait(req), send.dtype, recv_counts[src], src)
    comm.waitall(sreqs)
    if timers is not None:
        timers.wire_comm += comm.now() - t0
    return recv


@dataclass(frozen=True)
class ExchangeSchedule:
    """Chunk order and buffering for the pipelined exchange of one rank."""

    rank: int
    size: int
    chunks_per_peer: int = 1
    staging_buffers: int = 2

    def __post_init__(self):
        if not 1 <= self.chunks_per_peer <= MAX_CHUNKS:
            raise ValueError(f"chunks_per_peer must be in [1, {MAX_CHUNKS}]")
        if self.staging_buffers < 1:
            raise ValueError("need at least one staging buffer")

    @property
    def send_order(self) -> tuple[tuple[int, int], ...]:
        return tuple(((self.rank + j) % self.size, c)
                     for j in range(1, self.size) for c in range(self.chunks_per_peer))

    @property
    def recv_order(self) -> tuple[tuple[int, int], ...]:
        return tuple(((self.rank - j) % self.size, c)
                     for j in range(1, self.size) for c in range(self.chunks_per_peer))

    def edges(self):
        """Dependency edges as ``(before, after)`` pairs of ``(op, peer, chunk)``."""
        out = []
        for k, (peer, c) in enumerate(self.send_order):
            out.append((("stage_in", peer, c), ("send", peer, c)))
            if k >= self.staging_buffers:
                prev = self.send_order[k - self.staging_buffers]
                out.append((("send",) + prev, ("stage_in", peer, c)))
        for peer, c in self.recv_order:
            out.append((("recv", peer, c), ("stage_out", peer, c)))
        return out


class StagingArena:
    """Bounded pool of fixed-size bounce buffers for staging copies.

    A buffer is handed out by :meth:`acquire` and becomes reusable only once
    the send reading from it has completed (:meth:`release`). Copies are
    metered: wall-clock seconds always, virtual seconds under a cost model.
    """

    def __init__(self, nbuffers: int, buffer_bytes: int, comm=None):
        if nbuffers < 1:
            raise ArenaExhausted("an arena needs at least one buffer")
        self.buffer_bytes = int(buffer_bytes)
        self._buffers = [np.empty(self.buffer_bytes, dtype=np.uint8) for _ in range(nbuffers)]
        self._free_at = [0.0] * nbuffers
        self._busy = [False] * nbuffers
        self.comm = comm
        self.copy_seconds = 0.0
        self.bytes_in = 0
        self.bytes_out = 0

    @property
    def nbuffers(self) -> int:
        return len(self._buffers)

    def acquire(self) -> int:
        free = [i for i, b in enumerate(self._busy) if not b]
        if not free:
            raise ArenaExhausted("every staging buffer still awaits its send")
        idx = min(free, key=lambda i: (self._free_at[i], i))
        self._busy[idx] = True
        return idx

    def free_at(self, idx: int) -> float:
        return self._free_at[idx]

    def release(self, idx: int, at: float = 0.0) -> None:
        self._busy[idx] = False
        self._free_at[idx] = at

    def stage_in(self, idx: int, src: np.ndarray, ready_at: float | None = None):
        """Copy ``src`` into buffer ``idx``; returns ``(view, start, end)``."""
        if not self._busy[idx]:
            raise ArenaExhausted(f"staging buffer {idx} used without acquire")
        raw = np.ascontiguousarray(src).view(np.uint8).reshape(-1)
        if raw.size > self.buffer_bytes:
            raise ArenaExhausted(f"chunk of {raw.size} bytes exceeds buffer size {self.buffer_bytes}")
        t = time.perf_counter()
        view = self._buffers[idx][: raw.size]
        view[...] = raw
        self.copy_seconds += time.perf_counter() - t
        self.bytes_in += raw.size
        start = end = 0.0
        if self.comm is not None and self.comm.virtual:
            start, end = self.comm.clock.stage("in", raw.size, ready_at)
        return view, start, end

    def stage_out(self, payload, dst: np.ndarray, ready_at: float | None = None):
        """Copy a received payload to its destination; returns ``(start, end)``."""
        t = time.perf_counter()
        dst[...] = np.frombuffer(payload, dtype=dst.dtype)
        self.copy_seconds += time.perf_counter() - t
        nbytes = dst.nbytes
        self.bytes_out += nbytes
        if self.comm is not None and self.comm.virtual:
            return self.comm.clock.stage("out", nbytes, ready_at)
        return 0.0, 0.0


def _chunk_bounds(lo: int, hi: int, k: int):
    # relative edges, so sender and receiver cut a section identically
    n = int(hi) - int(lo)
    edges = [int(lo) + (n * i) // k for i in range(k + 1)]
    return list(zip(edges[:-1], edges[1:]))


def _split_timing(comm, timers, t0, wire_start, wire_end, staged_wall):
    if timers is None:
        return
    elapsed = comm.now() - t0
    if comm.virtual:
        wire = min(elapsed, max(0.0, wire_end - wire_start)) if wire_end > wire_start else 0.0
        staging = elapsed - wire
    else:
        staging = min(staged_wall, elapsed)
        wire = elapsed - staging
    timers.staging_copy += staging
    timers.wire_comm += wire


def pipelined_all_to_all(comm, send: np.ndarray, send_counts, recv_counts,
                         arena: StagingArena | None = None, schedule: ExchangeSchedule | None = None,
                         *, tag: int = TRANSPOSE_TAG, timers=None) -> np.ndarray:
    """Chunked all-to-all interleaving staging copies with sends and receives.

    All receives are posted first. Each chunk is staged into a bounce buffer
    and sent immediately; each received chunk is staged out without waiting
    for later chunks. The result equals :func:`all_to_all` byte for byte.
    """
    send = np.ascontiguousarray(send).reshape(-1)
    _check_counts(comm, send, send_counts, recv_counts)
    p, me = comm.size, comm.rank
    schedule = schedule or ExchangeSchedule(me, p)
    if (schedule.rank, schedule.size) != (me, p):
        raise CountMismatch("schedule was built for another rank or size")
    k = schedule.chunks_per_peer
    soff, roff = _offsets(send_counts), _offsets(recv_counts)
    itemsize = send.dtype.itemsize
    if arena is None:
        biggest = max([(b - a) for peer in range(p) if peer != me
                       for a, b in _chunk_bounds(soff[peer], soff[peer + 1], k)] or [0])
        arena = StagingArena(schedule.staging_buffers, biggest * itemsize, comm)
    if arena.nbuffers < 2:
        raise ArenaExhausted("the pipelined exchange needs at least two staging buffers")
    if arena.comm is None:
        arena.comm = comm

    t0 = comm.now()
    wall0 = arena.copy_seconds
    recv = np.empty(int(roff[-1]), dtype=send.dtype)
    rreqs = []
    for peer, c in schedule.recv_order:
        lo, hi = _chunk_bounds(roff[peer], roff[peer + 1], k)[c]
        rreqs.append((peer, c, lo, hi, comm.irecv(peer, tag + c)))

    recv[roff[me]:roff[me + 1]] = send[soff[me]:soff[me + 1]]

    sreqs = []
    wire_start, wire_end = math.inf, -math.inf
    for peer, c in schedule.send_order:
        lo, hi = _chunk_bounds(soff[peer], soff[peer + 1], k)[c]
        idx = arena.acquire()
        view, _, staged = arena.stage_in(idx, send[lo:hi], ready_at=max(t0, arena.free_at(idx)))
        req = comm.isend(peer, tag + c, view, ready_at=staged)
        arena.release(idx, at=req.complete_at)
        sreqs.append(req)
        wire_start = min(wire_start, req.start)
        wire_end = max(wire_end, req.complete_at)

    finish = t0
    if comm.virtual:
        # stage-outs run in arrival order, as an event-driven engine would
        done = []
        for n, (peer, c, lo, hi, req) in enumerate(rreqs):
            payload = comm.wait(req, advance=False)
            done.append((req.complete_at, n, lo, hi, peer, payload))
        for arrival, _, lo, hi, peer, payload in sorted(done, key=lambda d: d[:2]):
            _check_chunk(payload, itemsize, hi - lo, peer)
            _, end = arena.stage_out(payload, recv[lo:hi], ready_at=arrival)
            wire_end = max(wire_end, arrival)
            finish = max(finish, end)
    else:
        for peer, c, lo, hi, req in rreqs:
            payload = comm.wait(req)
            _check_chunk(payload, itemsize, hi - lo, peer)
            arena.stage_out(payload, recv[lo:hi])
    for req in sreqs:
        comm.wait(req, advance=False)
        finish = max(finish, req.complete_at)
    comm.advance_to(finish)
    _split_timing(comm, timers, t0, wire_start, wire_end, arena.copy_seconds - wall0)
    return recv


def _check_chunk(payload, itemsize, expected, peer):
    if len(payload) != expected * itemsize:
        raise CountMismatch(f"peer {peer} sent {len(payload) // itemsize} elements, expected {expected}")


def staged_all_to_all(comm, send: np.ndarray, send_counts, recv_counts, *,
                      tag: int = TRANSPOSE_TAG, timers=None) -> np.ndarray:
    """Stage everything out, exchange, then stage everything back (no overlap).

    The baseline the pipelined exchange is measured against.
    """
    send = np.ascontiguousarray(send).reshape(-1)
    _check_counts(comm, send, send_counts, recv_counts)
    me = comm.rank
    soff, roff = _offsets(send_counts), _offsets(recv_counts)
    t0 = comm.now()
    itemsize = send.dtype.itemsize
    out_bytes = (send.size - send_counts[me]) * itemsize
    in_bytes = (int(roff[-1]) - recv_counts[me]) * itemsize

    w = time.perf_counter()
    host = send.copy()
    copy_wall = time.perf_counter() - w
    if comm.virtual:
        _, end = comm.clock.stage("in", out_bytes)
        comm.advance_to(end)
    wire_start = comm.now()
    recv_host = all_to_all(comm, host, send_counts, recv_counts, tag=tag)
    wire_end = comm.now()
    w = time.perf_counter()
    recv = recv_host.copy()
    copy_wall += time.perf_counter() - w
    if comm.virtual:
        _, end = comm.clock.stage("out", in_bytes)
        comm.advance_to(end)
    _split_timing(comm, timers, t0, wire_start, wire_end, copy_wall)
    return recv


# --------------------------------------------------------------------------
# global transpose


def grid_comms(comm, grid):
    """Sub-communicators, one per grid axis, of ranks sharing all other coordinates.

    The sub-communicator rank equals the grid coordinate along that axis.
    Cached on ``comm``; every rank must request the same grids in the same order.
    """
    key = ("grid", tuple(grid.shape))
    if key not in comm.cache:
        if grid.size != comm.size:
            raise IncompatibleLayouts(f"grid {grid.shape} needs {grid.size} ranks, have {comm.size}")
        coords = grid.coords(comm.rank)
        subs = []
        for g in range(grid.ndim):
            color = tuple(c for a, c in enumerate(coords) if a != g)
            subs.append(comm.split(color, coords[g]))
        comm.cache[key] = subs
    return comm.cache[key]


def moved_grid_axis(src: Distribution, dst: Distribution) -> int:
    """The single grid axis whose tensor axis differs between two layouts."""
    if src.shape != dst.shape or src.grid != dst.grid or src.element != dst.element:
        raise IncompatibleLayouts("layouts differ in more than the split axis")
    moved = [g for g in range(src.grid.ndim) if src.tensor_axis(g) != dst.tensor_axis(g)]
    if len(moved) != 1:
        raise IncompatibleLayouts(f"expected exactly one moved grid axis, found {moved}")
    g = moved[0]
    t, s = src.tensor_axis(g), dst.tensor_axis(g)
    if src.axis_map[s] is not None or dst.axis_map[t] is not None:
        raise IncompatibleLayouts("the target axis of a transpose must be local beforehand")
    return g


def transpose_spec(src: Distribution, dst: Distribution, rank: int, comm=None) -> TransposeSpec:
    g = moved_grid_axis(src, dst)
    t, s = src.tensor_axis(g), dst.tensor_axis(g)
    q = src.grid.shape[g]
    me = src.grid.coords(rank)[g]
    sbm = block_map(src.shape[s], q, s)
    rbm = block_map(src.shape[t], q, t)
    return TransposeSpec(t, s, src.local_shape(rank), sbm.counts, sbm.offsets,
                         rbm.counts, rbm.offsets, me, src.memory_order, dst.memory_order, comm)


def exchange(comm, send, send_counts, recv_counts, *, pipelined=False, chunks=1,
             staging_buffers=2, tag=TRANSPOSE_TAG, timers=None):
    """Dispatch to the pipelined, staged, or plain all-to-all.

    Without pipelining, staging is only modeled when the cost model charges for it.
    """
    if pipelined:
        schedule = ExchangeSchedule(comm.rank, comm.size, chunks, staging_buffers)
        return pipelined_all_to_all(comm, send, send_counts, recv_counts, schedule=schedule,
                                    tag=tag, timers=timers)
    if comm.models_staging:
        return staged_all_to_all(comm, send, send_counts, recv_counts, tag=tag, timers=timers)
    return all_to_all(comm, send, send_counts, recv_counts, tag=tag, timers=timers)


def _charge(comm, timers, field_name, wall_start, nbytes):
    if timers is None:
        return
    if comm.virtual:
        dt = nbytes * comm.cost_model.pack_inv_bandwidth
        comm.advance(dt)
    else:
        dt = time.perf_counter() - wall_start
    setattr(timers, field_name, getattr(timers, field_name) + dt)


def global_transpose(tensor: DistTensor, to: Distribution, comm, *, pipelined: bool = False,
                     chunks: int = 1, staging_buffers: int = 2, tag: int = TRANSPOSE_TAG,
                     timers=None) -> DistTensor:
    """Redistribute ``tensor`` into layout ``to`` (pack, exchange, unpack).

    ``comm`` is the world communicator whose ranks match the grid; the
    sub-communicator for the moved grid axis is derived from it.
    """
    src = tensor.dist
    if src == to:
        return tensor
    g = moved_grid_axis(src, to)
    sub = grid_comms(comm, src.grid)[g]
    spec = transpose_spec(src, to, tensor.rank, sub)

    w = time.perf_counter()
    buf = pack(tensor.data, spec)
    _charge(comm, timers, "pack", w, buf.nbytes)
    recv = exchange(sub, buf, spec.send_sizes(), spec.recv_sizes(), pipelined=pipelined,
                    chunks=chunks, staging_buffers=staging_buffers, tag=tag, timers=timers)
    w = time.perf_counter()
    data = unpack(recv, spec)
    _charge(comm, timers, "unpack", w, recv.nbytes)
    return DistTensor(to, LocalBlock(tensor.rank, to.extents(tensor.rank), data))
