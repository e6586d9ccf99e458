"""Communicators, requests and the virtual clock.

A :class:`Communicator` is a handle owned by exactly one rank worker. It talks
to an *endpoint* that moves byte payloads between world ranks; endpoints exist
for in-process delivery (:mod:`.local`) and TCP sockets (:mod:`.sockets`).

Cost-model accounting
---------------------
When a :class:`CostModel` is attached, every rank carries a :class:`RankClock`
holding virtual seconds. The rules are:

* host operations advance ``now`` by their modeled cost (see ``advance``);
* a send starts at ``max(now, nic_free, ready_at)``, keeps the rank's send
  port busy for ``bytes * inv_bandwidth`` and arrives at the destination
  ``latency`` later; sends from *different* ranks never contend;
* waiting on a receive moves ``now`` up to the arrival time;
* staging copies run on two copy engines per rank (``"in"`` towards the
  wire, ``"out"`` back from it), each serial, each costing
  ``bytes * staging_inv_bandwidth``, and they do not block the host.

Overlapping operations therefore advance the clock by the maximum of their
durations, not the sum.
"""

from __future__ import annotations

import pickle
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidRank

MAX_USER_TAG = 0xF000
_TAG_GATHER = 0xF001
_TAG_BCAST = 0xF002
_TAG_BARRIER = 0xF003
_TAG_BARRIER_ACK = 0xF004


@dataclass(frozen=True)
class CostModel:
    """Latency/bandwidth machine model; every parameter in seconds (per unit)."""

    latency: float = 1e-6
    inv_bandwidth: float = 1e-9
    staging_inv_bandwidth: float = 0.0
    flop_time: float = 1e-10
    pack_inv_bandwidth: float = 1e-10

    def __post_init__(self):
        for name in ("latency", "inv_bandwidth", "staging_inv_bandwidth",
                     "flop_time", "pack_inv_bandwidth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def message_time(self, nbytes: int) -> float:
        return self.latency + nbytes * self.inv_bandwidth


@dataclass
class RankClock:
    model: CostModel
    now: float = 0.0
    nic_free: float = 0.0
    engines: dict = field(default_factory=lambda: {"in": 0.0, "out": 0.0})

    def send(self, nbytes: int, ready_at: float | None = None):
        """Schedule a send; returns ``(start, local completion, arrival)``."""
        start = max(self.now, self.nic_free, self.now if ready_at is None else ready_at)
        busy = nbytes * self.model.inv_bandwidth
        self.nic_free = start + busy
        return start, start + busy, start + self.model.latency + busy

    def stage(self, engine: str, nbytes: int, ready_at: float | None = None):
        """Schedule a staging copy; returns ``(start, end)``."""
        start = max(self.engines[engine], self.now if ready_at is None else ready_at)
        end = start + nbytes * self.model.staging_inv_bandwidth
        self.engines[engine] = end
        return start, end


class _RankState:
    """Per world rank state shared by every communicator of that rank."""

    def __init__(self, clock: RankClock | None):
        self.clock = clock
        self.next_ctx = 1


class Request:
    """Handle for a pending send or receive."""

    def __init__(self, comm, kind, peer, tag, payload=None, complete_at=0.0, start=0.0):
        self.comm = comm
        self.kind = kind
        self.peer = peer
        self.tag = tag
        self.payload = payload
        self.complete_at = complete_at
        self.start = start
        self.done = kind == "send"

    def wait(self):
        return self.comm.wait(self)

    def __repr__(self):
        return f"<Request {self.kind} peer={self.peer} tag={self.tag} done={self.done}>"


def _as_bytes(payload) -> bytes:
    if isinstance(payload, np.ndarray):
        return payload.tobytes()
    return bytes(payload)


class Communicator:
    def __init__(self, endpoint, members, rank, ctx, state: _RankState, timeout: float):
        self._ep = endpoint
        self.members = tuple(members)
        self.rank = rank
        self.ctx = ctx
        self._state = state
        self.timeout = timeout
        self._cache = {}

    # ---- identity
    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def group(self) -> int:
        return self.ctx

    @property
    def world_rank(self) -> int:
        return self.members[self.rank]

    @property
    def cache(self) -> dict:
        """Scratch dict for derived communicators (all ranks fill it in the same order)."""
        return self._cache

    # ---- clock
    @property
    def clock(self) -> RankClock | None:
        return self._state.clock

    @property
    def virtual(self) -> bool:
        return self._state.clock is not None

    @property
    def cost_model(self) -> CostModel | None:
        return self._state.clock.model if self.virtual else None

    @property
    def models_staging(self) -> bool:
        return self.virtual and self.cost_model.staging_inv_bandwidth > 0

    def now(self) -> float:
        return self._state.clock.now if self.virtual else time.perf_counter()

    def advance(self, seconds: float) -> None:
        if self.virtual:
            self._state.clock.now += seconds

    def advance_to(self, t: float) -> None:
        if self.virtual:
            self._state.clock.now = max(self._state.clock.now, t)

    # ---- point to point
    def _check(self, peer, tag, internal=False):
        if not 0 <= peer < self.size:
            raise InvalidRank(f"rank {peer} not in communicator of size {self.size}")
        limit = 0x10000 if internal else MAX_USER_TAG
        if not 0 <= tag < limit:
            raise ValueError(f"tag {tag} out of range")

    def isend(self, dest: int, tag: int, payload, ready_at: float | None = None, *, _internal=False) -> Request:
        self._check(dest, tag, _internal)
        data = _as_bytes(payload)
        start = done = arrival = 0.0
        if self.virtual:
            start, done, arrival = self._state.clock.send(len(data), ready_at)
        self._ep.post(self.members[dest], (self.ctx, tag), data, arrival)
        return Request(self, "send", dest, tag, complete_at=done, start=start)

    def irecv(self, source: int, tag: int, *, _internal=False) -> Request:
        self._check(source, tag, _internal)
        return Request(self, "recv", source, tag)

    def wait(self, req: Request, advance: bool = True):
        """Complete a request; receives return the payload bytes."""
        if req.kind == "send":
            if advance:
                self.advance_to(req.complete_at)
            return None
        if not req.done:
            payload, arrival = self._ep.take(self.members[req.peer], (self.ctx, req.tag), self.timeout)
            req.payload, req.complete_at, req.done = payload, arrival, True
        if advance:
            self.advance_to(req.complete_at)
        return req.payload

    def waitall(self, reqs, advance: bool = True):
        return [self.wait(r, advance) for r in reqs]

    def send(self, dest, tag, payload):
        self.wait(self.isend(dest, tag, payload))

    def recv(self, source, tag) -> bytes:
        return self.wait(self.irecv(source, tag))

    # ---- object collectives (pickle based, root-relayed)
    def gather_obj(self, obj, root: int = 0):
        data = pickle.dumps(obj)
        if self.rank != root:
            self.wait(self.isend(root, _TAG_GATHER, data, _internal=True))
            return None
        out = [None] * self.size
        out[root] = obj
        for r in range(self.size):
            if r != root:
                out[r] = pickle.loads(self.wait(self.irecv(r, _TAG_GATHER, _internal=True)))
        return out

    def bcast_obj(self, obj, root: int = 0):
        if self.rank == root:
            data = pickle.dumps(obj)
            reqs = [self.isend(r, _TAG_BCAST, data, _internal=True) for r in range(self.size) if r != root]
            self.waitall(reqs)
            return obj
        return pickle.loads(self.wait(self.irecv(root, _TAG_BCAST, _internal=True)))

    def allgather_obj(self, obj):
        return self.bcast_obj(self.gather_obj(obj))

    def allreduce(self, value, op=None):
        """Reduce in rank order (deterministic) and share the result."""
        values = self.allgather_obj(value)
        if op is None:
            total = values[0]
            for v in values[1:]:
                total = total + v
            return total
        return op(values)

    def barrier(self) -> None:
        if self.size == 1:
            return
        if self.rank == 0:
            self.waitall([self.irecv(r, _TAG_BARRIER, _internal=True) for r in range(1, self.size)])
            self.waitall([self.isend(r, _TAG_BARRIER_ACK, b"", _internal=True) for r in range(1, self.size)])
        else:
            self.wait(self.isend(0, _TAG_BARRIER, b"", _internal=True))
            self.wait(self.irecv(0, _TAG_BARRIER_ACK, _internal=True))

    def split(self, color, key=0) -> "Communicator | None":
        """Partition by ``color``; new ranks ordered by ``(key, old rank)``.

        Every member must call. A ``None`` color yields ``None``.
        """
        entries = self.allgather_obj((color, key, self._state.next_ctx))
        ctx = max(e[2] for e in entries)
        self._state.next_ctx = ctx + 1
        if ctx >= 0x10000:
            raise RuntimeError("communicator context ids exhausted")
        if color is None:
            return None
        mine = sorted((k, r) for r, (c, k, _) in enumerate(entries) if c == color)
        members = [self.members[r] for _, r in mine]
        new_rank = [r for _, r in mine].index(self.rank)
        return Communicator(self._ep, members, new_rank, ctx, self._state, self.timeout)

    def __repr__(self):
        return f"<Communicator rank={self.rank}/{self.size} ctx={self.ctx}>"


def simulated_clock(comm: Communicator) -> float:
    """Virtual seconds elapsed on this rank under the cost model."""
    if not comm.virtual:
        raise RuntimeError("simulated_clock needs the cost-model backend")
    return comm.clock.now
