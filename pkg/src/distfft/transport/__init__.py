"""Rank transport: point-to-point messaging, splitting, barriers, and a worker harness.

``spawn_world`` stands in for a job launcher: it runs one worker thread per
rank and hands each a world :class:`Communicator`.
"""

from __future__ import annotations

import socket
import threading

from ..errors import WorkerAborted, WorkerPanic
from .core import (CostModel, Communicator, RankClock, Request, _RankState,
                   simulated_clock)
from .local import LocalFabric
from .sockets import SocketEndpoint, connect_world, read_hostfile

BACKENDS = ("inprocess", "costmodel", "socket")

__all__ = ["BACKENDS", "CostModel", "Communicator", "RankClock", "Request",
           "connect_world", "read_hostfile", "simulated_clock", "spawn_world"]


def _endpoints(p, backend, jitter_seed):
    if backend in ("inprocess", "costmodel"):
        fabric = LocalFabric(p, jitter_seed)
        return [fabric.endpoint(r) for r in range(p)], fabric.abort
    if backend == "socket":
        abort = threading.Event()
        listeners = [socket.create_server(("127.0.0.1", 0)) for _ in range(p)]
        addresses = [ls.getsockname()[:2] for ls in listeners]
        eps = [SocketEndpoint(r, addresses, abort, listeners[r]) for r in range(p)]
        return eps, abort
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def spawn_world(p: int, body, *, backend: str = "inprocess", cost_model: CostModel | None = None,
                timeout: float = 30.0, jitter_seed: int | None = None, args=()):
    """Run ``body(comm, *args)`` on ``p`` ranks and return the per-rank results.

    The first failing rank cancels the others; its exception is re-raised as
    :class:`WorkerPanic` carrying the rank. Receives that wait longer than
    ``timeout`` seconds fail with a :class:`~distfft.errors.Deadlock`.
    """
    if p < 1:
        raise ValueError("need at least one rank")
    if backend == "costmodel" and cost_model is None:
        cost_model = CostModel()
    if backend != "costmodel":
        cost_model = None
    endpoints, abort = _endpoints(p, backend, jitter_seed)
    results = [None] * p
    failures = []
    lock = threading.Lock()

    def run(rank):
        clock = RankClock(cost_model) if cost_model is not None else None
        comm = Communicator(endpoints[rank], range(p), rank, 0, _RankState(clock), timeout)
        try:
            results[rank] = body(comm, *args)
        except BaseException as exc:  # noqa: BLE001 - re-raised in the caller
            with lock:
                failures.append((rank, exc))
            abort.set()

    threads = [threading.Thread(target=run, args=(r,), name=f"rank-{r}", daemon=True) for r in range(p)]
    try:
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        for ep in endpoints:
            ep.close()
    if failures:
        primary = [f for f in failures if not isinstance(f[1], WorkerAborted)] or failures
        rank, exc = primary[0]
        raise WorkerPanic(rank, exc) from exc
    return results
