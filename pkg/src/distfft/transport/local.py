"""In-process delivery: one mailbox per world rank, shared by all workers."""

from __future__ import annotations

import random
import threading
import time
from collections import defaultdict, deque

from ..errors import TagMismatchTimeout, WorkerAborted


class Mailbox:
    """Per-destination message store with per-(source, ctx, tag) FIFO queues."""

    def __init__(self, abort: threading.Event):
        self._cv = threading.Condition()
        self._queues = defaultdict(deque)
        self._abort = abort

    def put(self, key, item) -> None:
        with self._cv:
            self._queues[key].append(item)
            self._cv.notify_all()

    def get(self, key, timeout: float):
        deadline = time.monotonic() + timeout
        with self._cv:
            while True:
                q = self._queues.get(key)
                if q:
                    return q.popleft()
                if self._abort.is_set():
                    raise WorkerAborted("a sibling rank failed")
                left = deadline - time.monotonic()
                if left <= 0:
                    raise TagMismatchTimeout(f"no message for (source, ctx, tag)={key} after {timeout}s")
                self._cv.wait(min(left, 0.05))


class LocalFabric:
    def __init__(self, size: int, jitter_seed: int | None = None):
        self.size = size
        self.abort = threading.Event()
        self.boxes = [Mailbox(self.abort) for _ in range(size)]
        self.jitter_seed = jitter_seed

    def endpoint(self, rank: int) -> "LocalEndpoint":
        return LocalEndpoint(self, rank)


class LocalEndpoint:
    def __init__(self, fabric: LocalFabric, rank: int):
        self.fabric = fabric
        self.rank = rank
        self._rng = None
        if fabric.jitter_seed is not None:
            self._rng = random.Random(fabric.jitter_seed * 7919 + rank)

    def _jitter(self):
        if self._rng is not None and self._rng.random() < 0.5:
            time.sleep(self._rng.random() * 2e-4)

    def post(self, dst: int, key, payload: bytes, arrival: float) -> None:
        self._jitter()
        self.fabric.boxes[dst].put((self.rank,) + key, (payload, arrival))

    def take(self, src: int, key, timeout: float):
        self._jitter()
        return self.fabric.boxes[self.rank].get((src,) + key, timeout)

    def close(self):
        pass
