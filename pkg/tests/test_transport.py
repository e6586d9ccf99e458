import itertools
import socket
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from distfft.errors import Deadlock, InvalidRank, TagMismatchTimeout, WorkerPanic
from distfft.transport import CostModel, simulated_clock, spawn_world
from distfft.transport.sockets import HEADER, MAGIC, encode_frame, read_frame

BACKENDS = ["inprocess", "costmodel", "socket"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_spawn_examples(backend):
    assert spawn_world(1, lambda c: c.rank, backend=backend) == [0]

    def body(c):
        c.barrier()
        return c.rank

    assert spawn_world(4, body, backend=backend) == [0, 1, 2, 3]


@pytest.mark.parametrize("backend", BACKENDS)
def test_kib_payload_intact(backend):
    blob = np.random.default_rng(0).integers(0, 256, 1024, dtype=np.uint8).tobytes()

    def body(c):
        if c.rank == 0:
            c.send(1, 7, blob)
            return None
        return c.recv(0, 7)

    assert spawn_world(2, body, backend=backend)[1] == blob


@pytest.mark.parametrize("backend", BACKENDS)
def test_zero_length_and_fifo(backend):
    def body(c):
        if c.rank == 0:
            for payload in (b"", b"A", b"B"):
                c.isend(1, 3, payload)
            return None
        return [c.recv(0, 3) for _ in range(3)]

    assert spawn_world(2, body, backend=backend)[1] == [b"", b"A", b"B"]


def test_fifo_under_jitter():
    def body(c):
        p = c.size
        for d in range(p):
            if d != c.rank:
                for i in range(20):
                    c.isend(d, 1, f"{c.rank}:{i}".encode())
        got = {}
        for s in range(p):
            if s != c.rank:
                got[s] = [c.recv(s, 1).decode() for _ in range(20)]
        return got

    for seed in range(5):
        for rank, got in enumerate(spawn_world(4, body, jitter_seed=seed)):
            for s, msgs in got.items():
                assert msgs == [f"{s}:{i}" for i in range(20)]


def test_pairwise_exchange_every_completion_order():
    orders = list(itertools.permutations(range(3)))

    def body(c, order):
        peers = [(c.rank + j) % 4 for j in range(1, 4)]
        reqs = [c.irecv(p, 5) for p in peers]
        sends = [c.isend(p, 5, bytes([c.rank, p])) for p in peers]
        got = {}
        for i in order:
            got[peers[i]] = c.wait(reqs[i])
        c.waitall(sends)
        return got

    for n, order in enumerate(orders):
        res = spawn_world(4, body, args=(order,), jitter_seed=n, timeout=10)
        for r, got in enumerate(res):
            assert got == {p: bytes([p, r]) for p in range(4) if p != r}


def test_deadlock_times_out():
    def body(c):
        if c.rank == 1:
            c.recv(0, 9)

    with pytest.raises(WorkerPanic) as info:
        spawn_world(2, body, timeout=0.3)
    assert info.value.rank == 1
    assert isinstance(info.value.exc, TagMismatchTimeout)
    assert isinstance(info.value.exc, Deadlock)


def test_worker_failure_carries_rank():
    def body(c):
        if c.rank == 2:
            raise RuntimeError("boom")
        c.barrier()

    with pytest.raises(WorkerPanic) as info:
        spawn_world(3, body, timeout=5)
    assert info.value.rank == 2 and "boom" in str(info.value.exc)


def test_invalid_rank():
    def body(c):
        c.isend(5, 0, b"x")

    with pytest.raises(WorkerPanic) as info:
        spawn_world(2, body)
    assert isinstance(info.value.exc, InvalidRank)


@pytest.mark.parametrize("backend", BACKENDS)
def test_split_examples(backend):
    def body(c):
        sub = c.split([0, 0, 1, 1][c.rank], c.rank)
        return sub.size, sub.rank

    assert spawn_world(4, body, backend=backend) == [(2, 0), (2, 1), (2, 0), (2, 1)]

    def rows(c):
        row = c.rank // 3
        sub = c.split(row, c.rank % 3)
        return sub.allgather_obj(c.rank)

    res = spawn_world(6, rows, backend=backend)
    assert res == [[0, 1, 2]] * 3 + [[3, 4, 5]] * 3

    def single(c):
        sub = c.split(0, 0)
        return sub.size, sub.rank, sub.allreduce(41) + 1

    assert spawn_world(1, single, backend=backend) == [(1, 0, 42)]


def test_split_key_orders_ranks():
    def body(c):
        return c.split(0, -c.rank).rank

    assert spawn_world(3, body) == [2, 1, 0]


def test_sub_communicators_do_not_cross_talk():
    def body(c):
        sub = c.split(c.rank % 2, c.rank)
        peer = 1 - sub.rank
        sub.isend(peer, 1, b"sub")
        c.isend((c.rank + 1) % 4, 1, b"world")
        return sub.recv(peer, 1), c.recv((c.rank - 1) % 4, 1)

    assert spawn_world(4, body) == [(b"sub", b"world")] * 4


def test_virtual_message_time():
    cm = CostModel(latency=1e-6, inv_bandwidth=1e-9)

    def body(c):
        if c.rank == 0:
            c.send(1, 0, bytes(10**6))
        else:
            c.recv(0, 0)
        return simulated_clock(c)

    t = spawn_world(2, body, backend="costmodel", cost_model=cm)
    assert t[1] == pytest.approx(1.001e-3, rel=1e-12)


def test_independent_messages_overlap():
    cm = CostModel(latency=1e-6, inv_bandwidth=1e-9)

    def body(c):
        if c.rank < 2:
            c.send(c.rank + 2, 0, bytes(10**6 * (c.rank + 1)))
            return None
        c.recv(c.rank - 2, 0)
        return simulated_clock(c)

    t = spawn_world(4, body, backend="costmodel", cost_model=cm)
    assert t[2] == pytest.approx(1.001e-3, rel=1e-12)
    assert t[3] == pytest.approx(2.001e-3, rel=1e-12)
    assert max(t[2:]) < t[2] + t[3]


def test_simulated_clock_requires_cost_model():
    with pytest.raises(WorkerPanic):
        spawn_world(1, simulated_clock)


def test_deterministic_results():
    def body(c):
        rng = np.random.default_rng(c.rank)
        out = c.allgather_obj(rng.standard_normal(4).tobytes())
        return b"".join(out)

    assert spawn_world(4, body) == spawn_world(4, body) == spawn_world(4, body, backend="socket")


def test_frame_layout():
    frame = encode_frame(3, 0x10005, b"abc")
    assert frame[:4] == MAGIC == b"DFT1"
    assert HEADER.unpack(frame[:HEADER.size]) == (b"DFT1", 3, 0x10005, 3)
    a, b = socket.socketpair()
    try:
        a.sendall(frame)
        assert read_frame(b) == (3, 0x10005, b"abc")
    finally:
        a.close()
        b.close()


def _free_ports(n):
    socks = [socket.create_server(("127.0.0.1", 0)) for _ in range(n)]
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def test_separate_processes_over_sockets(tmp_path):
    ports = _free_ports(2)
    hostfile = tmp_path / "hosts"
    hostfile.write_text("".join(f"127.0.0.1:{p}\n" for p in ports))
    script = textwrap.dedent(f"""
        import sys
        from distfft.transport import connect_world, read_hostfile
        rank = int(sys.argv[1])
        comm = connect_world(rank, read_hostfile({str(hostfile)!r}), timeout=20)
        print(comm.allreduce(rank + 1), flush=True)
        comm.barrier()
    """)
    procs = [subprocess.Popen([sys.executable, "-c", script, str(r)], stdout=subprocess.PIPE,
                              stderr=subprocess.PIPE, text=True) for r in range(2)]
    outs = [p.communicate(timeout=60) for p in procs]
    assert [p.returncode for p in procs] == [0, 0], outs
    assert [o[0].strip() for o in outs] == ["3", "3"]
