"""Running over TCP sockets and moving data through tensor files.

The socket backend speaks a small framed protocol; here every rank runs in
this process, but ``distfft.transport.connect_world`` lets separate processes
join the same job from a host file.
"""

import tempfile
from pathlib import Path

import numpy as np

from distfft import assemble, execute, plan_pencil, scatter, spawn_world
from distfft.bench.tensorio import read_distributed, read_tensor, write_distributed, write_tensor

dims = (8, 6, 4)
x = np.random.default_rng(9).standard_normal(dims)
plan = plan_pencil(dims, (2, 2))

with tempfile.TemporaryDirectory() as tmp:
    src, dst = Path(tmp) / "x.dtns", Path(tmp) / "xhat.dtns"
    write_tensor(src, x)

    def body(comm):
        t = read_distributed(src, plan.input, comm)  # rank 0 reads and ships blocks
        y = execute(plan, t, comm)
        write_distributed(dst, y, comm)  # rank 0 gathers and writes
        return y

    over_tcp = assemble(spawn_world(4, body, backend="socket"))
    in_process = assemble(spawn_world(4, body))
    print("socket and in-process results identical:", over_tcp.tobytes() == in_process.tobytes())
    print("file holds", read_tensor(dst).shape, read_tensor(dst).dtype)
