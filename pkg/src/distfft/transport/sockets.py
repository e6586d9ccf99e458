"""TCP transport.

Frames are ``b"DFT1"``, u32 source world rank, u32 tag, u64 payload length
(little-endian), then the raw payload. The on-wire tag packs the communicator
context id in its upper 16 bits and the user tag in the lower 16.

Ranks rendezvous through a list of ``host:port`` addresses, one per world
rank, given either directly or in a host file (one address per line, ``#``
comments allowed).
"""

from __future__ import annotations

import socket
import struct
import threading
import time

from ..errors import TransportError
from .core import Communicator, _RankState
from .local import Mailbox

MAGIC = b"DFT1"
HEADER = struct.Struct("<4sIIQ")


def encode_frame(source: int, tag: int, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, source, tag, len(payload)) + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket):
    """Read one frame; returns ``(source, tag, payload)`` or ``None`` at EOF."""
    head = _recv_exact(sock, HEADER.size)
    if head is None:
        return None
    magic, source, tag, length = HEADER.unpack(head)
    if magic != MAGIC:
        raise TransportError(f"bad frame magic {magic!r}")
    payload = _recv_exact(sock, length) if length else b""
    if payload is None:
        raise TransportError("connection closed mid-frame")
    return source, tag, payload


def parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.strip().rpartition(":")
    return host or "127.0.0.1", int(port)


def read_hostfile(path) -> list[tuple[str, int]]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                out.append(parse_address(line))
    return out


class SocketEndpoint:
    def __init__(self, rank: int, addresses, abort: threading.Event,
                 listener: socket.socket | None = None, connect_timeout: float = 30.0):
        self.rank = rank
        self.connect_timeout = connect_timeout
        self.addresses = [tuple(a) for a in addresses]
        self.box = Mailbox(abort)
        self._out = {}
        self._locks = {}
        self._lock = threading.Lock()
        self._threads = []
        self._closed = False
        if listener is None:
            listener = socket.create_server(self.addresses[rank])
        self._listener = listener
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            t = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _read_loop(self, conn):
        with conn:
            while True:
                try:
                    frame = read_frame(conn)
                except (OSError, TransportError):
                    return
                if frame is None:
                    return
                source, wire_tag, payload = frame
                self.box.put((source, wire_tag >> 16, wire_tag & 0xFFFF), (payload, 0.0))

    def _conn(self, dst):
        with self._lock:
            if dst not in self._out:
                s = self._dial(self.addresses[dst])
                s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._out[dst] = s
                self._locks[dst] = threading.Lock()
            return self._out[dst], self._locks[dst]

    def _dial(self, address):
        # peers in other processes may not be listening yet
        deadline = time.monotonic() + self.connect_timeout
        while True:
            try:
                return socket.create_connection(address)
            except (ConnectionRefusedError, ConnectionResetError):
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.05)

    def post(self, dst: int, key, payload: bytes, arrival: float) -> None:
        ctx, tag = key
        if dst == self.rank:
            self.box.put((self.rank, ctx, tag), (payload, arrival))
            return
        sock, lock = self._conn(dst)
        with lock:
            sock.sendall(encode_frame(self.rank, (ctx << 16) | tag, payload))

    def take(self, src: int, key, timeout: float):
        return self.box.get((src,) + key, timeout)

    def close(self):
        self._closed = True
        for s in self._out.values():
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
        self._listener.close()


def connect_world(rank: int, addresses, timeout: float = 30.0) -> Communicator:
    """World communicator for a process taking part in a socket job.

    ``addresses`` lists every rank's ``(host, port)``; this process listens
    on ``addresses[rank]``.
    """
    addresses = [parse_address(a) if isinstance(a, str) else tuple(a) for a in addresses]
    ep = SocketEndpoint(rank, addresses, threading.Event(), connect_timeout=timeout)
    return Communicator(ep, range(len(addresses)), rank, 0, _RankState(None), timeout)
