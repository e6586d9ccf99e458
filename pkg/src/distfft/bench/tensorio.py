"""Binary tensor files and rank-0 scatter/gather around them.

Layout: ``b"DTNS"``, u32 version (1), u8 element kind, u32 axis count, u64
per-axis lengths, then the little-endian row-major payload.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import BadMagic, DimMismatch, TruncatedFile
from ..layout import DistTensor, Distribution, LocalBlock, assemble, scatter

MAGIC = b"DTNS"
VERSION = 1
KINDS = {0: np.dtype("<f8"), 1: np.dtype("<c16"), 2: np.dtype("<f4"), 3: np.dtype("<c8")}
_CODES = {dt: code for code, dt in KINDS.items()}
_PREFIX = struct.Struct("<4sIBI")
_TAG = 0x0D75


def _code_for(dtype) -> int:
    dt = np.dtype(dtype).newbyteorder("<")
    if dt.kind in "iub":
        dt = np.dtype("<f8")
    if dt not in _CODES:
        raise TypeError(f"unsupported element type {dtype}")
    return _CODES[dt]


def encode_tensor(array) -> bytes:
    a = np.asarray(array)
    code = _code_for(a.dtype)
    head = _PREFIX.pack(MAGIC, VERSION, code, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + np.ascontiguousarray(a, dtype=KINDS[code]).tobytes()


def decode_tensor(raw: bytes, dims=None) -> np.ndarray:
    if len(raw) < 4:
        raise TruncatedFile("file shorter than its magic")
    if raw[:4] != MAGIC:
        raise BadMagic(f"bad magic {raw[:4]!r}")
    if len(raw) < _PREFIX.size:
        raise TruncatedFile("incomplete header")
    _, version, code, ndim = _PREFIX.unpack_from(raw)
    if version != VERSION:
        raise BadMagic(f"unsupported version {version}")
    if code not in KINDS:
        raise BadMagic(f"unknown element kind {code}")
    end = _PREFIX.size + 8 * ndim
    if len(raw) < end:
        raise TruncatedFile("incomplete dimension list")
    shape = struct.unpack_from(f"<{ndim}Q", raw, _PREFIX.size)
    if dims is not None and tuple(dims) != tuple(shape):
        raise DimMismatch(f"file holds {shape}, expected {tuple(dims)}")
    dt = KINDS[code]
    need = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    body = len(raw) - end
    if body < need:
        raise TruncatedFile(f"payload has {body} bytes, header implies {need}")
    if body > need:
        raise DimMismatch(f"payload has {body - need} bytes beyond the declared shape")
    return np.frombuffer(raw, dtype=dt, offset=end).reshape(shape).astype(dt.newbyteorder("="))


def write_tensor(path, array) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(array))


def read_tensor(path, dims=None) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read(), dims)


def promote(array: np.ndarray, dist: Distribution, precision: str = "double") -> np.ndarray:
    """Apply the element-kind rule: real data feeding a complex layout becomes complex."""
    want = np.dtype(dist.dtype(precision))
    if np.iscomplexobj(array) and want.kind != "c":
        raise TypeError("complex data cannot feed a real-input transform")
    return array.astype(want, copy=False)


def read_distributed(path, dist: Distribution, comm, root: int = 0, precision: str = "double") -> DistTensor:
    """Rank ``root`` reads the file and ships each rank its block."""
    status = None
    if comm.rank == root:
        try:
            full = promote(read_tensor(path, dist.shape), dist, precision)
            status = ("ok", full.dtype.str)
        except Exception as exc:  # forwarded so every rank fails alike
            status = ("err", exc)
    status = comm.bcast_obj(status, root)
    if status[0] == "err":
        raise status[1]
    if comm.rank == root:
        reqs = [comm.isend(r, _TAG, scatter(full, dist, r).data) for r in range(comm.size) if r != root]
        comm.waitall(reqs)
        return scatter(full, dist, root)
    data = np.frombuffer(comm.recv(root, _TAG), dtype=np.dtype(status[1]))
    data = data.reshape(dist.storage_shape(comm.rank)).copy()
    return DistTensor(dist, LocalBlock(comm.rank, dist.extents(comm.rank), data))


def write_distributed(path, tensor: DistTensor, comm, root: int = 0) -> None:
    """Gather all blocks on ``root``, which writes the assembled tensor."""
    parts = comm.gather_obj(tensor, root)
    if comm.rank == root:
        write_tensor(path, assemble(parts))
    comm.barrier()
