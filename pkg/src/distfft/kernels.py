"""Sequential FFT kernels and the brute-force DFT oracle.

All kernels are unnormalized in both directions; scaling by 1/n is left to
the caller (the distributed plans apply it once, at the end of a backward
transform).

Paths taken by :func:`fft_1d` depending on the length ``n``:

* ``n`` a power of two: iterative radix-2 decimation in time.
* largest prime factor of ``n`` at most 13: recursive mixed radix, splitting
  off the smallest prime factor at each level; prime lengths are evaluated
  with a cached dense DFT matrix.
* otherwise: Bluestein's chirp-z algorithm on a power-of-two convolution.

Twiddle tables, DFT matrices and chirps are cached per ``(n, direction)``
and are read-only once built.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NonHermitian, OutOfBounds, TooLarge, ZeroLength

MAX_DIRECT_PRIME = 13
ORACLE_LIMIT = 1 << 16


class Direction(enum.Enum):
    FORWARD = -1
    BACKWARD = 1

    @property
    def sign(self) -> int:
        return self.value

    def inverse(self) -> "Direction":
        return Direction.BACKWARD if self is Direction.FORWARD else Direction.FORWARD


@dataclass(frozen=True)
class BatchSpec:
    """Addressing of ``count`` strided transforms of ``length`` inside a flat buffer.

    Lane ``i`` element ``j`` lives at ``offset + i * dist + j * stride``.
    """

    length: int
    stride: int = 1
    dist: int = 1
    count: int = 1
    offset: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ZeroLength("transform length must be >= 1")
        if self.stride < 1 or self.dist < 1:
            raise ValueError("stride and dist must be positive")
        if self.count < 0 or self.offset < 0:
            raise ValueError("count and offset must be non-negative")

    def last_index(self) -> int:
        return self.offset + (self.count - 1) * self.dist + (self.length - 1) * self.stride

    def indices(self) -> np.ndarray:
        lanes = self.offset + np.arange(self.count)[:, None] * self.dist
        return lanes + np.arange(self.length)[None, :] * self.stride


# --------------------------------------------------------------------------
# cached tables


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@functools.lru_cache(maxsize=None)
def twiddles(n: int, direction: Direction) -> np.ndarray:
    """Roots ``exp(sign * 2j*pi*k/n)`` for ``k in range(n)``."""
    k = np.arange(n)
    return _readonly(np.exp(direction.sign * 2j * np.pi * k / n))


@functools.lru_cache(maxsize=None)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return _readonly(rev)


@functools.lru_cache(maxsize=None)
def dft_matrix(n: int, direction: Direction) -> np.ndarray:
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return _readonly(twiddles(n, direction)[jk])


@functools.lru_cache(maxsize=None)
def _mixed_twiddles(n: int, p: int, direction: Direction) -> np.ndarray:
    m = n // p
    rk = np.outer(np.arange(p), np.arange(m)) % n
    return _readonly(twiddles(n, direction)[rk])


@functools.lru_cache(maxsize=None)
def _bluestein_tables(n: int, direction: Direction):
    k = np.arange(n)
    chirp = np.exp(direction.sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1 << (2 * n - 2).bit_length()
    b = np.zeros(m, dtype=complex)
    b[:n] = chirp.conj()
    b[m - n + 1:] = chirp[1:][::-1].conj()
    bhat = _radix2(b[None, :], Direction.FORWARD)[0]
    return _readonly(chirp), _readonly(bhat), m


def prime_factors(n: int) -> list[int]:
    out, f = [], 2
    while f * f <= n:
        while n % f == 0:
            out.append(f)
            n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


# --------------------------------------------------------------------------
# lane kernels: operate on a (count, n) array, one transform per row


def _radix2(x: np.ndarray, direction: Direction) -> np.ndarray:
    c, n = x.shape
    x = x[:, _bitrev(n)]
    w = twiddles(n, direction).astype(x.dtype, copy=False)
    m = 2
    while m <= n:
        half = m // 2
        tw = w[:: n // m][:half]
        y = x.reshape(c, n // m, m)
        even = y[..., :half]
        odd = y[..., half:] * tw
        x = np.concatenate((even + odd, even - odd), axis=-1).reshape(c, n)
        m *= 2
    return x


def _bluestein(x: np.ndarray, direction: Direction) -> np.ndarray:
    c, n = x.shape
    chirp, bhat, m = _bluestein_tables(n, direction)
    a = np.zeros((c, m), dtype=np.complex128)
    a[:, :n] = x * chirp
    conv = _radix2(_radix2(a, Direction.FORWARD) * bhat, Direction.BACKWARD) / m
    return (conv[:, :n] * chirp).astype(x.dtype, copy=False)


def fft_lanes(x: np.ndarray, direction: Direction) -> np.ndarray:
    """Transform every row of a 2-D complex array. Returns a new array."""
    c, n = x.shape
    if n == 0:
        raise ZeroLength("cannot transform a zero-length lane")
    if n == 1 or c == 0:
        return x.copy()
    if n & (n - 1) == 0:
        return _radix2(x, direction)
    factors = prime_factors(n)
    if factors[-1] > MAX_DIRECT_PRIME:
        return _bluestein(x, direction)
    p = factors[0]
    if p == n:
        return x @ dft_matrix(n, direction).T.astype(x.dtype, copy=False)
    m = n // p
    # sub-sequences x[r::p], stacked as extra lanes
    sub = x.reshape(c, m, p).transpose(0, 2, 1).reshape(c * p, m)
    y = fft_lanes(sub, direction).reshape(c, p, m)
    y = y * _mixed_twiddles(n, p, direction).astype(x.dtype, copy=False)
    fp = dft_matrix(p, direction).astype(x.dtype, copy=False)
    return np.einsum("qr,crk->cqk", fp, y).reshape(c, n)


def _complex_dtype(a: np.ndarray):
    if a.dtype in (np.float32, np.complex64):
        return np.complex64
    return np.complex128


def _real_dtype(a: np.ndarray):
    return np.float32 if a.dtype in (np.float32, np.complex64) else np.float64


def rfft_lanes(x: np.ndarray) -> np.ndarray:
    n = x.shape[1]
    full = fft_lanes(x.astype(_complex_dtype(x)), Direction.FORWARD)
    return full[:, : n // 2 + 1].copy()


def irfft_lanes(xh: np.ndarray, n: int) -> np.ndarray:
    if xh.shape[1] != n // 2 + 1:
        raise LengthMismatch(f"expected {n // 2 + 1} bins for n={n}, got {xh.shape[1]}")
    c = xh.shape[0]
    full = np.empty((c, n), dtype=_complex_dtype(xh))
    h = n // 2 + 1
    full[:, :h] = xh
    full[:, 0] = full[:, 0].real
    if n % 2 == 0:
        full[:, n // 2] = full[:, n // 2].real
    tail = n - h
    if tail:
        full[:, h:] = np.conj(xh[:, 1: tail + 1][:, ::-1])
    return fft_lanes(full, Direction.BACKWARD).real.astype(_real_dtype(xh))


def check_hermitian(xh: np.ndarray, n: int, rtol: float = 1e-9) -> None:
    """Raise NonHermitian if the self-conjugate bins carry imaginary parts."""
    xh = np.atleast_2d(xh)
    scale = max(float(np.abs(xh).max(initial=0.0)), 1.0)
    bins = [0] + ([n // 2] if n % 2 == 0 else [])
    worst = float(np.abs(xh[:, bins].imag).max(initial=0.0))
    if worst > rtol * scale:
        raise NonHermitian(f"imaginary part {worst:.3e} on a self-conjugate bin")


# --------------------------------------------------------------------------
# public 1-D API


def _as_complex(data) -> np.ndarray:
    a = np.asarray(data)
    if not np.iscomplexobj(a):
        a = a.astype(_complex_dtype(a) if a.dtype.kind == "f" else np.complex128)
    return a


def fft_1d(data, direction: Direction = Direction.FORWARD) -> np.ndarray:
    a = _as_complex(data)
    if a.ndim != 1:
        raise ValueError("fft_1d expects a 1-D vector")
    if a.size == 0:
        raise ZeroLength("fft_1d of an empty vector")
    return fft_lanes(a[None, :], direction)[0]


def fft_batched(buffer: np.ndarray, spec: BatchSpec, direction: Direction = Direction.FORWARD,
                out: np.ndarray | None = None) -> np.ndarray:
    """Apply ``spec.count`` strided transforms to a flat complex buffer.

    Works in place unless ``out`` is given; returns the written buffer.
    """
    target = buffer if out is None else out
    if out is not None and out is not buffer:
        target[...] = buffer
    if spec.count == 0:
        return target
    if spec.last_index() >= buffer.size:
        raise OutOfBounds(f"batch addresses index {spec.last_index()} in a buffer of {buffer.size}")
    idx = spec.indices()
    target[idx] = fft_lanes(buffer[idx], direction)
    return target


def rfft_1d(data) -> np.ndarray:
    a = np.asarray(data)
    if np.iscomplexobj(a):
        raise TypeError("rfft_1d expects real input")
    if a.size == 0:
        raise ZeroLength("rfft_1d of an empty vector")
    return rfft_lanes(a.astype(_real_dtype(a))[None, :])[0]


def irfft_1d(data, n: int, rtol: float = 1e-9) -> np.ndarray:
    a = _as_complex(data)
    if a.shape != (n // 2 + 1,):
        raise LengthMismatch(f"expected {n // 2 + 1} bins for n={n}, got {a.shape}")
    check_hermitian(a, n, rtol)
    return irfft_lanes(a[None, :], n)[0]


# --------------------------------------------------------------------------
# oracle


def dft_oracle(data, dims=None, direction: Direction = Direction.FORWARD,
               limit: int = ORACLE_LIMIT) -> np.ndarray:
    """Multidimensional DFT by direct summation over every input index.

    Costs O(N^2); guarded by ``limit`` on the element count.
    """
    x = np.asarray(data, dtype=np.complex128)
    dims = tuple(x.shape if dims is None else dims)
    total = int(np.prod(dims))
    if total > limit:
        raise TooLarge(f"oracle guard: {total} elements > {limit}")
    x = x.reshape(total)
    idx = np.indices(dims).reshape(len(dims), total)
    roots = [np.exp(direction.sign * 2j * np.pi * np.arange(n) / n) for n in dims]
    out = np.empty(total, dtype=np.complex128)
    chunk = max(1, (1 << 20) // max(total, 1))
    for start in range(0, total, chunk):
        rows = slice(start, min(start + chunk, total))
        w = np.ones((rows.stop - rows.start, total), dtype=np.complex128)
        for a, n in enumerate(dims):
            w *= roots[a][np.outer(idx[a, rows], idx[a]) % n]
        out[rows] = w @ x
    return out.reshape(dims)
