"""Sequential kernels: complex, real and batched 1-D FFTs checked against direct summation."""

import numpy as np

from distfft.kernels import BatchSpec, Direction, dft_oracle, fft_1d, fft_batched, irfft_1d, rfft_1d

rng = np.random.default_rng(0)

# power of two, composite, and a prime above the direct-DFT cutoff (chirp-z path)
for n in (64, 60, 97):
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    err = np.max(np.abs(fft_1d(x) - dft_oracle(x)))
    print(f"n={n:3d}  max |fft - direct| = {err:.1e}")

# kernels are unnormalized in both directions
x = rng.standard_normal(12) + 0j
print("backward(forward(x)) / n == x:", np.allclose(fft_1d(fft_1d(x), Direction.BACKWARD) / 12, x))

# real input keeps only the non-negative half spectrum
r = rng.standard_normal(9)
half = rfft_1d(r)
print("half spectrum length for n=9:", half.size)
print("irfft(rfft(r)) == 9 r:", np.allclose(irfft_1d(half, 9), 9 * r))

# strided batch: transform the columns of a row-major 4x5 matrix in place
m = rng.standard_normal((4, 5)) + 0j
buf = m.reshape(-1).copy()
fft_batched(buf, BatchSpec(length=4, stride=5, dist=1, count=5))
cols = np.array([fft_1d(c) for c in m.T]).T
print("column transforms match:", np.allclose(buf.reshape(4, 5), cols))
