"""Spectral operators: derivatives of a smooth field and a periodic Poisson solve."""

import math

import numpy as np

from distfft import SpectralOperators, assemble, scatter, spawn_world

dims = (16, 12, 8)
L = (2.0, 1.0, 2 * math.pi)
ops = SpectralOperators(dims, (2, 2), lengths=L)

x, y, z = np.meshgrid(*[np.arange(n) * l / n for n, l in zip(dims, L)], indexing="ij")
u = np.sin(2 * math.pi * x / L[0]) * np.cos(2 * math.pi * y / L[1]) + np.sin(2 * z)
f = -((2 * math.pi / L[0]) ** 2 + (2 * math.pi / L[1]) ** 2) * (u - np.sin(2 * z)) - 4 * np.sin(2 * z)


def body(comm):
    grad = ops.gradient(scatter(u, ops.input_layout, comm.rank), comm)
    solved = ops.inverse_laplacian(scatter(f, ops.input_layout, comm.rank), comm)
    return grad, solved


res = spawn_world(4, body)
dudz = assemble([r[0][2] for r in res])
print("d/dz error:", np.max(np.abs(dudz - 2 * np.cos(2 * z))))
solved = assemble([r[1] for r in res])
print("Poisson solve error (mean-free solution):", np.max(np.abs(solved - (u - u.mean()))))
