"""The same machinery on a 4-axis tensor over a 3-axis process grid."""

import numpy as np

from distfft import assemble, dft_oracle, execute, inverse_plan, plan_general, scatter, spawn_world

dims, grid = (8, 6, 4, 4), (2, 2, 2)
plan = plan_general(dims, grid)
print(f"{len(plan.stages)} stages:", ", ".join(type(s).__name__ for s in plan.stages))

x = np.random.default_rng(3).standard_normal(dims) + 0j


def body(comm):
    y = execute(plan, scatter(x, plan.input, comm.rank), comm)
    return y, execute(inverse_plan(plan), y, comm)


res = spawn_world(8, body)
y = assemble([r[0] for r in res])
print("max error vs 4-D direct DFT:", np.max(np.abs(y - dft_oracle(x))))
print("round trip error:", np.max(np.abs(assemble([r[1] for r in res]) - x)))
