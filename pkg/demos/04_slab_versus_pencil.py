"""Why pencils: slabs stop at N0 ranks, pencils keep going."""

import numpy as np

from distfft import SlabTooManyRanks, assemble, dft_oracle, execute, plan_pencil, plan_slab, scatter, spawn_world

dims = (4, 8, 8)
x = np.random.default_rng(2).standard_normal(dims) + 0j

for p in (2, 4, 8):
    try:
        plan_slab(dims, p)
        print(f"slab on {p} ranks: ok")
    except SlabTooManyRanks as exc:
        print(f"slab on {p} ranks: refused ({exc})")

plan = plan_pencil(dims, (4, 2))


def body(comm):
    return execute(plan, scatter(x, plan.input, comm.rank), comm)


y = assemble(spawn_world(8, body))
print("pencil 4x2 on 8 ranks, max error vs direct DFT:", np.max(np.abs(y - dft_oracle(x))))
