"""Distributed multidimensional FFTs over slab, pencil and general process grids.

Typical use::

    from distfft import plan_pencil, scatter, assemble, execute, spawn_world

    plan = plan_pencil((32, 32, 32), (2, 2))

    def body(comm):
        x = scatter(data, plan.input, comm.rank)
        return execute(plan, x, comm)

    spectrum = assemble(spawn_world(4, body))
"""

from .errors import *  # noqa: F401,F403
from .exchange import (ExchangeSchedule, StagingArena, all_to_all, global_transpose, pack,
                       pipelined_all_to_all, staged_all_to_all, unpack)
from .kernels import (BatchSpec, Direction, dft_oracle, fft_1d, fft_batched, irfft_1d,
                      rfft_1d)
from .layout import (DistTensor, Distribution, LocalBlock, ProcessGrid, TransformKind,
                     assemble, factor_grid, frequency_layout, hat_dims, local_index,
                     scatter, spatial_layout)
from .plan import (Plan, execute, execute_r2c_c2r_roundtrip, inverse_plan, make_plan,
                   plan_general, plan_pencil, plan_slab)
from .spectral import SpectralOperators, WavenumberMap, wavenumbers
from .timing import TimingBreakdown
from .transport import CostModel, simulated_clock, spawn_world

__version__ = "0.1.0"
