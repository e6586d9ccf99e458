import numpy as np
import pytest

from distfft import assemble, execute, scatter, spawn_world


def rel_err(got, want):
    scale = np.max(np.abs(want)) if np.size(want) else 0.0
    err = np.max(np.abs(np.asarray(got) - want)) if np.size(want) else 0.0
    return float(err / scale) if scale > 0 else float(err)


def random_field(shape, rng, complex_=True):
    x = rng.standard_normal(shape)
    if complex_:
        x = x + 1j * rng.standard_normal(shape)
    return x


def run_plan(plan, x, backend="inprocess", **kw):
    """Scatter ``x`` over ``plan.input``, execute on every rank, gather the result."""

    def body(comm):
        return execute(plan, scatter(x, plan.input, comm.rank), comm)

    return assemble(spawn_world(plan.grid.size, body, backend=backend, **kw))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
