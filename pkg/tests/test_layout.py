import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distfft.errors import EmptyBlockWarning, GridMismatch, OutOfRange, SlabTooManyRanks
from distfft.layout import (DistTensor, ProcessGrid, TransformKind, assemble, block_map,
                            factor_grid, frequency_layout, hat_dims, local_index,
                            owned_coordinates, scatter, spatial_layout, unhat_dims)

C2C, R2C = TransformKind.C2C, TransformKind.R2C


@pytest.mark.parametrize("n,p,counts,offsets", [
    (8, 4, (2, 2, 2, 2), (0, 2, 4, 6)),
    (10, 4, (3, 3, 3, 1), (0, 3, 6, 9)),
    (3, 4, (1, 1, 1, 0), (0, 1, 2, 3)),
])
def test_block_map_examples(n, p, counts, offsets):
    bm = block_map(n, p)
    assert bm.counts == counts and bm.offsets == offsets


@given(st.integers(0, 200), st.integers(1, 40))
def test_block_map_is_ceil_block_partition(n, p):
    bm = block_map(n, p)
    b = -(-n // p)
    assert sum(bm.counts) == n
    for r in range(p):
        assert bm.offsets[r] == min(r * b, n)
        assert bm.offsets[r] + bm.counts[r] == min((r + 1) * b, n)
    for i in range(n):
        r = bm.owner(i)
        assert bm.offsets[r] <= i < bm.offsets[r] + bm.counts[r]


@pytest.mark.parametrize("p,ndim,want", [
    (8, 2, (4, 2)), (4, 2, (2, 2)), (6, 2, (3, 2)), (7, 2, (7, 1)), (12, 2, (4, 3)),
    (8, 3, (2, 2, 2)), (1, 2, (1, 1)), (5, 1, (5,)),
])
def test_factor_grid(p, ndim, want):
    assert factor_grid(p, ndim).shape == want


def test_grid_coords_row_major():
    g = ProcessGrid((2, 3))
    assert [g.coords(r) for r in range(6)] == list(itertools.product(range(2), range(3)))
    assert all(g.rank_of(g.coords(r)) == r for r in range(6))


def test_hat_dims():
    assert hat_dims([4, 4, 4], C2C) == (4, 4, 4)
    assert hat_dims([256, 512, 1024], R2C) == (256, 512, 513)
    assert hat_dims([512, 256, 128, 64], C2C) == (512, 256, 128, 64)
    assert hat_dims([4, 4, 4], TransformKind.C2R) == (4, 4, 3)


@given(st.lists(st.integers(1, 50), min_size=2, max_size=4))
def test_hat_roundtrip(dims):
    h = hat_dims(dims, R2C)
    assert unhat_dims(h, dims[-1] % 2 == 1) == tuple(dims)


def test_spatial_and_frequency_extents():
    g = ProcessGrid((2, 2))
    assert spatial_layout((8, 8, 8), g).extents(0) == ((0, 4), (0, 4), (0, 8))
    assert frequency_layout((8, 8, 8), g).extents(0) == ((0, 8), (0, 4), (0, 4))
    f = frequency_layout((8, 8, 8), g, R2C)
    assert f.shape == (8, 8, 5) and f.extents(3) == ((0, 8), (4, 4), (3, 2))


def test_layouts_keep_xyz_order():
    g = ProcessGrid((2, 2))
    for dist in (spatial_layout((8, 8, 8), g), frequency_layout((8, 8, 8), g)):
        assert dist.memory_order == (0, 1, 2)


def test_slab_too_many_ranks():
    with pytest.raises(SlabTooManyRanks):
        spatial_layout((4, 8, 8), ProcessGrid((8,)))


def test_grid_with_too_many_axes():
    with pytest.raises(GridMismatch):
        spatial_layout((4, 4), ProcessGrid((2, 2)))


def test_empty_block_warning():
    with pytest.warns(EmptyBlockWarning):
        spatial_layout((3, 4, 4), ProcessGrid((4, 2)))


def test_local_index_examples():
    d = spatial_layout((8, 8, 8), ProcessGrid((2, 2)))
    rank, off = local_index(d, (5, 1, 7))
    assert d.grid.coords(rank) == (1, 0)
    assert off == np.ravel_multi_index((1, 1, 7), (4, 4, 8))
    assert local_index(d, (0, 0, 0)) == (0, 0)
    assert local_index(d, (7, 7, 7)) == (3, 4 * 4 * 8 - 1)
    with pytest.raises(OutOfRange):
        local_index(d, (8, 0, 0))


def _layouts():
    for dims in [(4, 6, 5), (3, 3, 3), (8, 4, 2), (5, 4, 3, 2)]:
        for grid in [(1,), (2,), (3,), (2, 2), (3, 2), (1, 4), (4, 4), (2, 2, 2)]:
            if len(grid) > len(dims) - 1 or (len(grid) == 1 and grid[0] > dims[0]):
                continue
            for kind in (C2C, R2C):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", EmptyBlockWarning)
                    yield spatial_layout(dims, ProcessGrid(grid), kind)
                    yield frequency_layout(dims, ProcessGrid(grid), kind)


def test_partition_and_local_index_roundtrip():
    for dist in _layouts():
        seen = np.zeros(dist.shape, dtype=int)
        for r in range(dist.grid.size):
            for i, c in enumerate(owned_coordinates(dist, r)):
                seen[c] += 1
                assert local_index(dist, c) == (r, i)
        assert np.all(seen == 1)


def test_swapped_memory_order_index():
    d = frequency_layout((4, 6, 4), ProcessGrid((2, 2))).with_memory_order((1, 0, 2))
    for r in range(4):
        for i, c in enumerate(owned_coordinates(d, r)):
            assert local_index(d, c) == (r, i)


def test_scatter_assemble_roundtrip():
    x = np.arange(5 * 6 * 7).reshape(5, 6, 7)
    d = spatial_layout((5, 6, 7), ProcessGrid((2, 3)))
    parts = [scatter(x, d, r) for r in range(6)]
    assert all(isinstance(p, DistTensor) for p in parts)
    np.testing.assert_array_equal(assemble(parts), x)
