"""Who owns what: block maps, spatial and frequency layouts, and index lookup."""

import warnings

from distfft.layout import (ProcessGrid, TransformKind, block_map, factor_grid, frequency_layout,
                            local_index, spatial_layout)

# ceil-block rule; trailing ranks may own nothing
for n, p in [(8, 4), (10, 4), (3, 4)]:
    bm = block_map(n, p)
    print(f"n={n:2d} over p={p}: counts={bm.counts} offsets={bm.offsets}")

grid = ProcessGrid((2, 2))
dims = (8, 8, 8)
spatial = spatial_layout(dims, grid)
freq = frequency_layout(dims, grid, TransformKind.R2C)
print("\nrank  spatial extents (offset, length)      frequency extents")
for r in range(grid.size):
    print(f"{r:4d}  {spatial.extents(r)}   {freq.extents(r)}")
print("frequency shape for real input:", freq.shape)

rank, off = local_index(spatial, (5, 1, 7))
print("\ncoordinate (5,1,7) lives on rank", rank, "grid coords", grid.coords(rank), "at offset", off)

print("\ndefault grids for P=8:", factor_grid(8, 2).shape, factor_grid(8, 3).shape)

with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    spatial_layout((3, 8, 8), ProcessGrid((4, 1)))
print("uneven split warning:", caught[0].message)
