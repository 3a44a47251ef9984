"""Tile partitioning, task-id codec, and the fixed-order GEMM kernels.

A matrix here is a plain 2-D float numpy array.  Partitioning slices it
into a grid of views without copying; edge tiles are smaller when the
tile size does not divide the matrix evenly (no zero padding, so byte
accounting downstream stays honest).

Every kernel in this module accumulates over the contraction index in
strictly ascending order, one rank-1 update per index.  Because the
per-element operation sequence is then independent of how the operands
are tiled, sub-blocked, or scheduled across devices, a full runtime
product is bit-identical to the dense product computed by
``reference_gemm`` -- not merely close.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class TileCoord(NamedTuple):
    row: int
    col: int


class TileKey(NamedTuple):
    """Globally unique tile identifier: owning matrix uid + grid coordinate."""

    matrix: str
    row: int
    col: int


def as_matrix(x, dtype=np.float64) -> np.ndarray:
    """Coerce to a 2-D float array with at least one row and column."""
    m = np.asarray(x, dtype=dtype)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"matrix dimensions must be >= 1, got {m.shape}")
    return m


class TiledMatrix:
    """A matrix logically split into a grid of tile views.

    Interior tiles are ``tile_size`` square; the last row/column of tiles
    is ragged when the dimensions are not multiples of ``tile_size``.
    Tiles are views into one backing array, so no element is copied and
    writing through a tile writes the backing store.
    """

    def __init__(self, matrix, tile_size: int):
        if tile_size < 1:
            raise ValueError(f"tile_size must be >= 1, got {tile_size}")
        m = as_matrix(matrix, dtype=np.asarray(matrix).dtype)
        self.base = m
        self.tile_size = int(tile_size)
        self.rows, self.cols = m.shape
        self.grid_rows = math.ceil(self.rows / tile_size)
        self.grid_cols = math.ceil(self.cols / tile_size)
        t = tile_size
        self._tiles = [
            [m[r * t : (r + 1) * t, c * t : (c + 1) * t] for c in range(self.grid_cols)]
            for r in range(self.grid_rows)
        ]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.grid_rows, self.grid_cols)

    @property
    def total_tiles(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def full_tile_count(self) -> int:
        """Number of tiles that are exactly tile_size x tile_size."""
        return (self.rows // self.tile_size) * (self.cols // self.tile_size)

    @property
    def ragged_tile_count(self) -> int:
        return self.total_tiles - self.full_tile_count

    def tile(self, row: int, col: int) -> np.ndarray:
        if not (0 <= row < self.grid_rows and 0 <= col < self.grid_cols):
            raise IndexError(f"tile ({row},{col}) outside {self.grid_shape} grid")
        return self._tiles[row][col]

    def tile_shape(self, row: int, col: int) -> tuple[int, int]:
        return self.tile(row, col).shape

    def tile_nbytes(self, row: int, col: int, element_bytes: int = 8) -> int:
        r, c = self.tile_shape(row, col)
        return r * c * element_bytes

    def coords(self):
        for r in range(self.grid_rows):
            for c in range(self.grid_cols):
                yield TileCoord(r, c)


def partition(matrix, tile_size: int) -> TiledMatrix:
    """Split a matrix into its tiled representation (views, no copies)."""
    return TiledMatrix(matrix, tile_size)


def reassemble(tm: TiledMatrix) -> np.ndarray:
    """Stitch the tile grid back into one dense matrix.

    Built from the tiles themselves (not the backing array) so it doubles
    as the round-trip oracle for ``partition``.
    """
    rows = [np.hstack(tm._tiles[r]) for r in range(tm.grid_rows)]
    return np.vstack(rows)


def encode_task(row: int, col: int, grid_cols: int) -> int:
    """Row-major task id for output tile (row, col)."""
    if grid_cols < 1:
        raise ValueError(f"grid_cols must be >= 1, got {grid_cols}")
    if row < 0 or col < 0 or col >= grid_cols:
        raise ValueError(f"tile coord ({row},{col}) invalid for grid_cols={grid_cols}")
    return row * grid_cols + col


def decode_task(task_id: int, grid_cols: int, grid_rows: int | None = None) -> TileCoord:
    """Invert ``encode_task``.  Rejects ids outside the grid when its row
    count is supplied."""
    if grid_cols < 1:
        raise ValueError(f"grid_cols must be >= 1, got {grid_cols}")
    if task_id < 0:
        raise ValueError(f"task id must be >= 0, got {task_id}")
    if grid_rows is not None and task_id >= grid_rows * grid_cols:
        raise ValueError(
            f"task id {task_id} out of range for a {grid_rows}x{grid_cols} grid"
        )
    return TileCoord(*divmod(task_id, grid_cols))


def _block_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    # <= parts contiguous chunks covering range(n), each of near-equal size
    step = math.ceil(n / max(parts, 1))
    return [(s, min(s + step, n)) for s in range(0, n, step)]


def accumulate_product(a, b, out, sub_blocks: int = 1) -> np.ndarray:
    """``out += a @ b`` with the contraction index strictly ascending.

    One rank-1 update per contraction index, so for any fixed output
    element the floating-point operation sequence is the same no matter
    how callers block the operands.  ``sub_blocks`` splits each dimension
    into that many contiguous chunks (the host-worker's factorized tile
    processing); the result is bit-identical for every factor.
    """
    m, k = a.shape
    kb, n = b.shape
    if k != kb:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    if out.shape != (m, n):
        raise ValueError(f"accumulator shape {out.shape}, expected {(m, n)}")
    if sub_blocks <= 1:
        for kk in range(k):
            out += np.multiply.outer(a[:, kk], b[kk, :])
        return out
    for r0, r1 in _block_ranges(m, sub_blocks):
        for c0, c1 in _block_ranges(n, sub_blocks):
            sub = out[r0:r1, c0:c1]
            for k0, k1 in _block_ranges(k, sub_blocks):
                for kk in range(k0, k1):
                    sub += np.multiply.outer(a[r0:r1, kk], b[kk, c0:c1])
    return out


def gemm_tile(a, b, c) -> np.ndarray:
    """Return ``c + a @ b`` without mutating any input (fixed-order kernel)."""
    a = np.asarray(a)
    b = np.asarray(b)
    c = np.asarray(c)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    if c.shape != (a.shape[0], b.shape[1]):
        raise ValueError(
            f"accumulator shape {c.shape}, expected {(a.shape[0], b.shape[1])}"
        )
    out = np.array(c, dtype=np.result_type(a, b, c), copy=True)
    return accumulate_product(a, b, out)


def reference_gemm(a, b) -> np.ndarray:
    """Dense ground-truth product with the fixed k-ascending order.

    Equivalent to the scalar triple loop with the contraction innermost:
    every element accumulates ``a[i, k] * b[k, j]`` for k = 0, 1, ...
    Exact on integer-valued inputs (within f64 range), and the comparison
    baseline for every runtime equivalence test.
    """
    a = as_matrix(a, dtype=np.asarray(a).dtype)
    b = as_matrix(b, dtype=np.asarray(b).dtype)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.result_type(a, b))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out
