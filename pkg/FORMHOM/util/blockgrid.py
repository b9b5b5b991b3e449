'''

This file implements a triadic block grid, which organizes the unit cells of a cube of
side 3^m into the nested blocks z + □_n, z ∈ 3^n Z^d ∩ □_m. Per-cell fields are stored as
arrays of shape (ncells, ncomp) with the cells in row-major order; the block grid converts
between linear cell indices, cell positions and block indices, and computes block means
at every level without loops over blocks.

It also enumerates the 3^d children of a cube, which is what the subadditivity checks
iterate over.

'''


import numpy as np
from itertools import product


def triadic_level(side):
    #m with 3^m = side, or None when side is not a power of three

    level = 0
    n = int(side)
    while n > 1 and n % 3 == 0:
        n //= 3
        level += 1

    return level if n == 1 else None


class BlockGrid:
    '''Cell bookkeeping for a d-dimensional cube made of side^d unit cells.'''

    def __init__(self, dim, side):

        if dim < 1 or side < 1:
            raise ValueError("Block grid needs dim >= 1 and side >= 1, got {} and {}".format(dim, side))

        self.dim   = dim
        self.side  = side
        self.shape = (side,) * dim
        self.level = triadic_level(side)

        #list of all child offsets in units of the child side
        self.childAdjustment = list(product(range(3), repeat=dim))

    def num_cells(self):

        return self.side ** self.dim

    def cell_positions(self):
        #(ncells, dim) integer positions in row-major order

        return np.indices(self.shape).reshape(self.dim, -1).T

    def convertPosToIndex(self, positions):

        positions = np.atleast_2d(positions)
        if (positions < 0).any() or (positions >= self.side).any():
            raise ValueError("Cell position outside the grid of side {}".format(self.side))

        return np.ravel_multi_index(positions.T, self.shape)

    def region_mask(self, lower, side):
        #boolean mask of the cells in lower + [0,side)^d

        lower = np.asarray(lower, dtype=int)
        if side < 1 or (lower < 0).any() or (lower + side > self.side).any():
            raise ValueError("Subcube at {} of side {} does not fit in a grid of side {}".format(
                              list(lower), side, self.side))

        pos = self.cell_positions()
        return np.all((pos >= lower) & (pos < lower + side), axis=1)

    def region_indices(self, lower, side):

        return np.flatnonzero(self.region_mask(lower, side))

    def children(self, lower=None, side=None):
        #lower corners of the 3^d children of lower + [0,side)^d

        if lower is None:
            lower = np.zeros(self.dim, dtype=int)
        if side is None:
            side = self.side

        if side % 3:
            raise ValueError("A cube of side {} has no triadic children".format(side))

        child = side // 3
        lower = np.asarray(lower, dtype=int)

        return [lower + child*np.array(adj) for adj in self.childAdjustment], child

    def block_corners(self, level):
        #lower corners of the blocks of side 3^level, in row-major block order

        block = 3 ** level
        if level < 0 or self.side % block:
            raise ValueError("Blocks of side {} do not tile a grid of side {}".format(block, self.side))

        nblock = self.side // block
        return block * np.indices((nblock,) * self.dim).reshape(self.dim, -1).T, block

    def block_means(self, field, level):
        #means of a per-cell field over the blocks of side 3^level, shape (nblocks, ncomp)

        field = np.asarray(field, dtype=float)
        if field.ndim == 1:
            field = field[:, None]

        if field.shape[0] != self.num_cells():
            raise ValueError("Field has {} cells, grid has {}".format(field.shape[0], self.num_cells()))

        block = 3 ** level
        if self.side % block:
            raise ValueError("Blocks of side {} do not tile a grid of side {}".format(block, self.side))

        nblock = self.side // block
        ncomp  = field.shape[1]

        #interleave (block index, offset within block) along every axis
        split = []
        for i in range(self.dim):
            split += [nblock, block]
        arr = field.reshape(self.shape + (ncomp,)).reshape(tuple(split) + (ncomp,))

        inner = tuple(2*i + 1 for i in range(self.dim))
        return arr.mean(axis=inner).reshape(-1, ncomp)
