'''

The cubical cochain complex of a cube made of side^d cells of width h.

An r-face is a pair (I, x) with I a set of r axes (its direction set) and x the integer
position of its lowest vertex; x_i runs over 0..side-1 for i in I and over 0..side
otherwise. Faces are ordered by the rank of I, then row-major in x. A cochain of degree r
carries one number per r-face, the integral of the represented form over that face, with
the face oriented by dx_I.

On top of the combinatorics this module provides
    - the coboundary (discrete exterior derivative) as an integer sparse matrix
    - the lowest-order tensor-product Whitney mass matrix with piecewise-constant
      cell coefficients, and the energy Q = D^T W D built from it
    - the per-cell mean reconstruction used for cube means of du
    - de Rham interpolation of polynomial form fields by Gauss quadrature
    - the multiscale block seminorm used as a computable weak norm

Direction sets inside this module are 0-based tuples of axes. The exterior module works
with 1-based multi-indices, and the k-th direction set here is the k-th basis form there.

'''

import numpy as np
import pandas as pd
import scipy.sparse as sp

from functools import lru_cache
from itertools import product

from .exterior import AltForm, basis, num_forms, wedge
from ..util.blockgrid import BlockGrid


class Grid:
    '''A cube [0, side*h]^d divided into side^d cells. Hashable, so operators built on a
       grid can be cached.'''

    def __init__(self, dim, side, spacing=1.0):

        if int(dim) != dim or dim < 1:
            raise ValueError("Grid dimension must be a positive integer, got {}".format(dim))

        if int(side) != side or side < 1:
            raise ValueError("Grid side must be a positive integer, got {}".format(side))

        if not spacing > 0:
            raise ValueError("Grid spacing must be positive, got {}".format(spacing))

        self.dim     = int(dim)
        self.side    = int(side)
        self.spacing = float(spacing)

        self.blocks = BlockGrid(self.dim, self.side)

    def __eq__(self, other):

        return isinstance(other, Grid) and (self.dim, self.side, self.spacing) == (other.dim, other.side, other.spacing)

    def __hash__(self):

        return hash((self.dim, self.side, self.spacing))

    def __repr__(self):

        return "Grid(d={}, side={}, h={})".format(self.dim, self.side, self.spacing)

    def get_level(self):

        if self.blocks.level is None:
            raise ValueError("Grid side {} is not a power of 3".format(self.side))

        return self.blocks.level

    def num_cells(self):

        return self.side ** self.dim

    def volume(self):

        return (self.side * self.spacing) ** self.dim

    def cell_positions(self):

        return self.blocks.cell_positions()

    def directions(self, degree):

        return direction_sets(self.dim, degree)

    def face_shape(self, directions):

        return tuple(self.side if i in directions else self.side+1 for i in range(self.dim))

    def face_offsets(self, degree):

        return _face_offsets(self, degree)

    def num_faces(self, degree):

        return int(self.face_offsets(degree)[-1])

    def face_index(self, degree, dir_rank, positions):
        #global indices of the faces with direction set of rank dir_rank at the positions

        dirs = self.directions(degree)[dir_rank]
        positions = np.atleast_2d(positions)
        local = np.ravel_multi_index(positions.T, self.face_shape(dirs))

        return self.face_offsets(degree)[dir_rank] + local

    def face_table(self, degree):
        #(direction rank, positions) for every face in order

        return _face_table(self, degree)


@lru_cache(maxsize=None)
def direction_sets(dim, degree):

    return tuple(tuple(i-1 for i in I) for I in basis(dim, degree))


@lru_cache(maxsize=None)
def _direction_lookup(dim, degree):

    return {dirs: k for k, dirs in enumerate(direction_sets(dim, degree))}


@lru_cache(maxsize=None)
def _face_offsets(grid, degree):

    counts = [int(np.prod(grid.face_shape(dirs))) for dirs in grid.directions(degree)]
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    offsets.setflags(write=False)

    return offsets


@lru_cache(maxsize=None)
def _face_table(grid, degree):

    ranks, positions = [], []
    for k, dirs in enumerate(grid.directions(degree)):
        shape = grid.face_shape(dirs)
        pos = np.indices(shape).reshape(grid.dim, -1).T
        ranks.append(np.full(len(pos), k, dtype=int))
        positions.append(pos)

    if not ranks:
        return np.zeros(0, dtype=int), np.zeros((0, grid.dim), dtype=int)

    return np.concatenate(ranks), np.concatenate(positions)


####################################################################
################# Cochains and the coboundary ######################
####################################################################

class Cochain:
    '''One value per r-face of a grid. Integer values are kept as integers so the
       coboundary can be checked in exact arithmetic.'''

    def __init__(self, grid, degree, values=None):

        if degree < 0 or degree > grid.dim:
            raise ValueError("Cochain degree {} out of range for dimension {}".format(degree, grid.dim))

        nfaces = grid.num_faces(degree)
        if values is None:
            values = np.zeros(nfaces)

        values = np.array(values)
        if values.dtype.kind not in 'iuf':
            values = values.astype(float)

        if values.shape != (nfaces,):
            raise ValueError("A {}-cochain on {} needs {} values, got shape {}".format(
                              degree, grid, nfaces, values.shape))

        self.grid   = grid
        self.degree = degree
        self.values = values

    def copy(self):

        return Cochain(self.grid, self.degree, self.values.copy())

    def __check_compatible(self, other):

        if self.grid != other.grid or self.degree != other.degree:
            raise ValueError("Cochains live on different grids or degrees")

    def __add__(self, other):

        self.__check_compatible(other)
        return Cochain(self.grid, self.degree, self.values + other.values)

    def __sub__(self, other):

        self.__check_compatible(other)
        return Cochain(self.grid, self.degree, self.values - other.values)

    def __mul__(self, scalar):

        return Cochain(self.grid, self.degree, scalar * self.values)

    __rmul__ = __mul__

    def coboundary(self):

        return coboundary(self)


@lru_cache(maxsize=None)
def coboundary_matrix(grid, degree):
    #integer incidence matrix from degree-faces to (degree+1)-faces

    if degree < 0 or degree >= grid.dim:
        raise ValueError("No coboundary from degree {} in dimension {}".format(degree, grid.dim))

    lookup = _direction_lookup(grid.dim, degree)
    target_offsets = grid.face_offsets(degree+1)

    rows, cols, vals = [], [], []
    for J_rank, J in enumerate(grid.directions(degree+1)):

        pos = np.indices(grid.face_shape(J)).reshape(grid.dim, -1).T
        target = target_offsets[J_rank] + np.arange(len(pos))

        #signed sum over the 2(k+1) boundary faces of each (k+1)-face
        for t, axis in enumerate(J):
            lower_rank = lookup[J[:t] + J[t+1:]]
            sign = 1 if t % 2 == 0 else -1

            shifted = pos.copy()
            shifted[:, axis] += 1

            rows += [target, target]
            cols += [grid.face_index(degree, lower_rank, shifted), grid.face_index(degree, lower_rank, pos)]
            vals += [np.full(len(pos), sign), np.full(len(pos), -sign)]

    shape = (grid.num_faces(degree+1), grid.num_faces(degree))
    D = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=shape, dtype=np.int64).tocsr()

    return D


def coboundary(u):

    if u.degree >= u.grid.dim:
        raise ValueError("Coboundary of a top-degree cochain is not defined")

    D = coboundary_matrix(u.grid, u.degree)
    return Cochain(u.grid, u.degree+1, D @ u.values)


class BoundaryMask:
    '''Flags the faces lying in the boundary of the cube.'''

    def __init__(self, grid, degree, flags):

        self.grid   = grid
        self.degree = degree
        self.flags  = flags

    def count(self):

        return int(np.sum(self.flags))

    def boundary_indices(self):

        return np.flatnonzero(self.flags)

    def interior_indices(self):

        return np.flatnonzero(~self.flags)


@lru_cache(maxsize=None)
def _boundary_flags(grid, degree):

    ranks, pos = grid.face_table(degree)
    flags = np.zeros(len(ranks), dtype=bool)

    for k, dirs in enumerate(grid.directions(degree)):
        sel = ranks == k
        free = [i for i in range(grid.dim) if i not in dirs]
        if free:
            p = pos[sel][:, free]
            flags[sel] = np.any((p == 0) | (p == grid.side), axis=1)

    flags.setflags(write=False)
    return flags


def boundary_mask(grid, degree):
    #a face lies in the boundary iff one of its fixed coordinates sits at 0 or side

    return BoundaryMask(grid, degree, _boundary_flags(grid, degree))


def restrict_cochain(u, lower, side):
    #the values of u on the faces of the subcube lower + [0,side]^d

    sub = Grid(u.grid.dim, side, u.grid.spacing)
    ranks, pos = sub.face_table(u.degree)

    index = np.empty(len(ranks), dtype=int)
    for k in range(len(sub.directions(u.degree))):
        sel = ranks == k
        index[sel] = u.grid.face_index(u.degree, k, pos[sel] + np.asarray(lower, dtype=int))

    return Cochain(sub, u.degree, u.values[index])


####################################################################
################# Whitney mass, energy and reconstruction ##########
####################################################################

@lru_cache(maxsize=None)
def _local_faces(dim, degree):
    #the k-faces of one cell as (direction rank, offset vector)

    faces = []
    for k, dirs in enumerate(direction_sets(dim, degree)):
        free = [i for i in range(dim) if i not in dirs]
        for bits in product((0, 1), repeat=len(free)):
            y = np.zeros(dim, dtype=int)
            y[free] = bits
            faces.append((k, y))

    return faces


@lru_cache(maxsize=None)
def _mass_template(dim, degree):
    #reference integrals of products of Whitney basis functions on a unit cell

    faces = _local_faces(dim, degree)
    dirs  = direction_sets(dim, degree)
    n = len(faces)

    T = np.ones((n, n))
    for a, (ka, ya) in enumerate(faces):
        for b, (kb, yb) in enumerate(faces):
            for i in range(dim):
                in_a = i in dirs[ka]
                in_b = i in dirs[kb]
                if in_a and in_b:
                    continue
                elif in_a or in_b:
                    T[a, b] *= 0.5
                else:
                    T[a, b] *= 1.0/3.0 if ya[i] == yb[i] else 1.0/6.0

    ranks = np.array([k for k, y in faces], dtype=int)
    return T, ranks


@lru_cache(maxsize=None)
def _local_to_global(grid, degree):
    #(ncells, nlocal) global face index of each local face of each cell

    cells = grid.cell_positions()
    faces = _local_faces(grid.dim, degree)

    table = np.empty((len(cells), len(faces)), dtype=int)
    for a, (k, y) in enumerate(faces):
        table[:, a] = grid.face_index(degree, k, cells + y)

    return table


def identity_cells(grid, degree):

    C = num_forms(grid.dim, degree)
    return np.broadcast_to(np.eye(C), (grid.num_cells(), C, C))


def assemble_mass(grid, degree, cellmats):
    #W[F,G] = sum over cells of the integral of M_c applied to the Whitney forms of F and G

    cellmats = np.asarray(cellmats, dtype=float)
    C = num_forms(grid.dim, degree)
    if cellmats.shape != (grid.num_cells(), C, C):
        raise ValueError("Expected {} cell matrices of size {}, got shape {}".format(
                          grid.num_cells(), C, cellmats.shape))

    T, ranks = _mass_template(grid.dim, degree)
    scale = grid.spacing ** (grid.dim - 2*degree)

    local = T[None, :, :] * cellmats[:, ranks[:, None], ranks[None, :]] * scale
    table = _local_to_global(grid, degree)
    n = table.shape[1]

    rows = np.broadcast_to(table[:, :, None], (len(table), n, n))
    cols = np.broadcast_to(table[:, None, :], (len(table), n, n))

    nfaces = grid.num_faces(degree)
    W = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(nfaces, nfaces)).tocsr()

    return W


def assemble_energy(env, grid=None, degree=None):
    #Q = D^T W D on (r-1)-cochains, so Q(u,u) approximates the integral of du ∧ a du

    if grid is None:
        grid = env.get_grid()
    if degree is None:
        degree = env.get_degree()

    if grid != env.get_grid() or degree != env.get_degree():
        raise ValueError("Environment of degree {} on {} does not match degree {} on {}".format(
                          env.get_degree(), env.get_grid(), degree, grid))

    if degree < 1:
        raise ValueError("Energies need a degree of at least 1, got {}".format(degree))

    return energy_from_cells(grid, degree, env.get_cells())


def energy_from_cells(grid, degree, cellmats):

    D = coboundary_matrix(grid, degree-1).astype(float)
    W = assemble_mass(grid, degree, cellmats)

    return (D.T @ W @ D).tocsr()


def reference_energy(grid, degree):
    #the energy of the coefficient a = ⋆

    return energy_from_cells(grid, degree, identity_cells(grid, degree))


@lru_cache(maxsize=None)
def reconstruction_matrix(grid, degree):
    #cell means of the represented form, rows ordered (cell, component)

    C = num_forms(grid.dim, degree)
    faces = _local_faces(grid.dim, degree)
    table = _local_to_global(grid, degree)
    ncells = len(table)

    weight = 1.0 / (2 ** (grid.dim - degree) * grid.spacing ** degree)
    ranks  = np.array([k for k, y in faces], dtype=int)

    rows = (np.arange(ncells)[:, None] * C + ranks[None, :]).ravel()
    R = sp.coo_matrix((np.full(table.size, weight), (rows, table.ravel())),
                      shape=(ncells*C, grid.num_faces(degree))).tocsr()

    return R


def cell_field(u):
    #per-cell means of the form represented by u, shape (ncells, C(d,r))

    C = num_forms(u.grid.dim, u.degree)
    return (reconstruction_matrix(u.grid, u.degree) @ u.values).reshape(-1, C)


def face_average(values, grid, degree):
    #average of a per-cell scalar over the cells containing each face

    values = np.asarray(values, dtype=float)
    ranks, pos = grid.face_table(degree)

    total = np.zeros(len(ranks))
    count = np.zeros(len(ranks))
    for k, dirs in enumerate(grid.directions(degree)):
        sel = np.flatnonzero(ranks == k)
        free = [i for i in range(grid.dim) if i not in dirs]
        for shift in product((-1, 0), repeat=len(free)):
            cells = pos[sel].copy()
            cells[:, free] += shift
            ok = np.all((cells >= 0) & (cells < grid.side), axis=1)
            total[sel[ok]] += values[grid.blocks.convertPosToIndex(cells[ok])]
            count[sel[ok]] += 1

    return total / count


def face_centers(grid, degree):

    ranks, pos = grid.face_table(degree)
    centers = pos.astype(float)
    for k, dirs in enumerate(grid.directions(degree)):
        sel = ranks == k
        for i in dirs:
            centers[sel, i] += 0.5

    return centers * grid.spacing


####################################################################
################# Polynomial form fields ###########################
####################################################################

class PolyFormField:
    '''A form field of the given degree whose coefficients are polynomials of total
       degree at most poly_degree. func maps points (n,d) to coefficients (n, C(d,r)).'''

    def __init__(self, dim, degree, func, poly_degree=1):

        self.dim         = dim
        self.degree      = degree
        self.func        = func
        self.poly_degree = poly_degree

    def evaluate(self, points):

        values = np.asarray(self.func(np.atleast_2d(points)), dtype=float)
        return values.reshape(len(np.atleast_2d(points)), num_forms(self.dim, self.degree))


class AffineFormField(PolyFormField):
    '''ω(x) = const + lin @ x, with const of shape (C,) and lin of shape (C, d).'''

    def __init__(self, dim, degree, const=None, lin=None):

        C = num_forms(dim, degree)
        self.const = np.zeros(C) if const is None else np.asarray(const, dtype=float)
        self.lin   = np.zeros((C, dim)) if lin is None else np.asarray(lin, dtype=float)

        super().__init__(dim, degree, lambda x: self.const[None, :] + x @ self.lin.T, poly_degree=1)

    def derivative(self):
        #dω = sum over I and i of lin[I,i] dx_i ∧ dx_I, a constant field

        out = AltForm(self.dim, self.degree+1)
        for k, I in enumerate(basis(self.dim, self.degree)):
            for i in range(self.dim):
                if self.lin[k, i]:
                    term = wedge(AltForm.basis_form(self.dim, (i+1,)), AltForm.basis_form(self.dim, I))
                    out = out + self.lin[k, i] * term

        return constant_field(out)


def constant_field(p):

    return AffineFormField(p.dim, p.degree, const=p.coeffs)


def potential(p):
    #l_p = sum_I p_I x_{i1} dx_{I minus i1}, so that d l_p = p

    if p.degree < 1:
        raise ValueError("The potential of a 0-form is not defined")

    lookup = {I: k for k, I in enumerate(basis(p.dim, p.degree-1))}
    lin = np.zeros((num_forms(p.dim, p.degree-1), p.dim))
    for k, I in enumerate(basis(p.dim, p.degree)):
        lin[lookup[I[1:]], I[0]-1] += p.coeffs[k]

    return AffineFormField(p.dim, p.degree-1, lin=lin)


#two-point Gauss-Legendre on [0,1], exact up to cubic polynomials
GAUSS_NODES   = np.array([0.5 - 0.5/np.sqrt(3.0), 0.5 + 0.5/np.sqrt(3.0)])
GAUSS_WEIGHTS = np.array([0.5, 0.5])
#boundary data is affine or quadratic
MAX_POLY_DEGREE = 2


def interpolate(form, grid):
    #de Rham map: integrate the form over every face

    if form.dim != grid.dim:
        raise ValueError("Form of dimension {} interpolated on a grid of dimension {}".format(form.dim, grid.dim))

    if form.poly_degree > MAX_POLY_DEGREE:
        raise ValueError("Unsupported polynomial degree {} (at most {})".format(form.poly_degree, MAX_POLY_DEGREE))

    h = grid.spacing
    k = form.degree
    ranks, pos = grid.face_table(k)
    values = np.zeros(len(ranks))

    for dr, dirs in enumerate(grid.directions(k)):
        sel = np.flatnonzero(ranks == dr)
        base = pos[sel].astype(float)

        for nodes in product(range(2), repeat=len(dirs)):
            pts = base.copy()
            weight = 1.0
            for axis, node in zip(dirs, nodes):
                pts[:, axis] += GAUSS_NODES[node]
                weight *= GAUSS_WEIGHTS[node]

            values[sel] += weight * form.evaluate(pts * h)[:, dr]

    return Cochain(grid, k, values * h**k)


####################################################################
################# Means and the multiscale seminorm ################
####################################################################

def cube_mean(field, grid, degree, lower=None, side=None):
    #componentwise mean of a per-cell field over a subcube

    field = np.asarray(field, dtype=float).reshape(grid.num_cells(), -1)
    if lower is None:
        lower = np.zeros(grid.dim, dtype=int)
    if side is None:
        side = grid.side

    cells = grid.blocks.region_indices(lower, side)
    if len(cells) == 0:
        raise ValueError("Empty region")

    return AltForm(grid.dim, degree, field[cells].mean(axis=0))


def multiscale_seminorm(field, grid):
    #h * ( |f|_L2 + sum_{n<m} 3^n (mean over blocks of |block mean|^2)^(1/2) )

    level = grid.get_level()
    field = np.asarray(field, dtype=float).reshape(grid.num_cells(), -1)

    total = np.sqrt(np.mean(np.sum(field**2, axis=1)))
    for n in range(level):
        means = grid.blocks.block_means(field, n)
        total += 3**n * np.sqrt(np.mean(np.sum(means**2, axis=1)))

    return float(grid.spacing * total)


####################################################################
################# Output ###########################################
####################################################################

def cochain_frame(u):

    ranks, pos = u.grid.face_table(u.degree)
    names = ['-'.join(str(i+1) for i in dirs) or 'none' for dirs in u.grid.directions(u.degree)]

    data = {'face_index': np.arange(len(ranks)),
            'direction_set': [names[k] for k in ranks]}
    for i in range(u.grid.dim):
        data['position_{}'.format(i)] = pos[:, i]
    data['value'] = u.values

    return pd.DataFrame(data)


def write_cochain_csv(u, path):

    cochain_frame(u).to_csv(path, index=False)
    return path
