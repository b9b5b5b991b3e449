'''

Random coefficient environments on triadic cubes.

An Environment holds one energy matrix per unit cell of a Grid. The named ensembles are

    constant:c            every cell is c*I (or a given matrix, built from code)
    iid-spd[:lam]         M = R diag(mu) R^T, mu_i uniform on [lam, 1/lam], R Haar orthogonal
    checkerboard2:c1,c2   each cell is c1*I or c2*I with probability 1/2
    laminate:axis,c1,c2   layers orthogonal to axis (1-based), each layer c1*I or c2*I

Cells are drawn independently (laminates: layers are), so the iid laws are stationary
with unit range of dependence. Sampling is a pure function of (spec, m, seed, sample
index): a Philox counter-based generator is keyed by the seed and the sample index and
the draws are laid out so that row i of every random block belongs to cell i. Diagnostic
draws (random solutions, kernel shifts) add a third key word, so they never share a stream
with the environment of any sample.

'''

import json
import os

import numpy as np
import pandas as pd

from ..forms.exterior import EnergyMatrix, num_forms, pairing_matrix, basis, SPECTRUM_TOL, SYMMETRY_TOL
from ..forms.complex import Grid


DEFAULT_LAMBDA = 0.25
ENSEMBLE_KINDS = ['constant', 'iid-spd', 'checkerboard2', 'laminate']

#key words of the generator streams; the environment stream keeps the two-word key
ENV_STREAM         = 0
VARIATION_STREAM   = 1
KERNEL_STREAM      = 2
CACCIOPPOLI_STREAM = 3
RESPONSE_STREAM    = 4
STREAMS = (ENV_STREAM, VARIATION_STREAM, KERNEL_STREAM, CACCIOPPOLI_STREAM, RESPONSE_STREAM)


class EnsembleSpec:
    '''The single-cell law of an environment, for forms of the given degree in the
       given dimension.'''

    def __init__(self, kind, dim, degree, lam=None, matrix=None, values=None, axis=None):

        if kind not in ENSEMBLE_KINDS:
            raise ValueError("Unknown ensemble '{}'. Options are {}".format(kind, ENSEMBLE_KINDS))

        if dim < 1 or degree < 1 or degree > dim:
            raise ValueError("Ensembles need 1 <= r <= d, got d={}, r={}".format(dim, degree))

        self.kind   = kind
        self.dim    = dim
        self.degree = degree
        self.size   = num_forms(dim, degree)
        self.matrix = None
        self.values = None
        self.axis   = None

        if kind == 'constant':
            if matrix is None:
                raise ValueError("A constant ensemble needs its energy matrix")
            matrix = np.array(matrix, dtype=float)
            if matrix.ndim == 0:
                matrix = float(matrix) * np.eye(self.size)
            if lam is None:
                eigs = np.linalg.eigvalsh(matrix)
                lam = min(1.0, eigs.min(), 1.0/eigs.max())
            self.matrix = EnergyMatrix(dim, degree, matrix, lam).get_matrix()

        elif kind == 'iid-spd':
            lam = DEFAULT_LAMBDA if lam is None else lam

        else:
            if values is None or len(values) != 2:
                raise ValueError("Ensemble '{}' needs two values c1,c2".format(kind))
            self.values = (float(values[0]), float(values[1]))
            if min(self.values) <= 0:
                raise ValueError("Ensemble values must be positive, got {}".format(self.values))
            if lam is None:
                lam = min(1.0, min(self.values), 1.0/max(self.values))
            for c in self.values:
                if c < lam - SPECTRUM_TOL or c > 1.0/lam + SPECTRUM_TOL:
                    raise ValueError("Value {} outside the ellipticity window [{}, {}]".format(c, lam, 1.0/lam))

            if kind == 'laminate':
                if axis is None or not (1 <= int(axis) <= dim):
                    raise ValueError("Laminate axis must lie in 1..{}, got {}".format(dim, axis))
                self.axis = int(axis)

        if not (0 < lam <= 1):
            raise ValueError("Ellipticity constant must lie in (0,1], got {}".format(lam))

        self.lam = float(lam)

    @classmethod
    def parse(cls, text, dim, degree, lam=None):
        #read 'kind' or 'kind:args' as written on the command line

        kind, _, args = text.strip().partition(':')
        kind = kind.strip()
        nums = [float(a) for a in args.replace(';', ',').split(',') if a.strip()] if args else []

        if kind == 'constant':
            if len(nums) != 1:
                raise ValueError("constant ensemble takes one scale, e.g. constant:2")
            return cls(kind, dim, degree, lam=lam, matrix=nums[0])

        if kind == 'iid-spd':
            if len(nums) > 1:
                raise ValueError("iid-spd takes at most one argument (lambda)")
            if nums:
                lam = nums[0]
            return cls(kind, dim, degree, lam=lam)

        if kind == 'checkerboard2':
            if len(nums) != 2:
                raise ValueError("checkerboard2 takes two values, e.g. checkerboard2:1,4")
            return cls(kind, dim, degree, lam=lam, values=nums)

        if kind == 'laminate':
            if len(nums) != 3:
                raise ValueError("laminate takes an axis and two values, e.g. laminate:1,1,4")
            return cls(kind, dim, degree, lam=lam, values=nums[1:], axis=int(nums[0]))

        raise ValueError("Unknown ensemble '{}'. Options are {}".format(kind, ENSEMBLE_KINDS))

    @classmethod
    def constant(cls, coeff):
        #constant ensemble from an EnergyMatrix

        return cls('constant', coeff.dim, coeff.degree, lam=coeff.lam, matrix=coeff.get_matrix())

    def to_string(self):

        if self.kind == 'constant':
            return 'constant:' + ','.join('{!r}'.format(x) for x in self.matrix.ravel())
        if self.kind == 'iid-spd':
            return 'iid-spd:{!r}'.format(self.lam)
        if self.kind == 'checkerboard2':
            return 'checkerboard2:{!r},{!r}'.format(*self.values)

        return 'laminate:{},{!r},{!r}'.format(self.axis, *self.values)

    def to_dict(self):

        return {'kind': self.kind, 'spec': self.to_string(), 'd': self.dim, 'r': self.degree, 'lambda': self.lam}

    def with_degree(self, degree):

        if self.kind == 'constant':
            raise ValueError("A constant ensemble is tied to the degree of its matrix")

        return EnsembleSpec(self.kind, self.dim, degree, lam=self.lam, values=self.values, axis=self.axis)

    def exact_ahom(self):
        #the homogenized energy matrix when the law determines it in closed form, else None

        eye = np.eye(self.size)

        if self.kind == 'constant':
            return EnergyMatrix(self.dim, self.degree, self.matrix, self.lam)

        if self.kind == 'iid-spd':
            return None

        c1, c2 = self.values
        harmonic   = 1.0 / (0.5/c1 + 0.5/c2)
        arithmetic = 0.5 * (c1 + c2)

        if self.kind == 'laminate':
            #components containing the lamination axis see the harmonic mean
            diag = [harmonic if self.axis in I else arithmetic for I in basis(self.dim, self.degree)]
            return EnergyMatrix(self.dim, self.degree, np.diag(diag), self.lam)

        if self.degree == self.dim:
            return EnergyMatrix(self.dim, self.degree, harmonic * eye, self.lam)

        if self.dim == 2 and self.degree == 1:
            return EnergyMatrix(self.dim, self.degree, np.sqrt(c1 * c2) * eye, self.lam)

        return None

    def __repr__(self):

        return "EnsembleSpec({}, d={}, r={})".format(self.to_string(), self.dim, self.degree)


class Environment:
    '''One energy matrix per cell of a grid, cells in row-major order. The cell array
       has shape (ncells, C(d,r), C(d,r)) and is read-only.'''

    def __init__(self, grid, degree, cells, lam, validate=True):

        cells = np.array(cells, dtype=float)
        C = num_forms(grid.dim, degree)

        if cells.shape != (grid.num_cells(), C, C):
            raise ValueError("Environment on {} with degree {} needs shape {}, got {}".format(
                              grid, degree, (grid.num_cells(), C, C), cells.shape))

        if not (0 < lam <= 1):
            raise ValueError("Ellipticity constant must lie in (0,1], got {}".format(lam))

        if validate and C > 0:
            self.__validate(cells, lam)

        cells.setflags(write=False)

        self.__grid   = grid
        self.__degree = degree
        self.__cells  = cells
        self.__lam    = lam

    def __validate(self, cells, lam):
        #every cell symmetric with spectrum in [lam, 1/lam]

        asym = np.max(np.abs(cells - cells.transpose(0, 2, 1)))
        if asym > SYMMETRY_TOL:
            raise ValueError("Environment has a non-symmetric cell (asymmetry {:.3g})".format(asym))

        eigs = np.linalg.eigvalsh(cells)
        if eigs.min() < lam - SPECTRUM_TOL or eigs.max() > 1.0/lam + SPECTRUM_TOL:
            raise ValueError("Environment spectrum [{:.6g}, {:.6g}] leaves the window [{}, {}]".format(
                              eigs.min(), eigs.max(), lam, 1.0/lam))

    @classmethod
    def constant(cls, grid, coeff):

        C = num_forms(grid.dim, coeff.degree)
        cells = np.broadcast_to(coeff.get_matrix(), (grid.num_cells(), C, C))
        return cls(grid, coeff.degree, cells, coeff.lam)

    def get_grid(self):

        return self.__grid

    def get_dim(self):

        return self.__grid.dim

    def get_degree(self):

        return self.__degree

    def get_cells(self):

        return self.__cells

    def get_lambda(self):

        return self.__lam

    def cell(self, index):

        return EnergyMatrix(self.get_dim(), self.__degree, self.__cells[index], self.__lam)

    def spectrum_bounds(self):
        #smallest and largest eigenvalue over all cells

        eigs = np.linalg.eigvalsh(self.__cells)
        return float(eigs.min()), float(eigs.max())

    def restrict(self, lower, side):
        #the environment seen by the subcube lower + [0,side)^d

        cells = self.__grid.blocks.region_indices(lower, side)
        sub = Grid(self.get_dim(), side, self.__grid.spacing)

        return Environment(sub, self.__degree, self.__cells[cells], self.__lam, validate=False)

    def to_frame(self):

        ncells, C, _ = self.__cells.shape
        cell, row, col = np.indices((ncells, C, C)).reshape(3, -1)

        return pd.DataFrame({'cell_index': cell, 'row': row, 'col': col, 'entry': self.__cells.ravel()})


####################################################################
################# Sampling #########################################
####################################################################

def make_generator(seed, sample_index, stream=ENV_STREAM):
    #counter-based stream keyed by (seed, sample index[, stream])

    if seed < 0 or sample_index < 0:
        raise ValueError("Seed and sample index must be non-negative, got {} and {}".format(seed, sample_index))

    if stream not in STREAMS:
        raise ValueError("Unknown stream {}. Options are {}".format(stream, STREAMS))

    key = [int(seed), int(sample_index)]
    if stream != ENV_STREAM:
        key.append(int(stream))

    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def haar_orthogonal(gen, count, size):
    #count Haar-distributed orthogonal matrices from QR of Gaussian blocks

    G = gen.standard_normal((count, size, size))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diagonal(R, axis1=1, axis2=2))
    signs[signs == 0] = 1.0

    return Q * signs[:, None, :]


def sample(spec, m, seed, sample_index=0, spacing=1.0):

    if m < 0:
        raise ValueError("Cube exponent must be non-negative, got {}".format(m))

    grid = Grid(spec.dim, 3**m, spacing)
    ncells = grid.num_cells()
    C = spec.size
    eye = np.eye(C)

    if spec.kind == 'constant':
        cells = np.broadcast_to(spec.matrix, (ncells, C, C))
        return Environment(grid, spec.degree, cells, spec.lam, validate=False)

    gen = make_generator(seed, sample_index)

    if spec.kind == 'iid-spd':
        mu = spec.lam + (1.0/spec.lam - spec.lam) * gen.random((ncells, C))
        R = haar_orthogonal(gen, ncells, C)
        cells = (R * mu[:, None, :]) @ R.transpose(0, 2, 1)
        cells = 0.5 * (cells + cells.transpose(0, 2, 1))

    elif spec.kind == 'checkerboard2':
        coin = gen.random(ncells) < 0.5
        scale = np.where(coin, spec.values[0], spec.values[1])
        cells = scale[:, None, None] * eye

    else:
        coin = gen.random(grid.side) < 0.5
        layer = np.where(coin, spec.values[0], spec.values[1])
        scale = layer[grid.cell_positions()[:, spec.axis-1]]
        cells = scale[:, None, None] * eye

    return Environment(grid, spec.degree, cells, spec.lam)


def invert_env(env):
    #per-cell inverse coefficient, degree d-r

    dim, degree = env.get_dim(), env.get_degree()
    P = pairing_matrix(dim, degree)

    inverse = P.T @ np.linalg.inv(env.get_cells()) @ P
    inverse = 0.5 * (inverse + inverse.transpose(0, 2, 1))

    return Environment(env.get_grid(), dim - degree, inverse, env.get_lambda())


####################################################################
################# Output ###########################################
####################################################################

def write_env(env, outdir, sidecar, prefix='env'):
    #env.csv with one row per matrix entry and a JSON sidecar describing the draw

    os.makedirs(outdir, exist_ok=True)

    csv_path  = os.path.join(outdir, prefix + '.csv')
    json_path = os.path.join(outdir, prefix + '.json')

    env.to_frame().to_csv(csv_path, index=False)

    info = dict(sidecar)
    info.update({'d': env.get_dim(), 'r': env.get_degree(), 'lambda': env.get_lambda(),
                 'side': env.get_grid().side, 'spacing': env.get_grid().spacing})
    with open(json_path, 'w') as outfile:
        json.dump(info, outfile, sort_keys=True, indent=2)

    return csv_path, json_path
