'''

Boundary-value problems d(a du) = 0 with prescribed tangential data, the two-scale
expansion against the homogenized problem, and the interior Caccioppoli diagnostic.

Boundary data is an (r-1)-cochain, or a polynomial form field that is interpolated onto
the grid; only its values on boundary faces are used. Solutions are unique up to closed
cochains vanishing on the boundary, so every error and ratio below is computed from du,
or from u after removing its best closed approximation.

The two-scale experiment works on the unit cube at resolution ε = 3^{-k}: one cell per
oscillation period, so the environment is a sample on □_k scaled by ε.

'''

import logging
import warnings

import numpy as np
import pandas as pd

from scipy.sparse.linalg import lsqr

from dataclasses import dataclass, field

from ..forms.exterior import AltForm, EnergyMatrix, num_forms
from ..forms.complex import (Cochain, PolyFormField, assemble_mass, boundary_mask, coboundary_matrix,
                             face_average, face_centers, identity_cells, interpolate, multiscale_seminorm,
                             potential, reconstruction_matrix)
from .env import Environment, sample, make_generator, CACCIOPPOLI_STREAM
from .solver import EnergySystem, SolveReport, conjugate_gradient, DEFAULT_RTOL
from .homogenize import estimate_ahom, reference_ahom
from ..util.parallel import ordered_map


logger = logging.getLogger("FORMHOM.dirichlet")

DOMAIN_NOTE = 'unit cube (cubical complex; smooth domain replaced by the cube)'


class DirichletProblem:
    '''Environment (or constant energy matrix on a grid) plus boundary data of degree r-1.'''

    def __init__(self, env, data, grid=None, rtol=DEFAULT_RTOL):

        if isinstance(env, EnergyMatrix):
            if grid is None:
                raise ValueError("A constant coefficient needs the grid it lives on")
            env = Environment.constant(grid, env)

        grid = env.get_grid()
        degree = env.get_degree()

        if isinstance(data, PolyFormField):
            data = interpolate(data, grid)

        if not isinstance(data, Cochain):
            data = Cochain(grid, degree-1, data)

        if data.grid != grid or data.degree != degree-1:
            raise ValueError("Boundary data of degree {} on {} does not fit an environment of degree {} on {}".format(
                              data.degree, data.grid, degree, grid))

        values = np.asarray(data.values, dtype=float)
        mask = boundary_mask(grid, degree-1)
        boundary = mask.boundary_indices()

        if not np.all(np.isfinite(values[boundary])):
            raise ValueError("Boundary data must be finite on every boundary face")

        #keep exactly the boundary values
        full = np.zeros(len(values))
        full[boundary] = values[boundary]

        self.__env  = env
        self.__data = Cochain(grid, degree-1, full)
        self.__rtol = rtol

    def get_env(self):

        return self.__env

    def get_grid(self):

        return self.__env.get_grid()

    def get_degree(self):

        return self.__env.get_degree()

    def get_data(self):

        return self.__data

    def get_rtol(self):

        return self.__rtol


def solve_dirichlet(problem, x0=None, report=False, system=None):

    if system is None:
        system = EnergySystem(problem.get_env(), problem.get_rtol())

    u, iterations, residual = system.solve_dirichlet(problem.get_data().values, x0)
    solution = Cochain(problem.get_grid(), problem.get_degree()-1, u)

    if report:
        return SolveReport(0.5 * system.energy(u) / system.get_volume(), solution, iterations, residual)

    return solution


####################################################################
################# Two-scale expansion ##############################
####################################################################

@dataclass
class TwoScaleReport:
    eps_list: list
    l2_errors: list
    hminus1_errors: list
    expansion_errors: list
    fitted_rate: float
    l2_stderr: list = field(default_factory=list)
    hminus1_stderr: list = field(default_factory=list)
    expansion_stderr: list = field(default_factory=list)
    nsamples: int = 1
    metadata: dict = field(default_factory=dict)

    def to_frame(self):

        return pd.DataFrame({'eps': self.eps_list, 'l2_error': self.l2_errors,
                             'hminus1_error': self.hminus1_errors, 'expansion_error': self.expansion_errors,
                             'l2_stderr': self.l2_stderr, 'hminus1_stderr': self.hminus1_stderr,
                             'expansion_stderr': self.expansion_stderr})


def triadic_exponent(eps):
    #k with eps = 3^{-k}

    if not eps > 0:
        raise ValueError("Scale must be positive, got {}".format(eps))

    k = int(round(-np.log(eps) / np.log(3.0)))
    if k < 0 or abs(3.0**(-k) - eps) > 1e-12 * eps:
        raise ValueError("Scale {} is not of the form 3^-k, so the oscillation grid does not nest".format(eps))

    return k


def cutoff(grid, degree, width):
    #ζ at the face centers: 0 within width of the boundary, 1 beyond twice that, multilinear between

    if not width > 0:
        raise ValueError("Cutoff width must be positive, got {}".format(width))

    side = grid.side * grid.spacing
    x = face_centers(grid, degree)
    dist = np.minimum(x, side - x)

    return np.prod(np.clip((dist - width) / width, 0.0, 1.0), axis=1)


def correctors(system):
    #χ_I = u_I - l_{dx_I}, with u_I the solution with boundary data l_{dx_I}

    dim, degree = system.get_dim(), system.get_degree()
    out = []
    for k in range(num_forms(dim, degree)):
        affine = system.affine_data(AltForm.unit(dim, degree, k))
        u, _, _ = system.solve_dirichlet(affine)
        out.append(u - affine)

    return np.array(out)


def closed_projection_error(grid, degree, e, rtol=DEFAULT_RTOL):
    #L2 norm of e after removing its best approximation by closed cochains vanishing on the boundary

    G = assemble_mass(grid, degree, identity_cells(grid, degree))
    if degree == 0:
        return float(np.sqrt(max(e @ (G @ e), 0.0)))

    inner = boundary_mask(grid, degree-1).interior_indices()
    Z = coboundary_matrix(grid, degree-1).astype(float)[:, inner].tocsr()

    A = (Z.T @ G @ Z).tocsr()
    y, _, _ = conjugate_gradient(A, Z.T @ (G @ e), rtol, diag=A.diagonal())
    e = e - Z @ y

    return float(np.sqrt(max(e @ (G @ e), 0.0)))


def _two_scale_sample(spec, data, ahom, k, seed, index, width, rtol):
    #errors of one environment at eps = 3^-k

    degree = spec.degree
    env = sample(spec, k, seed, index, spacing=3.0**(-k))
    grid = env.get_grid()

    hetero = EnergySystem(env, rtol)
    homog  = EnergySystem(Environment.constant(grid, ahom), rtol)

    boundary = interpolate(data, grid).values
    ue, _, _ = hetero.solve_dirichlet(boundary)
    u,  _, _ = homog.solve_dirichlet(boundary)

    l2 = closed_projection_error(grid, degree-1, ue - u, rtol)
    hminus1 = multiscale_seminorm(hetero.cell_gradient(ue - u), grid)

    #w = u + sum_I ζ (du)_I χ_I
    chi = correctors(hetero)
    du = homog.cell_gradient(u)
    zeta = cutoff(grid, degree-1, width)
    w = u.copy()
    for k_I in range(len(chi)):
        w += zeta * face_average(du[:, k_I], grid, degree-1) * chi[k_I]

    return l2, hminus1, hetero.reference_norm(ue - w)


def _mean_and_stderr(values):

    values = np.asarray(values, dtype=float)
    stderr = values.std(ddof=1) / np.sqrt(len(values)) if len(values) > 1 else 0.0
    return float(values.mean()), float(stderr)


def two_scale_error(spec, eps_list, data=None, seed=0, ahom=None, width=None, ref_m=3, ref_nsamples=10,
                    nsamples=1, threads=1, rtol=DEFAULT_RTOL, verbose=False):

    dim, degree = spec.dim, spec.degree
    if data is None:
        data = potential(AltForm.unit(dim, degree, 0))

    if data.dim != dim or data.degree != degree - 1:
        raise ValueError("Boundary data must be a {}-form field in dimension {}".format(degree-1, dim))

    if nsamples < 1:
        raise ValueError("Two-scale errors need at least 1 sample, got {}".format(nsamples))

    exponents = [triadic_exponent(eps) for eps in eps_list]

    if ahom is not None:
        source = 'supplied'
    elif spec.exact_ahom() is not None:
        source = 'exact'
    else:
        source = 'estimate(m={}, nsamples={})'.format(ref_m, ref_nsamples)
        ahom = estimate_ahom(spec, ref_m, ref_nsamples, seed, threads=threads, rtol=rtol, verbose=verbose)
    ahom = reference_ahom(spec, ahom)

    warnings.warn("Two-scale errors are computed on the " + DOMAIN_NOTE)

    #sample indices below ref_nsamples belong to the reference estimate
    stride = max(exponents) + 1
    widths = [np.sqrt(eps) if width is None else width for eps in eps_list]

    columns = {'l2': [], 'hminus1': [], 'expansion': []}
    for eps, k, l in zip(eps_list, exponents, widths):
        if verbose:
            print("Two-scale: eps = 3^-{} over {} samples".format(k, nsamples))

        indices = [ref_nsamples + i*stride + k for i in range(nsamples)]
        errors = ordered_map(lambda index: _two_scale_sample(spec, data, ahom, k, seed, index, l, rtol),
                             indices, threads)

        for name, values in zip(('l2', 'hminus1', 'expansion'), zip(*errors)):
            columns[name].append(_mean_and_stderr(values))

        logger.info("eps %.3e: L2 %.3e, weak %.3e, expansion %.3e", eps, columns['l2'][-1][0],
                    columns['hminus1'][-1][0], columns['expansion'][-1][0])

    means   = {name: [c[0] for c in col] for name, col in columns.items()}
    stderrs = {name: [c[1] for c in col] for name, col in columns.items()}

    return TwoScaleReport(list(eps_list), means['l2'], means['hminus1'], means['expansion'],
                          _fit_scale_rate(eps_list, means['l2']),
                          stderrs['l2'], stderrs['hminus1'], stderrs['expansion'], nsamples,
                          {'domain': DOMAIN_NOTE, 'corrector_level': exponents, 'cutoff_width': widths,
                           'ahom_source': source, 'ahom': ahom.get_matrix().tolist(), 'nsamples': nsamples})


def _fit_scale_rate(eps_list, errors, zero_tol=1e-12):
    #slope of log error against log ε

    eps = np.asarray(eps_list, dtype=float)
    errors = np.asarray(errors, dtype=float)

    if np.all(errors <= zero_tol):
        return np.inf

    use = errors > zero_tol
    if use.sum() < 2:
        return np.nan

    slope, _ = np.polyfit(np.log(eps[use]), np.log(errors[use]), 1)
    return float(slope)


####################################################################
################# Caccioppoli ######################################
####################################################################

@dataclass
class CaccioppoliReport:
    ratios: np.ndarray
    fraction: float
    distance: float

    def summary(self):

        finite = self.ratios[np.isfinite(self.ratios)]
        return {'max': float(self.ratios.max()), 'mean': float(finite.mean()) if len(finite) else np.inf,
                'median': float(np.median(self.ratios)), 'nprobes': len(self.ratios),
                'fraction': self.fraction, 'distance': self.distance}


def inner_cube(grid, fraction):
    #(lower corner, side, distance to the boundary) of the concentric subcube V

    if not 0 < fraction < 1:
        raise ValueError("Inner fraction must lie in (0,1), got {}".format(fraction))

    t = max(1, int(round(grid.side * (1.0 - fraction) / 2.0)))
    side = grid.side - 2*t
    if side < 1:
        raise ValueError("Grid of side {} is too small for an inner cube at fraction {}".format(grid.side, fraction))

    return np.full(grid.dim, t, dtype=int), side, t * grid.spacing


def caccioppoli_ratio(system, u, fraction):
    #dist(V, ∂U) |du|_{L2(V)} / |u - closed|_{L2(U \ V)}

    grid, degree = system.get_grid(), system.get_degree()
    u = u.values if isinstance(u, Cochain) else np.asarray(u, dtype=float)
    lower, side, dist = inner_cube(grid, fraction)

    inside = grid.blocks.region_mask(lower, side)
    cell_volume = grid.spacing ** grid.dim

    grad = system.cell_gradient(u)[inside]
    numer = dist * np.sqrt(cell_volume * np.sum(grad**2))

    C = num_forms(grid.dim, degree-1)
    R = reconstruction_matrix(grid, degree-1)
    rows = (np.flatnonzero(~inside)[:, None] * C + np.arange(C)[None, :]).ravel()
    R_ann = R[rows]
    values = R_ann @ u

    if degree == 1:
        values = values - values.mean()
    else:
        D = coboundary_matrix(grid, degree-2).astype(float)
        y = lsqr(R_ann @ D, values, atol=1e-14, btol=1e-14)[0]
        values = values - R_ann @ (D @ y)

    denom = np.sqrt(cell_volume * np.sum(values**2))

    if numer <= 1e-12 * max(1.0, np.linalg.norm(u)):
        return 0.0
    if denom == 0.0:
        return np.inf

    return float(numer / denom)


def caccioppoli_diag(env, fraction=0.5, nprobes=10, seed=0, rtol=DEFAULT_RTOL, sample_index=0):

    system = env if isinstance(env, EnergySystem) else EnergySystem(env, rtol)
    _, _, dist = inner_cube(system.get_grid(), fraction)
    gen = make_generator(seed, sample_index, CACCIOPPOLI_STREAM)

    ratios = []
    for _ in range(nprobes):
        u = system.random_solution(gen)
        ratios.append(caccioppoli_ratio(system, u, fraction))

    return CaccioppoliReport(np.array(ratios), fraction, dist)
