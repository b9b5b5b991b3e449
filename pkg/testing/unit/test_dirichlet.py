import os
import pytest

#add the paths to the source code folder for testing
import sys
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '../..'))
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from FORMHOM.forms import complex as cx
from FORMHOM.forms.exterior import AltForm, EnergyMatrix, num_forms
from FORMHOM.homog import env as envs
from FORMHOM.homog import dirichlet as bvp
from FORMHOM.homog.solver import EnergySystem, SolveReport

import dense_oracles as oracle


def quadratic_field(dim, degree, seed):
    #coefficients x.A_k x + b_k.x, one pair per basis form

    gen = np.random.default_rng(seed)
    C = num_forms(dim, degree)
    A = gen.standard_normal((C, dim, dim))
    b = gen.standard_normal((C, dim))

    def func(x):
        return np.einsum('ni,kij,nj->nk', x, A, x) + x @ b.T

    return cx.PolyFormField(dim, degree, func, poly_degree=2)


def testAffineReproduced():
    #constant coefficients solve affine data exactly

    gen = np.random.default_rng(0)
    for dim, degree in [(2,1), (2,2), (3,2)]:
        grid = cx.Grid(dim, 3, spacing=1.0/3.0)
        coeff = EnergyMatrix(dim, degree, 1.5*np.eye(num_forms(dim, degree)), 0.25)
        p = AltForm(dim, degree, gen.standard_normal(num_forms(dim, degree)))

        problem = bvp.DirichletProblem(coeff, cx.potential(p), grid=grid)
        u = bvp.solve_dirichlet(problem)
        assert(u.degree == degree - 1)

        system = EnergySystem(problem.get_env())
        assert(np.allclose(system.cell_gradient(u), p.coeffs[None, :], atol=1e-8))

    print("Affine Reproduced Test Passed")

    return


def testZeroData():

    spec = envs.EnsembleSpec.parse('iid-spd', 2, 1)
    env = envs.sample(spec, 1, seed=1)
    report = bvp.solve_dirichlet(bvp.DirichletProblem(env, np.zeros(16)), report=True)

    assert(isinstance(report, SolveReport))
    assert(report.value == 0.0 and report.iterations == 0)
    assert(not np.any(report.maximizer.values))

    print("Zero Data Test Passed")

    return


def testDenseOracle():

    for seed in range(20):
        env = oracle.random_env(seed, side=3, degree=1, spacing=0.5)
        data = np.random.default_rng(seed).uniform(-1.0, 1.0, 16)

        u = bvp.solve_dirichlet(bvp.DirichletProblem(env, data, rtol=1e-13))
        expected = oracle.dirichlet_r1(env, data)
        assert(np.allclose(u.values, expected, atol=1e-9))

        gap = cx.coboundary(cx.Cochain(env.get_grid(), 0, u.values - expected))
        assert(np.abs(gap.values).max() < 1e-9)

        #interior values of the data are ignored
        data[5] = 100.0
        again = bvp.solve_dirichlet(bvp.DirichletProblem(env, data, rtol=1e-13))
        assert(np.allclose(again.values, u.values, atol=1e-12))

    print("Dense Oracle Dirichlet Test Passed")

    return


def testGaugeIndependence():
    #for r >= 2 the solution is only defined up to closed cochains; du is not

    spec = envs.EnsembleSpec.parse('iid-spd', 3, 2)
    env = envs.sample(spec, 1, seed=2)
    problem = bvp.DirichletProblem(env, quadratic_field(3, 1, 2))
    system = EnergySystem(env)

    u = bvp.solve_dirichlet(problem, system=system)
    x0 = np.random.default_rng(2).standard_normal(system.num_unknowns())
    w = bvp.solve_dirichlet(problem, x0=x0, system=system)

    assert(np.allclose(system.cell_gradient(u), system.cell_gradient(w), atol=1e-7))
    assert(np.allclose(u.values[system.get_boundary()], w.values[system.get_boundary()]))

    print("Gauge Independence Test Passed")

    return


def testEnergyMinimality():

    spec = envs.EnsembleSpec.parse('checkerboard2:1,4', 2, 1)
    env = envs.sample(spec, 1, seed=3)
    system = EnergySystem(env)

    data = cx.interpolate(quadratic_field(2, 0, 3), env.get_grid())
    u = bvp.solve_dirichlet(bvp.DirichletProblem(env, data))

    assert(system.energy(u) <= system.energy(data) + 1e-10)
    assert(system.is_solution(u))

    print("Energy Minimality Test Passed")

    return


def testProblemValidation():

    grid = cx.Grid(2, 3)
    coeff = EnergyMatrix(2, 1, np.eye(2), 0.25)

    with pytest.raises(ValueError):
        bvp.DirichletProblem(coeff, np.zeros(16))

    with pytest.raises(ValueError):
        bvp.DirichletProblem(coeff, cx.Cochain(grid, 1), grid=grid)

    data = np.zeros(16)
    data[0] = np.nan
    with pytest.raises(ValueError):
        bvp.DirichletProblem(coeff, data, grid=grid)

    #non-finite interior entries are dropped
    data = np.zeros(16)
    data[5] = np.inf
    assert(not np.any(bvp.DirichletProblem(coeff, data, grid=grid).get_data().values))

    print("Problem Validation Test Passed")

    return


def testClosedProjection():

    grid = cx.Grid(2, 3)
    inner = cx.boundary_mask(grid, 0).interior_indices()
    y = np.zeros(grid.num_faces(0))
    y[inner] = np.random.default_rng(4).standard_normal(len(inner))
    e = cx.coboundary_matrix(grid, 0).astype(float) @ y

    assert(bvp.closed_projection_error(grid, 1, e) < 1e-8)

    #a non-closed cochain keeps a positive error
    f = np.zeros(grid.num_faces(1))
    f[0] = 1.0
    assert(bvp.closed_projection_error(grid, 1, f) > 0.1)

    #degree 0 has no closed part to remove
    ones = np.ones(grid.num_faces(0))
    assert(abs(bvp.closed_projection_error(grid, 0, ones) - 3.0) < 1e-12)

    print("Closed Projection Test Passed")

    return


def testCutoff():

    grid = cx.Grid(2, 9, spacing=1.0/9.0)
    zeta = bvp.cutoff(grid, 0, 1.0/9.0)

    assert(zeta.min() >= 0.0 and zeta.max() <= 1.0)
    boundary = cx.boundary_mask(grid, 0).boundary_indices()
    assert(not np.any(zeta[boundary]))

    center = grid.face_index(0, 0, [[4, 4]])[0]
    assert(zeta[center] == 1.0)

    with pytest.raises(ValueError):
        bvp.cutoff(grid, 0, 0.0)

    print("Cutoff Test Passed")

    return


def testTriadicExponent():

    assert(bvp.triadic_exponent(1.0/27.0) == 3)
    assert(bvp.triadic_exponent(1.0) == 0)

    for bad in [0.2, 0.0, 3.0]:
        with pytest.raises(ValueError):
            bvp.triadic_exponent(bad)

    print("Triadic Exponent Test Passed")

    return


def testTwoScaleConstant():

    spec = envs.EnsembleSpec.parse('constant:2', 2, 1)
    with pytest.warns(UserWarning):
        report = bvp.two_scale_error(spec, [1.0/3.0, 1.0/9.0], seed=0)

    assert(np.all(np.array(report.l2_errors) < 1e-8))
    assert(np.all(np.array(report.hminus1_errors) < 1e-8))
    assert(np.all(np.array(report.expansion_errors) < 1e-8))
    assert(report.metadata['ahom_source'] == 'exact')
    assert(len(report.to_frame()) == 2)

    with pytest.raises(ValueError):
        bvp.two_scale_error(spec, [0.2], seed=0)

    with pytest.raises(ValueError):
        bvp.two_scale_error(spec, [1.0/3.0], data=cx.potential(AltForm.unit(2, 2, 0)), seed=0)

    print("Two Scale Constant Test Passed")

    return


def testTwoScaleCheckerboard():

    spec = envs.EnsembleSpec.parse('checkerboard2:1,4', 2, 1)
    with pytest.warns(UserWarning):
        report = bvp.two_scale_error(spec, [1.0/3.0, 1.0/9.0], seed=1)

    assert(all(e > 0 for e in report.l2_errors))
    assert(np.isfinite(report.fitted_rate))
    assert(report.metadata['corrector_level'] == [1, 2])
    assert(np.allclose(report.metadata['ahom'], 2.0*np.eye(2)))

    print("Two Scale Checkerboard Test Passed")

    return


def testCaccioppoli():

    grid = cx.Grid(2, 9)
    lower, side, dist = bvp.inner_cube(grid, 0.5)
    assert(list(lower) == [2, 2] and side == 5 and dist == 2.0)

    with pytest.raises(ValueError):
        bvp.inner_cube(grid, 1.0)

    coeff = EnergyMatrix(2, 1, np.eye(2), 0.25)
    system = EnergySystem(envs.Environment.constant(grid, coeff))

    assert(bvp.caccioppoli_ratio(system, np.zeros(100), 0.5) == 0.0)
    assert(bvp.caccioppoli_ratio(system, np.ones(100), 0.5) == 0.0)

    affine = system.affine_data(AltForm(2, 1, [1.0, 2.0]))
    ratio = bvp.caccioppoli_ratio(system, affine, 0.5)
    assert(np.isfinite(ratio) and ratio > 0)

    print("Caccioppoli Test Passed")

    return


def testCaccioppoliDiag():

    for dim, degree in [(2,1), (2,2)]:
        spec = envs.EnsembleSpec.parse('iid-spd', dim, degree)
        env = envs.sample(spec, 2, seed=5)

        report = bvp.caccioppoli_diag(env, fraction=0.5, nprobes=3, seed=5)
        summary = report.summary()
        assert(summary['nprobes'] == 3)
        assert(np.all(np.isfinite(report.ratios)) and np.all(report.ratios > 0))

    print("Caccioppoli Diagnostic Test Passed")

    return


def testCaccioppoliSampleIndex():
    #each sample index draws its own random solutions

    spec = envs.EnsembleSpec.parse('iid-spd', 2, 1)
    env = envs.sample(spec, 2, seed=6)

    first  = bvp.caccioppoli_diag(env, nprobes=4, seed=6, sample_index=0)
    again  = bvp.caccioppoli_diag(env, nprobes=4, seed=6, sample_index=0)
    second = bvp.caccioppoli_diag(env, nprobes=4, seed=6, sample_index=1)

    assert(np.array_equal(first.ratios, again.ratios))
    assert(not np.allclose(first.ratios, second.ratios))

    print("Caccioppoli Sample Index Test Passed")

    return


def testTwoScaleSamples():

    spec = envs.EnsembleSpec.parse('checkerboard2:1,4', 2, 1)
    with pytest.warns(UserWarning):
        report = bvp.two_scale_error(spec, [1.0/3.0, 1.0/9.0], seed=2, nsamples=2, threads=2)

    assert(report.nsamples == 2 and report.metadata['nsamples'] == 2)
    for stderr in [report.l2_stderr, report.hminus1_stderr, report.expansion_stderr]:
        assert(len(stderr) == 2)
        assert(np.all(np.isfinite(stderr)) and np.all(np.array(stderr) >= 0))

    frame = report.to_frame()
    assert('l2_stderr' in frame.columns and len(frame) == 2)

    #the thread count does not change the result
    with pytest.warns(UserWarning):
        serial = bvp.two_scale_error(spec, [1.0/3.0, 1.0/9.0], seed=2, nsamples=2, threads=1)
    assert(serial.l2_errors == report.l2_errors)

    constant = envs.EnsembleSpec.parse('constant:2', 2, 1)
    with pytest.warns(UserWarning):
        flat = bvp.two_scale_error(constant, [1.0/3.0], seed=0, nsamples=3)
    assert(np.all(np.array(flat.l2_stderr) < 1e-8))

    with pytest.raises(ValueError):
        bvp.two_scale_error(spec, [1.0/3.0], seed=0, nsamples=0)

    print("Two Scale Samples Test Passed")

    return
