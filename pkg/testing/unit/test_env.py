import os
import json
import pytest

#add the paths to the source code folder for testing
import sys
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '../..'))

import numpy as np
import pandas as pd

from FORMHOM.forms.complex import Grid
from FORMHOM.forms.exterior import AltForm
from FORMHOM.homog import env as envs


def testParse():

    spec = envs.EnsembleSpec.parse('iid-spd', 2, 1)
    assert(spec.kind == 'iid-spd' and spec.lam == envs.DEFAULT_LAMBDA)
    assert(envs.EnsembleSpec.parse('iid-spd:0.5', 3, 2).lam == 0.5)

    cb = envs.EnsembleSpec.parse('checkerboard2:1,4', 2, 1)
    assert(cb.values == (1.0, 4.0) and cb.lam == 0.25)

    lam = envs.EnsembleSpec.parse('laminate:2,1,4', 3, 2)
    assert(lam.axis == 2 and lam.size == 3)

    const = envs.EnsembleSpec.parse('constant:2', 3, 1)
    assert(np.allclose(const.matrix, 2.0*np.eye(3)))

    #the string form reads back to the same law
    for text in ['iid-spd:0.3', 'checkerboard2:1,4', 'laminate:1,2,3']:
        spec = envs.EnsembleSpec.parse(text, 2, 1)
        again = envs.EnsembleSpec.parse(spec.to_string(), 2, 1)
        assert(again.to_dict() == spec.to_dict())

    print("Parse Test Passed")

    return


def testParseErrors():

    bad = ['foo', 'checkerboard2:1', 'constant:1,2', 'iid-spd:0.1,0.2', 'laminate:3,1,4', 'iid-spd:1.5']
    for text in bad:
        with pytest.raises(ValueError):
            envs.EnsembleSpec.parse(text, 2, 1)

    #values outside the ellipticity window
    with pytest.raises(ValueError):
        envs.EnsembleSpec.parse('checkerboard2:1,8', 2, 1, lam=0.25)

    with pytest.raises(ValueError):
        envs.EnsembleSpec('iid-spd', 2, 3)

    with pytest.raises(ValueError):
        envs.EnsembleSpec.parse('checkerboard2:1,4', 2, 1).with_degree(3)

    print("Parse Error Test Passed")

    return


def testSamplingDeterminism():

    spec = envs.EnsembleSpec.parse('iid-spd', 2, 1)

    a = envs.sample(spec, 1, seed=7, sample_index=3)
    b = envs.sample(spec, 1, seed=7, sample_index=3)
    c = envs.sample(spec, 1, seed=7, sample_index=4)
    d = envs.sample(spec, 1, seed=8, sample_index=3)

    assert(np.array_equal(a.get_cells(), b.get_cells()))
    assert(not np.allclose(a.get_cells(), c.get_cells()))
    assert(not np.allclose(a.get_cells(), d.get_cells()))

    with pytest.raises(ValueError):
        envs.make_generator(-1, 0)

    print("Sampling Determinism Test Passed")

    return


def testStreamSeparation():
    #diagnostic draws never replay the uniforms behind an environment

    coins = envs.make_generator(7, 0).random(27) < 0.5
    for stream in envs.STREAMS[1:]:
        signs = envs.make_generator(7, 0, stream).uniform(-1.0, 1.0, 27) < 0
        assert(not np.array_equal(coins, signs))

        a = envs.make_generator(7, 0, stream).random(8)
        b = envs.make_generator(7, 1, stream).random(8)
        c = envs.make_generator(7, 0).random(8)
        assert(not np.allclose(a, b) and not np.allclose(a, c))

    #the environment stream is unchanged by the stream keyword
    assert(np.array_equal(envs.make_generator(7, 3, envs.ENV_STREAM).random(5), envs.make_generator(7, 3).random(5)))

    with pytest.raises(ValueError):
        envs.make_generator(7, 0, 99)

    print("Stream Separation Test Passed")

    return


def testCheckerboardFraction():
    #pooled fraction of value-1 cells over 20 seeds of 81 cells

    spec = envs.EnsembleSpec.parse('checkerboard2:1,4', 2, 1)
    scales = np.concatenate([envs.sample(spec, 2, seed).get_cells()[:, 0, 0] for seed in range(20)])

    fraction = np.mean(scales == 1.0)
    assert(0.44 <= fraction <= 0.56)

    print("Checkerboard Fraction Test Passed")

    return


def testStationarityAndIndependence():
    #per-cell marginals at two cells agree; adjacent cells are uncorrelated

    spec = envs.EnsembleSpec.parse('iid-spd', 2, 1)
    nsamples = 1000
    traces = np.array([np.trace(envs.sample(spec, 1, seed=11, sample_index=i).get_cells(), axis1=1, axis2=2)
                       for i in range(nsamples)])

    a, b = traces[:, 0], traces[:, 4]
    mean_err = np.sqrt(a.var(ddof=1)/nsamples + b.var(ddof=1)/nsamples)
    assert(abs(a.mean() - b.mean()) <= 3.0*mean_err)

    def var_stderr(x):
        return np.sqrt(np.mean((x - x.mean())**4) - x.var()**2) / np.sqrt(nsamples)
    assert(abs(a.var() - b.var()) <= 3.0*np.hypot(var_stderr(a), var_stderr(b)))

    #cells 0 and 1 share a face
    corr = np.corrcoef(traces[:, 0], traces[:, 1])[0, 1]
    assert(abs(corr) <= 3.0/np.sqrt(nsamples))

    print("Stationarity and Independence Test Passed")

    return


def testSpectrum():

    for dim, degree in [(2,1), (3,1), (3,2), (2,2)]:
        spec = envs.EnsembleSpec.parse('iid-spd:0.3', dim, degree)
        env = envs.sample(spec, 1, seed=2)
        lo, hi = env.spectrum_bounds()
        assert(lo >= 0.3 - 1e-12 and hi <= 1.0/0.3 + 1e-12)

        cells = env.get_cells()
        assert(np.abs(cells - cells.transpose(0, 2, 1)).max() < 1e-14)

    Q = envs.haar_orthogonal(np.random.default_rng(0), 5, 3)
    assert(np.allclose(Q @ Q.transpose(0, 2, 1), np.eye(3)))

    print("Spectrum Test Passed")

    return


def testCheckerboardAndLaminate():

    spec = envs.EnsembleSpec.parse('checkerboard2:1,4', 2, 1)
    env = envs.sample(spec, 2, seed=5)
    cells = env.get_cells()
    scales = cells[:, 0, 0]
    assert(set(np.unique(scales)) <= {1.0, 4.0})
    assert(np.allclose(cells, scales[:, None, None] * np.eye(2)))
    assert(len(np.unique(scales)) == 2)

    spec = envs.EnsembleSpec.parse('laminate:1,1,4', 2, 1)
    env = envs.sample(spec, 2, seed=5)
    pos = env.get_grid().cell_positions()
    scales = env.get_cells()[:, 0, 0]
    for x in range(9):
        layer = scales[pos[:, 0] == x]
        assert(np.all(layer == layer[0]))

    print("Checkerboard and Laminate Test Passed")

    return


def testEnvironmentValidation():

    grid = Grid(2, 1)
    with pytest.raises(ValueError):
        envs.Environment(grid, 1, [[[1.0, 0.5], [0.0, 1.0]]], 0.25)

    with pytest.raises(ValueError):
        envs.Environment(grid, 1, [10.0*np.eye(2)], 0.25)

    with pytest.raises(ValueError):
        envs.Environment(grid, 1, np.eye(2), 0.25)

    env = envs.Environment(grid, 1, [2.0*np.eye(2)], 0.25)
    assert(env.cell(0).energy(AltForm.unit(2, 1, 0)) == 2.0)

    print("Environment Validation Test Passed")

    return


def testRestrict():

    spec = envs.EnsembleSpec.parse('iid-spd', 2, 1)
    env = envs.sample(spec, 2, seed=1)
    sub = env.restrict([3, 6], 3)

    assert(sub.get_grid().side == 3)
    index = env.get_grid().blocks.convertPosToIndex([[3, 6], [5, 8]])
    assert(np.array_equal(sub.get_cells()[0], env.get_cells()[index[0]]))
    assert(np.array_equal(sub.get_cells()[-1], env.get_cells()[index[1]]))

    with pytest.raises(ValueError):
        env.restrict([7, 0], 3)

    print("Restrict Test Passed")

    return


def testInvertEnv():

    for dim, degree in [(2,1), (3,1), (3,2), (2,2)]:
        spec = envs.EnsembleSpec.parse('iid-spd', dim, degree)
        env = envs.sample(spec, 1, seed=3)

        inv = envs.invert_env(env)
        assert(inv.get_degree() == dim - degree)

        back = envs.invert_env(inv)
        assert(np.allclose(back.get_cells(), env.get_cells()))

        #the inverse law keeps the ellipticity window
        lo, hi = inv.spectrum_bounds()
        assert(lo >= spec.lam - 1e-10 and hi <= 1.0/spec.lam + 1e-10)

    print("Invert Env Test Passed")

    return


def testExactAhom():

    lam = envs.EnsembleSpec.parse('laminate:1,1,4', 2, 1).exact_ahom()
    assert(np.allclose(lam.get_matrix(), np.diag([1.6, 2.5])))

    cb = envs.EnsembleSpec.parse('checkerboard2:1,4', 2, 1).exact_ahom()
    assert(np.allclose(cb.get_matrix(), 2.0*np.eye(2)))

    top = envs.EnsembleSpec.parse('checkerboard2:1,4', 2, 2).exact_ahom()
    assert(np.allclose(top.get_matrix(), [[1.6]]))

    assert(envs.EnsembleSpec.parse('iid-spd', 2, 1).exact_ahom() is None)
    assert(envs.EnsembleSpec.parse('checkerboard2:1,4', 3, 1).exact_ahom() is None)

    print("Exact Ahom Test Passed")

    return


def testWriteEnv(tmp_path):

    spec = envs.EnsembleSpec.parse('iid-spd', 3, 2)
    env = envs.sample(spec, 1, seed=4, sample_index=2)

    csv_path, json_path = envs.write_env(env, str(tmp_path / 'out'), {'seed': 4, 'sample_index': 2})

    frame = pd.read_csv(csv_path)
    assert(len(frame) == 27 * 3 * 3)
    assert(np.allclose(frame['entry'].values, env.get_cells().ravel()))

    with open(json_path) as infile:
        info = json.load(infile)
    assert(info['seed'] == 4 and info['side'] == 3 and info['r'] == 2)

    print("Write Env Test Passed")

    return
