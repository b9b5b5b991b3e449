import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '../..'))

import numpy as np

from FORMHOM.forms.complex import Grid
from FORMHOM.homog.env import Environment


####################################################################
############ Independent dense solvers for the plane ###############
####################################################################

'''
Planar reference solvers built without the library's complex. For r = 1 the unknowns
are vertex values and the energy is the bilinear finite element stiffness with the cell
matrix acting on the gradient, integrated by 2x2 Gauss quadrature. For r = 2 the unknowns
are edge integrals and du is the circulation around each cell. Systems are solved densely
(least squares where the energy is singular).

Vertices and edges are numbered the same way the library numbers them: row-major in the
lowest corner, x-edges before y-edges.
'''

GAUSS = [0.5 - 0.5/np.sqrt(3.0), 0.5 + 0.5/np.sqrt(3.0)]


def random_spd(gen, count, size, lam=0.25):
    #eigenvalues uniform in [lam, 1/lam] with a random rotation

    cells = np.zeros((count, size, size))
    for c in range(count):
        Q, _ = np.linalg.qr(gen.standard_normal((size, size)))
        mu = gen.uniform(lam, 1.0/lam, size)
        cells[c] = Q @ np.diag(mu) @ Q.T
        cells[c] = 0.5 * (cells[c] + cells[c].T)

    return cells


def random_env(seed, side=3, degree=1, spacing=1.0, lam=0.25):

    gen = np.random.default_rng(seed)
    size = 2 if degree == 1 else 1
    cells = random_spd(gen, side*side, size, lam)

    return Environment(Grid(2, side, spacing), degree, cells, lam)


def vertex_index(side, i, j):

    return i*(side+1) + j


def boundary_vertices(side):

    out = []
    for i in range(side+1):
        for j in range(side+1):
            if i in (0, side) or j in (0, side):
                out.append(vertex_index(side, i, j))

    return np.array(out)


def bilinear_gradients(a, b, s, t, h):
    #gradient of the shape function of local vertex (a,b) at local point (s,t)

    Ls = (1-a)*(1-s) + a*s
    Lt = (1-b)*(1-t) + b*t

    return np.array([(2*a-1) * Lt / h, Ls * (2*b-1) / h])


def q1_assembly(cells, side, h, p=None, Pq=None):
    #stiffness K and the loads g[j] = ∫ p.M grad φ_j, f[j] = ∫ grad φ_j . Pq

    n = (side+1)**2
    K = np.zeros((n, n))
    g = np.zeros(n)
    f = np.zeros(n)

    for i in range(side):
        for j in range(side):
            M = cells[i*side + j]
            local = [(a, b) for a in (0, 1) for b in (0, 1)]
            index = [vertex_index(side, i+a, j+b) for a, b in local]

            for s in GAUSS:
                for t in GAUSS:
                    w = 0.25 * h * h
                    grads = [bilinear_gradients(a, b, s, t, h) for a, b in local]
                    for x in range(4):
                        for y in range(4):
                            K[index[x], index[y]] += w * grads[x] @ M @ grads[y]
                        if p is not None:
                            g[index[x]] += w * p @ M @ grads[x]
                        if Pq is not None:
                            f[index[x]] += w * grads[x] @ Pq

    return K, g, f


def _dirichlet(K, data, boundary):

    n = len(K)
    interior = np.setdiff1d(np.arange(n), boundary)

    u = np.array(data, dtype=float)
    u[interior] = np.linalg.solve(K[np.ix_(interior, interior)], -K[np.ix_(interior, boundary)] @ u[boundary])

    return u


def dense_r1(env, p, q):
    #(nu, nustar, J, v) for d = 2, r = 1

    grid = env.get_grid()
    side, h = grid.side, grid.spacing
    vol = (side*h)**2
    cells = env.get_cells()

    #⋆(dx1 ∧ dx2) = 1, ⋆(dx2 ∧ dx1) = -1
    P = np.array([[0.0, 1.0], [-1.0, 0.0]])
    K, g, f = q1_assembly(cells, side, h, p, P @ q)

    #l_{-p} = -(p1 x + p2 y)
    data = np.zeros((side+1)**2)
    for i in range(side+1):
        for j in range(side+1):
            data[vertex_index(side, i, j)] = -(p[0]*i*h + p[1]*j*h)

    u = _dirichlet(K, data, boundary_vertices(side))
    nu = 0.5 * u @ K @ u / vol

    w = np.linalg.lstsq(K, f, rcond=None)[0]
    nustar = 0.5 * f @ w / vol

    v = u + w
    J = (-0.5 * v @ K @ v - g @ v + f @ v) / vol

    return nu, nustar, J, v


def vertex_gradients(v, side, h):
    #cell means of the gradient of the bilinear interpolant

    out = np.zeros((side*side, 2))
    for i in range(side):
        for j in range(side):
            c = lambda a, b: v[vertex_index(side, i+a, j+b)]
            out[i*side + j, 0] = 0.5 * (c(1, 0) - c(0, 0) + c(1, 1) - c(0, 1)) / h
            out[i*side + j, 1] = 0.5 * (c(0, 1) - c(0, 0) + c(1, 1) - c(1, 0)) / h

    return out


def dirichlet_r1(env, data):
    #vertex solution with the boundary values of data

    grid = env.get_grid()
    K, _, _ = q1_assembly(env.get_cells(), grid.side, grid.spacing)

    return _dirichlet(K, data, boundary_vertices(grid.side))


def edge_circulation(side):
    #D with (D u)_cell = u_x(i,j) + u_y(i+1,j) - u_x(i,j+1) - u_y(i,j)

    nx = side * (side+1)
    D = np.zeros((side*side, 2*nx))
    ex = lambda i, j: i*(side+1) + j
    ey = lambda i, j: nx + i*side + j

    for i in range(side):
        for j in range(side):
            row = i*side + j
            D[row, ex(i, j)]   += 1.0
            D[row, ey(i+1, j)] += 1.0
            D[row, ex(i, j+1)] -= 1.0
            D[row, ey(i, j)]   -= 1.0

    return D


def boundary_edges(side):

    nx = side * (side+1)
    out = []
    for i in range(side):
        for j in (0, side):
            out.append(i*(side+1) + j)
    for i in (0, side):
        for j in range(side):
            out.append(nx + i*side + j)

    return np.array(sorted(out))


def dense_r2(env, p, q):
    #(nu, nustar, J, v) for d = 2, r = 2; p and q are scalars

    grid = env.get_grid()
    side, h = grid.side, grid.spacing
    vol = (side*h)**2
    c = env.get_cells()[:, 0, 0]

    D = edge_circulation(side)
    K = D.T @ np.diag(c / h**2) @ D

    #l_{-p} = -p x dy integrated over the y-edges
    nx = side * (side+1)
    data = np.zeros(2*nx)
    for i in range(side+1):
        for j in range(side):
            data[nx + i*side + j] = -p * i*h * h

    u = _dirichlet(K, data, boundary_edges(side))
    nu = 0.5 * u @ K @ u / vol

    f = q * D.T @ np.ones(side*side)
    w = np.linalg.lstsq(K, f, rcond=None)[0]
    nustar = 0.5 * f @ w / vol

    #∫ p ∧ a dv = p sum_c c_c (Dv)_c
    g = p * D.T @ c
    v = u + w
    J = (-0.5 * v @ K @ v - g @ v + f @ v) / vol

    return nu, nustar, J, v
