'''

Variational solvers for the subadditive quantities of one environment on one cube.

Everything is expressed through the energy Q = D^T W D on (r-1)-cochains (see
forms.complex). For p of degree r and q of degree d-r, with |□| the cube volume,

    ν(□,p)   = min over u = l_{-p} on the boundary of  ½ Q(u,u) / |□|
    ν*(□,q)  = max over all u of  ( -½ Q(u,u) + ∫ du ∧ q ) / |□|
    J(□,p,q) = max over discrete solutions v of
               ( -½ Q(v,v) - ∫ p ∧ a dv + ∫ dv ∧ q ) / |□|

The maximizer of J is v = u_p + w_q, the ν minimizer plus the ν* maximizer, and
J = ν + ν* - ⋆(p∧q). Both linear terms are assembled exactly: ∫ p ∧ a dv = v . Q l_p and
∫ dv ∧ q = v . D^T R^T (h^d Pq), with R the cell-mean reconstruction.

The systems are singular (closed cochains are in the kernel of Q) but consistent, and CG
is run on them directly. Maximizers are therefore only defined up to closed forms; every
reported quantity depends on them through du alone.

'''

import logging

import numpy as np

from dataclasses import dataclass
from scipy.sparse.linalg import cg, LinearOperator

from ..forms.exterior import AltForm, num_forms, pairing_matrix, star_wedge_scalar
from ..forms.complex import (Cochain, boundary_mask, coboundary_matrix, assemble_energy, reference_energy,
                             reconstruction_matrix, interpolate, potential, restrict_cochain)
from .env import make_generator, VARIATION_STREAM, KERNEL_STREAM


logger = logging.getLogger("FORMHOM.solver")

DEFAULT_RTOL = 1e-10
DEFAULT_MAXITER_FACTOR = 50
MAX_RESTARTS = 3

#relative size of a kernel component of a right side that still counts as consistent
CONSISTENCY_TOL = 1e-10


class ConvergenceError(RuntimeError):
    '''CG did not reach the requested relative residual.'''

    def __init__(self, msg, iterations=0, relative_residual=np.inf):

        super().__init__(msg)
        self.iterations = iterations
        self.relative_residual = relative_residual


class InconsistentSystemError(RuntimeError):
    '''A right side is not orthogonal to the kernel of the energy.'''

    pass


class NumericalError(RuntimeError):
    '''A computed quantity came out unusable, e.g. an ill-conditioned sample average.'''

    pass


def conjugate_gradient(A, b, rtol=DEFAULT_RTOL, maxiter_factor=DEFAULT_MAXITER_FACTOR, diag=None, x0=None):
    #Jacobi-preconditioned CG checked against the true residual, with restarts

    b = np.asarray(b, dtype=float)
    n = len(b)
    if n == 0:
        return np.zeros(0), 0, 0.0

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0

    maxiter = int(maxiter_factor * np.sqrt(n)) + 1000

    precond = None
    if diag is not None:
        inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
        precond = LinearOperator((n, n), matvec=lambda x: inv_diag * np.ravel(x), dtype=float)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    iterations = 0
    residual = np.inf

    for attempt in range(MAX_RESTARTS + 1):

        count = [0]
        def callback(xk):
            count[0] += 1

        x, info = cg(A, b, x0=x, rtol=rtol, atol=0.0, maxiter=maxiter, M=precond, callback=callback)
        iterations += count[0]

        residual = np.linalg.norm(b - A @ x) / bnorm
        if residual <= rtol:
            logger.debug("CG converged in %d iterations, relative residual %.3e", iterations, residual)
            return x, iterations, residual

        logger.info("CG restart %d of %d (info %d, relative residual %.3e)", attempt+1, MAX_RESTARTS, info, residual)

    raise ConvergenceError("CG failed to reach relative residual {:.1e} after {} iterations (reached {:.3e})".format(
                            rtol, iterations, residual), iterations, residual)


####################################################################
################# Assembled system of one environment ##############
####################################################################

class EnergySystem:
    '''Assembled operators of one environment: the energy Q on (r-1)-cochains, its
       interior/boundary blocks for Dirichlet problems, the coboundary D and the cell
       mean reconstruction R of r-cochains.'''

    def __init__(self, env, rtol=DEFAULT_RTOL, maxiter_factor=DEFAULT_MAXITER_FACTOR):

        degree = env.get_degree()
        if degree < 1:
            raise ValueError("Solvers need an environment of degree at least 1, got {}".format(degree))

        grid = env.get_grid()

        self.__env    = env
        self.__grid   = grid
        self.__degree = degree
        self.__rtol   = rtol
        self.__maxiter_factor = maxiter_factor

        self.__D = coboundary_matrix(grid, degree-1).astype(float)
        self.__Q = assemble_energy(env)
        self.__R = reconstruction_matrix(grid, degree)
        self.__G = None

        mask = boundary_mask(grid, degree-1)
        self.__interior = mask.interior_indices()
        self.__boundary = mask.boundary_indices()

        Q_rows = self.__Q[self.__interior]
        self.__Qii = Q_rows[:, self.__interior].tocsr()
        self.__Qib = Q_rows[:, self.__boundary].tocsr()
        self.__diag = self.__Q.diagonal()

    def get_env(self):

        return self.__env

    def get_grid(self):

        return self.__grid

    def get_degree(self):

        return self.__degree

    def get_dim(self):

        return self.__grid.dim

    def get_volume(self):

        return self.__grid.volume()

    def get_energy(self):

        return self.__Q

    def get_coboundary(self):

        return self.__D

    def get_interior(self):

        return self.__interior

    def get_boundary(self):

        return self.__boundary

    def get_rtol(self):

        return self.__rtol

    def get_reference_energy(self):
        #energy of a = ⋆, built on first use

        if self.__G is None:
            self.__G = reference_energy(self.__grid, self.__degree)

        return self.__G

    def num_unknowns(self):

        return self.__Q.shape[0]

    def energy(self, u):

        u = _values(u)
        return float(u @ (self.__Q @ u))

    def reference_norm(self, u):
        #normalized L2 norm of du

        u = _values(u)
        return float(np.sqrt(max(u @ (self.get_reference_energy() @ u), 0.0) / self.get_volume()))

    def cell_gradient(self, u):
        #cell means of du, shape (ncells, C(d,r))

        C = num_forms(self.get_dim(), self.__degree)
        return (self.__R @ (self.__D @ _values(u))).reshape(-1, C)

    def solve_free(self, f, x0=None):

        return conjugate_gradient(self.__Q, f, self.__rtol, self.__maxiter_factor, self.__diag, x0)

    def solve_dirichlet(self, data, x0=None):
        #minimize Q over cochains equal to data on the boundary faces

        u = np.array(_values(data), dtype=float)
        if len(u) != self.num_unknowns():
            raise ValueError("Boundary data has {} entries, expected {}".format(len(u), self.num_unknowns()))

        rhs = -(self.__Qib @ u[self.__boundary])
        guess = None if x0 is None else _values(x0)[self.__interior]
        x, iterations, residual = conjugate_gradient(self.__Qii, rhs, self.__rtol, self.__maxiter_factor,
                                                     self.__diag[self.__interior], guess)
        u[self.__interior] = x

        return u, iterations, residual

    def neumann_load(self, q):
        #f with f . u = ∫ du ∧ q

        dim, degree = self.get_dim(), self.__degree
        if q is None:
            return np.zeros(self.num_unknowns())

        if q.dim != dim or q.degree != dim - degree:
            raise ValueError("q must be a {}-form in dimension {}, got a {}-form in dimension {}".format(
                              dim - degree, dim, q.degree, q.dim))

        Pq = pairing_matrix(dim, degree) @ q.coeffs
        weights = self.__grid.spacing**dim * np.tile(Pq, self.__grid.num_cells())

        return self.__D.T @ (self.__R.T @ weights)

    def dirichlet_load(self, p):
        #g with g . v = ∫ p ∧ a dv

        if p is None:
            return np.zeros(self.num_unknowns())

        self.__check_p(p)
        return self.__Q @ interpolate(potential(p), self.__grid).values

    def affine_data(self, p):
        #interpolant of l_p, the affine potential with d l_p = p

        self.__check_p(p)
        return interpolate(potential(p), self.__grid).values

    def __check_p(self, p):

        if p.dim != self.get_dim() or p.degree != self.__degree:
            raise ValueError("p must be a {}-form in dimension {}, got a {}-form in dimension {}".format(
                              self.__degree, self.get_dim(), p.degree, p.dim))

    def check_consistent(self, f):
        #a right side of Q u = f must annihilate the closed cochains

        if self.__degree >= 2:
            closed = coboundary_matrix(self.__grid, self.__degree-2).T @ f
            violation = np.linalg.norm(closed)
        else:
            violation = abs(np.sum(f))

        scale = np.sum(np.abs(f))
        if violation > CONSISTENCY_TOL * scale:
            raise InconsistentSystemError("Right side has a kernel component of {:.3e} (scale {:.3e})".format(
                                           violation, scale))

    def functional(self, v, p=None, q=None):
        #( -½ Q(v,v) - ∫ p ∧ a dv + ∫ dv ∧ q ) / |□|

        v = _values(v)
        value = -0.5 * self.energy(v)
        if p is not None:
            value -= self.dirichlet_load(p) @ v
        if q is not None:
            value += self.neumann_load(q) @ v

        return float(value / self.get_volume())

    def interior_residual(self, v):

        return float(np.linalg.norm((self.__Q @ _values(v))[self.__interior]))

    def is_solution(self, v, tol=1e-7):

        v = _values(v)
        scale = np.max(self.__diag, initial=0.0) * np.linalg.norm(v)
        return self.interior_residual(v) <= tol * scale

    def random_solution(self, gen):
        #discrete solution with boundary values uniform on [-1,1]

        data = np.zeros(self.num_unknowns())
        data[self.__boundary] = gen.uniform(-1.0, 1.0, len(self.__boundary))
        u, _, _ = self.solve_dirichlet(data)

        return u


def _values(u):

    return u.values if isinstance(u, Cochain) else np.asarray(u)


def as_system(env, rtol=DEFAULT_RTOL):

    if isinstance(env, EnergySystem):
        return env

    return EnergySystem(env, rtol)


####################################################################
################# Reports ##########################################
####################################################################

@dataclass
class SolveReport:
    value: float
    maximizer: Cochain
    iterations: int
    relative_residual: float

    def to_record(self, seed=None, config_hash=None):

        return {'value': float(self.value), 'iterations': int(self.iterations),
                'residual': float(self.relative_residual), 'seed': seed, 'config_hash': config_hash}


@dataclass
class JBundle:
    J: float
    nu: float
    nustar: float
    pairing: float
    v_p: Cochain
    v_q: Cochain
    first_variation_residual: float = 0.0

    def maximizer(self):

        return self.v_p + self.v_q

    def decomposition_residual(self):

        return abs(self.J - (self.nu + self.nustar - self.pairing))


####################################################################
################# ν, ν* and J ######################################
####################################################################

def solve_nu(env, p, rtol=DEFAULT_RTOL):

    system = as_system(env, rtol)
    data = system.affine_data(-p)
    u, iterations, residual = system.solve_dirichlet(data)

    value = 0.5 * system.energy(u) / system.get_volume()
    return SolveReport(value, Cochain(system.get_grid(), system.get_degree()-1, u), iterations, residual)


def solve_nustar(env, q, rtol=DEFAULT_RTOL):

    system = as_system(env, rtol)
    f = system.neumann_load(q)
    system.check_consistent(f)

    u, iterations, residual = system.solve_free(f)

    value = 0.5 * float(f @ u) / system.get_volume()
    return SolveReport(value, Cochain(system.get_grid(), system.get_degree()-1, u), iterations, residual)


def solve_J(env, p, q, rtol=DEFAULT_RTOL, nprobes=0, seed=0, sample_index=0):

    system = as_system(env, rtol)

    nu     = solve_nu(system, p)
    nustar = solve_nustar(system, q)
    v = nu.maximizer.values + nustar.maximizer.values

    J = system.functional(v, p, q)
    residual = first_variation_residual(system, v, p, q, nprobes, seed, sample_index) if nprobes else 0.0

    return JBundle(J, nu.value, nustar.value, star_wedge_scalar(p, q), nu.maximizer, nustar.maximizer, residual)


def first_variation_residual(system, v, p, q, nprobes, seed=0, sample_index=0):
    #largest normalized defect of ∫ dv ∧ a du = ∫ (-p ∧ a du + du ∧ q) over random solutions u

    gen = make_generator(seed, sample_index, VARIATION_STREAM)
    g = system.dirichlet_load(p)
    f = system.neumann_load(q)
    volume = system.get_volume()
    scale_v = p.norm() + q.norm() + system.reference_norm(v)

    worst = 0.0
    for k in range(nprobes):
        u = system.random_solution(gen)
        lhs = float(v @ (system.get_energy() @ u)) / volume
        rhs = float(-g @ u + f @ u) / volume
        scale = system.reference_norm(u) * scale_v
        if scale > 0:
            worst = max(worst, abs(lhs - rhs) / scale)

    return worst


class Quadratics:
    '''The quadratic forms of one sample: ν(p) = ½ p.N p, ν*(q) = ½ q.B q, and the mean
       gradient X[:,j] of the ν* maximizer for the j-th basis (d-r)-form. U and W hold the
       basis maximizers as columns, so the maximizer of J(p,q) is U p + W q.'''

    def __init__(self, dim, degree, N, B, X, U, W, volume):

        self.dim    = dim
        self.degree = degree
        self.N = N
        self.B = B
        self.X = X
        self.U = U
        self.W = W
        self.volume = volume

    def nu(self, p):

        p = _coeffs(p)
        return 0.5 * float(p @ self.N @ p)

    def nustar(self, q):

        q = _coeffs(q)
        return 0.5 * float(q @ self.B @ q)

    def J(self, p, q):

        p, q = _coeffs(p), _coeffs(q)
        return self.nu(p) + self.nustar(q) - float(p @ pairing_matrix(self.dim, self.degree) @ q)

    def maximizer(self, p, q):

        return self.U @ _coeffs(p) + self.W @ _coeffs(q)


def _coeffs(form):

    return form.coeffs if isinstance(form, AltForm) else np.asarray(form, dtype=float)


def solve_quadratics(env, parts=('nu', 'nustar'), rtol=DEFAULT_RTOL):
    #basis solves giving N, B and X for one sample

    system = as_system(env, rtol)
    dim, degree = system.get_dim(), system.get_degree()
    volume = system.get_volume()
    Q = system.get_energy()

    C  = num_forms(dim, degree)
    Cs = num_forms(dim, dim - degree)
    n  = system.num_unknowns()

    N = U = None
    if 'nu' in parts:
        U = np.zeros((n, C))
        for i in range(C):
            U[:, i] = solve_nu(system, AltForm.unit(dim, degree, i)).maximizer.values
        N = U.T @ (Q @ U) / volume
        N = 0.5 * (N + N.T)

    B = X = W = None
    if 'nustar' in parts:
        W = np.zeros((n, Cs))
        F = np.zeros((n, Cs))
        X = np.zeros((C, Cs))
        for j in range(Cs):
            q = AltForm.unit(dim, dim - degree, j)
            W[:, j] = solve_nustar(system, q).maximizer.values
            F[:, j] = system.neumann_load(q)
            X[:, j] = system.cell_gradient(W[:, j]).mean(axis=0)
        B = W.T @ F / volume
        B = 0.5 * (B + B.T)

    return Quadratics(dim, degree, N, B, X, U, W, volume)


def quadratic_bounds(quads):
    #measured C with |p|^2/C <= ν <= C|p|^2, and the same for ν*

    out = {}
    for name, mat in (('nu', quads.N), ('nustar', quads.B)):
        if mat is None:
            continue
        eigs = np.linalg.eigvalsh(0.5 * mat)
        out[name] = {'min': float(eigs.min()), 'max': float(eigs.max()),
                     'C': float(max(eigs.max(), 1.0 / eigs.min()))}

    return out


####################################################################
################# Structural properties of J #######################
####################################################################

def _children(env):

    grid = env.get_grid()
    corners, side = grid.blocks.children()

    return [(lower, env.restrict(lower, side)) for lower in corners]


def check_subadditivity(env, p, q, rtol=DEFAULT_RTOL, level=None):
    #mean J over the subcubes of side 3^level minus the parent J; nonnegative for exact solves

    system = as_system(env, rtol)
    m = system.get_grid().get_level()
    level = m - 1 if level is None else level
    if not 0 <= level < m:
        raise ValueError("Subcube level {} needs 0 <= level < m for a cube of side {}".format(
                          level, system.get_grid().side))

    corners, side = system.get_grid().blocks.block_corners(level)
    parent = solve_J(system, p, q).J
    children = [solve_J(system.get_env().restrict(lower, side), p, q, rtol).J for lower in corners]

    return float(np.mean(children) - parent)


def quadratic_response(env, p, q, w, rtol=DEFAULT_RTOL, tol=1e-9):
    #J - F(w) sandwiched by ½ λ_min |dv - dw|^2 and ½ λ_max |dv - dw|^2

    system = as_system(env, rtol)
    w = _values(w)

    if not system.is_solution(w):
        raise NumericalError("w is not a discrete solution (interior residual {:.3e})".format(system.interior_residual(w)))

    bundle = solve_J(system, p, q)
    middle = bundle.J - system.functional(w, p, q)

    gap = bundle.maximizer().values - w
    dist = system.reference_norm(gap) ** 2
    lam_min, lam_max = system.get_env().spectrum_bounds()

    slack = tol * (1.0 + abs(bundle.J))
    lower_ok = bool(middle >= 0.5 * lam_min * dist - slack)
    upper_ok = bool(middle <= 0.5 * lam_max * dist + slack)

    return lower_ok, upper_ok, float(middle)


def uniform_convexity(quads, p1, p2, q1, q2):
    #midpoint convexity gaps of J in p and in q, with the measured constants

    p1, p2, q1, q2 = _coeffs(p1), _coeffs(p2), _coeffs(q1), _coeffs(q2)

    gap_p = 0.5*quads.J(p1, q1) + 0.5*quads.J(p2, q1) - quads.J(0.5*(p1 + p2), q1)
    gap_q = 0.5*quads.J(p1, q1) + 0.5*quads.J(p1, q2) - quads.J(p1, 0.5*(q1 + q2))

    dp = float(np.sum((p1 - p2)**2))
    dq = float(np.sum((q1 - q2)**2))

    return {'gap_p': gap_p, 'C_p': gap_p / dp if dp else 0.0,
            'gap_q': gap_q, 'C_q': gap_q / dq if dq else 0.0}


@dataclass
class OptimizerControl:
    gap: float
    margin: float
    ratio: float


def optimizer_control(env, p, q, rtol=DEFAULT_RTOL):
    #mean over children of |dv_parent - dv_child|^2 against the subadditivity margin

    system = as_system(env, rtol)
    parent = solve_J(system, p, q)
    v = parent.maximizer()

    gap = 0.0
    child_J = []
    for lower, child in _children(system.get_env()):
        child_system = EnergySystem(child, rtol)
        bundle = solve_J(child_system, p, q)
        child_J.append(bundle.J)

        diff = bundle.maximizer().values - restrict_cochain(v, lower, child.get_grid().side).values
        gap += child_system.reference_norm(diff)**2 * child_system.get_volume()

    gap /= system.get_volume()
    margin = float(np.mean(child_J) - parent.J)

    if margin > 1e-12:
        ratio = gap / margin
    elif gap <= 1e-12:
        ratio = 0.0
    else:
        ratio = np.inf

    return OptimizerControl(float(gap), margin, float(ratio))


def kernel_invariance(env, p, q, seed=0, rtol=DEFAULT_RTOL, sample_index=0):
    #largest change of the reported values when a closed cochain is added to the maximizers

    system = as_system(env, rtol)
    grid, degree = system.get_grid(), system.get_degree()
    gen = make_generator(seed, sample_index, KERNEL_STREAM)

    bundle = solve_J(system, p, q)
    v = bundle.maximizer().values
    u = bundle.v_p.values

    if degree >= 2:
        #closed and vanishing on the boundary
        y = np.zeros(grid.num_faces(degree-2))
        inner = boundary_mask(grid, degree-2).interior_indices()
        y[inner] = gen.uniform(-1.0, 1.0, len(inner))
        z = coboundary_matrix(grid, degree-2).astype(float) @ y
    else:
        z = np.full(system.num_unknowns(), gen.uniform(-1.0, 1.0))

    changes = [abs(system.functional(v + z, p, q) - system.functional(v, p, q)),
               abs(system.energy(u + z) - system.energy(u)) * 0.5 / system.get_volume(),
               float(np.max(np.abs(system.cell_gradient(v + z) - system.cell_gradient(v)), initial=0.0))]

    return float(max(changes))
