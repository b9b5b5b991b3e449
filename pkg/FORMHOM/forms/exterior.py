'''

Exact algebra of constant alternating forms on R^d.

A constant r-form is stored as its coefficient vector in the basis dx_I, where I runs
over the increasing multi-indices of size r in lexicographic order. Indices are 1-based
to match the usual notation dx_1, ..., dx_d. Every matrix and vector in the package uses
this ordering, so the rank of a multi-index is the contract between modules.

Coefficient maps a : Λ^r -> Λ^{d-r} are never stored directly. We keep only the energy
matrix M[I,J] = ⋆(dx_I ∧ a dx_J), which is symmetric positive definite for an admissible
environment, and rebuild the map on demand through the signed pairing matrix

    P[I,K] = σ(I) if K = I^c, else 0,      so that  ⋆(p ∧ q) = p^T P q

where σ(I) is the sign of the permutation (I, I^c) of (1,...,d). Then M = P A and the
matrix of a is A = P^T M.

The inverse environment a^{-1} : Λ^{d-r} -> Λ^r is stored with the ordering ⋆(a^{-1}q ∧ q),
i.e. M' = P^T M^{-1} P, which is again symmetric positive definite with the same
spectrum window. Read back with the degree d-r pairing, M' gives the map
(-1)^{r(d-r)} a^{-1}; use inverse_apply for a^{-1} itself.

'''

import numpy as np

from itertools import combinations
from functools import lru_cache


#tolerances for the admissibility checks of an energy matrix
SYMMETRY_TOL = 1e-12
SPECTRUM_TOL = 1e-10


####################################################################
################# Multi-index combinatorics ########################
####################################################################

@lru_cache(maxsize=None)
def basis(dim, degree):
    #all increasing multi-indices of size degree, lexicographic, 1-based

    if dim < 1:
        raise ValueError("Dimension must be at least 1, got {}".format(dim))

    if degree < 0 or degree > dim:
        return ()

    return tuple(combinations(range(1, dim+1), degree))


@lru_cache(maxsize=None)
def basis_lookup(dim, degree):

    return {I: k for k, I in enumerate(basis(dim, degree))}


def num_forms(dim, degree):
    #C(d,r), zero when the degree is out of range

    return len(basis(dim, degree))


def complement(dim, indices):

    return tuple(i for i in range(1, dim+1) if i not in indices)


def permutation_sign(sequence):
    #sign of the permutation sorting the sequence, by explicit inversion counting

    inversions = 0
    n = len(sequence)
    for a in range(n):
        for b in range(a+1, n):
            if sequence[a] > sequence[b]:
                inversions += 1

    return -1 if inversions % 2 else 1


def sigma(dim, indices):
    #sign of (I, I^c) as a permutation of (1,...,d)

    indices = tuple(indices)
    return permutation_sign(indices + complement(dim, indices))


class MultiIndex:
    '''A strictly increasing subset I of {1,...,d}. The rank is the position of I in
       the lexicographic enumeration of all subsets of the same size.'''

    def __init__(self, dim, indices):

        indices = tuple(int(i) for i in indices)

        if dim < 1:
            raise ValueError("Dimension must be at least 1, got {}".format(dim))

        if any(i < 1 or i > dim for i in indices):
            raise ValueError("Indices {} must lie in 1..{}".format(indices, dim))

        if any(indices[k] >= indices[k+1] for k in range(len(indices)-1)):
            raise ValueError("Indices {} must be strictly increasing".format(indices))

        self.dim     = dim
        self.indices = indices
        self.degree  = len(indices)

    @classmethod
    def from_rank(cls, dim, degree, rank):

        table = basis(dim, degree)
        if rank < 0 or rank >= len(table):
            raise ValueError("Rank {} out of range for C({},{})={}".format(rank, dim, degree, len(table)))

        return cls(dim, table[rank])

    def rank(self):

        return basis_lookup(self.dim, self.degree)[self.indices]

    def complement(self):

        return MultiIndex(self.dim, complement(self.dim, self.indices))

    def sigma(self):

        return sigma(self.dim, self.indices)

    def __eq__(self, other):

        return isinstance(other, MultiIndex) and self.dim == other.dim and self.indices == other.indices

    def __hash__(self):

        return hash((self.dim, self.indices))

    def __repr__(self):

        return "MultiIndex(d={}, {})".format(self.dim, self.indices)


class SignTable:
    '''Holds σ(I) for every I of a given degree, in rank order, together with the rank
       of the complement I^c in degree d-r.'''

    def __init__(self, dim, degree):

        self.dim    = dim
        self.degree = degree

        table = basis(dim, degree)
        lookup = basis_lookup(dim, dim - degree)

        self.sigma = np.array([sigma(dim, I) for I in table], dtype=int)
        self.complement_rank = np.array([lookup[complement(dim, I)] for I in table], dtype=int)

    def get_sign(self, indices):

        return int(self.sigma[basis_lookup(self.dim, self.degree)[tuple(indices)]])


@lru_cache(maxsize=None)
def pairing_matrix(dim, degree):
    #P with ⋆(p ∧ q) = p^T P q for p of degree r, q of degree d-r

    signs = SignTable(dim, degree)
    size  = num_forms(dim, degree)

    P = np.zeros((size, size))
    P[np.arange(size), signs.complement_rank] = signs.sigma
    P.setflags(write=False)

    return P


####################################################################
################# Constant forms ###################################
####################################################################

class AltForm:
    '''A constant alternating form of the given degree. Forms of degree above the
       dimension are the canonical zero and carry an empty coefficient vector.'''

    def __init__(self, dim, degree, coeffs=None):

        if dim < 1:
            raise ValueError("Dimension must be at least 1, got {}".format(dim))

        if degree < 0:
            raise ValueError("Degree must be non-negative, got {}".format(degree))

        size = num_forms(dim, degree)
        if coeffs is None:
            coeffs = np.zeros(size)

        coeffs = np.array(coeffs, dtype=float).reshape(-1)
        if len(coeffs) != size:
            raise ValueError("A {}-form in dimension {} needs {} coefficients, got {}".format(
                              degree, dim, size, len(coeffs)))

        coeffs.setflags(write=False)

        self.dim    = dim
        self.degree = degree
        self.coeffs = coeffs

    @classmethod
    def basis_form(cls, dim, indices):
        #the form dx_I

        index  = MultiIndex(dim, indices)
        coeffs = np.zeros(num_forms(dim, index.degree))
        coeffs[index.rank()] = 1.0

        return cls(dim, index.degree, coeffs)

    @classmethod
    def unit(cls, dim, degree, rank):
        #the basis form of the given rank

        coeffs = np.zeros(num_forms(dim, degree))
        coeffs[rank] = 1.0

        return cls(dim, degree, coeffs)

    def norm(self):

        return float(np.sqrt(np.sum(self.coeffs**2)))

    def is_zero(self):

        return not np.any(self.coeffs)

    def __check_compatible(self, other):

        if self.dim != other.dim or self.degree != other.degree:
            raise ValueError("Cannot combine a {}-form in dimension {} with a {}-form in dimension {}".format(
                              self.degree, self.dim, other.degree, other.dim))

    def __add__(self, other):

        self.__check_compatible(other)
        return AltForm(self.dim, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):

        self.__check_compatible(other)
        return AltForm(self.dim, self.degree, self.coeffs - other.coeffs)

    def __mul__(self, scalar):

        return AltForm(self.dim, self.degree, scalar * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):

        return AltForm(self.dim, self.degree, -self.coeffs)

    def __repr__(self):

        return "AltForm(d={}, r={}, {})".format(self.dim, self.degree, list(self.coeffs))


def wedge(alpha, beta):

    if alpha.dim != beta.dim:
        raise ValueError("Wedge of forms in dimensions {} and {}".format(alpha.dim, beta.dim))

    dim    = alpha.dim
    degree = alpha.degree + beta.degree

    #over-degree products vanish
    if degree > dim:
        return AltForm(dim, degree)

    table_a = basis(dim, alpha.degree)
    table_b = basis(dim, beta.degree)
    lookup  = basis_lookup(dim, degree)

    out = np.zeros(num_forms(dim, degree))
    for ka in np.flatnonzero(alpha.coeffs):
        I = table_a[ka]
        for kb in np.flatnonzero(beta.coeffs):
            J = table_b[kb]
            if set(I) & set(J):
                continue

            K = tuple(sorted(I + J))
            out[lookup[K]] += permutation_sign(I + J) * alpha.coeffs[ka] * beta.coeffs[kb]

    return AltForm(dim, degree, out)


def hodge_star(alpha):
    #⋆dx_I = σ(I) dx_{I^c}

    if alpha.degree > alpha.dim:
        raise ValueError("Hodge star of a form of degree {} > {}".format(alpha.degree, alpha.dim))

    signs = SignTable(alpha.dim, alpha.degree)
    out   = np.zeros(num_forms(alpha.dim, alpha.dim - alpha.degree))
    out[signs.complement_rank] = signs.sigma * alpha.coeffs

    return AltForm(alpha.dim, alpha.dim - alpha.degree, out)


def star_wedge_scalar(p, q):
    #⋆(p ∧ q) for complementary degrees

    if p.dim != q.dim:
        raise ValueError("Pairing of forms in dimensions {} and {}".format(p.dim, q.dim))

    if p.degree + q.degree != p.dim:
        raise ValueError("Pairing needs complementary degrees, got {} and {} in dimension {}".format(
                          p.degree, q.degree, p.dim))

    return float(p.coeffs @ pairing_matrix(p.dim, p.degree) @ q.coeffs)


####################################################################
################# Coefficient maps #################################
####################################################################

class EnergyMatrix:
    '''The energy matrix M[I,J] = ⋆(dx_I ∧ a dx_J) of a coefficient map a at one point.
       Construction checks symmetry and that the spectrum lies in [lam, 1/lam].'''

    def __init__(self, dim, degree, M, lam=0.25):

        M = np.array(M, dtype=float)
        size = num_forms(dim, degree)

        if not (0 < lam <= 1):
            raise ValueError("Ellipticity constant must lie in (0,1], got {}".format(lam))

        if M.shape != (size, size):
            raise ValueError("Energy matrix for d={}, r={} must be {}x{}, got shape {}".format(
                              dim, degree, size, size, M.shape))

        if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("Energy matrix is not symmetric")

        eigs = np.linalg.eigvalsh(M) if size else np.zeros(0)
        if np.any(eigs < lam - SPECTRUM_TOL) or np.any(eigs > 1.0/lam + SPECTRUM_TOL):
            raise ValueError("Energy matrix spectrum [{:.6g}, {:.6g}] leaves the window [{}, {}]".format(
                              eigs.min(), eigs.max(), lam, 1.0/lam))

        M.setflags(write=False)

        self.dim    = dim
        self.degree = degree
        self.M      = M
        self.lam    = lam

    def get_matrix(self):

        return self.M

    def eigenvalues(self):

        return np.linalg.eigvalsh(self.M)

    def coefficient_matrix(self):
        #matrix of a : Λ^r -> Λ^{d-r}

        return pairing_matrix(self.dim, self.degree).T @ self.M

    def apply(self, p):

        if p.dim != self.dim or p.degree != self.degree:
            raise ValueError("Coefficient of degree {} applied to a {}-form".format(self.degree, p.degree))

        return AltForm(self.dim, self.dim - self.degree, self.coefficient_matrix() @ p.coeffs)

    def energy(self, p):
        #⋆(p ∧ a p)

        return float(p.coeffs @ self.M @ p.coeffs)

    def __repr__(self):

        return "EnergyMatrix(d={}, r={}, lam={}, {})".format(self.dim, self.degree, self.lam, self.M.tolist())


def energy_matrix_of_star(dim, degree, scale, lam=0.25):
    #the isotropic coefficient a = c⋆ has energy matrix c I

    if scale < lam - SPECTRUM_TOL or scale > 1.0/lam + SPECTRUM_TOL:
        raise ValueError("Scale {} outside the ellipticity window [{}, {}]".format(scale, lam, 1.0/lam))

    return EnergyMatrix(dim, degree, scale * np.eye(num_forms(dim, degree)), lam)


def invert_coeff(coeff):
    #energy matrix of the inverse environment, degree d-r

    M = coeff.get_matrix()
    if np.linalg.cond(M) > 1.0 / np.finfo(float).eps:
        raise ValueError("Energy matrix is singular")

    P = pairing_matrix(coeff.dim, coeff.degree)
    inverse = P.T @ np.linalg.inv(M) @ P

    return EnergyMatrix(coeff.dim, coeff.dim - coeff.degree, 0.5*(inverse + inverse.T), coeff.lam)


def inverse_apply(coeff, q):
    #a^{-1} q for a (d-r)-form q, solving a p = q

    if q.dim != coeff.dim or q.degree != coeff.dim - coeff.degree:
        raise ValueError("Inverse of a degree {} coefficient applied to a {}-form".format(coeff.degree, q.degree))

    P = pairing_matrix(coeff.dim, coeff.degree)
    return AltForm(coeff.dim, coeff.degree, np.linalg.solve(coeff.get_matrix(), P @ q.coeffs))
