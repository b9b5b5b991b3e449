'''

Monte Carlo homogenization of an ensemble.

Each sample is reduced to its quadratic forms (solver.solve_quadratics): ν(p) = ½ p.N p,
ν*(q) = ½ q.B q, and the mean gradients X of the ν* maximizers. On a cube the homogenized
inverse is read off the mean gradients,

    āhom_m^{-1} q = E[ mean of dv(·, □_m, 0, q) ],

so B̄ = E[sym(X^T P)] is the matrix of ν* averaged over samples and the energy matrix of
āhom_m is P B̄^{-1} P^T. Standard errors come from the first-order expansion of the
inverse around B̄.

Everything that depends on a sample is a pure function of (spec, m, seed, sample index);
samples run through util.parallel.ordered_map and every reduction is taken in sample
order afterwards, so results do not depend on the thread count.

'''

import logging

import numpy as np

from dataclasses import dataclass, field
from scipy.optimize import brentq
from scipy.special import logsumexp

from ..forms.exterior import AltForm, EnergyMatrix, pairing_matrix, inverse_apply
from ..forms.complex import multiscale_seminorm
from ..util.parallel import ordered_map
from .env import sample, invert_env
from .solver import EnergySystem, NumericalError, solve_J, solve_quadratics, DEFAULT_RTOL


logger = logging.getLogger("FORMHOM.homogenize")

MAX_CONDITION = 1e8


@dataclass
class AhomEstimate:
    matrix: np.ndarray
    stderr: np.ndarray
    nsamples: int
    m: int
    seed: int
    dim: int
    degree: int
    lam: float
    ensemble: str = ''

    def energy_matrix(self):
        #as an EnergyMatrix, widening the window if sampling noise left [lam, 1/lam]

        eigs = np.linalg.eigvalsh(self.matrix)
        lam = min(self.lam, eigs.min(), 1.0/eigs.max())
        return EnergyMatrix(self.dim, self.degree, self.matrix, lam)

    def spectrum_ok(self, nsigma=3.0):

        eigs = np.linalg.eigvalsh(self.matrix)
        slack = nsigma * np.max(self.stderr, initial=0.0)
        return bool(eigs.min() >= self.lam - slack and eigs.max() <= 1.0/self.lam + slack)

    def to_dict(self):

        return {'ahom': self.matrix.tolist(), 'stderr': self.stderr.tolist(), 'nsamples': self.nsamples,
                'm': self.m, 'seed': self.seed, 'd': self.dim, 'r': self.degree, 'lambda': self.lam,
                'ensemble': self.ensemble}


@dataclass
class RateFit:
    alpha: float
    intercept: float
    r_squared: float
    n_range: list
    all_zero: bool = False


@dataclass
class OsCalibration:
    C: float
    s: float
    nsamples: int
    all_zero: bool = False


@dataclass
class Sequences:
    levels: list
    D: np.ndarray
    D_stderr: np.ndarray
    tau: np.ndarray
    tau_stderr: np.ndarray
    nu_means: list
    nustar_means: list
    ahom: list
    ahom_stderr: list
    J_samples: list
    nsamples: int
    seed: int


@dataclass
class DualityReport:
    deviation: float
    exchange_residual: float
    exchange_stderr: float
    primal: AhomEstimate
    dual: AhomEstimate


@dataclass
class DykhneReport:
    deviation: float
    expected: np.ndarray
    estimate: AhomEstimate


@dataclass
class FlatnessReport:
    value: float
    stderr: float
    m: int
    samples: np.ndarray = field(repr=False)


####################################################################
################# Per-sample work ##################################
####################################################################

def _sample_env(spec, m, seed, index, invert=False):

    env = sample(spec, m, seed, index)
    return invert_env(env) if invert else env


def _sample_forms(spec, m, seed, index, parts, rtol, invert=False):
    #(N, B) of one sample; the maximizers themselves are dropped

    env = _sample_env(spec, m, seed, index, invert)
    quads = solve_quadratics(EnergySystem(env, rtol), parts)

    B = None
    if quads.B is not None:
        P = pairing_matrix(quads.dim, quads.degree)
        B = quads.X.T @ P
        B = 0.5 * (B + B.T)

    return quads.N, B


def _ahom_from_nustar(B_samples, dim, degree):
    #energy matrix of āhom and its standard error from the per-sample ν* matrices

    B_samples = np.asarray(B_samples)
    nsamples = len(B_samples)
    P = pairing_matrix(dim, degree)

    B_mean = B_samples.mean(axis=0)
    cond = np.linalg.cond(B_mean)
    if cond > MAX_CONDITION:
        raise NumericalError("Averaged inverse tensor is ill-conditioned (condition number {:.3e})".format(cond))

    B_inv = np.linalg.inv(B_mean)
    M = P @ B_inv @ P.T
    M = 0.5 * (M + M.T)

    deltas = -np.einsum('ij,njk,kl->nil', P @ B_inv, B_samples - B_mean, B_inv @ P.T)
    stderr = deltas.std(axis=0, ddof=1) / np.sqrt(nsamples) if nsamples > 1 else np.zeros_like(M)

    return M, stderr


def _inverse_energy(M, dim, degree):
    #P^T M^{-1} P without the window check of invert_coeff

    P = pairing_matrix(dim, degree)
    inverse = P.T @ np.linalg.inv(M) @ P
    return 0.5 * (inverse + inverse.T)


####################################################################
################# Estimators #######################################
####################################################################

def estimate_ahom(spec, m, nsamples, seed, invert=False, threads=1, rtol=DEFAULT_RTOL, sample_offset=0,
                  verbose=False):

    if nsamples < 2:
        raise ValueError("Estimating ahom needs at least 2 samples, got {}".format(nsamples))

    dim = spec.dim
    degree = dim - spec.degree if invert else spec.degree
    if degree < 1:
        raise ValueError("The inverse environment of a {}-form ensemble in dimension {} has degree 0".format(
                          spec.degree, dim))

    if verbose:
        print("Estimating ahom on a cube of side 3^{} from {} samples".format(m, nsamples))

    indices = range(sample_offset, sample_offset + nsamples)
    forms = ordered_map(lambda i: _sample_forms(spec, m, seed, i, ('nustar',), rtol, invert), indices, threads)

    M, stderr = _ahom_from_nustar([B for N, B in forms], dim, degree)
    logger.debug("ahom_%d estimate %s", m, M.tolist())

    return AhomEstimate(M, stderr, nsamples, m, seed, dim, degree, spec.lam, spec.to_string())


def compute_sequences(spec, m_max, nsamples, seed, threads=1, rtol=DEFAULT_RTOL, m_min=0, verbose=False):
    #D_n, τ_n and the level estimates of āhom for n = m_min..m_max

    if m_max < 1 or m_min < 0 or m_min >= m_max:
        raise ValueError("Sequences need 0 <= m_min < m_max, got m_min={}, m_max={}".format(m_min, m_max))

    if nsamples < 2:
        raise ValueError("Sequences need at least 2 samples, got {}".format(nsamples))

    dim, degree = spec.dim, spec.degree
    P = pairing_matrix(dim, degree)
    levels = list(range(m_min, m_max+1))

    N_levels, B_levels = [], []
    for n in levels:
        if verbose:
            print("Sequences: level {} of {}".format(n, m_max))
        forms = ordered_map(lambda i: _sample_forms(spec, n, seed, n*nsamples + i, ('nu', 'nustar'), rtol),
                            range(nsamples), threads)
        N_levels.append(np.array([N for N, B in forms]))
        B_levels.append(np.array([B for N, B in forms]))

    def J_of(Ns, Bs, p, q):
        return 0.5*np.einsum('i,nij,j->n', p, Ns, p) + 0.5*np.einsum('i,nij,j->n', q, Bs, q) - p @ P @ q

    ahom, ahom_stderr, D, D_stderr = [], [], [], []
    for Ns, Bs in zip(N_levels, B_levels):
        M, stderr = _ahom_from_nustar(Bs, dim, degree)
        ahom.append(M)
        ahom_stderr.append(stderr)

        total = np.zeros(nsamples)
        for i in range(len(P)):
            e = np.eye(len(P))[i]
            total += J_of(Ns, Bs, e, P.T @ M @ e)
        D.append(total.mean())
        D_stderr.append(total.std(ddof=1) / np.sqrt(nsamples))

    nu_means     = [0.5 * np.diagonal(Ns, axis1=1, axis2=2).mean(axis=0) for Ns in N_levels]
    nu_errs      = [0.5 * np.diagonal(Ns, axis1=1, axis2=2).std(axis=0, ddof=1) / np.sqrt(nsamples) for Ns in N_levels]
    nustar_means = [0.5 * np.diagonal(Bs, axis1=1, axis2=2).mean(axis=0) for Bs in B_levels]
    nustar_errs  = [0.5 * np.diagonal(Bs, axis1=1, axis2=2).std(axis=0, ddof=1) / np.sqrt(nsamples) for Bs in B_levels]

    #τ_n: largest decrement of E ν over the basis p plus largest decrement of E ν* over the basis q
    tau, tau_stderr = [], []
    for k in range(len(levels) - 1):
        dnu  = nu_means[k] - nu_means[k+1]
        dnus = nustar_means[k] - nustar_means[k+1]
        i, j = int(np.argmax(dnu)), int(np.argmax(dnus))
        tau.append(dnu[i] + dnus[j])
        tau_stderr.append(np.hypot(nu_errs[k][i], nu_errs[k+1][i]) + np.hypot(nustar_errs[k][j], nustar_errs[k+1][j]))

    #J(□_n, e_1, āhom e_1) with the finest estimate, for O_s calibration
    e1 = np.eye(len(P))[0]
    q_final = P.T @ ahom[-1] @ e1
    J_samples = [J_of(Ns, Bs, e1, q_final) for Ns, Bs in zip(N_levels, B_levels)]

    return Sequences(levels, np.array(D), np.array(D_stderr), np.array(tau), np.array(tau_stderr),
                     nu_means, nustar_means, ahom, ahom_stderr, J_samples, nsamples, seed)


def fit_rate(D, drop=(0, 1), zero_tol=1e-12, levels=None):
    #least squares of log D_n against n log 3; alpha is minus the slope

    D = np.asarray(D, dtype=float)
    levels = np.arange(len(D)) if levels is None else np.asarray(levels)

    keep = np.array([n not in drop for n in levels], dtype=bool)
    if keep.any() and np.all(np.abs(D[keep]) <= zero_tol):
        return RateFit(np.inf, 0.0, 1.0, [int(n) for n in levels[keep]], all_zero=True)

    if keep.sum() < 3:
        raise ValueError("Rate fit needs at least 3 levels after dropping {}, got {}".format(list(drop), int(keep.sum())))

    use = keep & (D > zero_tol)
    if use.sum() < 3:
        raise NumericalError("Rate fit needs at least 3 positive entries after dropping {}, got {}".format(
                              list(drop), int(use.sum())))

    x = levels[use] * np.log(3.0)
    y = np.log(D[use])
    slope, intercept = np.polyfit(x, y, 1)

    residual = y - (slope*x + intercept)
    ss_tot = np.sum((y - y.mean())**2)
    r_squared = 1.0 - np.sum(residual**2)/ss_tot if ss_tot > 0 else 1.0

    return RateFit(-slope + 0.0, float(intercept), float(r_squared), [int(n) for n in levels[use]])


####################################################################
################# Duality and closed forms #########################
####################################################################

def _exchange_pair(spec, m, seed, index, s, rtol):
    #J(e_1, f_1) on a sample and J_inv(f_1, s e_1) on its inverse

    dim, degree = spec.dim, spec.degree
    env = sample(spec, m, seed, index)
    e1 = AltForm.unit(dim, degree, 0)
    f1 = AltForm.unit(dim, dim - degree, 0)

    primal = solve_J(env, e1, f1, rtol).J
    dual   = solve_J(invert_env(env), f1, s * e1, rtol).J

    return primal, dual


def verify_duality(spec, m, nsamples, seed, threads=1, rtol=DEFAULT_RTOL, verbose=False):

    dim, degree = spec.dim, spec.degree
    if degree >= dim:
        raise ValueError("Duality needs r <= d-1, got d={}, r={}".format(dim, degree))

    primal = estimate_ahom(spec, m, nsamples, seed, threads=threads, rtol=rtol, verbose=verbose)
    dual   = estimate_ahom(spec, m, nsamples, seed, invert=True, threads=threads, rtol=rtol, verbose=verbose)

    expected  = _inverse_energy(primal.matrix, dim, degree)
    deviation = float(np.linalg.norm(dual.matrix - expected, 2))

    s = (-1) ** (degree * (dim - degree))
    pairs = ordered_map(lambda i: _exchange_pair(spec, m, seed, i, s, rtol), range(nsamples), threads)
    residuals = np.array([abs(a - b) for a, b in pairs])

    logger.info("duality deviation %.3e, exchange residual %.3e", deviation, residuals.mean())

    return DualityReport(deviation, float(residuals.mean()), float(residuals.std(ddof=1) / np.sqrt(nsamples)),
                         primal, dual)


def dykhne_check(spec, m, nsamples, seed, threads=1, rtol=DEFAULT_RTOL, verbose=False):
    #checkerboard in the plane: āhom = sqrt(c1 c2) I

    if spec.kind != 'checkerboard2' or spec.dim != 2 or spec.degree != 1:
        raise ValueError("The Dykhne check needs a checkerboard2 ensemble with d=2, r=1, got {}".format(spec))

    expected = spec.exact_ahom().get_matrix()
    estimate = estimate_ahom(spec, m, nsamples, seed, threads=threads, rtol=rtol, verbose=verbose)

    return DykhneReport(float(np.linalg.norm(estimate.matrix - expected, 2)), np.array(expected), estimate)


####################################################################
################# Flatness #########################################
####################################################################

def reference_ahom(spec, ahom):

    if ahom is None:
        ahom = spec.exact_ahom()
        if ahom is None:
            raise ValueError("No reference ahom for {}; estimate one first".format(spec.to_string()))

    if isinstance(ahom, AhomEstimate):
        ahom = ahom.energy_matrix()
    elif not isinstance(ahom, EnergyMatrix):
        matrix = np.asarray(ahom, dtype=float)
        eigs = np.linalg.eigvalsh(matrix)
        ahom = EnergyMatrix(spec.dim, spec.degree, matrix, min(spec.lam, eigs.min(), 1.0/eigs.max()))

    return ahom


def _flatness_sample(spec, m, seed, index, p, q, ahom, rtol):

    env = sample(spec, m, seed, index)
    system = EnergySystem(env, rtol)
    bundle = solve_J(system, p, q)

    dv = system.cell_gradient(bundle.maximizer())
    P = pairing_matrix(spec.dim, spec.degree)

    grad_err = dv - (inverse_apply(ahom, q).coeffs - p.coeffs)
    flux_err = np.einsum('nij,nj->ni', env.get_cells(), dv) @ P - (q.coeffs - ahom.apply(p).coeffs)

    grid = env.get_grid()
    return 3.0**(-m) * (multiscale_seminorm(grad_err, grid) + multiscale_seminorm(flux_err, grid))


def flatness_check(spec, m, p, q, nsamples, seed, ahom=None, threads=1, rtol=DEFAULT_RTOL):
    #scaled weak norms of dv - (āhom^{-1} q - p) and a dv - (q - āhom p)

    ahom = reference_ahom(spec, ahom)
    values = np.array(ordered_map(lambda i: _flatness_sample(spec, m, seed, i, p, q, ahom, rtol),
                                  range(nsamples), threads))

    stderr = values.std(ddof=1) / np.sqrt(len(values)) if len(values) > 1 else 0.0
    return FlatnessReport(float(values.mean()), float(stderr), m, values)


####################################################################
################# Stochastic integrability #########################
####################################################################

def os_calibrate(samples, s=1.0):
    #smallest C with mean exp((X_+/C)^s) <= 2

    x = np.asarray(samples, dtype=float).ravel()
    if len(x) < 10:
        raise ValueError("O_s calibration needs at least 10 samples, got {}".format(len(x)))

    if not s > 0:
        raise ValueError("Integrability exponent must be positive, got {}".format(s))

    x = np.maximum(x, 0.0)
    top = x.max()
    if top == 0.0:
        return OsCalibration(0.0, s, len(x), all_zero=True)

    y = x / top
    n = len(y)

    def excess(C):
        return logsumexp((y / C)**s) - np.log(n) - np.log(2.0)

    #every term is at most 2 at hi, the largest alone exceeds 2n below lo
    hi = np.log(2.0) ** (-1.0/s)
    if excess(hi) >= 0:
        return OsCalibration(float(hi * top), s, n)

    lo = np.log(2.0*n) ** (-1.0/s) * (1.0 - 1e-12)
    C = brentq(excess, lo, hi, xtol=1e-15, rtol=4*np.finfo(float).eps)

    return OsCalibration(float(C * top), s, n)


def os_rate_spread(C_levels, alpha, min_level=2):
    #C_n 3^(n alpha) for the levels n >= min_level, and the ratio of its largest to smallest value

    scaled = {int(n): float(C * 3.0**(int(n) * alpha)) for n, C in C_levels.items()
              if int(n) >= min_level and C > 0}

    if len(scaled) < 2 or not np.isfinite(alpha):
        return scaled, np.nan

    values = np.array(list(scaled.values()))
    return scaled, float(values.max() / values.min())
