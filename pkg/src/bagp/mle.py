"""Maximum-likelihood estimation of the covariance and noise parameters.

The observation vector is Gaussian with covariance ``K + tau2 I`` where
``K = Phi(X)' Ktilde Phi(X)`` is the finite-dimensional kernel matrix of the
projected process.  The negative log-likelihood and its analytic gradient
(trace-form derivatives for every variance, length-scale and the noise) are
optimized in log space with box bounds, from several starting points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .basis import BasisStructure, phi_matrix
from .exceptions import NumericalError
from .kernels import KernelParams, correlation_1d, kron_dense, matern52_dtheta
from .posterior import Dataset, TAU2_FLOOR_REL

LOG_2PI = np.log(2.0 * np.pi)

THETA_BOUNDS = (1e-2, 10.0)
SIGMA2_REL_BOUNDS = (1e-6, 1e3)      # relative to var(Y)
FAIL_VALUE = 1e25                     # objective value on factorization failure


@dataclass
class MleProblem:
    """A basis/dataset pair plus the optimization box in log space.

    The parameter vector is ``[log sigma2 (per block), log theta (active
    variables ascending), log tau2]``.
    """

    basis: BasisStructure
    data: Dataset
    n_starts: int = 5
    seed: int = 0
    bounds: list = field(init=False)
    _phi_blocks: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.basis.size == 0:
            raise ValueError("cannot estimate parameters for an empty basis")
        v = max(self.data.y_var(), 1e-12)
        b = [(np.log(SIGMA2_REL_BOUNDS[0] * v), np.log(SIGMA2_REL_BOUNDS[1] * v))] \
            * len(self.basis.blocks)
        b += [(np.log(THETA_BOUNDS[0]), np.log(THETA_BOUNDS[1]))] \
            * len(self.basis.partition.active_vars)
        b += [(np.log(TAU2_FLOOR_REL * v), np.log(max(v, 2 * TAU2_FLOOR_REL * v)))]
        self.bounds = b
        # Basis values at the inputs never change over an optimization.
        P = phi_matrix(self.basis, self.data.X)
        self._phi_blocks = [np.ascontiguousarray(P[self.basis.block_slice(j)])
                            for j in range(len(self.basis.blocks))]

    @property
    def n_params(self):
        return len(self.bounds)

    @property
    def active_vars(self):
        return self.basis.partition.active_vars

    def decode(self, p) -> KernelParams:
        p = np.asarray(p, dtype=float)
        nb = len(self.basis.blocks)
        sigma2 = tuple(np.exp(p[:nb]))
        theta = {i: float(np.exp(p[nb + k])) for k, i in enumerate(self.active_vars)}
        return KernelParams(sigma2, theta, float(np.exp(p[-1])))

    def encode(self, params: KernelParams) -> np.ndarray:
        p = [np.log(s) for s in params.sigma2]
        p += [np.log(params.theta[i]) for i in self.active_vars]
        p.append(np.log(max(params.tau2, np.exp(self.bounds[-1][0]))))
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.clip(np.asarray(p), lo, hi)


def _assemble(problem: MleProblem, params: KernelParams):
    """Per-block correlation factors/Grams plus ``K + tau2 I`` (n x n)."""
    basis = problem.basis
    n = problem.data.n
    A = params.tau2 * np.eye(n)
    factors = []
    corrs = []
    for j, block in enumerate(basis.blocks):
        fs = [correlation_1d(params.theta[var], basis.knots_for(var).knots)
              for var in block]
        corr = fs[0]
        for f in fs[1:]:
            corr = kron_dense(corr, f)
        Pj = problem._phi_blocks[j]
        A += params.sigma2[j] * (Pj.T @ (corr @ Pj))
        factors.append(fs)
        corrs.append(corr)
    return A, factors, corrs


def nll(problem: MleProblem, p) -> float:
    """Negative log-likelihood at a log-space parameter vector."""
    params = problem.decode(p)
    A, _, _ = _assemble(problem, params)
    try:
        c, low = sla.cho_factor(A)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance factorization failed")
    Y = problem.data.Y
    quad = float(Y @ sla.cho_solve((c, low), Y))
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return 0.5 * (logdet + quad + problem.data.n * LOG_2PI)


def nll_grad(problem: MleProblem, p) -> np.ndarray:
    """Analytic gradient of :func:`nll` in log-parameter space."""
    return _nll_and_grad(problem, p)[1]


def _nll_and_grad(problem: MleProblem, p):
    params = problem.decode(p)
    basis = problem.basis
    A, factors, corrs = _assemble(problem, params)
    try:
        c, low = sla.cho_factor(A)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance factorization failed")
    Y = problem.data.Y
    n = problem.data.n
    Ainv = sla.cho_solve((c, low), np.eye(n))
    alpha = Ainv @ Y
    value = 0.5 * (2.0 * float(np.sum(np.log(np.diag(c))))
                   + float(Y @ alpha) + n * LOG_2PI)

    nb = len(basis.blocks)
    grad = np.zeros(problem.n_params)
    theta_pos = {var: nb + k for k, var in enumerate(problem.active_vars)}
    for j, block in enumerate(basis.blocks):
        Pj = problem._phi_blocks[j]
        # Both trace and quadratic terms only need these two projections.
        Cj = Pj @ Ainv @ Pj.T
        vj = Pj @ alpha
        g = 0.5 * (float(np.sum(Cj * corrs[j])) - float(vj @ corrs[j] @ vj))
        grad[j] = g * params.sigma2[j]
        # d/d theta_i : replace factor i of the block tensor by its derivative.
        for pos, var in enumerate(block):
            t = np.asarray(basis.knots_for(var).knots)
            dfi = matern52_dtheta(params.theta[var], t[:, None], t[None, :])
            dcorr = dfi if pos == 0 else factors[j][0]
            for q in range(1, len(block)):
                dcorr = kron_dense(dcorr, dfi if q == pos else factors[j][q])
            g = 0.5 * params.sigma2[j] * (float(np.sum(Cj * dcorr))
                                          - float(vj @ dcorr @ vj))
            grad[theta_pos[var]] = g * params.theta[var]
    # d/d tau2 : identity.
    g = 0.5 * (float(np.trace(Ainv)) - float(alpha @ alpha))
    grad[-1] = g * params.tau2
    return value, grad


def fit_params(problem: MleProblem, warm_start: KernelParams | None = None,
               maxiter: int = 200) -> tuple[KernelParams, dict]:
    """Best-of-multi-start minimization of the negative log-likelihood.

    Starts: the warm start (if given), moderate defaults, and Latin-
    hypercube points in the log box.  Deterministic given ``problem.seed``.
    """
    rng = np.random.default_rng(problem.seed)
    lo = np.array([b[0] for b in problem.bounds])
    hi = np.array([b[1] for b in problem.bounds])

    starts = []
    if warm_start is not None:
        try:
            starts.append(problem.encode(warm_start))
        except (KeyError, ValueError):
            pass   # structure changed too much to reuse
    starts.append(problem.encode(
        KernelParams.default(problem.basis, problem.data.y_var())))
    n_rand = max(problem.n_starts - len(starts), 0)
    if n_rand:
        # Stratified draws along each axis, independently permuted.
        u = (rng.permuted(np.tile(np.arange(n_rand), (problem.n_params, 1)),
                          axis=1).T + rng.random((n_rand, problem.n_params))) / n_rand
        starts.extend(lo + u * (hi - lo))

    def objective(p):
        try:
            return _nll_and_grad(problem, p)
        except NumericalError:
            return FAIL_VALUE, np.zeros_like(p)

    results = []
    for p0 in starts:
        res = minimize(objective, p0, jac=True, method="L-BFGS-B",
                       bounds=problem.bounds,
                       options={"maxiter": maxiter, "gtol": 1e-6, "ftol": 1e-13})
        if np.isfinite(res.fun) and res.fun < FAIL_VALUE / 2:
            results.append(res)
    if not results:
        raise NumericalError("all maximum-likelihood starts failed")
    best = min(results, key=lambda r: r.fun)
    diag = {
        "nll": float(best.fun),
        "start_nlls": [float(r.fun) for r in results],
        "n_starts": len(starts),
        "converged": bool(best.success),
        "grad_norm": float(np.max(np.abs(best.jac))),
    }
    return problem.decode(best.x), diag
