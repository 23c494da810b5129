"""Gaussian conditioning of the knot-value vector on noisy observations.

Two algebraically equivalent routes are available and selected by problem
shape.  With ``P = Phi(X)`` (basis values at the inputs, ``|L| x n``) and the
block-diagonal prior ``K``:

* mean, n-sided solve:      ``mu = K P [P' K P + tau2 I]^-1 Y``
* mean, L-sided solve:      ``Sigma^-1 mu = P Y / tau2``
* precision, always:        ``Sigma^-1 = K^-1 + P P' / tau2``

The precision route inverts each prior block independently and adds a rank-n
update, which is why fits stay cheap when the basis grows but the data does
not.  The covariance ``Sigma`` itself is only materialized on demand (the
sampler needs it; the MAP solve does not).
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basis import BasisStructure, phi_matrix
from .exceptions import NumericalError
from .kernels import PriorCov

# Noise floor relative to the empirical variance of Y; smaller values make
# the rank-n precision update numerically singular.
TAU2_FLOOR_REL = 1e-8


@dataclass(frozen=True)
class Dataset:
    """Observations: inputs in the unit cube, one response each."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(self.Y, dtype=float).ravel()
        if X.shape[0] != Y.size or Y.size < 1:
            raise ValueError("X and Y must hold the same positive number of rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("non-finite values in the data")
        if np.any((X < 0.0) | (X > 1.0)):
            raise ValueError("inputs must lie in the unit cube (normalize first)")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self):
        return self.Y.size

    @property
    def dimension(self):
        return self.X.shape[1]

    def y_var(self) -> float:
        return float(np.var(self.Y))


@dataclass
class Posterior:
    """Mean and precision of the knot values given the data.

    ``sigma`` (the covariance) and its whitening factor are materialized
    lazily and cached; materialization is thread-safe.
    """

    mu: np.ndarray
    sigma_inv: np.ndarray
    path_used: str
    tau2: float
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _chol_prec: np.ndarray = field(default=None, repr=False)
    _sigma: np.ndarray = field(default=None, repr=False)

    @property
    def size(self):
        return self.mu.size

    def chol_precision(self) -> np.ndarray:
        """Lower Cholesky factor of the precision matrix."""
        with self._lock:
            if self._chol_prec is None:
                try:
                    self._chol_prec = np.linalg.cholesky(self.sigma_inv)
                except np.linalg.LinAlgError:
                    raise NumericalError("posterior precision is not positive definite")
            return self._chol_prec

    @property
    def sigma(self) -> np.ndarray:
        """Posterior covariance (inverse of the stored precision)."""
        c = self.chol_precision()
        with self._lock:
            if self._sigma is None:
                inv = sla.cho_solve((c, True), np.eye(self.size))
                self._sigma = 0.5 * (inv + inv.T)
            return self._sigma

    def whitener(self) -> np.ndarray:
        """Matrix ``W`` with ``W W' = sigma`` (inverse transpose of the
        precision Cholesky); used to map iid normals to posterior draws."""
        c = self.chol_precision()
        return sla.solve_triangular(c, np.eye(self.size), lower=True, trans="T")


def effective_tau2(tau2: float, y_var: float) -> tuple[float, bool]:
    """Clamp the noise variance to the stability floor.

    The "clamped" flag stays False for sub-ulp undershoots (parameters that
    round-tripped through log space sit exactly at the floor).
    """
    floor = TAU2_FLOOR_REL * y_var
    if tau2 < floor:
        return floor, tau2 < floor * (1.0 - 1e-9)
    return float(tau2), False


def condition(basis: BasisStructure, prior: PriorCov, data: Dataset,
              tau2: float, mu_path: str = "auto") -> Posterior:
    """Condition the prior on the observations.

    ``mu_path`` is one of ``auto`` (n-sided solve when ``n <= |L|``, else
    L-sided), ``direct`` or ``woodbury``.  The precision always uses the
    blockwise route.
    """
    if tau2 <= 0:
        raise ValueError("noise variance must be positive")
    if mu_path not in ("auto", "direct", "woodbury"):
        raise ValueError(f"unknown mu_path {mu_path!r}")
    tau2, clamped = effective_tau2(tau2, data.y_var())
    if clamped:
        warnings.warn(f"noise variance clamped to stability floor {tau2:.3e}",
                      RuntimeWarning, stacklevel=2)

    P = phi_matrix(basis, data.X)          # (L, n)
    L, n = P.shape

    # Precision: blockwise prior inverse plus the rank-n data update.
    sigma_inv = prior.inverse_dense()
    sigma_inv += (P @ P.T) / tau2
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)

    if mu_path == "auto":
        mu_path = "direct" if n <= L else "woodbury"

    try:
        if mu_path == "direct":
            KP = prior.matvec(P)               # (L, n)
            A = P.T @ KP + tau2 * np.eye(n)    # (n, n)
            mu = KP @ sla.cho_solve(sla.cho_factor(A), data.Y)
        else:
            rhs = P @ data.Y / tau2
            mu = sla.cho_solve(sla.cho_factor(sigma_inv), rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"conditioning failed: {exc}")

    return Posterior(mu=mu, sigma_inv=sigma_inv, path_used=mu_path, tau2=tau2)


def posterior_predict_mean(basis: BasisStructure, post: Posterior, x) -> float:
    """Unconstrained posterior-mean prediction at one point."""
    from .basis import phi_eval
    return float(phi_eval(basis, x) @ post.mu)


def posterior_predict_mean_batch(basis: BasisStructure, post: Posterior, X) -> np.ndarray:
    return phi_matrix(basis, X).T @ post.mu
