"""Matern 5/2 covariances and the block-diagonal prior of the knot values.

Each block carries a variance ``sigma2`` and a tensor product of univariate
Matern 5/2 correlations, one length-scale ``theta`` per active variable, so a
model has at most ``B + D`` covariance parameters plus the noise variance.
The prior covariance of the coefficient vector is block diagonal with one
dense Gram block per variable block, evaluated at the tensor knot grids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .basis import BasisStructure
from .exceptions import NumericalError

SQRT5 = np.sqrt(5.0)

# Relative jitter added to prior Gram diagonals, escalated x100 on Cholesky
# failure (dense Matern grids are numerically rank deficient).
JITTER_START = 1e-10
JITTER_MAX = 1e-6


def matern52(theta: float, x, x2) -> np.ndarray | float:
    """One-dimensional Matern 5/2 correlation of two points (or arrays)."""
    if theta <= 0:
        raise ValueError("length-scale must be positive")
    h = np.abs(np.asarray(x, dtype=float) - np.asarray(x2, dtype=float))
    a = SQRT5 * h / theta
    r = (1.0 + a + a * a / 3.0) * np.exp(-a)
    return r if np.ndim(r) else float(r)


def matern52_dtheta(theta: float, x, x2) -> np.ndarray | float:
    """Derivative of :func:`matern52` with respect to the length-scale."""
    if theta <= 0:
        raise ValueError("length-scale must be positive")
    h = np.abs(np.asarray(x, dtype=float) - np.asarray(x2, dtype=float))
    a = SQRT5 * h / theta
    d = (a * a / 3.0) * (1.0 + a) * np.exp(-a) / theta
    return d if np.ndim(d) else float(d)


@dataclass(frozen=True)
class KernelParams:
    """Per-block variances, per-active-variable length-scales, noise variance.

    ``sigma2[j]`` pairs with block ``j`` in canonical order; ``theta`` maps
    variable index (1-based) to its length-scale.
    """

    sigma2: tuple
    theta: dict
    tau2: float

    def __post_init__(self):
        object.__setattr__(self, "sigma2", tuple(float(s) for s in self.sigma2))
        object.__setattr__(self, "theta", {int(k): float(v) for k, v in self.theta.items()})
        if any(s <= 0 for s in self.sigma2):
            raise ValueError("block variances must be positive")
        if any(t <= 0 for t in self.theta.values()):
            raise ValueError("length-scales must be positive")
        if self.tau2 < 0:
            raise ValueError("noise variance must be nonnegative")

    def validate_for(self, basis: BasisStructure):
        if len(self.sigma2) != len(basis.blocks):
            raise ValueError("one variance per block required")
        missing = [i for i in basis.partition.active_vars if i not in self.theta]
        if missing:
            raise ValueError(f"missing length-scales for variables {missing}")

    @classmethod
    def default(cls, basis: BasisStructure, y_var: float = 1.0) -> "KernelParams":
        """Moderate starting values: unit-ish variances split across blocks,
        half-range length-scales, small noise."""
        nb = max(len(basis.blocks), 1)
        return cls(
            sigma2=(max(y_var, 1e-8) / nb,) * len(basis.blocks),
            theta={i: 0.5 for i in basis.partition.active_vars},
            tau2=1e-4 * max(y_var, 1e-8),
        )

    def to_dict(self, basis: BasisStructure) -> dict:
        return {
            "blocks": [
                {"sigma2": self.sigma2[j],
                 "thetas": {str(i): self.theta[i] for i in block}}
                for j, block in enumerate(basis.blocks)
            ],
            "tau2": self.tau2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        theta = {}
        for spec in d["blocks"]:
            theta.update({int(k): v for k, v in spec["thetas"].items()})
        return cls(tuple(b["sigma2"] for b in d["blocks"]), theta, float(d["tau2"]))

    def to_json(self, basis: BasisStructure) -> str:
        return json.dumps(self.to_dict(basis))


def block_kernel(block, params: KernelParams, block_id: int, xB, xB2) -> float:
    """Covariance of one block between two sub-points (variance times the
    product of per-variable correlations)."""
    xB = np.atleast_1d(np.asarray(xB, dtype=float))
    xB2 = np.atleast_1d(np.asarray(xB2, dtype=float))
    if xB.shape[-1] != len(block) or xB2.shape[-1] != len(block):
        raise ValueError("sub-point arity does not match the block")
    r = params.sigma2[block_id]
    for pos, var in enumerate(block):
        r = r * matern52(params.theta[var], xB[..., pos], xB2[..., pos])
    return float(r) if np.ndim(r) == 0 else r


def kron_dense(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two small dense matrices (faster than np.kron,
    which carries large per-call overhead in the sizes used here)."""
    m, n = a.shape
    p, q = b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(m * p, n * q)


def correlation_1d(theta: float, knots) -> np.ndarray:
    """Matern 5/2 correlation matrix of a knot vector."""
    t = np.asarray(knots, dtype=float)
    return matern52(theta, t[:, None], t[None, :])


def block_correlation(basis: BasisStructure, params: KernelParams, j: int) -> np.ndarray:
    """Correlation Gram of block ``j`` at its tensor knot grid (no variance
    factor): Kronecker product of the univariate correlation matrices, in
    canonical multi-index order."""
    block = basis.blocks[j]
    mat = np.array([[1.0]])
    for var in block:
        mat = kron_dense(mat, correlation_1d(params.theta[var],
                                             basis.knots_for(var).knots))
    return mat


@dataclass
class PriorCov:
    """Block-diagonal prior covariance of the knot-value vector.

    Holds the per-block dense Gram matrices (with stabilizing jitter already
    added) and their Cholesky factors.  Immutable by convention once built.
    """

    basis: BasisStructure
    block_mats: tuple
    block_chols: tuple
    jitters: tuple

    @property
    def size(self):
        return self.basis.size

    def dense(self) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        for j in range(len(self.basis.blocks)):
            sl = self.basis.block_slice(j)
            out[sl, sl] = self.block_mats[j]
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply the blockwise inverse to a vector or matrix."""
        out = np.empty_like(rhs, dtype=float)
        for j in range(len(self.basis.blocks)):
            sl = self.basis.block_slice(j)
            out[sl] = sla.cho_solve((self.block_chols[j], True), rhs[sl])
        return out

    def inverse_dense(self) -> np.ndarray:
        return self.solve(np.eye(self.size))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v, dtype=float)
        for j in range(len(self.basis.blocks)):
            sl = self.basis.block_slice(j)
            out[sl] = self.block_mats[j] @ v[sl]
        return out

    def logdet(self) -> float:
        return 2.0 * sum(float(np.sum(np.log(np.diag(c)))) for c in self.block_chols)


def prior_cov(basis: BasisStructure, params: KernelParams) -> PriorCov:
    """Assemble and factor the block-diagonal prior covariance.

    Each block gets jitter ``JITTER_START * sigma2`` on the diagonal,
    escalated by x100 (twice at most) if the Cholesky fails.
    """
    params.validate_for(basis)
    mats, chols, jits = [], [], []
    for j in range(len(basis.blocks)):
        corr = block_correlation(basis, params, j)
        sig = params.sigma2[j]
        jitter = JITTER_START
        while True:
            mat = sig * corr + (jitter * sig) * np.eye(corr.shape[0])
            try:
                chol = np.linalg.cholesky(mat)
                break
            except np.linalg.LinAlgError:
                jitter *= 100.0
                if jitter > JITTER_MAX:
                    raise NumericalError(
                        f"prior covariance block {j} is not positive definite "
                        f"even with jitter {JITTER_MAX}")
        mats.append(mat)
        chols.append(chol)
        jits.append(jitter * sig)
    return PriorCov(basis, tuple(mats), tuple(chols), tuple(jits))
