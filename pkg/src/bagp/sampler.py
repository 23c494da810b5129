"""Sampling the truncated Gaussian posterior of the coefficients.

The target is ``N(mu, Sigma)`` restricted to the monotonicity polyhedron
``A xi <= 0``.  The primary sampler runs exact Hamiltonian dynamics in the
whitened frame (where the target is a standard normal and trajectories are
circular arcs ``z(t) = a sin t + b cos t``), reflecting the velocity whenever
a constraint wall is hit; each trajectory travels a fixed angle of pi/2,
which makes the draws exactly independent in the unconstrained case.

When trajectories repeatedly fail to resolve wall hits, the chain falls back
to a per-coordinate Gibbs sweep with univariate truncated-normal
conditionals computed from the posterior precision; the fallback is flagged
in the batch diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla
from scipy.stats import truncnorm

from .basis import BasisStructure, phi_eval
from .constraints import ConstraintSystem, map_estimate
from .exceptions import NumericalError
from .posterior import Posterior

TRAVEL_TIME = np.pi / 2.0
MIN_HIT_ANGLE = 1e-5          # arc shorter than this counts as "still on the wall"
MAX_BOUNCES = 50_000          # per trajectory
MAX_VELOCITY_RETRIES = 100    # per emitted draw before falling back to Gibbs
FEAS_TOL = 1e-8


@dataclass
class SampleBatch:
    """Draws from the truncated posterior plus run diagnostics."""

    draws: np.ndarray          # (N, |L|)
    diagnostics: dict
    seed: int

    @property
    def n(self):
        return self.draws.shape[0]

    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    def to_csv(self, path):
        np.savetxt(path, self.draws, delimiter=",", fmt="%.17g")


def _next_hit(F, g, a, b):
    """Earliest wall hit along ``z(t) = a sin t + b cos t``.

    Wall ``i`` is hit when ``F[i] z(t) + g[i] = 0``; the trajectory value is
    ``u cos(t + phi) + g`` with ``u = |(F a, F b)|``.  Returns
    ``(angle, wall_index)``, with index -1 when no wall lies ahead.
    """
    fa = F @ a
    fb = F @ b
    u = np.hypot(fa, fb)
    reachable = u > np.abs(g)
    phi = np.arctan2(-fa, fb)
    ratio = np.where(reachable, -g / np.where(u > 0, u, 1.0), 0.0)
    if np.any(np.abs(ratio) > 1.0):
        ratio = np.minimum(np.maximum(ratio, -1.0), 1.0)
    acos = np.arccos(ratio)
    roots = np.concatenate((acos - phi, -acos - phi))
    r = np.mod(roots, 2.0 * np.pi)
    bad = ((r < MIN_HIT_ANGLE) | (2.0 * np.pi - r < MIN_HIT_ANGLE)
           | ~np.concatenate((reachable, reachable)))
    r[bad] = np.inf
    i = int(np.argmin(r))
    if not np.isfinite(r[i]):
        return 0.0, -1
    return float(r[i]), i % g.size


def _hmc_trajectory(z, F, g, rng, stats):
    """One exact-HMC update of the whitened state; returns the new feasible
    point, or None when no trajectory could be resolved."""
    for _ in range(MAX_VELOCITY_RETRIES):
        a = rng.standard_normal(z.size)
        b = z.copy()
        remaining = TRAVEL_TIME
        ok = True
        for _ in range(MAX_BOUNCES):
            t, wall = _next_hit(F, g, a, b)
            if wall < 0 or t >= remaining:
                break
            remaining -= t
            b, a = (np.sin(t) * a + np.cos(t) * b,
                    np.cos(t) * a - np.sin(t) * b)
            f = F[wall]
            a = a - (2.0 * (f @ a) / (f @ f)) * f
            stats["bounces"] += 1
            if f @ a < 0.0:
                # Reflected velocity still points through the wall: a
                # numerical corner case; restart with a fresh velocity.
                ok = False
                break
        else:
            ok = False
        if ok:
            z_new = np.sin(remaining) * a + np.cos(remaining) * b
            if np.min(F @ z_new + g) >= 0.0:
                return z_new
        stats["velocity_retries"] += 1
    return None


def _strict_direction(A) -> np.ndarray:
    """Direction ``v`` with ``A v = -1`` rowwise (the system is consistent
    for monotone difference constraints)."""
    v = spla.lsqr(A, -np.ones(A.shape[0]), atol=1e-14, btol=1e-14)[0]
    return np.asarray(v).ravel()


def _gibbs_tables(cons: ConstraintSystem, size):
    """Per-coordinate lists of (dense constraint row, coefficient)."""
    mat = cons.matrix.tocsc()
    rows_cache = {}
    touching = [[] for _ in range(size)]
    for k in range(size):
        for idx in range(mat.indptr[k], mat.indptr[k + 1]):
            r = int(mat.indices[idx])
            if r not in rows_cache:
                rows_cache[r] = np.asarray(cons.matrix[r].todense()).ravel()
            touching[k].append((rows_cache[r], float(mat.data[idx])))
    return touching


def _gibbs_sweep(xi, mu, prec, touching, rng):
    """One systematic-scan Gibbs sweep in the original frame."""
    for k in range(xi.size):
        pk = prec[k]
        var_k = 1.0 / pk[k]
        resid = pk @ (xi - mu) - pk[k] * (xi[k] - mu[k])
        m_k = mu[k] - var_k * resid
        lo, hi = -np.inf, np.inf
        for row, c in touching[k]:
            bound = -(row @ xi - c * xi[k]) / c
            if c > 0:
                hi = min(hi, bound)
            else:
                lo = max(lo, bound)
        sd = np.sqrt(var_k)
        a, b = (lo - m_k) / sd, (hi - m_k) / sd
        if a >= b:   # numerically empty slice: keep the current value
            continue
        xi[k] = truncnorm.rvs(a, b, loc=m_k, scale=sd, random_state=rng)
    return xi


def sample_truncated(post: Posterior, cons: ConstraintSystem, N: int, seed: int,
                     burn_in: int | None = None, initial=None,
                     method: str = "hmc") -> SampleBatch:
    """Draw ``N`` feasible samples from the truncated posterior.

    The chain starts from the MAP (nudged strictly inside the polyhedron)
    unless ``initial`` is given.  Identical seeds give identical batches;
    every emitted draw satisfies the constraints to ``1e-8``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if method not in ("hmc", "gibbs"):
        raise ValueError(f"unknown sampler method {method!r}")
    rng = np.random.default_rng(seed)
    if burn_in is None:
        burn_in = min(100, N // 10)
    burn_in = int(burn_in)

    L = post.size
    stats = {"bounces": 0, "velocity_retries": 0, "gibbs_fallback": False,
             "burn_in": burn_in, "method": method}
    W = post.whitener()

    if cons.n_rows == 0:
        draws = post.mu[None, :] + rng.standard_normal((N, L)) @ W.T
        return SampleBatch(draws, stats, seed)

    if initial is None:
        initial, _ = map_estimate(post, cons)
    xi0 = np.asarray(initial, dtype=float).copy()
    viol = cons.violations(xi0)
    if viol.max() > 0:
        raise ValueError("initial point is infeasible")
    if viol.max() > -1e-12:
        # Walls at distance zero make hit detection ill posed; nudge inside.
        delta = 1e-6 * max(1.0, float(np.max(np.abs(xi0))))
        xi0 = xi0 + delta * _strict_direction(cons.matrix)
        if cons.violations(xi0).max() >= 0:
            raise NumericalError("could not construct a strictly feasible start")

    A = cons.matrix
    F = -np.asarray(A @ W)                     # (q, L): feasible iff F z + g >= 0
    g = -cons.violations(post.mu)
    C = post.chol_precision()
    z = C.T @ (xi0 - post.mu)

    draws = np.empty((N, L))
    emitted = 0
    use_gibbs = method == "gibbs"
    xi_state = xi0.copy()
    touching = None

    for step in range(N + burn_in):
        if not use_gibbs:
            z_new = _hmc_trajectory(z, F, g, rng, stats)
            if z_new is None:
                use_gibbs = True
                stats["gibbs_fallback"] = True
                xi_state = post.mu + W @ z
            else:
                z = z_new
        if use_gibbs:
            if touching is None:
                touching = _gibbs_tables(cons, L)
            xi_state = _gibbs_sweep(xi_state, post.mu, post.sigma_inv,
                                    touching, rng)
        if step >= burn_in:
            draws[emitted] = post.mu + W @ z if not use_gibbs else xi_state
            emitted += 1

    stats["method"] = "gibbs" if use_gibbs else "hmc"
    stats["max_violation"] = float(np.max(A @ draws.T, initial=-np.inf))
    if stats["max_violation"] > FEAS_TOL:
        raise NumericalError(
            f"emitted draws violate constraints by {stats['max_violation']:.2e}")
    return SampleBatch(draws, stats, seed)


def posterior_mean_predict(basis: BasisStructure, batch: SampleBatch, x) -> float:
    """Averaged-sample prediction at one point."""
    if batch.n == 0:
        raise ValueError("empty sample batch")
    return float(phi_eval(basis, np.asarray(x, dtype=float)) @ batch.mean())
