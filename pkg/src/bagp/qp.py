"""Strictly convex quadratic programming under sparse inequality constraints.

Solves ``min (x - mu)' P (x - mu)  subject to  A x <= 0`` for a symmetric
positive-definite ``P`` and a sparse constraint matrix ``A`` (two nonzeros
per row in the monotonicity use case, but nothing here depends on that).

The primary algorithm is the dual active-set method of Goldfarb and Idnani:
start from the unconstrained minimum ``mu``, repeatedly pick the most
violated constraint and take primal/dual steps that keep the working set
optimal, dropping blocking constraints along the way.  The working-set
factorization ``Q R = L^-1 N`` (``L`` the Cholesky factor of ``P``, ``N``
the active normals) is updated incrementally.  A final polish re-solves the
equality-constrained problem on the terminal active set, so stationarity and
complementary slackness hold to solver precision and inactive multipliers
are exactly zero.

If the active-set loop exceeds its iteration cap the problem is re-solved
with cvxopt's interior-point QP and polished the same way.

Reported residuals: ``stationarity`` and ``comp_slack`` are relative to the
problem scale (``P`` may contain the inverse noise variance, so absolute
gradients can be huge); ``primal`` is the largest constraint violation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .exceptions import NumericalError

FEAS_TOL = 1e-9          # constraint violation accepted as "feasible"
DROP_TOL = 1e-10         # multiplier negativity triggering a polish drop
ZERO_STEP = 1e-11        # relative threshold for "no primal step possible"


@dataclass
class QPResult:
    x: np.ndarray
    multipliers: np.ndarray
    active: np.ndarray
    iterations: int
    method: str
    kkt: dict


def _kkt_residuals(P, mu, A, x, lam):
    """Scaled KKT residuals of a candidate solution."""
    grad = P @ (x - mu)
    stat = grad + (A.T @ lam if A.shape[0] else 0.0)
    scale = max(1.0, float(np.max(np.abs(grad))), float(np.max(np.abs(P @ mu))))
    v = A @ x if A.shape[0] else np.zeros(0)
    primal = float(max(0.0, v.max(initial=0.0)))
    comp = float(np.max(np.abs(lam * v), initial=0.0))
    comp_scale = max(1.0, float(np.max(np.abs(lam), initial=0.0)) *
                     max(1.0, float(np.max(np.abs(v), initial=0.0))))
    return {
        "stationarity": float(np.max(np.abs(stat), initial=0.0)) / scale,
        "primal": primal,
        "comp_slack": comp / comp_scale,
        "dual": float(min(lam.min(initial=0.0), 0.0)),
    }


def _polish(P, mu, A, active):
    """Exact solve of the equality-constrained problem on a working set.

    Iteratively drops constraints whose multiplier comes out negative.
    Returns (x, multipliers over all rows, final active indices).
    """
    L = np.linalg.cholesky(P)
    active = list(active)
    n_rows = A.shape[0]
    for _ in range(len(active) + 1):
        if not active:
            lam = np.zeros(n_rows)
            return mu.copy(), lam, np.array([], dtype=int)
        N = -np.asarray(A[active].todense()).T        # (n, q) normals of >= form
        B = sla.solve_triangular(L, N, lower=True)
        S = B.T @ B
        rhs = np.asarray((A[active] @ mu)).ravel()    # = -N' mu
        try:
            lam_act = sla.cho_solve(sla.cho_factor(S), rhs)
        except np.linalg.LinAlgError:
            # Dependent working set (tight constraint cycles): minimum-norm
            # multipliers still give the exact subspace projection.
            lam_act = np.linalg.lstsq(S, rhs, rcond=None)[0]
        neg = np.where(lam_act < -DROP_TOL * max(1.0, np.max(np.abs(lam_act))))[0]
        if neg.size == 0:
            lam_act = np.maximum(lam_act, 0.0)
            w = sla.solve_triangular(L, N @ lam_act, lower=True)
            x = mu + sla.solve_triangular(L, w, lower=True, trans="T")
            lam = np.zeros(n_rows)
            lam[active] = lam_act
            return x, lam, np.asarray(active, dtype=int)
        # Drop the most negative multiplier and retry.
        active.pop(int(neg[np.argmin(lam_act[neg])]))
    raise NumericalError("QP polish failed to settle on an active set")


def _goldfarb_idnani(P, mu, A, max_iter):
    """Dual active-set loop.  Returns (x, active list, iterations)."""
    n = mu.size
    L = np.linalg.cholesky(P)
    x = mu.copy()
    active: list[int] = []
    u: list[float] = []
    Q = np.eye(n)
    R = np.zeros((n, 0))

    iters = 0
    while True:
        v = np.asarray(A @ x).ravel()
        scale = max(1.0, float(np.max(np.abs(x))))
        p = int(np.argmax(v)) if v.size else 0
        if v.size == 0 or v[p] <= FEAS_TOL * 1e-2 * scale:
            return x, active, iters

        npl = -np.asarray(A[p].todense()).ravel()     # incoming normal (>= form)
        u_plus = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                raise NumericalError("active-set iteration cap exceeded")
            q = len(active)
            w = sla.solve_triangular(L, npl, lower=True)
            if q:
                qw = Q[:, :q].T @ w
                r = sla.solve_triangular(R[:q, :q], qw, lower=False)
                resid = w - Q[:, :q] @ qw
            else:
                r = np.zeros(0)
                resid = w
            z_norm = float(np.linalg.norm(resid))
            full_possible = z_norm > ZERO_STEP * max(1.0, float(np.linalg.norm(w)))

            # Dual blocking step among active constraints.
            t1, k1 = np.inf, -1
            for k in range(q):
                if r[k] > 1e-13:
                    tk = u[k] / r[k]
                    if tk < t1 - 1e-15:
                        t1, k1 = tk, k

            if not full_possible:
                if k1 < 0:
                    raise NumericalError("QP appears infeasible (no step possible)")
                # Pure dual step: drop the blocking constraint.
                for k in range(q):
                    u[k] -= t1 * r[k]
                u_plus += t1
                del active[k1], u[k1]
                Q, R = sla.qr_delete(Q, R, k1, which="col")
                continue

            z = sla.solve_triangular(L, resid, lower=True, trans="T")
            denom = float(z @ npl)
            s_p = float(npl @ x)                      # slack of >= 0 constraint
            t2 = -s_p / denom
            if t2 < 0.0:
                t2 = 0.0
            t = min(t1, t2)

            x += t * z
            for k in range(q):
                u[k] -= t * r[k]
            u_plus += t

            if t2 <= t1:
                # Full step: the incoming constraint becomes active.
                b_new = sla.solve_triangular(L, npl, lower=True)
                Q, R = sla.qr_insert(Q, R, b_new, len(active), which="col")
                active.append(p)
                u.append(u_plus)
                break
            # Partial step: drop the blocking constraint, stay on p.
            del active[k1], u[k1]
            Q, R = sla.qr_delete(Q, R, k1, which="col")


def _cvxopt_solve(P, mu, A):
    """Interior-point fallback; returns a near-optimal primal point."""
    from cvxopt import matrix, solvers, spmatrix
    n = mu.size
    Acoo = A.tocoo()
    G = spmatrix(Acoo.data, Acoo.row.astype(int), Acoo.col.astype(int),
                 size=A.shape)
    opts = {"show_progress": False, "abstol": 1e-12, "reltol": 1e-12,
            "feastol": 1e-11, "maxiters": 200}
    sol = solvers.qp(matrix(P), matrix(-(P @ mu)), G,
                     matrix(np.zeros(A.shape[0])), options=opts)
    if sol["x"] is None:
        raise NumericalError("interior-point QP failed")
    return np.asarray(sol["x"]).ravel()


def solve_qp(P: np.ndarray, mu: np.ndarray, A: sp.spmatrix,
             max_iter: int | None = None) -> QPResult:
    """Minimize ``(x - mu)' P (x - mu)`` subject to ``A x <= 0``.

    Tries the dual active-set method first and falls back to interior point
    plus polishing if it stalls.  The result always reports exact-by-
    construction complementary slackness (inactive rows have multiplier 0).
    """
    mu = np.asarray(mu, dtype=float)
    A = sp.csr_matrix(A)
    if A.shape[0] == 0:
        return QPResult(mu.copy(), np.zeros(0), np.array([], dtype=int), 0,
                        "unconstrained", _kkt_residuals(P, mu, A, mu, np.zeros(0)))
    v = np.asarray(A @ mu).ravel()
    if v.max(initial=0.0) <= 0.0:
        lam = np.zeros(A.shape[0])
        return QPResult(mu.copy(), lam, np.array([], dtype=int), 0,
                        "interior", _kkt_residuals(P, mu, A, mu, lam))

    if max_iter is None:
        max_iter = max(2000, 30 * A.shape[0])
    method = "active-set"
    try:
        x, active, iters = _goldfarb_idnani(P, mu, A, max_iter)
    except NumericalError:
        x = _cvxopt_solve(P, mu, A)
        slack = -np.asarray(A @ x).ravel()
        active = list(np.where(slack < 1e-7 * max(1.0, np.max(np.abs(x))))[0])
        iters = -1
        method = "interior-point"

    x, lam, act = _polish(P, mu, A, active)
    kkt = _kkt_residuals(P, mu, A, x, lam)
    if kkt["primal"] > FEAS_TOL * max(1.0, float(np.max(np.abs(x)))) and method == "active-set":
        # Active set missed something; one interior-point rescue attempt.
        x = _cvxopt_solve(P, mu, A)
        slack = -np.asarray(A @ x).ravel()
        x, lam, act = _polish(P, mu, A, list(np.where(slack < 1e-7)[0]))
        kkt = _kkt_residuals(P, mu, A, x, lam)
        method = "interior-point"
    if kkt["primal"] > FEAS_TOL * max(1.0, float(np.max(np.abs(x)))):
        raise NumericalError(f"QP did not reach feasibility: {kkt}")
    return QPResult(x, lam, act, iters, method, kkt)
